#include "orchestra/baselines.hpp"

#include <algorithm>
#include <map>

#include "orchestra/errors.hpp"
#include "orchestra/profile.hpp"

namespace orchestra {

namespace {

// Distills one agent toward an explicit token sequence per prompt and
// reports the loss breakdown. Reuses distill_step by packaging the
// sequences as a synthetic teacher package.
DistillResult distill_toward(TinyAgentModel& agent, const std::vector<std::vector<int>>& sequences,
                             const TransferSet& xfer, const AgentDataset& data,
                             const DistillationConfig& cfg, int epochs) {
    KnowledgePackage pkg;
    pkg.teacher_id = -1;
    size_t total_tokens = 0;
    for (size_t i = 0; i < xfer.prompts.size(); ++i) {
        pkg.entries.push_back({xfer.prompts[i].prompt_id, sequences[i]});
        total_tokens += sequences[i].size();
    }
    pkg.payload_kb = static_cast<double>(total_tokens) * 2.0 / 1024.0;
    return distill_step(agent, pkg, xfer, data, cfg, epochs);
}

}  // namespace

std::vector<Eigen::MatrixXd> ensemble_distribution(const std::vector<TinyAgentModel>& agents,
                                                   const TransferSet& xfer) {
    if (agents.empty()) throw contract_error("ensemble_distribution: no agents");
    std::vector<Eigen::MatrixXd> out;
    out.reserve(xfer.prompts.size());
    for (const auto& prompt : xfer.prompts) {
        Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(kPromptLen, agents[0].vocab_size);
        for (const auto& agent : agents) {
            for (int t = 0; t < kPromptLen; ++t) {
                dist.row(t) += agent.token_distribution(prompt.states[static_cast<size_t>(t)]);
            }
        }
        dist /= static_cast<double>(agents.size());
        out.push_back(std::move(dist));
    }
    return out;
}

CentralRoundResult central_kd_round(std::vector<TinyAgentModel>& agents, const TransferSet& xfer,
                                    const std::vector<AgentDataset>& datasets,
                                    const DistillationConfig& cfg, int epochs) {
    if (agents.empty()) throw contract_error("central_kd_round: no agents");

    std::vector<Eigen::MatrixXd> ensemble = ensemble_distribution(agents, xfer);
    std::vector<std::vector<int>> sequences(xfer.prompts.size());
    for (size_t i = 0; i < xfer.prompts.size(); ++i) {
        sequences[i].resize(kPromptLen);
        for (int t = 0; t < kPromptLen; ++t) {
            int best = 0;
            for (int v = 1; v < agents[0].vocab_size; ++v) {
                if (ensemble[i](t, v) > ensemble[i](t, best)) best = v;  // ties keep lowest id
            }
            sequences[i][static_cast<size_t>(t)] = best;
        }
    }

    CentralRoundResult res;
    res.payload_kb =
        static_cast<double>(xfer.prompts.size()) * kPromptLen * 2.0 / 1024.0;
    for (size_t a = 0; a < agents.size(); ++a) {
        res.per_agent.push_back(
            distill_toward(agents[a], sequences, xfer, datasets[a], cfg, epochs));
    }
    return res;
}

std::vector<std::vector<int>> vote_sequences(const std::vector<TinyAgentModel>& agents,
                                             const TransferSet& xfer) {
    if (agents.empty()) throw contract_error("vote_sequences: no agents");
    std::vector<std::vector<int>> winners;
    winners.reserve(xfer.prompts.size());
    for (const auto& prompt : xfer.prompts) {
        struct Group {
            double weight = 0.0;
            int min_agent = 0;
        };
        std::map<std::vector<int>, Group> groups;
        for (const auto& agent : agents) {
            std::vector<int> seq = agent.greedy_decode(prompt.states);
            double conf = 0.0;  // mean probability assigned to the chosen tokens
            for (int t = 0; t < kPromptLen; ++t) {
                conf += agent.token_distribution(
                    prompt.states[static_cast<size_t>(t)])[seq[static_cast<size_t>(t)]];
            }
            conf /= kPromptLen;
            auto [it, inserted] = groups.try_emplace(std::move(seq), Group{conf, agent.agent_id});
            if (!inserted) {
                it->second.weight += conf;
                it->second.min_agent = std::min(it->second.min_agent, agent.agent_id);
            }
        }
        const std::vector<int>* best = nullptr;
        Group best_g{-1.0, 0};
        for (const auto& [seq, g] : groups) {
            if (g.weight > best_g.weight ||
                (g.weight == best_g.weight && g.min_agent < best_g.min_agent)) {
                best = &seq;
                best_g = g;
            }
        }
        winners.push_back(*best);
    }
    return winners;
}

FedIdRoundResult fedid_round(std::vector<TinyAgentModel>& agents, TinyAgentModel& server,
                             const TransferSet& xfer, const std::vector<AgentDataset>& datasets,
                             const DistillationConfig& cfg, int epochs) {
    std::vector<std::vector<int>> winners = vote_sequences(agents, xfer);

    // The winning sequences become the server's training data.
    AgentDataset server_data;
    server_data.agent_id = server.agent_id;
    for (size_t i = 0; i < xfer.prompts.size(); ++i) {
        ToyExample ex;
        ex.example_id = xfer.prompts[i].prompt_id;
        ex.category = xfer.prompts[i].category;
        ex.states = xfer.prompts[i].states;
        ex.targets = winners[i];
        server_data.train.push_back(std::move(ex));
    }

    FedIdRoundResult res;
    res.server_train = local_train_step(server, server_data, epochs);

    KnowledgePackage pkg = generate_package(server, xfer);
    res.payload_kb = pkg.payload_kb;
    for (size_t a = 0; a < agents.size(); ++a) {
        res.per_agent.push_back(distill_step(agents[a], pkg, xfer, datasets[a], cfg, epochs));
    }
    return res;
}

double mean_pairwise_output_js(const std::vector<TinyAgentModel>& agents, const TransferSet& xfer) {
    if (agents.size() < 2 || xfer.prompts.empty()) return 0.0;
    double total = 0.0;
    int terms = 0;
    for (size_t a = 0; a < agents.size(); ++a) {
        for (size_t b = a + 1; b < agents.size(); ++b) {
            for (const auto& prompt : xfer.prompts) {
                for (int t = 0; t < kPromptLen; ++t) {
                    int s = prompt.states[static_cast<size_t>(t)];
                    total += js_divergence(agents[a].token_distribution(s),
                                           agents[b].token_distribution(s));
                    ++terms;
                }
            }
        }
    }
    return total / terms;
}

}  // namespace orchestra
