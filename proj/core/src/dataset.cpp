#include "orchestra/dataset.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "orchestra/errors.hpp"
#include "orchestra/profile.hpp"

namespace orchestra {

namespace {

// Largest-remainder apportionment of n items across weights.
std::vector<int> apportion(int n, const std::vector<double>& weights) {
    const size_t k = weights.size();
    std::vector<int> base(k, 0);
    std::vector<std::pair<double, size_t>> frac;
    int assigned = 0;
    for (size_t i = 0; i < k; ++i) {
        double quota = n * weights[i];
        base[i] = static_cast<int>(quota);
        assigned += base[i];
        frac.emplace_back(quota - base[i], i);
    }
    std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;  // ties favour lower agent id
    });
    for (int r = 0; r < n - assigned; ++r) base[frac[static_cast<size_t>(r)].second]++;
    return base;
}

}  // namespace

std::vector<AgentDataset> partition_dirichlet(const std::vector<std::vector<ToyExample>>& by_category,
                                              int n_agents, double alpha, RngStream& rng,
                                              uint64_t seed_label) {
    if (n_agents < 2) throw contract_error("partition_dirichlet: need at least 2 agents");
    if (!(alpha > 0.0)) throw contract_error("partition_dirichlet: alpha must be > 0");

    constexpr int kMaxRetries = 100;
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
        std::vector<std::vector<ToyExample>> assigned(static_cast<size_t>(n_agents));
        for (const auto& pool : by_category) {
            if (pool.empty()) continue;
            std::vector<double> w = rng.dirichlet(alpha, n_agents);
            std::vector<int> share = apportion(static_cast<int>(pool.size()), w);
            size_t next = 0;
            for (int a = 0; a < n_agents; ++a) {
                for (int c = 0; c < share[static_cast<size_t>(a)]; ++c) {
                    assigned[static_cast<size_t>(a)].push_back(pool[next++]);
                }
            }
        }
        bool all_nonempty = std::all_of(assigned.begin(), assigned.end(),
                                        [](const auto& v) { return !v.empty(); });
        if (!all_nonempty) continue;

        std::vector<AgentDataset> out(static_cast<size_t>(n_agents));
        for (int a = 0; a < n_agents; ++a) {
            auto& ds = out[static_cast<size_t>(a)];
            ds.agent_id = a;
            auto& ex = assigned[static_cast<size_t>(a)];
            rng.shuffle(ex);
            int n = static_cast<int>(ex.size());
            int n_train = std::max(1, (4 * n) / 5);
            ds.train.assign(ex.begin(), ex.begin() + n_train);
            ds.val.assign(ex.begin() + n_train, ex.end());
        }
        return out;
    }
    throw setup_error("partition_dirichlet: could not give every agent an example after 100 retries (seed " +
                      std::to_string(seed_label) + ")");
}

ToyWorld make_toy_world(const ToyWorldParams& params) {
    ToyWorld w;
    w.params = params;

    RngStream pattern_rng(params.master_seed, "world_patterns", 0, 0);
    w.category_patterns.resize(kNumCategories);
    for (auto& pat : w.category_patterns) {
        pat.resize(kPromptLen);
        for (auto& tok : pat) tok = static_cast<int>(pattern_rng.bounded(kVocabSize));
    }

    // Examples carry noisy targets around the category pattern; ids are
    // globally unique, category-major.
    RngStream data_rng(params.master_seed, "world_data", 0, 0);
    std::vector<std::vector<ToyExample>> by_category(kNumCategories);
    int next_id = 0;
    for (int c = 0; c < kNumCategories; ++c) {
        for (int i = 0; i < params.examples_per_category; ++i) {
            ToyExample ex;
            ex.example_id = next_id++;
            ex.category = c;
            ex.states.resize(kPromptLen);
            ex.targets.resize(kPromptLen);
            for (int t = 0; t < kPromptLen; ++t) {
                ex.states[static_cast<size_t>(t)] = c * kPromptLen + t;
                int tok = w.category_patterns[static_cast<size_t>(c)][static_cast<size_t>(t)];
                if (data_rng.uniform01() < params.label_noise) {
                    tok = static_cast<int>(data_rng.bounded(kVocabSize));
                }
                ex.targets[static_cast<size_t>(t)] = tok;
            }
            by_category[static_cast<size_t>(c)].push_back(std::move(ex));
        }
    }

    RngStream part_rng(params.master_seed, "partition", 0, 0);
    w.datasets = partition_dirichlet(by_category, params.n_agents, params.alpha, part_rng,
                                     params.master_seed);

    // Transfer prompts get ids past every example id, keeping the
    // transfer set disjoint from all private data by construction.
    RngStream xfer_rng(params.master_seed, "transfer_set", 0, 0);
    for (int i = 0; i < params.transfer_size; ++i) {
        TransferPrompt p;
        p.prompt_id = next_id++;
        p.category = static_cast<int>(xfer_rng.bounded(kNumCategories));
        p.states.resize(kPromptLen);
        for (int t = 0; t < kPromptLen; ++t) {
            p.states[static_cast<size_t>(t)] = p.category * kPromptLen + t;
        }
        w.xfer.prompts.push_back(std::move(p));
    }

    // Global test: the canonical (noiseless) pattern of each category.
    for (int c = 0; c < kNumCategories; ++c) {
        ToyExample ex;
        ex.example_id = next_id++;
        ex.category = c;
        ex.states.resize(kPromptLen);
        for (int t = 0; t < kPromptLen; ++t) ex.states[static_cast<size_t>(t)] = c * kPromptLen + t;
        ex.targets = w.category_patterns[static_cast<size_t>(c)];
        w.global_test.push_back(std::move(ex));
    }

    // Capacity follows data breadth: agents with peaked holdings act as
    // narrow specialists on small models, agents with broad holdings run
    // the larger models. Rank by distance from the uniform histogram and
    // deal capacities by rank quartile.
    std::vector<std::pair<double, int>> peakedness;
    Eigen::VectorXd uniform = Eigen::VectorXd::Constant(kNumCategories, 1.0 / kNumCategories);
    for (int a = 0; a < params.n_agents; ++a) {
        Eigen::VectorXd h = smoothed_histogram(w.datasets[static_cast<size_t>(a)].category_counts());
        peakedness.emplace_back(-js_divergence(h, uniform), a);  // most peaked first
    }
    std::sort(peakedness.begin(), peakedness.end());
    std::vector<int> capacity(static_cast<size_t>(params.n_agents));
    for (int rank = 0; rank < params.n_agents; ++rank) {
        int bucket = rank * kCapacityPoolSize / params.n_agents;
        capacity[static_cast<size_t>(peakedness[static_cast<size_t>(rank)].second)] =
            kCapacityPool[bucket];
    }
    for (int a = 0; a < params.n_agents; ++a) {
        w.models.emplace_back(a, capacity[static_cast<size_t>(a)], params.learning_rate);
        if (params.pretrain_epochs > 0) {
            local_train_step(w.models.back(), w.datasets[static_cast<size_t>(a)],
                             params.pretrain_epochs);
        }
    }
    w.stats.resize(static_cast<size_t>(params.n_agents));
    w.prev_metrics.resize(static_cast<size_t>(params.n_agents));

    // One canonical test per held example, so the local suite carries the
    // agent's own task distribution.
    w.own_eval.resize(static_cast<size_t>(params.n_agents));
    for (int a = 0; a < params.n_agents; ++a) {
        auto counts = w.datasets[static_cast<size_t>(a)].category_counts();
        for (int c = 0; c < kNumCategories; ++c) {
            for (int k = 0; k < static_cast<int>(counts[static_cast<size_t>(c)]); ++k) {
                w.own_eval[static_cast<size_t>(a)].push_back(w.global_test[static_cast<size_t>(c)]);
            }
        }
    }
    return w;
}

}  // namespace orchestra
