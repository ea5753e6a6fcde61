#include "orchestra/matchmaker.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "orchestra/errors.hpp"

namespace orchestra {

namespace {

struct ScoredCandidate {
    double score;
    MatchedPair pair;
};

bool candidate_before(const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.pair.sender_id != b.pair.sender_id) return a.pair.sender_id < b.pair.sender_id;
    return a.pair.receiver_id < b.pair.receiver_id;
}

// Sort descending by score and admit candidates while both endpoints are
// unmatched and the budget allows.
MatchSet greedy_select(std::vector<ScoredCandidate>& candidates, int pair_budget) {
    std::sort(candidates.begin(), candidates.end(), candidate_before);
    MatchSet ms;
    std::unordered_set<int> matched;
    for (auto& c : candidates) {
        if (static_cast<int>(ms.pairs.size()) >= pair_budget) break;
        if (matched.count(c.pair.sender_id) || matched.count(c.pair.receiver_id)) continue;
        matched.insert(c.pair.sender_id);
        matched.insert(c.pair.receiver_id);
        ms.pairs.push_back(std::move(c.pair));
    }
    return ms;
}

CandidateSet all_directed_pairs(const std::vector<AgentProfile>& profiles) {
    CandidateSet out;
    out.reserve(profiles.size() * (profiles.size() - 1));
    for (const auto& a : profiles) {
        for (const auto& b : profiles) {
            if (a.agent_id != b.agent_id) out.emplace_back(a.agent_id, b.agent_id);
        }
    }
    return out;
}

}  // namespace

CandidateSet prefilter_candidates(const std::vector<AgentProfile>& profiles, int k) {
    if (k < 1) throw contract_error("prefilter_candidates: k must be >= 1");
    const int n = static_cast<int>(profiles.size());
    if (k >= n - 1) return all_directed_pairs(profiles);

    std::vector<Eigen::VectorXd> vecs(profiles.size());
    for (size_t i = 0; i < profiles.size(); ++i) vecs[i] = profiles[i].as_vector();

    std::set<std::pair<int, int>> directed;
    for (int i = 0; i < n; ++i) {
        std::vector<std::pair<double, int>> dist;
        dist.reserve(static_cast<size_t>(n) - 1);
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            dist.emplace_back((vecs[static_cast<size_t>(i)] - vecs[static_cast<size_t>(j)]).norm(),
                              profiles[static_cast<size_t>(j)].agent_id);
        }
        std::sort(dist.begin(), dist.end());  // ties resolve toward the lower id
        int id_i = profiles[static_cast<size_t>(i)].agent_id;
        for (int r = 0; r < k; ++r) {
            directed.emplace(id_i, dist[static_cast<size_t>(r)].second);
            directed.emplace(dist[static_cast<size_t>(r)].second, id_i);
        }
    }
    return CandidateSet(directed.begin(), directed.end());
}

MatchSet match_linucb(const std::vector<AgentProfile>& profiles, const BanditState& state,
                      const MatchmakerConfig& cfg) {
    if (profiles.size() < 2) return {};
    if (state.dim != context_dim(cfg.context_options)) {
        throw contract_error("match_linucb: bandit dimension does not match context dimension");
    }

    std::unordered_map<int, const AgentProfile*> by_id;
    for (const auto& p : profiles) by_id[p.agent_id] = &p;

    CandidateSet cands = cfg.prefilter_k ? prefilter_candidates(profiles, *cfg.prefilter_k)
                                         : all_directed_pairs(profiles);

    UcbParams params{cfg.beta};
    std::vector<ScoredCandidate> scored;
    scored.reserve(cands.size());
    for (auto [s, r] : cands) {
        ContextVector ctx = build_context(*by_id.at(s), *by_id.at(r), cfg.context_options);
        double u = ucb_score(state, params, ctx.values);
        scored.push_back({u, MatchedPair{s, r, std::move(ctx), u}});
    }
    return greedy_select(scored, cfg.pair_budget);
}

MatchSet match_random(const std::vector<int>& agent_ids, const MatchmakerConfig& cfg, RngStream& rng) {
    if (agent_ids.size() < 2) return {};
    std::vector<int> ids = agent_ids;
    std::sort(ids.begin(), ids.end());
    rng.shuffle(ids);

    MatchSet ms;
    for (size_t i = 0; i + 1 < ids.size() && static_cast<int>(ms.pairs.size()) < cfg.pair_budget; i += 2) {
        int a = ids[i], b = ids[i + 1];
        if (rng.coin()) std::swap(a, b);
        ms.pairs.push_back(MatchedPair{a, b, {}, std::nullopt});
    }
    return ms;
}

MatchSet match_hetero_greedy(const std::vector<AgentProfile>& profiles,
                             const std::map<int, double>& recent_perf, const MatchmakerConfig& cfg) {
    if (profiles.size() < 2) return {};
    for (const auto& p : profiles) {
        if (!recent_perf.count(p.agent_id)) {
            throw contract_error("match_hetero_greedy: missing recent performance for an agent");
        }
    }

    std::vector<const AgentProfile*> ps;
    for (const auto& p : profiles) ps.push_back(&p);
    std::sort(ps.begin(), ps.end(),
              [](const AgentProfile* a, const AgentProfile* b) { return a->agent_id < b->agent_id; });

    std::vector<ScoredCandidate> scored;
    for (size_t i = 0; i < ps.size(); ++i) {
        for (size_t j = i + 1; j < ps.size(); ++j) {
            double js = js_divergence(ps[i]->data_histogram, ps[j]->data_histogram);
            double ui = recent_perf.at(ps[i]->agent_id);
            double uj = recent_perf.at(ps[j]->agent_id);
            // Higher performer teaches; ties go to the lower id.
            const AgentProfile* teacher = (uj > ui) ? ps[j] : ps[i];
            const AgentProfile* student = (teacher == ps[i]) ? ps[j] : ps[i];
            ContextVector ctx = build_context(*teacher, *student, cfg.context_options);
            scored.push_back({js, MatchedPair{teacher->agent_id, student->agent_id, std::move(ctx),
                                              std::nullopt}});
        }
    }
    // Tie order for equal scores must follow the unordered pair (i, j), which
    // here equals (min id, max id); candidate_before compares sender/receiver,
    // so re-key ties on the unordered ids.
    std::sort(scored.begin(), scored.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
        if (a.score != b.score) return a.score > b.score;
        int alo = std::min(a.pair.sender_id, a.pair.receiver_id);
        int blo = std::min(b.pair.sender_id, b.pair.receiver_id);
        if (alo != blo) return alo < blo;
        return std::max(a.pair.sender_id, a.pair.receiver_id) <
               std::max(b.pair.sender_id, b.pair.receiver_id);
    });

    MatchSet ms;
    std::unordered_set<int> matched;
    for (auto& c : scored) {
        if (static_cast<int>(ms.pairs.size()) >= cfg.pair_budget) break;
        if (matched.count(c.pair.sender_id) || matched.count(c.pair.receiver_id)) continue;
        matched.insert(c.pair.sender_id);
        matched.insert(c.pair.receiver_id);
        ms.pairs.push_back(std::move(c.pair));
    }
    return ms;
}

MatchSet match_oracle(const std::vector<AgentProfile>& profiles, const TrueScoreFn& true_score,
                      const MatchmakerConfig& cfg) {
    if (!true_score) throw capability_error("match_oracle: no ground-truth reward access");
    if (profiles.size() < 2) return {};

    std::unordered_map<int, const AgentProfile*> by_id;
    for (const auto& p : profiles) by_id[p.agent_id] = &p;

    CandidateSet cands = cfg.prefilter_k ? prefilter_candidates(profiles, *cfg.prefilter_k)
                                         : all_directed_pairs(profiles);

    std::vector<ScoredCandidate> scored;
    scored.reserve(cands.size());
    for (auto [s, r] : cands) {
        ContextVector ctx = build_context(*by_id.at(s), *by_id.at(r), cfg.context_options);
        double v = true_score(ctx);
        scored.push_back({v, MatchedPair{s, r, std::move(ctx), std::nullopt}});
    }
    return greedy_select(scored, cfg.pair_budget);
}

void attach_contexts(MatchSet& ms, const std::vector<AgentProfile>& profiles, const ContextOptions& opts) {
    std::unordered_map<int, const AgentProfile*> by_id;
    for (const auto& p : profiles) by_id[p.agent_id] = &p;
    for (auto& pr : ms.pairs) {
        pr.context = build_context(*by_id.at(pr.sender_id), *by_id.at(pr.receiver_id), opts);
    }
}

}  // namespace orchestra
