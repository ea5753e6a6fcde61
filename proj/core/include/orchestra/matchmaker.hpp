#pragma once

#include <functional>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "orchestra/bandit.hpp"
#include "orchestra/profile.hpp"
#include "orchestra/rng.hpp"

namespace orchestra {

enum class MatchPolicy { linucb, random, hetero_greedy, oracle };

struct MatchedPair {
    int sender_id = 0;
    int receiver_id = 0;
    ContextVector context;
    std::optional<double> ucb_score;
};

// Disjoint directed pairs selected for one round: no agent appears twice,
// |pairs| <= pair_budget, sender != receiver.
struct MatchSet {
    int round = 0;
    std::vector<MatchedPair> pairs;
};

struct MatchmakerConfig {
    int pair_budget = 1;  // K_p
    MatchPolicy policy = MatchPolicy::linucb;
    std::optional<int> prefilter_k;
    double beta = 1.0;
    ContextOptions context_options;
};

// Directed candidate pairs (sender_id, receiver_id).
using CandidateSet = std::vector<std::pair<int, int>>;

// Exact k-NN prefilter on full profile vectors (Euclidean). Each agent
// keeps its k nearest neighbours; the candidate set is the union of both
// orientations, at most 2*N*k directed pairs. k >= N-1 yields the full set.
CandidateSet prefilter_candidates(const std::vector<AgentProfile>& profiles, int k);

// Scores every directed candidate with the LinUCB upper-confidence bound,
// sorts descending (ties by lower sender then receiver id) and greedily
// admits pairs whose agents are both still unmatched, stopping at the
// pair budget. Fewer than two profiles yields an empty MatchSet.
MatchSet match_linucb(const std::vector<AgentProfile>& profiles, const BanditState& state,
                      const MatchmakerConfig& cfg);

// Uniformly random maximal disjoint pairing truncated to the budget:
// shuffle, pair consecutive ids, orient each pair by a fair coin.
// Contexts are left empty; callers attach them if needed.
MatchSet match_random(const std::vector<int>& agent_ids, const MatchmakerConfig& cfg, RngStream& rng);

// Greedy maximum-JS-divergence pairing over data histograms; within each
// admitted pair the higher recent-performance agent teaches (sends),
// ties broken toward the lower id.
MatchSet match_hetero_greedy(const std::vector<AgentProfile>& profiles,
                             const std::map<int, double>& recent_perf, const MatchmakerConfig& cfg);

// Ground-truth scorer: true expected reward of a directed candidate.
using TrueScoreFn = std::function<double(const ContextVector&)>;

// Greedy disjoint selection on true expected rewards.
MatchSet match_oracle(const std::vector<AgentProfile>& profiles, const TrueScoreFn& true_score,
                      const MatchmakerConfig& cfg);

// Fills in the context vectors of a MatchSet produced without profile
// access (match_random).
void attach_contexts(MatchSet& ms, const std::vector<AgentProfile>& profiles,
                     const ContextOptions& opts = {});

}  // namespace orchestra
