#pragma once

#include <string>
#include <vector>

#include "orchestra/matchmaker.hpp"

namespace orchestra {

struct RoundMetrics {
    int round = 0;
    std::string policy;
    uint64_t seed = 0;
    double mean_reward_raw = 0.0;
    double mean_reward_norm = 0.0;
    double cumulative_regret = 0.0;
    double mean_pass_proxy = 0.0;
    double mean_js_selected = 0.0;
    double fiedler_lambda2 = 0.0;
    int n_pairs = 0;
    int n_blocked = 0;
    std::string pairs;  // "s>r;s>r;..."
};

// Prefix sums of per-round (oracle_total - policy_total). Differences are
// summed raw; in the linear world the oracle is per-round greedy-optimal,
// so they are nonnegative there by construction.
std::vector<double> cumulative_regret(const std::vector<double>& oracle_rewards,
                                      const std::vector<double>& policy_rewards);

// Second-smallest eigenvalue of the weighted Laplacian of the undirected
// collaboration graph accumulated over a window of MatchSets. Edge weight
// is the number of exchanges between the pair inside the window.
// Disconnected graphs give 0.
double fiedler_value(const std::vector<MatchSet>& window, int n_agents);

inline constexpr int kFiedlerWindow = 5;

// (mean of policy final quarter - mean of baseline final quarter) divided
// by |mean of baseline final quarter|. The final quarter of a series of
// length n is its last n - floor(3n/4) entries.
double relative_improvement(const std::vector<double>& policy_series,
                            const std::vector<double>& baseline_series);

double final_quarter_mean(const std::vector<double>& series);

// Fixed 9-significant-digit decimal rendering used by every CSV writer.
std::string format_metric(double v);

inline const char* kMetricsCsvHeader =
    "round,policy,seed,mean_reward_raw,mean_reward_norm,cumulative_regret,"
    "mean_pass_proxy,mean_js_selected,fiedler_lambda2,n_pairs,n_blocked,pairs";

void write_metrics_csv(const std::string& path, const std::vector<RoundMetrics>& rounds);
std::vector<RoundMetrics> read_metrics_csv(const std::string& path);

std::string pairs_column(const MatchSet& ms);

}  // namespace orchestra
