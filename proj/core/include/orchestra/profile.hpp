#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <vector>

namespace orchestra {

inline constexpr int kStaticDims = 8;
inline constexpr int kPerfMetrics = 6;
inline constexpr int kPerfDims = 12;  // 6 current metrics + their previous-round deltas
inline constexpr int kHistogramDims = 12;
inline constexpr int kProfileDims = kStaticDims + kPerfDims + kHistogramDims;  // 32
inline constexpr double kHistogramSmoothing = 1e-6;

// Current-metric layout inside perf_features[0..5]; slots 6..11 hold the
// deltas against the previous round in the same order.
enum PerfMetric {
    kPassProxy = 0,
    kLocalLoss = 1,
    kValLoss = 2,
    kJsToUniform = 3,
    kRewardEwma = 4,
    kTeacherSuccessRate = 5,
};

struct AgentProfile {
    int agent_id = 0;
    int round = 0;
    Eigen::VectorXd static_features;  // one-hot model-family encoding, length 8
    Eigen::VectorXd perf_features;    // length 12
    Eigen::VectorXd data_histogram;   // normalized category histogram, length 12

    // Flattened [static, perf, histogram] vector of length kProfileDims.
    Eigen::VectorXd as_vector() const;
};

struct ContextVector {
    int sender_id = 0;
    int receiver_id = 0;
    Eigen::VectorXd values;
};

// Raw observables an agent reports about itself each round.
struct AgentObservables {
    int agent_id = 0;
    int round = 0;
    int family_index = 0;  // 0..7
    std::array<double, kPerfMetrics> metrics{};
    std::optional<std::array<double, kPerfMetrics>> previous_metrics;
    std::vector<double> category_counts;  // raw counts, length 12, >= 0
};

struct ContextOptions {
    // Appends [protocol id, role flag] to the concatenated profiles,
    // growing the context from 64 to 66 dims. Off by default.
    bool role_bits = false;
};

inline int context_dim(const ContextOptions& opts) {
    return 2 * kProfileDims + (opts.role_bits ? 2 : 0);
}

AgentProfile build_profile(const AgentObservables& obs);

// Raw counts -> Laplace-smoothed (kHistogramSmoothing per bin), normalized
// histogram. All-zero counts degenerate to uniform.
Eigen::VectorXd smoothed_histogram(const std::vector<double>& counts);

ContextVector build_context(const AgentProfile& sender, const AgentProfile& receiver,
                            const ContextOptions& opts = {});

// Base-2 Jensen-Shannon divergence between two probability vectors.
// Range [0, 1]; symmetric; 0 log 0 taken as 0.
double js_divergence(const std::vector<double>& p, const std::vector<double>& q);
double js_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

}  // namespace orchestra
