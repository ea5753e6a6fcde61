#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace orchestra {

// LinUCB state: A starts as the identity and accumulates outer products
// x x^T of observed contexts, b accumulates r * x. The inverse is kept
// incrementally (Sherman-Morrison) and refreshed by a dense solve every
// kInverseRefreshPeriod updates to bound floating-point drift.
struct BanditState {
    int dim = 0;
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    Eigen::MatrixXd A_inv;
    uint64_t update_count = 0;

    static constexpr int kInverseRefreshPeriod = 64;

    BanditState() = default;
    explicit BanditState(int dimension);

    Eigen::VectorXd theta_hat() const { return A_inv * b; }
};

struct UcbParams {
    double beta = 1.0;
};

// Running z-score statistics over observed raw rewards (Welford form).
// sigma is the population standard deviation m2/count.
struct RewardNormalizer {
    uint64_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;
    double epsilon = 1e-6;

    double sigma() const;
};

// theta_hat . x + beta * sqrt(x^T A^-1 x). Pure; state is not mutated.
double ucb_score(const BanditState& state, const UcbParams& params, const Eigen::VectorXd& x);

// A += x x^T, b += r x, inverse refreshed. Mutates state in place.
void update(BanditState& state, const Eigen::VectorXd& x, double r);

// Folds r into the running statistics first, then returns
// (r - mean) / (sigma + epsilon) using the post-update statistics.
// The first sample therefore normalizes to exactly 0.
double normalize_reward(RewardNormalizer& norm, double r);

}  // namespace orchestra
