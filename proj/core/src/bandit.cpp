#include "orchestra/bandit.hpp"

#include <cmath>

#include "orchestra/errors.hpp"

namespace orchestra {

BanditState::BanditState(int dimension) : dim(dimension) {
    if (dimension <= 0) throw contract_error("BanditState: dimension must be positive");
    A = Eigen::MatrixXd::Identity(dimension, dimension);
    b = Eigen::VectorXd::Zero(dimension);
    A_inv = Eigen::MatrixXd::Identity(dimension, dimension);
}

double RewardNormalizer::sigma() const {
    if (count == 0) return 0.0;
    return std::sqrt(m2 / static_cast<double>(count));
}

double ucb_score(const BanditState& state, const UcbParams& params, const Eigen::VectorXd& x) {
    if (x.size() != state.dim) throw contract_error("ucb_score: context dimension mismatch");
    if (!x.allFinite()) throw input_error("ucb_score: non-finite context entry");

    Eigen::VectorXd v = state.A_inv * x;
    double quad = x.dot(v);
    if (quad < 0.0) quad = 0.0;  // A_inv is SPD; negative values are roundoff
    double exploit = state.b.dot(v);  // theta_hat . x == b . (A_inv x), A_inv symmetric
    return exploit + params.beta * std::sqrt(quad);
}

void update(BanditState& state, const Eigen::VectorXd& x, double r) {
    if (x.size() != state.dim) throw contract_error("update: context dimension mismatch");
    if (!x.allFinite() || !std::isfinite(r)) throw input_error("update: non-finite input");

    state.A.noalias() += x * x.transpose();
    state.b.noalias() += r * x;
    state.update_count++;

    if (state.update_count % BanditState::kInverseRefreshPeriod == 0) {
        state.A_inv = state.A.llt().solve(Eigen::MatrixXd::Identity(state.dim, state.dim));
    } else {
        // Sherman-Morrison: (A + xx^T)^-1 = A^-1 - (A^-1 x)(A^-1 x)^T / (1 + x^T A^-1 x)
        Eigen::VectorXd v = state.A_inv * x;
        double denom = 1.0 + x.dot(v);
        state.A_inv.noalias() -= (v * v.transpose()) / denom;
    }
}

double normalize_reward(RewardNormalizer& norm, double r) {
    if (!std::isfinite(r)) throw input_error("normalize_reward: non-finite reward");
    norm.count++;
    double delta = r - norm.mean;
    norm.mean += delta / static_cast<double>(norm.count);
    norm.m2 += delta * (r - norm.mean);
    if (norm.m2 < 0.0) norm.m2 = 0.0;  // roundoff guard
    return (r - norm.mean) / (norm.sigma() + norm.epsilon);
}

}  // namespace orchestra
