#include "orchestra/linear_world.hpp"

#include <algorithm>
#include <cmath>

#include "orchestra/errors.hpp"

namespace orchestra {

LinearWorld make_linear_world(const LinearWorldParams& params) {
    if (params.n_agents < 2) throw setup_error("make_linear_world: need at least 2 agents");

    LinearWorld w;
    w.params = params;

    for (int a = 0; a < params.n_agents; ++a) {
        RngStream rng(params.master_seed, "linear_profile", a, 0);
        AgentObservables obs;
        obs.agent_id = a;
        obs.round = 0;
        obs.family_index = a % kStaticDims;
        for (auto& m : obs.metrics) m = rng.uniform01();
        obs.category_counts.resize(kHistogramDims);
        // Dirichlet weights scaled to pseudo-counts; build_profile
        // re-normalizes them into the histogram block.
        std::vector<double> weights = rng.dirichlet(params.alpha, kHistogramDims);
        for (int i = 0; i < kHistogramDims; ++i) {
            obs.category_counts[static_cast<size_t>(i)] = 1000.0 * weights[static_cast<size_t>(i)];
        }
        w.profiles.push_back(build_profile(obs));
    }

    // theta*: nonnegative half-Gaussian coordinates, histogram blocks at
    // full scale and the remaining blocks damped by min(1, alpha^2), then
    // projected onto the unit sphere. Small alpha concentrates the reward
    // on the diverse histogram features (heavy-tailed block structure);
    // alpha >= 1 is isotropic.
    const int dim = context_dim(params.context_options);
    const double off_scale = std::min(1.0, params.alpha * params.alpha);
    RngStream theta_rng(params.master_seed, "theta_star", 0, 0);
    w.theta_star = Eigen::VectorXd(dim);
    auto block_scale = [&](int i) {
        int within = i % kProfileDims;
        bool histogram_block = i < 2 * kProfileDims && within >= kStaticDims + kPerfDims;
        return histogram_block ? 1.0 : off_scale;
    };
    // Heavy-tailed coordinates inside the histogram blocks when alpha < 1:
    // squaring the half-Gaussian concentrates reward mass on a few category
    // features, widening the spread between good and bad pairings.
    const bool heavy = params.alpha < 1.0;
    for (int i = 0; i < dim; ++i) {
        double g = std::abs(theta_rng.gaussian());
        double scale = block_scale(i);
        if (heavy && scale == 1.0) g = g * g;
        w.theta_star[i] = g * scale;
    }
    double norm = w.theta_star.norm();
    if (norm == 0.0) throw setup_error("make_linear_world: degenerate theta*");
    w.theta_star /= norm;
    return w;
}

double linear_world_step(const Eigen::VectorXd& theta_star, const Eigen::VectorXd& x,
                         double noise_sigma, RngStream& rng) {
    if (theta_star.size() != x.size()) throw contract_error("linear_world_step: dimension mismatch");
    return theta_star.dot(x) + noise_sigma * rng.gaussian();
}

}  // namespace orchestra
