#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "orchestra/profile.hpp"
#include "orchestra/rng.hpp"

namespace orchestra {

// Synthetic bandit regime: fixed random agent profiles, a hidden unit
// vector theta*, and pair rewards theta* . x + Gaussian noise. The alpha
// knob doubles as the heterogeneity control. Small alpha concentrates
// profile histograms (Dirichlet) and loads theta* onto the histogram
// blocks, producing the heavy-tailed block structure of the
// high-heterogeneity regime; large alpha flattens both toward isotropy.
struct LinearWorldParams {
    int n_agents = 8;
    double alpha = 0.1;
    double noise_sigma = 0.1;
    uint64_t master_seed = 42;
    ContextOptions context_options;
};

struct LinearWorld {
    LinearWorldParams params;
    Eigen::VectorXd theta_star;  // unit norm, length context_dim
    std::vector<AgentProfile> profiles;

    int n_agents() const { return params.n_agents; }
    double expected_reward(const Eigen::VectorXd& x) const { return theta_star.dot(x); }
};

LinearWorld make_linear_world(const LinearWorldParams& params);

// theta* . x plus one Gaussian(0, noise_sigma^2) draw from rng.
double linear_world_step(const Eigen::VectorXd& theta_star, const Eigen::VectorXd& x,
                         double noise_sigma, RngStream& rng);

}  // namespace orchestra
