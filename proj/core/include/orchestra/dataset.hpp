#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "orchestra/rng.hpp"
#include "orchestra/tiny_model.hpp"

namespace orchestra {

// Draws per-category agent shares from Dirichlet(alpha * 1) and deals the
// category's examples out by largest-remainder rounding. The whole draw is
// retried (up to 100 times) until every agent holds at least one example;
// exhaustion raises setup_error naming the offending seed. Each agent's
// examples are then shuffled and split 80/20 into train/validation.
std::vector<AgentDataset> partition_dirichlet(const std::vector<std::vector<ToyExample>>& by_category,
                                              int n_agents, double alpha, RngStream& rng,
                                              uint64_t seed_label = 0);

struct ToyWorldParams {
    int n_agents = 8;
    int examples_per_category = 40;
    double label_noise = 0.1;   // chance a target token is resampled uniformly
    int transfer_size = 128;
    double alpha = 0.1;         // Dirichlet concentration
    double learning_rate = 0.1;
    // Isolated local fine-tuning at setup: agents enter the federation as
    // specialists in their own data, not blank slates.
    int pretrain_epochs = 200;
    uint64_t master_seed = 42;
};

// Rolling per-agent signals feeding the dynamic profile features.
struct AgentStats {
    double reward_ewma = 0.0;
    int teaching_total = 0;
    int teaching_successes = 0;

    double teacher_success_rate() const {
        return teaching_total == 0 ? 0.0
                                   : static_cast<double>(teaching_successes) /
                                         static_cast<double>(teaching_total);
    }
};

struct ToyWorld {
    ToyWorldParams params;
    // Ground truth: canonical token pattern per category (the mode of the
    // noisy target distribution).
    std::vector<std::vector<int>> category_patterns;
    std::vector<AgentDataset> datasets;
    TransferSet xfer;
    std::vector<ToyExample> global_test;  // one noiseless example per category
    // Per-agent local task suite: the canonical examples of the categories
    // the agent actually holds. Pass-proxy metrics and profile features
    // evaluate each agent on its own domain.
    std::vector<std::vector<ToyExample>> own_eval;
    std::vector<TinyAgentModel> models;
    std::vector<AgentStats> stats;
    // Last round's reported metrics, for the profile delta features.
    std::vector<std::optional<std::array<double, 6>>> prev_metrics;
    // Central teacher for the fedid baseline; absent otherwise.
    std::optional<TinyAgentModel> server;

    int n_agents() const { return params.n_agents; }
};

// Capacity pool cycled over agents; also defines the model-family index.
inline constexpr int kCapacityPool[] = {4, 6, 8, 10};
inline constexpr int kCapacityPoolSize = 4;

ToyWorld make_toy_world(const ToyWorldParams& params);

}  // namespace orchestra
