#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace orchestra {

enum class WorldKind { linear, toy };

enum class ExperimentPolicy { linucb, random, hetero_greedy, oracle, central_kd, fedid, local_only };

std::string to_string(WorldKind w);
std::string to_string(ExperimentPolicy p);
WorldKind world_from_string(const std::string& s);
ExperimentPolicy policy_from_string(const std::string& s);

// Maximum federation size the toy-world oracle (one-step lookahead over
// every candidate pair) is allowed to run at.
inline constexpr int kToyOracleMaxAgents = 16;

struct ExperimentConfig {
    WorldKind world = WorldKind::linear;
    ExperimentPolicy policy = ExperimentPolicy::linucb;
    int n_agents = 8;
    int rounds = 20;
    uint64_t seed = 42;
    double alpha = 0.1;          // heterogeneity (Dirichlet concentration)
    int pair_budget = 0;         // resolved value
    bool pair_budget_auto = true;  // true when resolved from "auto" = floor(N/2)
    double beta = 1.0;           // LinUCB exploration coefficient
    double gamma = 1.0;          // reward loss-reduction weight
    double delta = 0.01;         // reward communication penalty per KB
    double alpha_kd_start = 0.2;
    double alpha_kd_end = 0.5;
    std::optional<int> prefilter_k;
    double quorum_ms = 1000.0;
    double base_ms = 5.0;
    double jitter_ms = 10.0;
    int transfer_size = 128;
    std::string output_dir = "runs";
    double noise_sigma = 0.1;    // linear-world reward noise
    int examples_per_category = 40;
    int pretrain_epochs = 200;   // isolated fine-tuning before round 0 (toy world)
    double label_noise = 0.1;    // toy-world target noise rate
    int local_epochs = 1;
    int distill_epochs = 2;
    double learning_rate = 0.1;
    double kd_temperature = 1.0;  // recorded, unused by text-level distillation
    bool context_role_bits = false;
    int threads = 1;
    std::vector<int> forbidden_tokens;
    int fiedler_window = 5;

    nlohmann::json to_json() const;
};

// One entry per config key: file syntax is `key=value`, one per line,
// '#' comments. Command-line overrides win over file values; the
// ORCHESTRA_SEED environment variable is the seed fallback when neither
// provides one. Unknown keys, bad types and out-of-range values raise
// config_error naming the offending key.
ExperimentConfig load_config(const std::optional<std::string>& path,
                             const std::map<std::string, std::string>& overrides);

// All recognized config keys, for --help and error messages.
const std::set<std::string>& config_keys();

}  // namespace orchestra
