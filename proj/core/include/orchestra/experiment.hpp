#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "orchestra/config.hpp"
#include "orchestra/metrics.hpp"
#include "orchestra/protocol.hpp"

namespace orchestra {

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<RoundMetrics> rounds;
    std::vector<RoundEvent> events;
    CpmState cpm;
    nlohmann::json world_info;
    // Toy world: per-agent pass proxy after the final round.
    std::vector<double> final_pass_per_agent;

    // Config echo, final metrics, bandit snapshot. Deterministic content:
    // no wall-clock fields.
    nlohmann::json summary() const;
};

// Builds the world from the config, runs all rounds, and collects
// metrics and the complete event log.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Writes metrics.csv, events.ndjson and summary.json under
// dir = <output_dir>/<policy>-<seed>; returns that directory.
std::string write_run_artifacts(const ExperimentResult& result);

}  // namespace orchestra
