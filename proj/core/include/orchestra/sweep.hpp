#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "orchestra/config.hpp"

namespace orchestra {

struct SweepGrid {
    std::vector<int> agents;
    std::vector<std::string> policies;
    std::vector<uint64_t> seeds;
    std::vector<double> alphas;
};

// Cross-product of the grid over the base config, one isolated run per
// cell. Duplicate cells are dropped with a warning on `log`. Child-run
// failures are recorded in the manifest and do not stop the sweep.
// Returns the manifest; the caller decides where to persist it.
nlohmann::json run_sweep(const ExperimentConfig& base, const SweepGrid& grid,
                         const std::string& out_dir, int jobs, std::ostream& log);

bool sweep_had_failures(const nlohmann::json& manifest);

struct ReportOutput {
    nlohmann::json json;
    std::string csv;
};

// Per (policy, n_agents, alpha) cell: mean and 95% t-interval over seeds
// of final-quarter reward, pass proxy, selected-pair JS and final regret,
// plus each policy's relative improvement over random in the same cell.
ReportOutput make_report(const nlohmann::json& manifest);

inline const char* kReportCsvHeader =
    "policy,world,n_agents,alpha,n_seeds,fq_reward_mean,fq_reward_ci95,"
    "fq_pass_mean,fq_pass_ci95,final_regret_mean,final_regret_ci95,"
    "fq_js_mean,fq_js_ci95,rel_improvement_reward_vs_random,"
    "rel_improvement_pass_vs_random,insufficient_seeds";

// 95% confidence half-width via the t distribution; 0 when n < 2.
double ci95_half_width(const std::vector<double>& samples);

}  // namespace orchestra
