// orchestra: a matchmade peer-to-peer knowledge-distillation simulator.
//
// Subcommands:
//   run              execute one experiment, write metrics/events/summary
//   sweep            cross-product of agents x policies x seeds x alphas
//   report           aggregate a sweep manifest into mean/CI tables
//   validate-config  resolve and echo a configuration

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "orchestra/errors.hpp"
#include "orchestra/experiment.hpp"
#include "orchestra/sweep.hpp"

namespace fs = std::filesystem;
using namespace orchestra;

namespace {

// Registered flags feed the shared key=value config loader, so the file
// format and the command line stay in lockstep.
struct FlagSet {
    std::map<std::string, std::string> values;

    void add(CLI::App* cmd, const std::string& flag, const std::string& key,
             const std::string& help) {
        auto cb = [this, key](const std::string& v) { values[key] = v; };
        cmd->add_option_function<std::string>(flag, cb, help);
    }
};

void register_config_flags(CLI::App* cmd, FlagSet& flags) {
    flags.add(cmd, "--world", "world", "world kind: linear | toy (required)");
    flags.add(cmd, "--policy", "policy",
              "policy: linucb | random | hetero_greedy | oracle | central_kd | fedid | local_only "
              "(required)");
    flags.add(cmd, "--agents", "n_agents", "number of agents, 2..64 (default 8)");
    flags.add(cmd, "--rounds", "rounds", "communication rounds (default 20)");
    flags.add(cmd, "--seed", "seed", "master seed (default: $ORCHESTRA_SEED, else 42)");
    flags.add(cmd, "--alpha", "alpha", "heterogeneity / Dirichlet concentration (default 0.1)");
    flags.add(cmd, "--beta", "beta", "LinUCB exploration coefficient (default 1.0)");
    flags.add(cmd, "--gamma", "gamma", "reward loss-reduction weight (default 1.0)");
    flags.add(cmd, "--delta", "delta", "reward communication penalty per KB (default 0.01)");
    flags.add(cmd, "--pair-budget", "pair_budget", "pairs per round, or 'auto' = floor(N/2) (default auto)");
    flags.add(cmd, "--prefilter-k", "prefilter_k", "k-NN candidate prefilter, 0 = off (default off)");
    flags.add(cmd, "--output", "output_dir", "output directory (default runs)");
    flags.add(cmd, "--noise-sigma", "noise_sigma", "linear-world reward noise sigma (default 0.1)");
    flags.add(cmd, "--quorum-ms", "quorum_ms", "profile quorum timeout in ms (default 1000)");
    flags.add(cmd, "--base-ms", "base_ms", "latency base in ms (default 5)");
    flags.add(cmd, "--jitter-ms", "jitter_ms", "latency uniform jitter bound in ms (default 10)");
    flags.add(cmd, "--transfer-size", "transfer_size", "transfer-set size |X_u| (default 128)");
    flags.add(cmd, "--alpha-kd-start", "alpha_kd_start", "distillation weight at round 0 (default 0.2)");
    flags.add(cmd, "--alpha-kd-end", "alpha_kd_end", "distillation weight at the last round (default 0.5)");
    flags.add(cmd, "--examples-per-category", "examples_per_category",
              "toy-world examples per category (default 40)");
    flags.add(cmd, "--label-noise", "label_noise", "toy-world target noise rate (default 0.1)");
    flags.add(cmd, "--pretrain-epochs", "pretrain_epochs",
              "isolated fine-tuning epochs before round 0, toy world (default 200)");
    flags.add(cmd, "--local-epochs", "local_epochs", "local training epochs per round (default 1)");
    flags.add(cmd, "--distill-epochs", "distill_epochs", "distillation epochs per exchange (default 2)");
    flags.add(cmd, "--learning-rate", "learning_rate", "agent learning rate (default 0.1)");
    flags.add(cmd, "--kd-temperature", "kd_temperature", "recorded KD temperature, unused (default 1.0)");
    flags.add(cmd, "--context-role-bits", "context_role_bits",
              "append protocol/role dims to contexts (default false)");
    flags.add(cmd, "--threads", "threads", "parallel agent execution threads (default 1)");
    flags.add(cmd, "--forbidden-tokens", "forbidden_tokens",
              "comma-separated token ids the guardrail blocks (default none)");
    flags.add(cmd, "--fiedler-window", "fiedler_window",
              "collaboration-graph window in rounds (default 5)");
}

template <typename T>
std::vector<T> parse_list(const std::string& s, const std::string& what) {
    std::vector<T> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            if constexpr (std::is_same_v<T, int>) {
                out.push_back(std::stoi(item));
            } else if constexpr (std::is_same_v<T, uint64_t>) {
                out.push_back(std::stoull(item));
            } else if constexpr (std::is_same_v<T, double>) {
                out.push_back(std::stod(item));
            } else {
                out.push_back(item);
            }
        } catch (const std::exception&) {
            throw config_error(what + ": cannot parse list item '" + item + "'");
        }
    }
    if (out.empty()) throw config_error(what + ": empty list");
    return out;
}

template <>
std::vector<std::string> parse_list<std::string>(const std::string& s, const std::string& what) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    if (out.empty()) throw config_error(what + ": empty list");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"orchestra: matchmade peer-to-peer knowledge-distillation simulator"};
    app.require_subcommand(1);

    std::optional<std::string> config_path;
    FlagSet run_flags, sweep_flags, validate_flags;

    auto* cmd_run = app.add_subcommand("run", "execute one experiment");
    cmd_run->add_option("--config", config_path, "key=value config file");
    register_config_flags(cmd_run, run_flags);

    auto* cmd_sweep = app.add_subcommand("sweep", "run a grid of experiments");
    std::string sweep_agents = "8", sweep_policies, sweep_seeds = "42", sweep_alphas;
    int sweep_jobs = 1;
    cmd_sweep->add_option("--config", config_path, "key=value config file");
    register_config_flags(cmd_sweep, sweep_flags);
    cmd_sweep->add_option("--agents-grid", sweep_agents, "comma list of federation sizes (default 8)");
    cmd_sweep->add_option("--policies", sweep_policies, "comma list of policies (required)");
    cmd_sweep->add_option("--seeds", sweep_seeds, "comma list of seeds (default 42)");
    cmd_sweep->add_option("--alphas", sweep_alphas, "comma list of heterogeneity alphas (default: base alpha)");
    cmd_sweep->add_option("--jobs", sweep_jobs, "parallel child runs (default 1)");

    auto* cmd_report = app.add_subcommand("report", "aggregate a sweep manifest");
    std::string manifest_path, report_prefix;
    cmd_report->add_option("--manifest", manifest_path, "sweep manifest JSON")->required();
    cmd_report->add_option("--output", report_prefix,
                           "output prefix for .csv/.json (default: next to the manifest)");

    auto* cmd_validate = app.add_subcommand("validate-config", "resolve and echo a configuration");
    cmd_validate->add_option("--config", config_path, "key=value config file");
    register_config_flags(cmd_validate, validate_flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_run->parsed()) {
            ExperimentConfig cfg = load_config(config_path, run_flags.values);
            ExperimentResult result = run_experiment(cfg);
            std::string dir = write_run_artifacts(result);
            std::cout << "run complete: " << dir << "\n";
            return 0;
        }

        if (cmd_sweep->parsed()) {
            if (sweep_policies.empty()) throw config_error("sweep: --policies is required");
            SweepGrid grid;
            grid.agents = parse_list<int>(sweep_agents, "--agents-grid");
            grid.policies = parse_list<std::string>(sweep_policies, "--policies");
            grid.seeds = parse_list<uint64_t>(sweep_seeds, "--seeds");

            auto& overrides = sweep_flags.values;
            if (!overrides.count("policy")) overrides["policy"] = grid.policies.front();
            ExperimentConfig base = load_config(config_path, overrides);
            grid.alphas = sweep_alphas.empty() ? std::vector<double>{base.alpha}
                                               : parse_list<double>(sweep_alphas, "--alphas");

            fs::create_directories(base.output_dir);
            nlohmann::json manifest = run_sweep(base, grid, base.output_dir, sweep_jobs, std::cerr);
            fs::path mpath = fs::path(base.output_dir) / "manifest.json";
            std::ofstream mf(mpath);
            mf << manifest.dump(2) << "\n";
            std::cout << "sweep manifest: " << mpath.string() << "\n";
            if (sweep_had_failures(manifest)) {
                std::cerr << "error: some sweep runs failed (see manifest)\n";
                return 1;
            }
            return 0;
        }

        if (cmd_report->parsed()) {
            std::ifstream mf(manifest_path);
            if (!mf) throw input_error("cannot open manifest: " + manifest_path);
            nlohmann::json manifest = nlohmann::json::parse(mf);
            ReportOutput rep = make_report(manifest);
            if (report_prefix.empty()) {
                report_prefix = (fs::path(manifest_path).parent_path() / "report").string();
            }
            std::ofstream cf(report_prefix + ".csv");
            cf << rep.csv;
            std::ofstream jf(report_prefix + ".json");
            jf << rep.json.dump(2) << "\n";
            std::cout << "report: " << report_prefix << ".csv " << report_prefix << ".json\n";
            return 0;
        }

        if (cmd_validate->parsed()) {
            ExperimentConfig cfg = load_config(config_path, validate_flags.values);
            std::cout << cfg.to_json().dump(2) << "\n";
            return 0;
        }
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
