#include "orchestra/experiment.hpp"

#include <deque>
#include <filesystem>
#include <fstream>

#include "orchestra/errors.hpp"

namespace orchestra {

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

template <typename WorldT>
void run_rounds(WorldT& world, CpmState& cpm, const ExperimentConfig& cfg,
                ExperimentResult& result) {
    ProtocolConfig pcfg = protocol_config(cfg);
    std::deque<MatchSet> window;
    double t0 = 0.0;
    double regret = 0.0;
    for (int round = 0; round < cfg.rounds; ++round) {
        RoundOutput out = run_round(world, cpm, pcfg, round, t0);
        t0 = out.close_ts;

        window.push_back(out.matches);
        while (static_cast<int>(window.size()) > cfg.fiedler_window) window.pop_front();

        RoundMetrics m;
        m.round = round;
        m.policy = to_string(cfg.policy);
        m.seed = cfg.seed;
        m.mean_reward_raw = out.mean_reward_raw;
        m.mean_reward_norm = out.mean_reward_norm;
        regret += out.oracle_expected_total - out.policy_expected_total;
        m.cumulative_regret = regret;
        m.mean_pass_proxy = out.mean_pass_proxy;
        m.mean_js_selected = out.mean_js_selected;
        m.fiedler_lambda2 =
            fiedler_value(std::vector<MatchSet>(window.begin(), window.end()), cfg.n_agents);
        m.n_pairs = out.n_pairs;
        m.n_blocked = out.n_blocked;
        m.pairs = pairs_column(out.matches);
        result.rounds.push_back(std::move(m));

        result.events.insert(result.events.end(), out.events.begin(), out.events.end());
    }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    if ((cfg.policy == ExperimentPolicy::central_kd || cfg.policy == ExperimentPolicy::fedid) &&
        cfg.world != WorldKind::toy) {
        throw config_error("policy: central_kd and fedid require the toy world");
    }

    ExperimentResult result;
    result.config = cfg;
    result.cpm.bandit = BanditState(2 * kProfileDims + (cfg.context_role_bits ? 2 : 0));

    if (cfg.world == WorldKind::linear) {
        LinearWorldParams wp;
        wp.n_agents = cfg.n_agents;
        wp.alpha = cfg.alpha;
        wp.noise_sigma = cfg.noise_sigma;
        wp.master_seed = cfg.seed;
        wp.context_options.role_bits = cfg.context_role_bits;
        LinearWorld world = make_linear_world(wp);
        result.cpm.last_profiles = world.profiles;
        result.world_info["kind"] = "linear";
        result.world_info["theta_star"] = vector_json(world.theta_star);
        run_rounds(world, result.cpm, cfg, result);
    } else {
        ToyWorldParams wp;
        wp.n_agents = cfg.n_agents;
        wp.examples_per_category = cfg.examples_per_category;
        wp.pretrain_epochs = cfg.pretrain_epochs;
        wp.label_noise = cfg.label_noise;
        wp.transfer_size = cfg.transfer_size;
        wp.alpha = cfg.alpha;
        wp.learning_rate = cfg.learning_rate;
        wp.master_seed = cfg.seed;
        ToyWorld world = make_toy_world(wp);
        if (cfg.policy == ExperimentPolicy::fedid) {
            // Server uses the shared vocabulary at the largest capacity.
            world.server = TinyAgentModel(cfg.n_agents, kNumCategories, cfg.learning_rate);
        }
        result.cpm.last_profiles = initial_profiles(world);
        result.world_info["kind"] = "toy";
        nlohmann::json caps = nlohmann::json::array();
        for (const auto& m : world.models) caps.push_back(m.n_states);
        result.world_info["n_states"] = caps;
        result.world_info["transfer_size"] = static_cast<int>(world.xfer.prompts.size());
        run_rounds(world, result.cpm, cfg, result);
        for (size_t a = 0; a < world.models.size(); ++a) {
            result.final_pass_per_agent.push_back(pass_proxy(world.models[a], world.own_eval[a]));
        }
    }
    return result;
}

nlohmann::json ExperimentResult::summary() const {
    nlohmann::json j;
    j["config"] = config.to_json();
    j["world"] = world_info;
    j["n_rounds_run"] = rounds.size();

    if (!rounds.empty()) {
        const RoundMetrics& last = rounds.back();
        nlohmann::json fin;
        fin["round"] = last.round;
        fin["mean_reward_raw"] = last.mean_reward_raw;
        fin["mean_reward_norm"] = last.mean_reward_norm;
        fin["cumulative_regret"] = last.cumulative_regret;
        fin["mean_pass_proxy"] = last.mean_pass_proxy;
        fin["mean_js_selected"] = last.mean_js_selected;
        fin["fiedler_lambda2"] = last.fiedler_lambda2;

        std::vector<double> rewards, passes;
        for (const auto& r : rounds) {
            rewards.push_back(r.mean_reward_raw);
            passes.push_back(r.mean_pass_proxy);
        }
        fin["final_quarter_reward"] = final_quarter_mean(rewards);
        fin["final_quarter_pass_proxy"] = final_quarter_mean(passes);
        j["final"] = std::move(fin);
    } else {
        j["final"] = nullptr;
    }

    if (!final_pass_per_agent.empty()) j["final_pass_per_agent"] = final_pass_per_agent;

    // Relative improvements against other policies are a sweep-level
    // aggregate; a standalone run has no baselines to compare against.
    j["relative_improvements"] = nlohmann::json::object();

    nlohmann::json bandit;
    bandit["dim"] = cpm.bandit.dim;
    bandit["update_count"] = cpm.bandit.update_count;
    bandit["A"] = matrix_json(cpm.bandit.A);
    bandit["b"] = vector_json(cpm.bandit.b);
    bandit["normalizer"] = {{"count", cpm.normalizer.count},
                            {"mean", cpm.normalizer.mean},
                            {"m2", cpm.normalizer.m2},
                            {"epsilon", cpm.normalizer.epsilon}};
    j["bandit"] = std::move(bandit);
    return j;
}

std::string write_run_artifacts(const ExperimentResult& result) {
    namespace fs = std::filesystem;
    fs::path dir = fs::path(result.config.output_dir) /
                   (to_string(result.config.policy) + "-" + std::to_string(result.config.seed));
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw input_error("cannot create run directory " + dir.string() + ": " + ec.message());

    write_metrics_csv((dir / "metrics.csv").string(), result.rounds);
    write_event_log((dir / "events.ndjson").string(), result.events);
    std::ofstream f(dir / "summary.json");
    if (!f) throw input_error("cannot write summary.json under " + dir.string());
    f << result.summary().dump(2) << "\n";
    return dir.string();
}

}  // namespace orchestra
