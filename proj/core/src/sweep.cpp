#include "orchestra/sweep.hpp"

#include <atomic>
#include <boost/math/distributions/students_t.hpp>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "orchestra/errors.hpp"
#include "orchestra/experiment.hpp"
#include "orchestra/metrics.hpp"

namespace orchestra {

namespace fs = std::filesystem;

namespace {

struct Cell {
    std::string policy;
    int agents;
    double alpha;
    uint64_t seed;

    bool operator<(const Cell& o) const {
        return std::tie(policy, agents, alpha, seed) < std::tie(o.policy, o.agents, o.alpha, o.seed);
    }
};

std::string cell_dir_name(int agents, double alpha) {
    return "n" + std::to_string(agents) + "-alpha" + format_metric(alpha);
}

}  // namespace

nlohmann::json run_sweep(const ExperimentConfig& base, const SweepGrid& grid,
                         const std::string& out_dir, int jobs, std::ostream& log) {
    if (grid.agents.empty() || grid.policies.empty() || grid.seeds.empty() || grid.alphas.empty()) {
        throw config_error("sweep: agents, policies, seeds and alphas must all be nonempty");
    }

    std::vector<Cell> cells;
    std::set<Cell> seen;
    for (const auto& policy : grid.policies) {
        policy_from_string(policy);  // reject bad names before any work
        for (int agents : grid.agents) {
            for (double alpha : grid.alphas) {
                for (uint64_t seed : grid.seeds) {
                    Cell c{policy, agents, alpha, seed};
                    if (!seen.insert(c).second) {
                        log << "warning: duplicate sweep cell dropped: " << policy << " n=" << agents
                            << " alpha=" << alpha << " seed=" << seed << "\n";
                        continue;
                    }
                    cells.push_back(std::move(c));
                }
            }
        }
    }

    struct RunRecord {
        nlohmann::json j;
    };
    std::vector<RunRecord> records(cells.size());

    auto execute = [&](size_t i) {
        const Cell& c = cells[i];
        ExperimentConfig cfg = base;
        cfg.policy = policy_from_string(c.policy);
        cfg.n_agents = c.agents;
        cfg.alpha = c.alpha;
        cfg.seed = c.seed;
        if (base.pair_budget_auto) cfg.pair_budget = c.agents / 2;
        cfg.output_dir = (fs::path(out_dir) / cell_dir_name(c.agents, c.alpha)).string();

        nlohmann::json rec;
        rec["policy"] = c.policy;
        rec["n_agents"] = c.agents;
        rec["alpha"] = c.alpha;
        rec["seed"] = c.seed;
        rec["world"] = to_string(base.world);
        try {
            auto start = std::chrono::steady_clock::now();
            ExperimentResult result = run_experiment(cfg);
            std::string dir = write_run_artifacts(result);
            auto wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start);
            size_t feedbacks = 0;
            for (const auto& e : result.events) {
                if (e.kind == EventKind::FeedbackReceived) ++feedbacks;
            }
            rec["dir"] = dir;
            rec["status"] = "ok";
            rec["wall_s"] = wall.count();
            rec["rewards_per_s"] =
                wall.count() > 0.0 ? static_cast<double>(feedbacks) / wall.count() : 0.0;
        } catch (const std::exception& ex) {
            rec["status"] = "failed";
            rec["error"] = ex.what();
        }
        records[i].j = std::move(rec);
    };

    if (jobs <= 1) {
        for (size_t i = 0; i < cells.size(); ++i) execute(i);
    } else {
        std::atomic<size_t> next{0};
        auto worker = [&] {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= cells.size()) return;
                execute(i);
            }
        };
        std::vector<std::thread> pool;
        size_t n_workers = std::min<size_t>(static_cast<size_t>(jobs), cells.size());
        for (size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    nlohmann::json manifest;
    manifest["base_config"] = base.to_json();
    manifest["out_dir"] = out_dir;
    nlohmann::json runs = nlohmann::json::array();
    for (auto& r : records) runs.push_back(std::move(r.j));
    manifest["runs"] = std::move(runs);
    return manifest;
}

bool sweep_had_failures(const nlohmann::json& manifest) {
    for (const auto& r : manifest.at("runs")) {
        if (r.at("status").get<std::string>() != "ok") return true;
    }
    return false;
}

double ci95_half_width(const std::vector<double>& samples) {
    const size_t n = samples.size();
    if (n < 2) return 0.0;
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : samples) ss += (v - mean) * (v - mean);
    double sd = std::sqrt(ss / static_cast<double>(n - 1));
    boost::math::students_t dist(static_cast<double>(n - 1));
    double t = boost::math::quantile(dist, 0.975);
    return t * sd / std::sqrt(static_cast<double>(n));
}

ReportOutput make_report(const nlohmann::json& manifest) {
    struct CellData {
        std::string world;
        std::vector<double> fq_reward, fq_pass, fq_js, final_regret;
        // Per-round series averaged over seeds, for relative improvement.
        std::vector<std::vector<double>> reward_series, pass_series;
    };
    struct CellKey {
        std::string policy;
        int agents;
        double alpha;
        bool operator<(const CellKey& o) const {
            return std::tie(policy, agents, alpha) < std::tie(o.policy, o.agents, o.alpha);
        }
    };

    std::map<CellKey, CellData> cells;
    size_t ok_runs = 0;
    for (const auto& r : manifest.at("runs")) {
        if (r.at("status").get<std::string>() != "ok") continue;
        ++ok_runs;
        CellKey key{r.at("policy").get<std::string>(), r.at("n_agents").get<int>(),
                    r.at("alpha").get<double>()};
        auto rounds = read_metrics_csv((fs::path(r.at("dir").get<std::string>()) / "metrics.csv").string());
        if (rounds.empty()) continue;
        std::vector<double> reward, pass, js;
        for (const auto& m : rounds) {
            reward.push_back(m.mean_reward_raw);
            pass.push_back(m.mean_pass_proxy);
            js.push_back(m.mean_js_selected);
        }
        CellData& cd = cells[key];
        cd.world = r.at("world").get<std::string>();
        cd.fq_reward.push_back(final_quarter_mean(reward));
        cd.fq_pass.push_back(final_quarter_mean(pass));
        cd.fq_js.push_back(final_quarter_mean(js));
        cd.final_regret.push_back(rounds.back().cumulative_regret);
        cd.reward_series.push_back(std::move(reward));
        cd.pass_series.push_back(std::move(pass));
    }
    if (ok_runs == 0) throw input_error("make_report: manifest has no successful runs");

    auto mean_of = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    auto mean_series = [](const std::vector<std::vector<double>>& series) {
        std::vector<double> out(series[0].size(), 0.0);
        for (const auto& s : series) {
            for (size_t i = 0; i < s.size(); ++i) out[i] += s[i];
        }
        for (auto& v : out) v /= static_cast<double>(series.size());
        return out;
    };

    nlohmann::json jcells = nlohmann::json::array();
    std::ostringstream csv;
    csv << kReportCsvHeader << "\n";
    for (const auto& [key, cd] : cells) {
        nlohmann::json jc;
        jc["policy"] = key.policy;
        jc["world"] = cd.world;
        jc["n_agents"] = key.agents;
        jc["alpha"] = key.alpha;
        jc["n_seeds"] = cd.fq_reward.size();
        bool insufficient = cd.fq_reward.size() < 2;
        jc["insufficient_seeds"] = insufficient;
        jc["fq_reward"] = {{"mean", mean_of(cd.fq_reward)}, {"ci95", ci95_half_width(cd.fq_reward)}};
        jc["fq_pass_proxy"] = {{"mean", mean_of(cd.fq_pass)}, {"ci95", ci95_half_width(cd.fq_pass)}};
        jc["final_regret"] = {{"mean", mean_of(cd.final_regret)},
                              {"ci95", ci95_half_width(cd.final_regret)}};
        jc["fq_js_selected"] = {{"mean", mean_of(cd.fq_js)}, {"ci95", ci95_half_width(cd.fq_js)}};

        double rel_reward = std::numeric_limits<double>::quiet_NaN();
        double rel_pass = std::numeric_limits<double>::quiet_NaN();
        CellKey random_key{"random", key.agents, key.alpha};
        auto rnd = cells.find(random_key);
        if (key.policy != "random" && rnd != cells.end()) {
            try {
                rel_reward = relative_improvement(mean_series(cd.reward_series),
                                                  mean_series(rnd->second.reward_series));
            } catch (const input_error&) { /* zero baseline; leave NaN */ }
            try {
                rel_pass = relative_improvement(mean_series(cd.pass_series),
                                                mean_series(rnd->second.pass_series));
            } catch (const input_error&) { /* zero baseline; leave NaN */ }
        }
        jc["rel_improvement_reward_vs_random"] =
            std::isnan(rel_reward) ? nlohmann::json() : nlohmann::json(rel_reward);
        jc["rel_improvement_pass_vs_random"] =
            std::isnan(rel_pass) ? nlohmann::json() : nlohmann::json(rel_pass);
        jcells.push_back(jc);

        csv << key.policy << ',' << cd.world << ',' << key.agents << ',' << format_metric(key.alpha)
            << ',' << cd.fq_reward.size() << ',' << format_metric(mean_of(cd.fq_reward)) << ','
            << format_metric(ci95_half_width(cd.fq_reward)) << ','
            << format_metric(mean_of(cd.fq_pass)) << ',' << format_metric(ci95_half_width(cd.fq_pass))
            << ',' << format_metric(mean_of(cd.final_regret)) << ','
            << format_metric(ci95_half_width(cd.final_regret)) << ','
            << format_metric(mean_of(cd.fq_js)) << ',' << format_metric(ci95_half_width(cd.fq_js))
            << ',' << (std::isnan(rel_reward) ? "" : format_metric(rel_reward)) << ','
            << (std::isnan(rel_pass) ? "" : format_metric(rel_pass)) << ','
            << (insufficient ? "1" : "0") << "\n";
    }

    ReportOutput out;
    out.json["cells"] = std::move(jcells);
    out.csv = csv.str();
    return out;
}

}  // namespace orchestra
