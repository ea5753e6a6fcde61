#include "orchestra/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "orchestra/errors.hpp"

namespace orchestra {

std::vector<double> cumulative_regret(const std::vector<double>& oracle_rewards,
                                      const std::vector<double>& policy_rewards) {
    if (oracle_rewards.size() != policy_rewards.size()) {
        throw input_error("cumulative_regret: series length mismatch");
    }
    std::vector<double> out(oracle_rewards.size());
    double acc = 0.0;
    for (size_t i = 0; i < oracle_rewards.size(); ++i) {
        acc += oracle_rewards[i] - policy_rewards[i];
        out[i] = acc;
    }
    return out;
}

double fiedler_value(const std::vector<MatchSet>& window, int n_agents) {
    if (n_agents < 2) throw contract_error("fiedler_value: need at least 2 agents");
    Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(n_agents, n_agents);
    bool any_edge = false;
    for (const auto& ms : window) {
        for (const auto& p : ms.pairs) {
            weights(p.sender_id, p.receiver_id) += 1.0;
            weights(p.receiver_id, p.sender_id) += 1.0;
            any_edge = true;
        }
    }
    if (!any_edge) return 0.0;

    Eigen::MatrixXd laplacian = -weights;
    for (int i = 0; i < n_agents; ++i) laplacian(i, i) = weights.row(i).sum();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(laplacian);
    double lambda2 = solver.eigenvalues()[1];
    return lambda2 < 0.0 ? 0.0 : lambda2;
}

double final_quarter_mean(const std::vector<double>& series) {
    if (series.empty()) throw input_error("final_quarter_mean: empty series");
    size_t start = (series.size() * 3) / 4;
    double sum = 0.0;
    for (size_t i = start; i < series.size(); ++i) sum += series[i];
    return sum / static_cast<double>(series.size() - start);
}

double relative_improvement(const std::vector<double>& policy_series,
                            const std::vector<double>& baseline_series) {
    double p = final_quarter_mean(policy_series);
    double b = final_quarter_mean(baseline_series);
    if (b == 0.0) throw input_error("relative_improvement: baseline final-quarter mean is zero");
    return (p - b) / std::abs(b);
}

std::string format_metric(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string pairs_column(const MatchSet& ms) {
    std::string out;
    for (size_t i = 0; i < ms.pairs.size(); ++i) {
        if (i) out += ';';
        out += std::to_string(ms.pairs[i].sender_id) + ">" + std::to_string(ms.pairs[i].receiver_id);
    }
    return out;
}

void write_metrics_csv(const std::string& path, const std::vector<RoundMetrics>& rounds) {
    std::ofstream f(path);
    if (!f) throw input_error("write_metrics_csv: cannot open " + path);
    f << kMetricsCsvHeader << "\n";
    for (const auto& m : rounds) {
        f << m.round << ',' << m.policy << ',' << m.seed << ',' << format_metric(m.mean_reward_raw)
          << ',' << format_metric(m.mean_reward_norm) << ',' << format_metric(m.cumulative_regret)
          << ',' << format_metric(m.mean_pass_proxy) << ',' << format_metric(m.mean_js_selected)
          << ',' << format_metric(m.fiedler_lambda2) << ',' << m.n_pairs << ',' << m.n_blocked
          << ',' << m.pairs << "\n";
    }
}

std::vector<RoundMetrics> read_metrics_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw input_error("read_metrics_csv: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw input_error("read_metrics_csv: empty file " + path);
    if (line != kMetricsCsvHeader) throw input_error("read_metrics_csv: unexpected header in " + path);

    std::vector<RoundMetrics> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() == 11) cells.push_back("");  // empty pairs column
        if (cells.size() != 12) throw input_error("read_metrics_csv: malformed row in " + path);

        RoundMetrics m;
        m.round = std::stoi(cells[0]);
        m.policy = cells[1];
        m.seed = std::stoull(cells[2]);
        m.mean_reward_raw = std::stod(cells[3]);
        m.mean_reward_norm = std::stod(cells[4]);
        m.cumulative_regret = std::stod(cells[5]);
        m.mean_pass_proxy = std::stod(cells[6]);
        m.mean_js_selected = std::stod(cells[7]);
        m.fiedler_lambda2 = std::stod(cells[8]);
        m.n_pairs = std::stoi(cells[9]);
        m.n_blocked = std::stoi(cells[10]);
        m.pairs = cells[11];
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace orchestra
