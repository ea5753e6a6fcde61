#include "orchestra/tiny_model.hpp"

#include <cmath>
#include <unordered_map>

#include "orchestra/errors.hpp"

namespace orchestra {

namespace {

// Deterministic fold of the global state space into n_states rows.
// Depends only on capacity, so models of the same capacity class share
// the same fold (the toy analogue of a shared tokenizer). Rows are
// partitioned into one bank per prompt position, so the positions of a
// category never alias each other; capacity controls how finely the
// bank resolves categories.
int bank_size(int position, int n_states) {
    return n_states / kPromptLen + (position < n_states % kPromptLen ? 1 : 0);
}

int state_fold(int global_state, int n_states) {
    int position = global_state % kPromptLen;
    int category = global_state / kPromptLen;
    int base = 0;
    for (int t = 0; t < position; ++t) base += bank_size(t, n_states);
    uint64_t z = (static_cast<uint64_t>(category) + 1) * 0x9E3779B97F4A7C15ULL;
    z ^= z >> 29;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 32;
    return base + static_cast<int>(z % static_cast<uint64_t>(bank_size(position, n_states)));
}

// Per-row target counts. CE and its gradient only depend on how many
// times each (row, token) pair occurs, so positions are aggregated once.
struct RowCounts {
    Eigen::MatrixXd counts;      // n_states x vocab
    Eigen::VectorXd row_totals;  // n_states
    double total = 0.0;

    RowCounts(int n_states, int vocab)
        : counts(Eigen::MatrixXd::Zero(n_states, vocab)),
          row_totals(Eigen::VectorXd::Zero(n_states)) {}

    void add(int row, int token) {
        counts(row, token) += 1.0;
        row_totals(row) += 1.0;
        total += 1.0;
    }

    bool empty() const { return total == 0.0; }
};

double row_logsumexp(const Eigen::MatrixXd& params, int row) {
    double m = params.row(row).maxCoeff();
    double s = 0.0;
    for (int v = 0; v < params.cols(); ++v) s += std::exp(params(row, v) - m);
    return m + std::log(s);
}

// Mean CE of `model` against the aggregated targets.
double counts_ce(const TinyAgentModel& model, const RowCounts& rc) {
    if (rc.empty()) return 0.0;
    double loss = 0.0;
    for (int r = 0; r < model.n_states; ++r) {
        if (rc.row_totals(r) == 0.0) continue;
        loss += rc.row_totals(r) * row_logsumexp(model.params, r) -
                rc.counts.row(r).dot(model.params.row(r));
    }
    return loss / rc.total;
}

// d(mean CE)/d(params), accumulated into grad with the given weight.
void accumulate_gradient(const TinyAgentModel& model, const RowCounts& rc, double weight,
                         Eigen::MatrixXd& grad) {
    if (rc.empty() || weight == 0.0) return;
    for (int r = 0; r < model.n_states; ++r) {
        if (rc.row_totals(r) == 0.0) continue;
        double m = model.params.row(r).maxCoeff();
        Eigen::VectorXd p = (model.params.row(r).array() - m).exp();
        p /= p.sum();
        grad.row(r) += (weight / rc.total) *
                       (rc.row_totals(r) * p.transpose() - rc.counts.row(r));
    }
}

RowCounts example_counts(const TinyAgentModel& model, const std::vector<ToyExample>& examples) {
    RowCounts rc(model.n_states, model.vocab_size);
    for (const auto& ex : examples) {
        for (size_t t = 0; t < ex.states.size(); ++t) {
            rc.add(model.local_state(ex.states[t]), ex.targets[t]);
        }
    }
    return rc;
}

// Shared gradient-descent loop; both local training and distillation end
// up here so that alpha_kd = 0 reproduces local training bit for bit.
TrainResult train_on_counts(TinyAgentModel& model, const RowCounts& rc, int epochs) {
    TrainResult res;
    res.loss_pre = counts_ce(model, rc);
    if (rc.empty()) {
        res.loss_post = res.loss_pre;
        return res;
    }
    for (int e = 0; e < epochs; ++e) {
        Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(model.n_states, model.vocab_size);
        accumulate_gradient(model, rc, 1.0, grad);
        model.params.noalias() -= model.learning_rate * grad;
    }
    res.loss_post = counts_ce(model, rc);
    return res;
}

}  // namespace

std::vector<double> AgentDataset::category_counts() const {
    std::vector<double> counts(kNumCategories, 0.0);
    for (const auto& ex : train) counts[static_cast<size_t>(ex.category)] += 1.0;
    for (const auto& ex : val) counts[static_cast<size_t>(ex.category)] += 1.0;
    return counts;
}

TinyAgentModel::TinyAgentModel(int id, int states, double lr)
    : agent_id(id), n_states(states), learning_rate(lr) {
    if (states <= 0) throw contract_error("TinyAgentModel: n_states must be positive");
    params = Eigen::MatrixXd::Zero(states, vocab_size);
}

int TinyAgentModel::local_state(int global_state) const {
    return state_fold(global_state, n_states);
}

Eigen::VectorXd TinyAgentModel::token_distribution(int global_state) const {
    int r = local_state(global_state);
    double m = params.row(r).maxCoeff();
    Eigen::VectorXd p = (params.row(r).array() - m).exp();
    return p / p.sum();
}

std::vector<int> TinyAgentModel::greedy_decode(const std::vector<int>& states) const {
    std::vector<int> out;
    out.reserve(states.size());
    for (int s : states) {
        int r = local_state(s);
        int best = 0;
        for (int v = 1; v < vocab_size; ++v) {
            if (params(r, v) > params(r, best)) best = v;  // ties keep the lowest id
        }
        out.push_back(best);
    }
    return out;
}

TrainResult local_train_step(TinyAgentModel& model, const AgentDataset& data, int epochs) {
    if (epochs < 1) throw contract_error("local_train_step: epochs must be >= 1");
    if (data.train.empty()) {
        double v = mean_cross_entropy(model, data.val);
        return TrainResult{v, v};
    }
    RowCounts rc = example_counts(model, data.train);
    return train_on_counts(model, rc, epochs);
}

KnowledgePackage generate_package(const TinyAgentModel& teacher, const TransferSet& xfer) {
    KnowledgePackage pkg;
    pkg.teacher_id = teacher.agent_id;
    size_t total_tokens = 0;
    for (const auto& prompt : xfer.prompts) {
        KnowledgePackageEntry e;
        e.prompt_id = prompt.prompt_id;
        e.tokens = teacher.greedy_decode(prompt.states);
        total_tokens += e.tokens.size();
        pkg.entries.push_back(std::move(e));
    }
    pkg.payload_kb = static_cast<double>(total_tokens) * 2.0 / 1024.0;
    return pkg;
}

DistillResult distill_step(TinyAgentModel& student, const KnowledgePackage& package,
                           const TransferSet& xfer, const AgentDataset& local,
                           const DistillationConfig& cfg, int epochs) {
    if (cfg.alpha_kd < 0.0 || cfg.alpha_kd > 1.0) {
        throw config_error("distill_step: alpha_kd must lie in [0,1]");
    }
    if (epochs < 1) throw contract_error("distill_step: epochs must be >= 1");

    std::unordered_map<int, const TransferPrompt*> by_id;
    for (const auto& p : xfer.prompts) by_id[p.prompt_id] = &p;

    RowCounts local_rc = example_counts(student, local.train);
    RowCounts kd_rc(student.n_states, student.vocab_size);
    for (const auto& entry : package.entries) {
        auto it = by_id.find(entry.prompt_id);
        if (it == by_id.end()) throw input_error("distill_step: package prompt not in transfer set");
        const auto& states = it->second->states;
        // Re-encoding: the teacher's tokens are adopted verbatim; only the
        // prompt states pass through the student's own fold.
        for (size_t t = 0; t < states.size(); ++t) {
            kd_rc.add(student.local_state(states[t]), entry.tokens[t]);
        }
    }

    DistillResult res;
    if (cfg.alpha_kd == 0.0) {
        // Degenerate form of the combined objective; shares the exact
        // local-training path so trajectories match bitwise.
        res.kd_pre = counts_ce(student, kd_rc);
        TrainResult tr = train_on_counts(student, local_rc, epochs);
        res.local_pre = tr.loss_pre;
        res.local_post = tr.loss_post;
        res.total_pre = tr.loss_pre;
        res.total_post = tr.loss_post;
        res.kd_post = counts_ce(student, kd_rc);
        return res;
    }

    const double a = cfg.alpha_kd;
    res.local_pre = counts_ce(student, local_rc);
    res.kd_pre = counts_ce(student, kd_rc);
    res.total_pre = (1.0 - a) * res.local_pre + a * res.kd_pre;
    for (int e = 0; e < epochs; ++e) {
        Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(student.n_states, student.vocab_size);
        accumulate_gradient(student, local_rc, 1.0 - a, grad);
        accumulate_gradient(student, kd_rc, a, grad);
        student.params.noalias() -= student.learning_rate * grad;
    }
    res.local_post = counts_ce(student, local_rc);
    res.kd_post = counts_ce(student, kd_rc);
    res.total_post = (1.0 - a) * res.local_post + a * res.kd_post;
    return res;
}

double compute_reward(double loss_pre, double loss_post, double payload_kb,
                      const RewardParams& params) {
    if (!std::isfinite(loss_pre) || !std::isfinite(loss_post) || !std::isfinite(payload_kb)) {
        throw input_error("compute_reward: non-finite input");
    }
    if (payload_kb < 0.0) throw input_error("compute_reward: negative payload");
    return params.gamma * (loss_pre - loss_post) - params.delta * payload_kb;
}

double pass_proxy(const TinyAgentModel& model, const std::vector<ToyExample>& eval_set) {
    if (eval_set.empty()) throw contract_error("pass_proxy: empty eval set");
    int hits = 0;
    for (const auto& ex : eval_set) {
        if (model.greedy_decode(ex.states) == ex.targets) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(eval_set.size());
}

double mean_cross_entropy(const TinyAgentModel& model, const std::vector<ToyExample>& examples) {
    if (examples.empty()) return 0.0;
    RowCounts rc = example_counts(model, examples);
    return counts_ce(model, rc);
}

double validation_loss(const TinyAgentModel& model, const AgentDataset& data) {
    return mean_cross_entropy(model, data.val.empty() ? data.train : data.val);
}

double alpha_kd_at(int round, int total_rounds, double start, double end) {
    if (total_rounds <= 1) return start;
    double frac = static_cast<double>(round) / static_cast<double>(total_rounds - 1);
    return start + (end - start) * frac;
}

}  // namespace orchestra
