#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace orchestra {

inline constexpr int kVocabSize = 16;
inline constexpr int kPromptLen = 4;
inline constexpr int kNumCategories = 12;
inline constexpr int kGlobalStates = kNumCategories * kPromptLen;  // 48

// One supervised sequence: conditioning states plus the tokens to emit.
struct ToyExample {
    int example_id = 0;
    int category = 0;
    std::vector<int> states;   // global state ids, length kPromptLen
    std::vector<int> targets;  // token ids, length kPromptLen
};

struct AgentDataset {
    int agent_id = 0;
    std::vector<ToyExample> train;
    std::vector<ToyExample> val;

    std::vector<double> category_counts() const;  // over train + val, length 12
};

struct TransferPrompt {
    int prompt_id = 0;
    int category = 0;
    std::vector<int> states;  // length kPromptLen
};

// Shared, privacy-vetted prompt set used only for knowledge exchange.
// Prompt ids are disjoint from every agent's example ids.
struct TransferSet {
    std::vector<TransferPrompt> prompts;
};

struct KnowledgePackageEntry {
    int prompt_id = 0;
    std::vector<int> tokens;  // greedy-decoded token ids, length kPromptLen
};

struct KnowledgePackage {
    int teacher_id = 0;
    std::vector<KnowledgePackageEntry> entries;
    double payload_kb = 0.0;  // total tokens * 2 bytes / 1024
};

struct RewardParams {
    double gamma = 1.0;  // loss-reduction weight
    double delta = 0.01; // communication penalty per KB
};

struct DistillationConfig {
    double alpha_kd = 0.2;
    double temperature = 1.0;  // recorded but unused by text-level distillation
};

// Category-conditioned softmax next-token predictor. Each agent folds the
// global state space into its own n_states rows through a deterministic
// hash shared by all models of the same capacity, so smaller models alias
// more states onto the same row.
struct TinyAgentModel {
    int agent_id = 0;
    int vocab_size = kVocabSize;
    int n_states = 8;
    double learning_rate = 0.1;
    Eigen::MatrixXd params;  // n_states x vocab_size, zero-initialized

    TinyAgentModel() = default;
    TinyAgentModel(int id, int states, double lr);

    int local_state(int global_state) const;
    // Softmax over the row for a global state.
    Eigen::VectorXd token_distribution(int global_state) const;
    // Argmax token per position; ties resolve to the lowest token id.
    std::vector<int> greedy_decode(const std::vector<int>& states) const;
};

struct TrainResult {
    double loss_pre = 0.0;
    double loss_post = 0.0;
};

struct DistillResult {
    double total_pre = 0.0;
    double total_post = 0.0;
    double local_pre = 0.0;
    double local_post = 0.0;
    double kd_pre = 0.0;
    double kd_post = 0.0;
};

// Full-batch gradient descent on mean token-level cross-entropy over the
// train split. An empty train split is a no-op that reports the
// validation loss instead.
TrainResult local_train_step(TinyAgentModel& model, const AgentDataset& data, int epochs);

// Greedy decodes every transfer prompt with the teacher.
KnowledgePackage generate_package(const TinyAgentModel& teacher, const TransferSet& xfer);

// Minimizes (1-alpha_kd) * L_local + alpha_kd * L_kd where L_kd is the
// mean cross-entropy of the student's distribution against the teacher's
// decoded tokens, re-encoded through the student's own state hashing.
// alpha_kd == 0 follows the exact local_train_step code path.
DistillResult distill_step(TinyAgentModel& student, const KnowledgePackage& package,
                           const TransferSet& xfer, const AgentDataset& local,
                           const DistillationConfig& cfg, int epochs);

// gamma * (loss_pre - loss_post) - delta * payload_kb
double compute_reward(double loss_pre, double loss_post, double payload_kb,
                      const RewardParams& params);

// Fraction of examples whose full greedy decode matches the target exactly.
double pass_proxy(const TinyAgentModel& model, const std::vector<ToyExample>& eval_set);

// Mean token-level cross-entropy over a set of examples.
double mean_cross_entropy(const TinyAgentModel& model, const std::vector<ToyExample>& examples);

// Validation loss; falls back to the train split when the validation
// split is empty (single-example agents).
double validation_loss(const TinyAgentModel& model, const AgentDataset& data);

// Linear alpha_kd schedule across a run.
double alpha_kd_at(int round, int total_rounds, double start, double end);

}  // namespace orchestra
