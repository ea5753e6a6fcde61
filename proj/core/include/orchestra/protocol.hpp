#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "orchestra/bandit.hpp"
#include "orchestra/config.hpp"
#include "orchestra/dataset.hpp"
#include "orchestra/linear_world.hpp"
#include "orchestra/matchmaker.hpp"
#include "orchestra/rng.hpp"

namespace orchestra {

enum class EventKind {
    ProfileSubmitted,
    DirectiveDispatched,
    PackageDelivered,
    FeedbackReceived,
    RoundClosed,
};

const char* to_string(EventKind k);
EventKind event_kind_from_string(const std::string& s);

struct RoundEvent {
    double ts_ms = 0.0;
    EventKind kind = EventKind::ProfileSubmitted;
    int sender = -1;    // -1 marks the CPM / no agent
    int receiver = -1;
    nlohmann::json payload;

    nlohmann::json to_json() const;  // includes payload_digest
    static RoundEvent from_json(const nlohmann::json& j);
};

// base + uniform jitter, drawn independently per message direction.
struct LatencyModel {
    double base_ms = 5.0;
    double jitter_ms = 10.0;

    double sample(RngStream& rng) const {
        return base_ms + (jitter_ms > 0.0 ? rng.uniform(0.0, jitter_ms) : 0.0);
    }
};

// Blocks a package iff any entry contains a forbidden token. A blocked
// exchange skips distillation but still reports feedback carrying the
// 0.1 KB directive-handshake penalty.
struct GuardrailFilter {
    std::set<int> forbidden_tokens;

    bool passes(const KnowledgePackage& pkg) const;
};

inline constexpr double kBlockedHandshakeKb = 0.1;

// The CPM's mutable state: bandit, reward normalizer and the last profile
// it holds for each agent (the stale fallback when a submission misses
// the matchmaking quorum).
struct CpmState {
    BanditState bandit;
    RewardNormalizer normalizer;
    std::vector<AgentProfile> last_profiles;
};

struct ProtocolConfig {
    ExperimentPolicy policy = ExperimentPolicy::linucb;
    int pair_budget = 1;
    double beta = 1.0;
    std::optional<int> prefilter_k;
    ContextOptions context_options;
    LatencyModel latency;
    double quorum_ms = 1000.0;
    GuardrailFilter guardrail;
    RewardParams reward;
    double alpha_kd_start = 0.2;
    double alpha_kd_end = 0.5;
    double kd_temperature = 1.0;
    int total_rounds = 20;
    int local_epochs = 1;
    int distill_epochs = 2;
    int threads = 1;
    uint64_t master_seed = 42;
};

ProtocolConfig protocol_config(const ExperimentConfig& cfg);

struct RoundOutput {
    MatchSet matches;
    std::vector<RoundEvent> events;  // ordered as processed
    double close_ts = 0.0;
    double mean_reward_raw = 0.0;
    double mean_reward_norm = 0.0;
    double mean_pass_proxy = 0.0;
    double mean_js_selected = 0.0;
    int n_pairs = 0;
    int n_blocked = 0;
    // Linear world only: per-round expected totals for regret.
    double oracle_expected_total = 0.0;
    double policy_expected_total = 0.0;
    // Parameter digests for the phase-isolation check (toy world).
    std::vector<uint64_t> phase1_digest;
    std::vector<uint64_t> pre_exchange_digest;
};

// One four-phase round. Mutates the world and CPM state in place; events
// come back in processed order starting at simulated time t0.
RoundOutput run_round(ToyWorld& world, CpmState& cpm, const ProtocolConfig& cfg, int round,
                      double t0);
RoundOutput run_round(LinearWorld& world, CpmState& cpm, const ProtocolConfig& cfg, int round,
                      double t0);

bool guardrail_check(const GuardrailFilter& filter, const KnowledgePackage& pkg);

// Newline-delimited JSON, one event per line.
void write_event_log(const std::string& path, const std::vector<RoundEvent>& events);
std::vector<RoundEvent> read_event_log(const std::string& path);

// Checks the causality invariants: non-decreasing timestamps, every
// PackageDelivered preceded by a DirectiveDispatched for the same pair
// within the round, every FeedbackReceived preceded by a PackageDelivered.
// Throws input_error on the first violation.
void validate_event_log(const std::vector<RoundEvent>& events);

struct ReplayResult {
    BanditState bandit;
    RewardNormalizer normalizer;
    size_t feedback_count = 0;
};

// Re-derives the final bandit state by applying the logged feedback
// events in order to a fresh CPM.
ReplayResult replay_feedback(const std::vector<RoundEvent>& events, int dim);

uint64_t params_digest(const TinyAgentModel& model);

// Profiles of the untrained world, seeding the CPM's stale-profile
// fallback before the first round.
std::vector<AgentProfile> initial_profiles(const ToyWorld& world);

nlohmann::json profile_payload(const AgentProfile& p);
AgentProfile profile_from_payload(const nlohmann::json& j);

}  // namespace orchestra
