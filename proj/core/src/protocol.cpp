#include "orchestra/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <fstream>
#include <map>
#include <thread>

#include "orchestra/baselines.hpp"
#include "orchestra/errors.hpp"

namespace orchestra {

const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::ProfileSubmitted: return "ProfileSubmitted";
        case EventKind::DirectiveDispatched: return "DirectiveDispatched";
        case EventKind::PackageDelivered: return "PackageDelivered";
        case EventKind::FeedbackReceived: return "FeedbackReceived";
        case EventKind::RoundClosed: return "RoundClosed";
    }
    return "?";
}

EventKind event_kind_from_string(const std::string& s) {
    if (s == "ProfileSubmitted") return EventKind::ProfileSubmitted;
    if (s == "DirectiveDispatched") return EventKind::DirectiveDispatched;
    if (s == "PackageDelivered") return EventKind::PackageDelivered;
    if (s == "FeedbackReceived") return EventKind::FeedbackReceived;
    if (s == "RoundClosed") return EventKind::RoundClosed;
    throw input_error("unknown event kind: " + s);
}

nlohmann::json RoundEvent::to_json() const {
    nlohmann::json j;
    j["ts_ms"] = ts_ms;
    j["kind"] = to_string(kind);
    j["sender"] = sender;
    j["receiver"] = receiver;
    char digest[17];
    std::snprintf(digest, sizeof(digest), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(payload.dump())));
    j["payload_digest"] = digest;
    j["payload"] = payload;
    return j;
}

RoundEvent RoundEvent::from_json(const nlohmann::json& j) {
    RoundEvent e;
    e.ts_ms = j.at("ts_ms").get<double>();
    e.kind = event_kind_from_string(j.at("kind").get<std::string>());
    e.sender = j.at("sender").get<int>();
    e.receiver = j.at("receiver").get<int>();
    e.payload = j.at("payload");
    return e;
}

bool GuardrailFilter::passes(const KnowledgePackage& pkg) const {
    if (forbidden_tokens.empty()) return true;
    for (const auto& e : pkg.entries) {
        for (int t : e.tokens) {
            if (forbidden_tokens.count(t)) return false;
        }
    }
    return true;
}

bool guardrail_check(const GuardrailFilter& filter, const KnowledgePackage& pkg) {
    return filter.passes(pkg);
}

ProtocolConfig protocol_config(const ExperimentConfig& cfg) {
    ProtocolConfig p;
    p.policy = cfg.policy;
    p.pair_budget = cfg.pair_budget;
    p.beta = cfg.beta;
    p.prefilter_k = cfg.prefilter_k;
    p.context_options.role_bits = cfg.context_role_bits;
    p.latency = LatencyModel{cfg.base_ms, cfg.jitter_ms};
    p.quorum_ms = cfg.quorum_ms;
    p.guardrail.forbidden_tokens.insert(cfg.forbidden_tokens.begin(), cfg.forbidden_tokens.end());
    p.reward = RewardParams{cfg.gamma, cfg.delta};
    p.alpha_kd_start = cfg.alpha_kd_start;
    p.alpha_kd_end = cfg.alpha_kd_end;
    p.kd_temperature = cfg.kd_temperature;
    p.total_rounds = cfg.rounds;
    p.local_epochs = cfg.local_epochs;
    p.distill_epochs = cfg.distill_epochs;
    p.threads = cfg.threads;
    p.master_seed = cfg.seed;
    return p;
}

uint64_t params_digest(const TinyAgentModel& model) {
    uint64_t h = 0xCBF29CE484222325ULL;
    auto mix = [&h](const void* data, size_t len) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 0x100000001B3ULL;
        }
    };
    int dims[2] = {model.n_states, model.vocab_size};
    mix(dims, sizeof(dims));
    mix(model.params.data(), sizeof(double) * static_cast<size_t>(model.params.size()));
    return h;
}

nlohmann::json profile_payload(const AgentProfile& p) {
    nlohmann::json j;
    j["agent_id"] = p.agent_id;
    j["round"] = p.round;
    j["static"] = std::vector<double>(p.static_features.data(),
                                      p.static_features.data() + p.static_features.size());
    j["perf"] = std::vector<double>(p.perf_features.data(),
                                    p.perf_features.data() + p.perf_features.size());
    j["histogram"] = std::vector<double>(p.data_histogram.data(),
                                         p.data_histogram.data() + p.data_histogram.size());
    return j;
}

AgentProfile profile_from_payload(const nlohmann::json& j) {
    AgentProfile p;
    p.agent_id = j.at("agent_id").get<int>();
    p.round = j.at("round").get<int>();
    auto as_vec = [](const nlohmann::json& arr) {
        Eigen::VectorXd v(arr.size());
        for (size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
        return v;
    };
    p.static_features = as_vec(j.at("static"));
    p.perf_features = as_vec(j.at("perf"));
    p.data_histogram = as_vec(j.at("histogram"));
    return p;
}

namespace {

int kind_rank(EventKind k) { return static_cast<int>(k); }

void sort_events(std::vector<RoundEvent>& events) {
    std::stable_sort(events.begin(), events.end(), [](const RoundEvent& a, const RoundEvent& b) {
        if (a.ts_ms != b.ts_ms) return a.ts_ms < b.ts_ms;
        if (a.kind != b.kind) return kind_rank(a.kind) < kind_rank(b.kind);
        if (a.sender != b.sender) return a.sender < b.sender;
        return a.receiver < b.receiver;
    });
}

// Runs fn(0..n-1) on up to `threads` workers. Tasks must be independent;
// the loop is only a scheduling device, results land in caller-owned slots.
void run_parallel(int n, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= n) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    int n_workers = std::min(threads, n);
    pool.reserve(static_cast<size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

std::vector<double> json_array(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const nlohmann::json& arr) {
    Eigen::VectorXd v(arr.size());
    for (size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    return v;
}

AgentObservables toy_observables(const ToyWorld& world, int agent, int round, double post_train_loss) {
    const auto& model = world.models[static_cast<size_t>(agent)];
    const auto& data = world.datasets[static_cast<size_t>(agent)];
    AgentObservables obs;
    obs.agent_id = agent;
    obs.round = round;
    for (int i = 0; i < kCapacityPoolSize; ++i) {
        if (kCapacityPool[i] == model.n_states) obs.family_index = i;  // capacity class = model family
    }
    obs.category_counts = data.category_counts();

    Eigen::VectorXd hist = smoothed_histogram(obs.category_counts);
    Eigen::VectorXd uniform = Eigen::VectorXd::Constant(kHistogramDims, 1.0 / kHistogramDims);

    obs.metrics[kPassProxy] = pass_proxy(model, world.own_eval[static_cast<size_t>(agent)]);
    obs.metrics[kLocalLoss] = post_train_loss;
    obs.metrics[kValLoss] = validation_loss(model, data);
    obs.metrics[kJsToUniform] = js_divergence(hist, uniform);
    obs.metrics[kRewardEwma] = world.stats[static_cast<size_t>(agent)].reward_ewma;
    obs.metrics[kTeacherSuccessRate] = world.stats[static_cast<size_t>(agent)].teacher_success_rate();
    obs.previous_metrics = world.prev_metrics[static_cast<size_t>(agent)];
    return obs;
}

struct PendingFeedback {
    double ts = 0.0;
    int sender = 0;
    int receiver = 0;
    Eigen::VectorXd x;
    double r_raw = 0.0;
};

// Sorted feedback processing: normalize, update the bandit, patch the
// normalized value into the matching event payloads.
void process_feedback(std::vector<PendingFeedback>& pending, std::vector<RoundEvent>& events,
                      CpmState& cpm, RoundOutput& out, std::vector<AgentStats>* stats) {
    std::sort(pending.begin(), pending.end(), [](const PendingFeedback& a, const PendingFeedback& b) {
        if (a.ts != b.ts) return a.ts < b.ts;
        if (a.sender != b.sender) return a.sender < b.sender;
        return a.receiver < b.receiver;
    });
    double sum_raw = 0.0, sum_norm = 0.0;
    for (const auto& f : pending) {
        double r_norm = normalize_reward(cpm.normalizer, f.r_raw);
        update(cpm.bandit, f.x, r_norm);
        sum_raw += f.r_raw;
        sum_norm += r_norm;
        if (stats) {
            auto& recv = (*stats)[static_cast<size_t>(f.receiver)];
            recv.reward_ewma = 0.9 * recv.reward_ewma + 0.1 * f.r_raw;
            auto& send = (*stats)[static_cast<size_t>(f.sender)];
            send.teaching_total++;
            if (f.r_raw > 0.0) send.teaching_successes++;
        }
        for (auto& e : events) {
            if (e.kind == EventKind::FeedbackReceived && e.sender == f.sender &&
                e.receiver == f.receiver && e.ts_ms == f.ts) {
                e.payload["r_norm"] = r_norm;
                break;
            }
        }
    }
    if (!pending.empty()) {
        out.mean_reward_raw = sum_raw / static_cast<double>(pending.size());
        out.mean_reward_norm = sum_norm / static_cast<double>(pending.size());
    }
}

double close_round(std::vector<RoundEvent>& events, RoundOutput& out, int round, double t0) {
    double max_ts = t0;
    for (const auto& e : events) max_ts = std::max(max_ts, e.ts_ms);
    RoundEvent closed;
    closed.ts_ms = max_ts;
    closed.kind = EventKind::RoundClosed;
    closed.payload = {{"round", round}, {"n_pairs", out.n_pairs}, {"n_blocked", out.n_blocked}};
    events.push_back(closed);
    sort_events(events);
    return max_ts;
}

double mean_selected_js(const MatchSet& ms, const std::vector<AgentProfile>& profiles) {
    if (ms.pairs.empty()) return 0.0;
    std::map<int, const AgentProfile*> by_id;
    for (const auto& p : profiles) by_id[p.agent_id] = &p;
    double total = 0.0;
    for (const auto& p : ms.pairs) {
        total += js_divergence(by_id.at(p.sender_id)->data_histogram,
                               by_id.at(p.receiver_id)->data_histogram);
    }
    return total / static_cast<double>(ms.pairs.size());
}

MatchSet dispatch_policy(const ProtocolConfig& cfg, int round,
                         const std::vector<AgentProfile>& profiles, CpmState& cpm,
                         const TrueScoreFn& oracle_scorer) {
    MatchmakerConfig mc;
    mc.pair_budget = cfg.pair_budget;
    mc.prefilter_k = cfg.prefilter_k;
    mc.beta = cfg.beta;
    mc.context_options = cfg.context_options;

    MatchSet ms;
    switch (cfg.policy) {
        case ExperimentPolicy::linucb: {
            mc.policy = MatchPolicy::linucb;
            ms = match_linucb(profiles, cpm.bandit, mc);
            break;
        }
        case ExperimentPolicy::random: {
            mc.policy = MatchPolicy::random;
            std::vector<int> ids;
            for (const auto& p : profiles) ids.push_back(p.agent_id);
            RngStream rng(cfg.master_seed, "match_random", 0, round);
            ms = match_random(ids, mc, rng);
            attach_contexts(ms, profiles, cfg.context_options);
            break;
        }
        case ExperimentPolicy::hetero_greedy: {
            mc.policy = MatchPolicy::hetero_greedy;
            std::map<int, double> recent;
            for (const auto& p : profiles) recent[p.agent_id] = p.perf_features[kPassProxy];
            ms = match_hetero_greedy(profiles, recent, mc);
            break;
        }
        case ExperimentPolicy::oracle: {
            mc.policy = MatchPolicy::oracle;
            ms = match_oracle(profiles, oracle_scorer, mc);
            break;
        }
        default:
            throw contract_error("dispatch_policy: not a matchmaking policy");
    }
    ms.round = round;
    return ms;
}

bool is_p2p_policy(ExperimentPolicy p) {
    return p == ExperimentPolicy::linucb || p == ExperimentPolicy::random ||
           p == ExperimentPolicy::hetero_greedy || p == ExperimentPolicy::oracle;
}

}  // namespace

std::vector<AgentProfile> initial_profiles(const ToyWorld& world) {
    std::vector<AgentProfile> out;
    for (int a = 0; a < world.n_agents(); ++a) {
        const auto& model = world.models[static_cast<size_t>(a)];
        const auto& data = world.datasets[static_cast<size_t>(a)];
        double train_loss = mean_cross_entropy(model, data.train);
        out.push_back(build_profile(toy_observables(world, a, 0, train_loss)));
    }
    return out;
}

RoundOutput run_round(ToyWorld& world, CpmState& cpm, const ProtocolConfig& cfg, int round,
                      double t0) {
    const int n = world.n_agents();
    const double alpha_kd = alpha_kd_at(round, cfg.total_rounds, cfg.alpha_kd_start, cfg.alpha_kd_end);
    RoundOutput out;
    std::vector<RoundEvent> events;

    // Phase 1: local updates in parallel, then profiling.
    std::vector<TrainResult> train(static_cast<size_t>(n));
    run_parallel(n, cfg.threads, [&](int a) {
        train[static_cast<size_t>(a)] = local_train_step(
            world.models[static_cast<size_t>(a)], world.datasets[static_cast<size_t>(a)],
            cfg.local_epochs);
    });
    out.phase1_digest.resize(static_cast<size_t>(n));
    out.pre_exchange_digest.assign(static_cast<size_t>(n), 0);
    for (int a = 0; a < n; ++a) {
        out.phase1_digest[static_cast<size_t>(a)] = params_digest(world.models[static_cast<size_t>(a)]);
    }

    std::vector<AgentProfile> fresh(static_cast<size_t>(n));
    std::vector<double> arrival(static_cast<size_t>(n));
    for (int a = 0; a < n; ++a) {
        AgentObservables obs = toy_observables(world, a, round, train[static_cast<size_t>(a)].loss_post);
        world.prev_metrics[static_cast<size_t>(a)] = obs.metrics;
        fresh[static_cast<size_t>(a)] = build_profile(obs);
        RngStream lat(cfg.master_seed, "lat_profile", a, round);
        arrival[static_cast<size_t>(a)] = t0 + cfg.latency.sample(lat);
        RoundEvent e;
        e.ts_ms = arrival[static_cast<size_t>(a)];
        e.kind = EventKind::ProfileSubmitted;
        e.sender = a;
        e.payload = profile_payload(fresh[static_cast<size_t>(a)]);
        events.push_back(std::move(e));
    }

    // Phase 2: matchmaking on the quorum of arrived profiles.
    double max_arrival = *std::max_element(arrival.begin(), arrival.end());
    double t_match = std::min(max_arrival, t0 + cfg.quorum_ms);
    std::vector<AgentProfile> used(static_cast<size_t>(n));
    for (int a = 0; a < n; ++a) {
        used[static_cast<size_t>(a)] = arrival[static_cast<size_t>(a)] <= t_match
                                           ? fresh[static_cast<size_t>(a)]
                                           : cpm.last_profiles[static_cast<size_t>(a)];
    }
    cpm.last_profiles = fresh;

    if (cfg.policy == ExperimentPolicy::local_only) {
        for (int a = 0; a < n; ++a) {
            out.pre_exchange_digest[static_cast<size_t>(a)] = out.phase1_digest[static_cast<size_t>(a)];
        }
        double pass = 0.0;
        for (int a = 0; a < n; ++a) {
            pass += pass_proxy(world.models[static_cast<size_t>(a)], world.own_eval[static_cast<size_t>(a)]);
        }
        out.mean_pass_proxy = pass / n;
        out.close_ts = close_round(events, out, round, t0);
        out.events = std::move(events);
        return out;
    }

    if (cfg.policy == ExperimentPolicy::central_kd || cfg.policy == ExperimentPolicy::fedid) {
        // Centralized exchange replaces Phases 2-4: directives and package
        // broadcasts come from the server (id -1).
        std::vector<double> val_pre(static_cast<size_t>(n));
        for (int a = 0; a < n; ++a) {
            val_pre[static_cast<size_t>(a)] =
                validation_loss(world.models[static_cast<size_t>(a)], world.datasets[static_cast<size_t>(a)]);
        }
        DistillationConfig dc{alpha_kd, cfg.kd_temperature};
        double payload_kb = 0.0;
        if (cfg.policy == ExperimentPolicy::central_kd) {
            auto res = central_kd_round(world.models, world.xfer, world.datasets, dc,
                                        cfg.distill_epochs);
            payload_kb = res.payload_kb;
        } else {
            if (!world.server) throw contract_error("run_round: fedid policy without a server model");
            auto res = fedid_round(world.models, *world.server, world.xfer, world.datasets, dc,
                                   cfg.distill_epochs);
            payload_kb = res.payload_kb;
        }
        double reward_sum = 0.0;
        for (int a = 0; a < n; ++a) {
            double vpost = validation_loss(world.models[static_cast<size_t>(a)],
                                           world.datasets[static_cast<size_t>(a)]);
            reward_sum += compute_reward(val_pre[static_cast<size_t>(a)], vpost, payload_kb, cfg.reward);

            RngStream dlat(cfg.master_seed, "lat_directive", a, round);
            double ts_dir = t_match + cfg.latency.sample(dlat);
            RoundEvent dir;
            dir.ts_ms = ts_dir;
            dir.kind = EventKind::DirectiveDispatched;
            dir.receiver = a;
            dir.payload = {{"central", true}};
            events.push_back(std::move(dir));

            RngStream plat(cfg.master_seed, "lat_package", a, round);
            RoundEvent del;
            del.ts_ms = ts_dir + cfg.latency.sample(plat);
            del.kind = EventKind::PackageDelivered;
            del.receiver = a;
            del.payload = {{"kb", payload_kb}, {"blocked", false}};
            events.push_back(std::move(del));
        }
        out.mean_reward_raw = reward_sum / n;
        double pass = 0.0;
        for (int a = 0; a < n; ++a) {
            pass += pass_proxy(world.models[static_cast<size_t>(a)], world.own_eval[static_cast<size_t>(a)]);
        }
        out.mean_pass_proxy = pass / n;
        out.close_ts = close_round(events, out, round, t0);
        out.events = std::move(events);
        return out;
    }

    // P2P policies.
    TrueScoreFn oracle_scorer;
    std::map<int, KnowledgePackage> package_cache;
    if (cfg.policy == ExperimentPolicy::oracle) {
        if (n > kToyOracleMaxAgents) {
            throw capability_error("toy-world oracle matchmaking is capped at 16 agents");
        }
        // One-step lookahead: clone the student, run the real exchange,
        // score by the realized reward.
        oracle_scorer = [&](const ContextVector& ctx) {
            auto it = package_cache.find(ctx.sender_id);
            if (it == package_cache.end()) {
                it = package_cache
                         .emplace(ctx.sender_id,
                                  generate_package(world.models[static_cast<size_t>(ctx.sender_id)],
                                                   world.xfer))
                         .first;
            }
            const KnowledgePackage& pkg = it->second;
            const auto& data = world.datasets[static_cast<size_t>(ctx.receiver_id)];
            TinyAgentModel clone = world.models[static_cast<size_t>(ctx.receiver_id)];
            double pre = validation_loss(clone, data);
            if (!guardrail_check(cfg.guardrail, pkg)) {
                return compute_reward(0.0, 0.0, kBlockedHandshakeKb, cfg.reward);
            }
            DistillationConfig dc{alpha_kd, cfg.kd_temperature};
            distill_step(clone, pkg, world.xfer, data, dc, cfg.distill_epochs);
            double post = validation_loss(clone, data);
            return compute_reward(pre, post, pkg.payload_kb, cfg.reward);
        };
    }

    MatchSet ms = dispatch_policy(cfg, round, used, cpm, oracle_scorer);
    out.n_pairs = static_cast<int>(ms.pairs.size());
    out.mean_js_selected = mean_selected_js(ms, used);

    struct Exchange {
        double ts_delivered = 0.0;
        double ts_feedback = 0.0;
        bool blocked = false;
        double kb = 0.0;
        KnowledgePackage pkg;
        double val_pre = 0.0;
        double val_post = 0.0;
    };
    std::vector<Exchange> ex(ms.pairs.size());

    std::set<int> involved;
    for (size_t i = 0; i < ms.pairs.size(); ++i) {
        const auto& pr = ms.pairs[i];
        involved.insert(pr.sender_id);
        involved.insert(pr.receiver_id);
        out.pre_exchange_digest[static_cast<size_t>(pr.sender_id)] =
            params_digest(world.models[static_cast<size_t>(pr.sender_id)]);

        RngStream dlat(cfg.master_seed, "lat_directive", pr.sender_id, round);
        double ts_dir = t_match + cfg.latency.sample(dlat);
        RoundEvent dir;
        dir.ts_ms = ts_dir;
        dir.kind = EventKind::DirectiveDispatched;
        dir.sender = pr.sender_id;
        dir.receiver = pr.receiver_id;
        dir.payload = {{"x", json_array(pr.context.values)}};
        events.push_back(std::move(dir));

        ex[i].pkg = generate_package(world.models[static_cast<size_t>(pr.sender_id)], world.xfer);
        ex[i].blocked = !guardrail_check(cfg.guardrail, ex[i].pkg);
        ex[i].kb = ex[i].blocked ? kBlockedHandshakeKb : ex[i].pkg.payload_kb;
        if (ex[i].blocked) out.n_blocked++;

        RngStream plat(cfg.master_seed, "lat_package", pr.sender_id, round);
        ex[i].ts_delivered = ts_dir + cfg.latency.sample(plat);
        RoundEvent del;
        del.ts_ms = ex[i].ts_delivered;
        del.kind = EventKind::PackageDelivered;
        del.sender = pr.sender_id;
        del.receiver = pr.receiver_id;
        del.payload = {{"kb", ex[i].kb},
                       {"blocked", ex[i].blocked},
                       {"n_entries", ex[i].pkg.entries.size()}};
        events.push_back(std::move(del));

        RngStream flat(cfg.master_seed, "lat_feedback", pr.receiver_id, round);
        ex[i].ts_feedback = ex[i].ts_delivered + cfg.latency.sample(flat);

        out.pre_exchange_digest[static_cast<size_t>(pr.receiver_id)] =
            params_digest(world.models[static_cast<size_t>(pr.receiver_id)]);
    }
    for (int a = 0; a < n; ++a) {
        if (!involved.count(a)) {
            out.pre_exchange_digest[static_cast<size_t>(a)] = params_digest(world.models[static_cast<size_t>(a)]);
        }
    }

    // Phase 3: students integrate in parallel (receivers are disjoint).
    run_parallel(static_cast<int>(ms.pairs.size()), cfg.threads, [&](int i) {
        auto& e = ex[static_cast<size_t>(i)];
        if (e.blocked) return;
        int student = ms.pairs[static_cast<size_t>(i)].receiver_id;
        const auto& data = world.datasets[static_cast<size_t>(student)];
        e.val_pre = validation_loss(world.models[static_cast<size_t>(student)], data);
        DistillationConfig dc{alpha_kd, cfg.kd_temperature};
        distill_step(world.models[static_cast<size_t>(student)], e.pkg, world.xfer, data, dc,
                     cfg.distill_epochs);
        e.val_post = validation_loss(world.models[static_cast<size_t>(student)], data);
    });

    // Phase 4: rewards travel back and update the bandit in arrival order.
    std::vector<PendingFeedback> pending;
    for (size_t i = 0; i < ms.pairs.size(); ++i) {
        const auto& pr = ms.pairs[i];
        const auto& e = ex[i];
        double r_raw = e.blocked ? compute_reward(0.0, 0.0, kBlockedHandshakeKb, cfg.reward)
                                 : compute_reward(e.val_pre, e.val_post, e.kb, cfg.reward);
        RoundEvent fb;
        fb.ts_ms = e.ts_feedback;
        fb.kind = EventKind::FeedbackReceived;
        fb.sender = pr.sender_id;
        fb.receiver = pr.receiver_id;
        fb.payload = {{"x", json_array(pr.context.values)}, {"r_raw", r_raw}};
        events.push_back(std::move(fb));
        pending.push_back({e.ts_feedback, pr.sender_id, pr.receiver_id, pr.context.values, r_raw});
    }
    process_feedback(pending, events, cpm, out, &world.stats);

    double pass = 0.0;
    for (int a = 0; a < n; ++a) {
        pass += pass_proxy(world.models[static_cast<size_t>(a)], world.own_eval[static_cast<size_t>(a)]);
    }
    out.mean_pass_proxy = pass / n;

    out.close_ts = close_round(events, out, round, t0);
    out.events = std::move(events);
    out.matches = std::move(ms);
    return out;
}

RoundOutput run_round(LinearWorld& world, CpmState& cpm, const ProtocolConfig& cfg, int round,
                      double t0) {
    const int n = world.n_agents();
    RoundOutput out;
    std::vector<RoundEvent> events;

    if (!is_p2p_policy(cfg.policy) && cfg.policy != ExperimentPolicy::local_only) {
        throw config_error("linear world supports only matchmaking policies and local_only");
    }

    // Phase 1: profiles are fixed in this world; submission still pays latency.
    std::vector<double> arrival(static_cast<size_t>(n));
    for (int a = 0; a < n; ++a) {
        RngStream lat(cfg.master_seed, "lat_profile", a, round);
        arrival[static_cast<size_t>(a)] = t0 + cfg.latency.sample(lat);
        RoundEvent e;
        e.ts_ms = arrival[static_cast<size_t>(a)];
        e.kind = EventKind::ProfileSubmitted;
        e.sender = a;
        e.payload = profile_payload(world.profiles[static_cast<size_t>(a)]);
        events.push_back(std::move(e));
    }
    double max_arrival = *std::max_element(arrival.begin(), arrival.end());
    double t_match = std::min(max_arrival, t0 + cfg.quorum_ms);
    cpm.last_profiles = world.profiles;

    if (cfg.policy == ExperimentPolicy::local_only) {
        out.close_ts = close_round(events, out, round, t0);
        out.events = std::move(events);
        return out;
    }

    TrueScoreFn expected = [&world](const ContextVector& ctx) {
        return world.expected_reward(ctx.values);
    };
    MatchSet ms = dispatch_policy(cfg, round, world.profiles, cpm, expected);
    out.n_pairs = static_cast<int>(ms.pairs.size());
    out.mean_js_selected = mean_selected_js(ms, world.profiles);

    // Per-round regret benchmark: greedy-optimal pairing on true expected
    // rewards over the unrestricted candidate set.
    MatchmakerConfig oracle_mc;
    oracle_mc.pair_budget = cfg.pair_budget;
    oracle_mc.beta = cfg.beta;
    oracle_mc.context_options = cfg.context_options;
    MatchSet oracle_ms = match_oracle(world.profiles, expected, oracle_mc);
    for (const auto& p : oracle_ms.pairs) out.oracle_expected_total += expected(p.context);
    for (const auto& p : ms.pairs) out.policy_expected_total += expected(p.context);

    std::vector<PendingFeedback> pending;
    for (const auto& pr : ms.pairs) {
        RngStream dlat(cfg.master_seed, "lat_directive", pr.sender_id, round);
        double ts_dir = t_match + cfg.latency.sample(dlat);
        RoundEvent dir;
        dir.ts_ms = ts_dir;
        dir.kind = EventKind::DirectiveDispatched;
        dir.sender = pr.sender_id;
        dir.receiver = pr.receiver_id;
        dir.payload = {{"x", json_array(pr.context.values)}};
        events.push_back(std::move(dir));

        RngStream plat(cfg.master_seed, "lat_package", pr.sender_id, round);
        double ts_del = ts_dir + cfg.latency.sample(plat);
        RoundEvent del;
        del.ts_ms = ts_del;
        del.kind = EventKind::PackageDelivered;
        del.sender = pr.sender_id;
        del.receiver = pr.receiver_id;
        del.payload = {{"kb", 0.0}, {"blocked", false}};
        events.push_back(std::move(del));

        RngStream noise(cfg.master_seed, "linear_reward", pr.receiver_id, round);
        double r_raw = linear_world_step(world.theta_star, pr.context.values,
                                         world.params.noise_sigma, noise);
        RngStream flat(cfg.master_seed, "lat_feedback", pr.receiver_id, round);
        double ts_fb = ts_del + cfg.latency.sample(flat);
        RoundEvent fb;
        fb.ts_ms = ts_fb;
        fb.kind = EventKind::FeedbackReceived;
        fb.sender = pr.sender_id;
        fb.receiver = pr.receiver_id;
        fb.payload = {{"x", json_array(pr.context.values)}, {"r_raw", r_raw}};
        events.push_back(std::move(fb));
        pending.push_back({ts_fb, pr.sender_id, pr.receiver_id, pr.context.values, r_raw});
    }
    process_feedback(pending, events, cpm, out, nullptr);

    out.close_ts = close_round(events, out, round, t0);
    out.events = std::move(events);
    out.matches = std::move(ms);
    return out;
}

void write_event_log(const std::string& path, const std::vector<RoundEvent>& events) {
    std::ofstream f(path);
    if (!f) throw input_error("write_event_log: cannot open " + path);
    for (const auto& e : events) f << e.to_json().dump() << "\n";
}

std::vector<RoundEvent> read_event_log(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw input_error("read_event_log: cannot open " + path);
    std::vector<RoundEvent> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        out.push_back(RoundEvent::from_json(nlohmann::json::parse(line)));
    }
    return out;
}

void validate_event_log(const std::vector<RoundEvent>& events) {
    double last_ts = -1.0;
    std::set<std::pair<int, int>> dispatched, delivered;
    for (size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (e.ts_ms < last_ts) {
            throw input_error("event log: timestamps decrease at index " + std::to_string(i));
        }
        last_ts = e.ts_ms;
        std::pair<int, int> key{e.sender, e.receiver};
        switch (e.kind) {
            case EventKind::DirectiveDispatched:
                dispatched.insert(key);
                break;
            case EventKind::PackageDelivered:
                if (!dispatched.count(key)) {
                    throw input_error("event log: PackageDelivered without directive at index " +
                                      std::to_string(i));
                }
                delivered.insert(key);
                break;
            case EventKind::FeedbackReceived:
                if (!delivered.count(key)) {
                    throw input_error("event log: FeedbackReceived without delivery at index " +
                                      std::to_string(i));
                }
                break;
            case EventKind::RoundClosed:
                dispatched.clear();
                delivered.clear();
                break;
            case EventKind::ProfileSubmitted:
                break;
        }
    }
}

ReplayResult replay_feedback(const std::vector<RoundEvent>& events, int dim) {
    ReplayResult res;
    res.bandit = BanditState(dim);
    for (const auto& e : events) {
        if (e.kind != EventKind::FeedbackReceived) continue;
        Eigen::VectorXd x = vector_from_json(e.payload.at("x"));
        double r_raw = e.payload.at("r_raw").get<double>();
        double r_norm = normalize_reward(res.normalizer, r_raw);
        update(res.bandit, x, r_norm);
        res.feedback_count++;
    }
    return res;
}

}  // namespace orchestra
