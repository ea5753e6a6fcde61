#include "orchestra/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "orchestra/errors.hpp"

namespace orchestra {

std::string to_string(WorldKind w) { return w == WorldKind::linear ? "linear" : "toy"; }

std::string to_string(ExperimentPolicy p) {
    switch (p) {
        case ExperimentPolicy::linucb: return "linucb";
        case ExperimentPolicy::random: return "random";
        case ExperimentPolicy::hetero_greedy: return "hetero_greedy";
        case ExperimentPolicy::oracle: return "oracle";
        case ExperimentPolicy::central_kd: return "central_kd";
        case ExperimentPolicy::fedid: return "fedid";
        case ExperimentPolicy::local_only: return "local_only";
    }
    return "?";
}

WorldKind world_from_string(const std::string& s) {
    if (s == "linear") return WorldKind::linear;
    if (s == "toy") return WorldKind::toy;
    throw config_error("world: expected 'linear' or 'toy', got '" + s + "'");
}

ExperimentPolicy policy_from_string(const std::string& s) {
    if (s == "linucb") return ExperimentPolicy::linucb;
    if (s == "random") return ExperimentPolicy::random;
    if (s == "hetero_greedy") return ExperimentPolicy::hetero_greedy;
    if (s == "oracle") return ExperimentPolicy::oracle;
    if (s == "central_kd") return ExperimentPolicy::central_kd;
    if (s == "fedid") return ExperimentPolicy::fedid;
    if (s == "local_only") return ExperimentPolicy::local_only;
    throw config_error("policy: unknown policy '" + s + "'");
}

namespace {

const std::set<std::string> kKeys = {
    "world",        "policy",      "n_agents",       "rounds",
    "seed",         "alpha",       "pair_budget",    "beta",
    "gamma",        "delta",       "alpha_kd_start", "alpha_kd_end",
    "prefilter_k",  "quorum_ms",   "base_ms",        "jitter_ms",
    "transfer_size","output_dir",  "noise_sigma",    "examples_per_category",
    "label_noise",  "local_epochs","distill_epochs", "learning_rate",
    "pretrain_epochs",
    "kd_temperature","context_role_bits","threads",  "forbidden_tokens",
    "fiedler_window",
};

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::map<std::string, std::string> parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("config file not found: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw config_error("config line " + std::to_string(lineno) + ": expected key=value");
        }
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

class KvReader {
public:
    explicit KvReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    std::string raw(const std::string& key) const { return kv_.at(key); }

    int get_int(const std::string& key, int fallback) {
        if (!has(key)) return fallback;
        try {
            size_t pos = 0;
            int v = std::stoi(kv_[key], &pos);
            if (pos != kv_[key].size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw config_error(key + ": expected an integer, got '" + kv_[key] + "'");
        }
    }

    uint64_t get_u64(const std::string& key, uint64_t fallback) {
        if (!has(key)) return fallback;
        try {
            size_t pos = 0;
            uint64_t v = std::stoull(kv_[key], &pos);
            if (pos != kv_[key].size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw config_error(key + ": expected an unsigned integer, got '" + kv_[key] + "'");
        }
    }

    double get_double(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        try {
            size_t pos = 0;
            double v = std::stod(kv_[key], &pos);
            if (pos != kv_[key].size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw config_error(key + ": expected a number, got '" + kv_[key] + "'");
        }
    }

    bool get_bool(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const std::string& v = kv_[key];
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw config_error(key + ": expected a boolean, got '" + v + "'");
    }

    std::string get_string(const std::string& key, const std::string& fallback) {
        return has(key) ? kv_[key] : fallback;
    }

private:
    std::map<std::string, std::string> kv_;
};

}  // namespace

const std::set<std::string>& config_keys() { return kKeys; }

ExperimentConfig load_config(const std::optional<std::string>& path,
                             const std::map<std::string, std::string>& overrides) {
    std::map<std::string, std::string> kv;
    if (path) kv = parse_file(*path);
    for (const auto& [k, v] : overrides) kv[k] = v;  // flags win

    std::vector<std::string> unknown;
    for (const auto& [k, v] : kv) {
        if (!kKeys.count(k)) unknown.push_back(k);
    }
    if (!unknown.empty()) {
        std::string msg = "unknown config key(s):";
        for (const auto& k : unknown) msg += " " + k;
        throw config_error(msg);
    }

    for (const char* required : {"world", "policy"}) {
        if (!kv.count(required)) throw config_error(std::string("missing required key: ") + required);
    }

    KvReader r(std::move(kv));
    ExperimentConfig c;
    c.world = world_from_string(r.raw("world"));
    c.policy = policy_from_string(r.raw("policy"));
    c.n_agents = r.get_int("n_agents", 8);
    c.rounds = r.get_int("rounds", 20);

    uint64_t default_seed = 42;
    if (const char* env = std::getenv("ORCHESTRA_SEED")) {
        try {
            default_seed = std::stoull(env);
        } catch (const std::exception&) {
            throw config_error("ORCHESTRA_SEED: expected an unsigned integer");
        }
    }
    c.seed = r.get_u64("seed", default_seed);

    c.alpha = r.get_double("alpha", 0.1);
    if (r.has("pair_budget") && r.raw("pair_budget") != "auto") {
        c.pair_budget = r.get_int("pair_budget", 0);
        c.pair_budget_auto = false;
    } else {
        c.pair_budget = c.n_agents / 2;  // auto: floor(N/2)
        c.pair_budget_auto = true;
    }
    c.beta = r.get_double("beta", 1.0);
    c.gamma = r.get_double("gamma", 1.0);
    c.delta = r.get_double("delta", 0.01);
    c.alpha_kd_start = r.get_double("alpha_kd_start", 0.2);
    c.alpha_kd_end = r.get_double("alpha_kd_end", 0.5);
    if (r.has("prefilter_k")) {
        int k = r.get_int("prefilter_k", 0);
        if (k != 0) c.prefilter_k = k;
    }
    c.quorum_ms = r.get_double("quorum_ms", 1000.0);
    c.base_ms = r.get_double("base_ms", 5.0);
    c.jitter_ms = r.get_double("jitter_ms", 10.0);
    c.transfer_size = r.get_int("transfer_size", 128);
    c.output_dir = r.get_string("output_dir", "runs");
    c.noise_sigma = r.get_double("noise_sigma", 0.1);
    c.examples_per_category = r.get_int("examples_per_category", 40);
    c.pretrain_epochs = r.get_int("pretrain_epochs", 200);
    c.label_noise = r.get_double("label_noise", 0.1);
    c.local_epochs = r.get_int("local_epochs", 1);
    c.distill_epochs = r.get_int("distill_epochs", 2);
    c.learning_rate = r.get_double("learning_rate", 0.1);
    c.kd_temperature = r.get_double("kd_temperature", 1.0);
    c.context_role_bits = r.get_bool("context_role_bits", false);
    c.threads = r.get_int("threads", 1);
    if (r.has("forbidden_tokens") && !r.raw("forbidden_tokens").empty()) {
        std::stringstream ss(r.raw("forbidden_tokens"));
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                c.forbidden_tokens.push_back(std::stoi(trim(tok)));
            } catch (const std::exception&) {
                throw config_error("forbidden_tokens: expected a comma-separated integer list");
            }
        }
    }
    c.fiedler_window = r.get_int("fiedler_window", 5);

    // Range checks, each naming its key.
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw config_error(msg);
    };
    require(c.n_agents >= 2 && c.n_agents <= 64, "n_agents: must lie in [2, 64]");
    require(c.rounds >= 0, "rounds: must be >= 0");
    require(c.alpha > 0.0, "alpha: must be > 0");
    require(c.pair_budget >= 1, "pair_budget: must be >= 1 (or 'auto')");
    require(c.beta >= 0.0, "beta: must be >= 0");
    require(c.gamma > 0.0, "gamma: must be > 0");
    require(c.delta >= 0.0, "delta: must be >= 0");
    require(c.alpha_kd_start >= 0.0 && c.alpha_kd_start <= 1.0, "alpha_kd_start: must lie in [0, 1]");
    require(c.alpha_kd_end >= 0.0 && c.alpha_kd_end <= 1.0, "alpha_kd_end: must lie in [0, 1]");
    if (c.prefilter_k) {
        require(*c.prefilter_k >= 1, "prefilter_k: must be >= 1");
        require(*c.prefilter_k < c.n_agents, "prefilter_k: must be < n_agents");
    }
    require(c.quorum_ms >= 0.0, "quorum_ms: must be >= 0");
    require(c.base_ms >= 0.0, "base_ms: must be >= 0");
    require(c.jitter_ms >= 0.0, "jitter_ms: must be >= 0");
    require(c.transfer_size >= 1, "transfer_size: must be >= 1");
    require(c.noise_sigma >= 0.0, "noise_sigma: must be >= 0");
    require(c.examples_per_category >= 1, "examples_per_category: must be >= 1");
    require(c.pretrain_epochs >= 0, "pretrain_epochs: must be >= 0");
    require(c.label_noise >= 0.0 && c.label_noise <= 1.0, "label_noise: must lie in [0, 1]");
    require(c.local_epochs >= 1, "local_epochs: must be >= 1");
    require(c.distill_epochs >= 1, "distill_epochs: must be >= 1");
    require(c.learning_rate > 0.0, "learning_rate: must be > 0");
    require(c.kd_temperature > 0.0, "kd_temperature: must be > 0");
    require(c.threads >= 1, "threads: must be >= 1");
    require(c.fiedler_window >= 1, "fiedler_window: must be >= 1");
    for (int t : c.forbidden_tokens) {
        require(t >= 0 && t < 16, "forbidden_tokens: token ids must lie in [0, 16)");
    }
    if (c.policy == ExperimentPolicy::oracle && c.world == WorldKind::toy) {
        require(c.n_agents <= kToyOracleMaxAgents,
                "policy: toy-world oracle is capped at n_agents <= " +
                    std::to_string(kToyOracleMaxAgents));
    }
    return c;
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["world"] = to_string(world);
    j["policy"] = to_string(policy);
    j["n_agents"] = n_agents;
    j["rounds"] = rounds;
    j["seed"] = seed;
    j["alpha"] = alpha;
    j["pair_budget"] = pair_budget;
    j["pair_budget_auto"] = pair_budget_auto;
    j["beta"] = beta;
    j["gamma"] = gamma;
    j["delta"] = delta;
    j["alpha_kd_start"] = alpha_kd_start;
    j["alpha_kd_end"] = alpha_kd_end;
    j["prefilter_k"] = prefilter_k ? nlohmann::json(*prefilter_k) : nlohmann::json();
    j["quorum_ms"] = quorum_ms;
    j["base_ms"] = base_ms;
    j["jitter_ms"] = jitter_ms;
    j["transfer_size"] = transfer_size;
    j["output_dir"] = output_dir;
    j["noise_sigma"] = noise_sigma;
    j["examples_per_category"] = examples_per_category;
    j["pretrain_epochs"] = pretrain_epochs;
    j["label_noise"] = label_noise;
    j["local_epochs"] = local_epochs;
    j["distill_epochs"] = distill_epochs;
    j["learning_rate"] = learning_rate;
    j["kd_temperature"] = kd_temperature;
    j["context_role_bits"] = context_role_bits;
    j["threads"] = threads;
    j["forbidden_tokens"] = forbidden_tokens;
    j["fiedler_window"] = fiedler_window;
    return j;
}

}  // namespace orchestra
