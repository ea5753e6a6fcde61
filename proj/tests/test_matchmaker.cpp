#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "orchestra/errors.hpp"
#include "orchestra/matchmaker.hpp"
#include "orchestra/rng.hpp"

using namespace orchestra;

namespace {

AgentProfile random_profile(RngStream& rng, int id) {
    AgentObservables obs;
    obs.agent_id = id;
    obs.family_index = id % 8;
    for (auto& m : obs.metrics) m = rng.uniform01();
    obs.category_counts.resize(12);
    auto w = rng.dirichlet(0.5, 12);
    for (int i = 0; i < 12; ++i) obs.category_counts[static_cast<size_t>(i)] = 100.0 * w[static_cast<size_t>(i)];
    return build_profile(obs);
}

std::vector<AgentProfile> random_profiles(RngStream& rng, int n) {
    std::vector<AgentProfile> out;
    for (int i = 0; i < n; ++i) out.push_back(random_profile(rng, i));
    return out;
}

void check_matchset_invariants(const MatchSet& ms, int budget) {
    CHECK(static_cast<int>(ms.pairs.size()) <= budget);
    std::set<int> seen;
    for (const auto& p : ms.pairs) {
        CHECK(p.sender_id != p.receiver_id);
        CHECK_FALSE(seen.count(p.sender_id));
        CHECK_FALSE(seen.count(p.receiver_id));
        seen.insert(p.sender_id);
        seen.insert(p.receiver_id);
    }
}

double pair_score(const Eigen::VectorXd& theta, const AgentProfile& s, const AgentProfile& r) {
    return theta.dot(build_context(s, r).values);
}

// Oracle: exhaustive maximum over all sets of <= budget disjoint directed
// pairs. Exponential; fine for n <= 6.
double best_total(const std::vector<AgentProfile>& ps, const Eigen::VectorXd& theta,
                  std::set<int> available, int budget) {
    if (budget == 0 || available.size() < 2) return 0.0;
    int a = *available.begin();
    std::set<int> rest = available;
    rest.erase(a);
    double best = best_total(ps, theta, rest, budget);  // a stays unmatched
    for (int b : rest) {
        std::set<int> remaining = rest;
        remaining.erase(b);
        double ab = pair_score(theta, ps[static_cast<size_t>(a)], ps[static_cast<size_t>(b)]);
        double ba = pair_score(theta, ps[static_cast<size_t>(b)], ps[static_cast<size_t>(a)]);
        best = std::max(best, std::max(ab, ba) + best_total(ps, theta, remaining, budget - 1));
    }
    return best;
}

// Straight-line transcription of the greedy max-JS pairing baseline:
// score all unordered pairs by JS divergence, sort descending, admit
// disjoint pairs up to the budget, teach from the higher performer.
MatchSet hetero_greedy_oracle(const std::vector<AgentProfile>& ps,
                              const std::map<int, double>& perf, int budget) {
    struct Entry {
        int i, j;
        double js;
    };
    std::vector<Entry> entries;
    for (size_t i = 0; i < ps.size(); ++i) {
        for (size_t j = i + 1; j < ps.size(); ++j) {
            entries.push_back({ps[i].agent_id, ps[j].agent_id,
                               js_divergence(ps[i].data_histogram, ps[j].data_histogram)});
        }
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.js != b.js) return a.js > b.js;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });
    MatchSet ms;
    std::set<int> used;
    for (const auto& e : entries) {
        if (static_cast<int>(ms.pairs.size()) >= budget) break;
        if (used.count(e.i) || used.count(e.j)) continue;
        used.insert(e.i);
        used.insert(e.j);
        int teacher = perf.at(e.j) > perf.at(e.i) ? e.j : e.i;
        int student = teacher == e.i ? e.j : e.i;
        ms.pairs.push_back({teacher, student, {}, std::nullopt});
    }
    return ms;
}

}  // namespace

TEST_CASE("match_linucb: budget cap and tie-break on a fresh bandit") {
    RngStream rng(1);
    auto ps = random_profiles(rng, 4);
    BanditState state(64);
    MatchmakerConfig cfg;
    cfg.pair_budget = 1;
    cfg.beta = 1.0;
    MatchSet ms = match_linucb(ps, state, cfg);
    CHECK(ms.pairs.size() == 1);

    // Orthonormal-equivalent case: identical profiles make every candidate
    // score equal, so the (0,1) direction wins by tie-break.
    std::vector<AgentProfile> same;
    for (int i = 0; i < 4; ++i) {
        AgentProfile p = ps[0];
        p.agent_id = i;
        same.push_back(p);
    }
    cfg.pair_budget = 2;
    MatchSet tie = match_linucb(same, state, cfg);
    REQUIRE(tie.pairs.size() == 2);
    CHECK(tie.pairs[0].sender_id == 0);
    CHECK(tie.pairs[0].receiver_id == 1);
    CHECK(tie.pairs[1].sender_id == 2);
    CHECK(tie.pairs[1].receiver_id == 3);
}

TEST_CASE("match_linucb: empty and error cases") {
    BanditState state(64);
    MatchmakerConfig cfg;
    cfg.pair_budget = 3;
    CHECK(match_linucb({}, state, cfg).pairs.empty());
    RngStream rng(2);
    CHECK(match_linucb(random_profiles(rng, 1), state, cfg).pairs.empty());

    BanditState wrong(10);
    auto ps = random_profiles(rng, 3);
    CHECK_THROWS_AS(match_linucb(ps, wrong, cfg), contract_error);
}

TEST_CASE("planted theta*: greedy equals the exhaustive optimum where optimality holds") {
    // Budget-filling greedy is not optimal on every instance (two agents
    // topping both the sender and receiver rankings can double-block), so
    // the exhaustive oracle first decides per instance whether greedy is
    // optimal; equality is asserted there, and the bound greedy <= optimum
    // everywhere. A healthy majority of random instances must land in the
    // equality set for the assertion to carry weight.
    RngStream rng(5);
    int optimal_instances = 0;
    for (int inst = 0; inst < 100; ++inst) {
        int n = 4 + static_cast<int>(rng.bounded(3));  // 4..6
        auto ps = random_profiles(rng, n);
        Eigen::VectorXd theta(64);
        for (int k = 0; k < 64; ++k) theta[k] = std::abs(rng.gaussian());

        MatchmakerConfig cfg;
        cfg.pair_budget = n / 2;
        TrueScoreFn score = [&](const ContextVector& ctx) { return theta.dot(ctx.values); };
        MatchSet ms = match_oracle(ps, score, cfg);
        double greedy_total = 0.0;
        for (const auto& p : ms.pairs) greedy_total += theta.dot(p.context.values);

        std::set<int> all;
        for (int i = 0; i < n; ++i) all.insert(i);
        double oracle_best = best_total(ps, theta, all, cfg.pair_budget);
        CHECK(greedy_total <= oracle_best + 1e-9);
        if (oracle_best - greedy_total <= 1e-9 * std::max(1.0, oracle_best)) {
            ++optimal_instances;
            CHECK(greedy_total == doctest::Approx(oracle_best).epsilon(1e-9));
        }
    }
    CHECK(optimal_instances >= 40);
}

TEST_CASE("greedy dominance: no single-swap perturbation improves the total") {
    RngStream rng(6);
    for (int inst = 0; inst < 50; ++inst) {
        int n = 4 + static_cast<int>(rng.bounded(5));  // 4..8
        auto ps = random_profiles(rng, n);
        Eigen::VectorXd theta(64);
        for (int k = 0; k < 64; ++k) theta[k] = rng.gaussian();
        MatchmakerConfig cfg;
        cfg.pair_budget = n / 2;
        TrueScoreFn score = [&](const ContextVector& ctx) { return theta.dot(ctx.values); };
        MatchSet ms = match_oracle(ps, score, cfg);

        double total = 0.0;
        for (const auto& p : ms.pairs) total += theta.dot(p.context.values);

        // A single swap replaces exactly one selected pair with one outside
        // candidate while the set stays disjoint.
        for (size_t drop = 0; drop < ms.pairs.size(); ++drop) {
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    if (i == j) continue;
                    bool valid = true;
                    double perturbed =
                        pair_score(theta, ps[static_cast<size_t>(i)], ps[static_cast<size_t>(j)]);
                    for (size_t k = 0; k < ms.pairs.size(); ++k) {
                        if (k == drop) continue;
                        const auto& p = ms.pairs[k];
                        if (p.sender_id == i || p.sender_id == j || p.receiver_id == i ||
                            p.receiver_id == j) {
                            valid = false;
                            break;
                        }
                        perturbed += theta.dot(p.context.values);
                    }
                    if (valid) CHECK(total >= perturbed - 1e-9);
                }
            }
        }
    }
}

TEST_CASE("match_random: forced pairing, odd counts, budget") {
    MatchmakerConfig cfg;
    cfg.pair_budget = 1;
    RngStream rng(3);
    MatchSet two = match_random({0, 1}, cfg, rng);
    REQUIRE(two.pairs.size() == 1);
    std::set<int> ids{two.pairs[0].sender_id, two.pairs[0].receiver_id};
    CHECK(ids == std::set<int>{0, 1});

    cfg.pair_budget = 2;
    MatchSet five = match_random({0, 1, 2, 3, 4}, cfg, rng);
    CHECK(five.pairs.size() == 2);
    check_matchset_invariants(five, 2);
}

TEST_CASE("match_random: golden pairing for seed 42 is stable across runs") {
    MatchmakerConfig cfg;
    cfg.pair_budget = 3;
    RngStream a(42, "match_random", 0, 0);
    MatchSet first = match_random({0, 1, 2, 3, 4, 5}, cfg, a);
    RngStream b(42, "match_random", 0, 0);
    MatchSet second = match_random({0, 1, 2, 3, 4, 5}, cfg, b);
    REQUIRE(first.pairs.size() == second.pairs.size());
    for (size_t i = 0; i < first.pairs.size(); ++i) {
        CHECK(first.pairs[i].sender_id == second.pairs[i].sender_id);
        CHECK(first.pairs[i].receiver_id == second.pairs[i].receiver_id);
    }
    // Golden values captured from the reference run of this stream scheme.
    REQUIRE(first.pairs.size() == 3);
    CHECK(first.pairs[0].sender_id == 5);
    CHECK(first.pairs[0].receiver_id == 2);
    CHECK(first.pairs[1].sender_id == 3);
    CHECK(first.pairs[1].receiver_id == 0);
    CHECK(first.pairs[2].sender_id == 4);
    CHECK(first.pairs[2].receiver_id == 1);
}

TEST_CASE("match_random: each perfect matching of 4 agents appears 1/3 of the time") {
    std::map<std::set<std::set<int>>, int> freq;
    const int trials = 10000;
    MatchmakerConfig cfg;
    cfg.pair_budget = 2;
    for (int seed = 0; seed < trials; ++seed) {
        RngStream rng(static_cast<uint64_t>(seed), "match_random", 0, 0);
        MatchSet ms = match_random({0, 1, 2, 3}, cfg, rng);
        REQUIRE(ms.pairs.size() == 2);
        std::set<std::set<int>> matching;
        for (const auto& p : ms.pairs) matching.insert({p.sender_id, p.receiver_id});
        freq[matching]++;
    }
    REQUIRE(freq.size() == 3);
    for (const auto& [matching, count] : freq) {
        double f = static_cast<double>(count) / trials;
        CHECK(f == doctest::Approx(1.0 / 3.0).epsilon(0.06));  // 1/3 +- 0.02
        CHECK(std::abs(f - 1.0 / 3.0) <= 0.02);
    }
}

TEST_CASE("match_hetero_greedy: identical histograms fall to tie-break order") {
    RngStream rng(8);
    std::vector<AgentProfile> ps;
    AgentProfile base = random_profile(rng, 0);
    for (int i = 0; i < 4; ++i) {
        AgentProfile p = base;
        p.agent_id = i;
        ps.push_back(p);
    }
    std::map<int, double> perf{{0, 0.1}, {1, 0.4}, {2, 0.2}, {3, 0.2}};
    MatchmakerConfig cfg;
    cfg.pair_budget = 2;
    MatchSet ms = match_hetero_greedy(ps, perf, cfg);
    REQUIRE(ms.pairs.size() == 2);
    // All scores 0 -> pairs admitted in id order: (0,1) then (2,3).
    CHECK(ms.pairs[0].sender_id == 1);  // higher performer teaches
    CHECK(ms.pairs[0].receiver_id == 0);
    CHECK(ms.pairs[1].sender_id == 2);  // perf tie -> lower id teaches
    CHECK(ms.pairs[1].receiver_id == 3);
}

TEST_CASE("match_hetero_greedy: four-agent worked example") {
    // Histograms concentrated on distinct categories: A=(1,0,..), B=(0,1,0,..),
    // C=D=uniform over the first two bins.
    auto make = [](int id, std::vector<double> counts) {
        AgentObservables obs;
        obs.agent_id = id;
        obs.family_index = 0;
        counts.resize(12, 0.0);
        obs.category_counts = counts;
        return build_profile(obs);
    };
    std::vector<AgentProfile> ps{make(0, {100, 0}), make(1, {0, 100}), make(2, {50, 50}),
                                 make(3, {50, 50})};
    std::map<int, double> perf{{0, 0.9}, {1, 0.1}, {2, 0.5}, {3, 0.6}};
    MatchmakerConfig cfg;
    cfg.pair_budget = 2;
    MatchSet ms = match_hetero_greedy(ps, perf, cfg);
    REQUIRE(ms.pairs.size() == 2);
    // Top JS pair is (0,1) ~= 1.0; 0 outperforms 1 so 0 teaches.
    CHECK(ms.pairs[0].sender_id == 0);
    CHECK(ms.pairs[0].receiver_id == 1);
    // Remaining pair (2,3) has JS ~= 0; 3 outperforms 2.
    CHECK(ms.pairs[1].sender_id == 3);
    CHECK(ms.pairs[1].receiver_id == 2);
}

TEST_CASE("match_hetero_greedy equals the straight-line oracle on 100 seeds") {
    for (uint64_t seed = 0; seed < 100; ++seed) {
        RngStream rng(seed, "hetero_fuzz", 0, 0);
        int n = 2 + static_cast<int>(rng.bounded(7));  // 2..8
        auto ps = random_profiles(rng, n);
        std::map<int, double> perf;
        for (const auto& p : ps) perf[p.agent_id] = rng.uniform01();
        MatchmakerConfig cfg;
        cfg.pair_budget = std::max(1, n / 2);

        MatchSet got = match_hetero_greedy(ps, perf, cfg);
        MatchSet want = hetero_greedy_oracle(ps, perf, cfg.pair_budget);
        REQUIRE(got.pairs.size() == want.pairs.size());
        for (size_t i = 0; i < got.pairs.size(); ++i) {
            CHECK(got.pairs[i].sender_id == want.pairs[i].sender_id);
            CHECK(got.pairs[i].receiver_id == want.pairs[i].receiver_id);
        }
    }
}

TEST_CASE("match_oracle: capability error without ground truth") {
    RngStream rng(4);
    auto ps = random_profiles(rng, 4);
    MatchmakerConfig cfg;
    CHECK_THROWS_AS(match_oracle(ps, TrueScoreFn{}, cfg), capability_error);
}

TEST_CASE("match_oracle: zero theta* degenerates to tie-break order") {
    RngStream rng(12);
    auto ps = random_profiles(rng, 4);
    MatchmakerConfig cfg;
    cfg.pair_budget = 2;
    TrueScoreFn score = [](const ContextVector&) { return 0.0; };
    MatchSet ms = match_oracle(ps, score, cfg);
    REQUIRE(ms.pairs.size() == 2);
    CHECK(ms.pairs[0].sender_id == 0);
    CHECK(ms.pairs[0].receiver_id == 1);
    CHECK(ms.pairs[1].sender_id == 2);
    CHECK(ms.pairs[1].receiver_id == 3);
}

TEST_CASE("prefilter: k >= N-1 yields the full candidate set") {
    RngStream rng(14);
    auto ps = random_profiles(rng, 5);
    CandidateSet full = prefilter_candidates(ps, 4);
    CHECK(full.size() == 20);  // N(N-1)
    CandidateSet beyond = prefilter_candidates(ps, 10);
    CHECK(beyond.size() == 20);
}

TEST_CASE("prefilter: collinear profiles keep the nearer neighbour") {
    // Three profiles along one axis at distances 1 and 2 from the middle.
    auto make = [](int id, double shift) {
        AgentObservables obs;
        obs.agent_id = id;
        obs.family_index = 0;
        obs.metrics = {shift, 0, 0, 0, 0, 0};
        obs.category_counts.assign(12, 1.0);
        return build_profile(obs);
    };
    std::vector<AgentProfile> ps{make(0, 0.0), make(1, 1.0), make(2, 3.0)};
    CandidateSet cands = prefilter_candidates(ps, 1);
    std::set<std::pair<int, int>> set(cands.begin(), cands.end());
    // Agent 1's nearest is 0 (distance 1 vs 2); both orientations present.
    CHECK(set.count({1, 0}));
    CHECK(set.count({0, 1}));
    // Every agent appears in some candidate.
    std::set<int> present;
    for (auto [s, r] : cands) {
        present.insert(s);
        present.insert(r);
    }
    CHECK(present.size() == 3);
    CHECK(set.size() <= 2 * 3 * 1);
}

TEST_CASE("all policies satisfy disjointness and budget over fuzzed sizes") {
    RngStream rng(100);
    for (int rep = 0; rep < 40; ++rep) {
        int n = 2 + static_cast<int>(rng.bounded(63));  // 2..64
        int budget = 1 + static_cast<int>(rng.bounded(static_cast<uint64_t>(std::max(1, n / 2))));
        auto ps = random_profiles(rng, n);

        MatchmakerConfig cfg;
        cfg.pair_budget = budget;
        cfg.beta = 0.7;
        if (n > 3 && rep % 3 == 0) cfg.prefilter_k = 2;

        BanditState state(64);
        check_matchset_invariants(match_linucb(ps, state, cfg), budget);

        std::vector<int> ids;
        for (const auto& p : ps) ids.push_back(p.agent_id);
        RngStream mr(static_cast<uint64_t>(rep), "match_random", 0, 0);
        check_matchset_invariants(match_random(ids, cfg, mr), budget);

        std::map<int, double> perf;
        for (const auto& p : ps) perf[p.agent_id] = rng.uniform01();
        check_matchset_invariants(match_hetero_greedy(ps, perf, cfg), budget);

        TrueScoreFn score = [](const ContextVector& ctx) { return ctx.values.sum(); };
        check_matchset_invariants(match_oracle(ps, score, cfg), budget);
    }
}

TEST_CASE("determinism: identical inputs give identical match sets") {
    RngStream rng(55);
    auto ps = random_profiles(rng, 8);
    BanditState state(64);
    RngStream updates(56);
    for (int i = 0; i < 20; ++i) {
        Eigen::VectorXd x(64);
        for (int k = 0; k < 64; ++k) x[k] = updates.uniform01();
        update(state, x, updates.gaussian());
    }
    MatchmakerConfig cfg;
    cfg.pair_budget = 4;
    MatchSet a = match_linucb(ps, state, cfg);
    MatchSet b = match_linucb(ps, state, cfg);
    REQUIRE(a.pairs.size() == b.pairs.size());
    for (size_t i = 0; i < a.pairs.size(); ++i) {
        CHECK(a.pairs[i].sender_id == b.pairs[i].sender_id);
        CHECK(a.pairs[i].receiver_id == b.pairs[i].receiver_id);
        CHECK(*a.pairs[i].ucb_score == *b.pairs[i].ucb_score);
    }
}
