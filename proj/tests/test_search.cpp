#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"

#include "its/error.hpp"
#include "its/rewards.hpp"
#include "its/rng.hpp"
#include "its/schedule.hpp"
#include "its/search.hpp"
#include "its/toy_model.hpp"

using namespace its;

namespace {

struct Env {
    Task task = build_default_task(0);
    Schedule sched = make_schedule();
    RewardRegistry reg = builtin_registry();
    std::vector<RewardStats> stats;

    Env() {
        const auto names = reg.names();
        stats = calibrate_stats(task, sched, reg, names, 256, 0);
    }

    SearchContext ctx(int jobs = 1) const { return {task, sched, reg, stats, jobs}; }

    GuidanceConfig score(double alpha) const {
        return GuidanceConfig::score_alpha(alpha, stats[0], stats[1]);
    }

    SearchConfig config(Strategy s, int n, GuidanceConfig g, std::uint64_t seed) const {
        SearchConfig c;
        c.strategy = s;
        c.population = s == Strategy::naive ? 1 : n;
        c.guidance = std::move(g);
        c.master_seed = seed;
        if (s == Strategy::evosearch) {
            c.evo_steps = default_evo_steps(sched);
        }
        return c;
    }
};

const Env& env() {
    static const Env e;
    return e;
}

void check_identical(const RunResult& a, const RunResult& b) {
    CHECK(a.selected_index == b.selected_index);
    CHECK(a.selected_latent == b.selected_latent);
    CHECK(a.selected_waveform == b.selected_waveform);
    CHECK(a.guidance_score == b.guidance_score);
    CHECK(a.nfe == b.nfe);
    REQUIRE(a.final_scores.size() == b.final_scores.size());
    for (std::size_t i = 0; i < a.final_scores.size(); ++i) {
        CHECK(a.final_scores[i].raw == b.final_scores[i].raw);
    }
}

}  // namespace

TEST_SUITE("search") {

TEST_CASE("elite selection") {
    CHECK(select_elites(std::vector<double>{0.1, 0.9, 0.5}, 2) == std::vector<int>{1, 2});
    CHECK(select_elites(std::vector<double>{0.3, 0.3, 0.3}, 2) == std::vector<int>{0, 1});
    CHECK_THROWS_AS(select_elites(std::vector<double>{0.3, 0.3}, 0), BoundsError);
    CHECK_THROWS_AS(select_elites(std::vector<double>{0.3, 0.3}, 3), BoundsError);

    RandomStream rng(10);
    std::vector<double> v(100);
    for (auto& x : v) {
        x = std::round(rng.normal() * 8) / 8;  // coarse, so ties happen
    }
    std::vector<int> idx(100);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        return v[a] != v[b] ? v[a] > v[b] : a < b;
    });
    idx.resize(10);
    CHECK(select_elites(v, 10) == idx);
}

TEST_CASE("mutation") {
    const Schedule& s = env().sched;
    RandomStream rng(1);
    const Latent e = rng.normal_vector(12);
    RandomStream st(5);
    CHECK(mutate(e, 50, 0.0, s, st) == e);

    RandomStream a(9);
    RandomStream b(9);
    CHECK(mutate(e, 50, 0.3, s, a) == mutate(e, 50, 0.3, s, b));

    const int t = 60;
    const double sigma = 0.4;
    const double expect = sigma * std::sqrt(1.0 - s.alpha_bar(t));
    RandomStream m(77);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(12);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(12);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const Latent d = mutate(e, t, sigma, s, m) - e;
        sum += d;
        sq += d.cwiseProduct(d);
    }
    for (int j = 0; j < 12; ++j) {
        const double mean = sum[j] / n;
        const double sd = std::sqrt((sq[j] - n * mean * mean) / (n - 1));
        CHECK(std::abs(sd / expect - 1.0) < 0.02);
    }
    CHECK_THROWS_AS(mutate(e, 100, 0.1, s, m), BoundsError);
}

TEST_CASE("naive sampling") {
    const Env& E = env();
    const auto cfg = E.config(Strategy::naive, 1, GuidanceConfig::single("alignment"), 4);
    const RunResult a = run_naive(E.ctx(), E.task.prompt(0), cfg);
    const RunResult b = run_naive(E.ctx(), E.task.prompt(0), cfg);
    check_identical(a, b);
    CHECK(a.nfe == E.sched.num_steps());
    CHECK(a.population == 1);
    CHECK(a.final_scores.size() == 2);
    CHECK(a.final_scores[0].z.has_value());
    CHECK(a.score("quality").raw == a.final_scores[1].raw);
}

TEST_CASE("Best-of-N with one candidate is naive sampling") {
    const Env& E = env();
    for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
        const RunResult naive = run_naive(
            E.ctx(), E.task.prompt(1), E.config(Strategy::naive, 1, E.score(0.5), seed));
        const RunResult bon = run_best_of_n(
            E.ctx(), E.task.prompt(1), E.config(Strategy::best_of_n, 1, E.score(0.5), seed));
        check_identical(naive, bon);
    }
}

TEST_CASE("nested pools give monotone guidance") {
    const Env& E = env();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        double prev = -INFINITY;
        for (int n : {1, 2, 4, 8, 16}) {
            const RunResult r = run_best_of_n(
                E.ctx(), E.task.prompt(seed % 4), E.config(Strategy::best_of_n, n, E.score(0.5), seed));
            CHECK(r.guidance_score >= prev);
            CHECK(r.nfe == static_cast<std::int64_t>(n) * E.sched.num_steps());
            prev = r.guidance_score;
        }
    }
}

TEST_CASE("pool prefix layout") {
    const Env& E = env();
    const CandidatePool small = generate_pool(E.ctx(), 4, 3);
    const CandidatePool big = generate_pool(E.ctx(), 9, 3);
    for (int i = 0; i < 4; ++i) {
        CHECK(small.members[i].latent == big.members[i].latent);
    }
}

TEST_CASE("EvoSearch with every candidate elite is Best-of-N") {
    const Env& E = env();
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto evo = E.config(Strategy::evosearch, 8, E.score(0.5), seed);
        evo.elite_count = 8;
        evo.mutation_scale = 3.0;
        const RunResult a = run_evosearch(E.ctx(), E.task.prompt(2), evo);
        const RunResult b = run_best_of_n(E.ctx(), E.task.prompt(2),
                                          E.config(Strategy::best_of_n, 8, E.score(0.5), seed));
        CHECK(a.selected_index == b.selected_index);
        CHECK(a.selected_latent == b.selected_latent);
        CHECK(a.guidance_score == b.guidance_score);
    }
}

TEST_CASE("zero mutation with one elite collapses the population") {
    const Env& E = env();
    auto cfg = E.config(Strategy::evosearch, 6, E.score(0.5), 11);
    cfg.elite_count = 1;
    cfg.mutation_scale = 0.0;
    const RunResult r = run_evosearch(E.ctx(), E.task.prompt(0), cfg);
    // Every evaluation after the first step sees identical candidates.
    for (std::size_t step = 1; step < cfg.evo_steps.size(); ++step) {
        const int t = cfg.evo_steps[step];
        std::vector<const TraceRow*> rows;
        for (const auto& row : r.trace) {
            if (row.timestep == t) {
                rows.push_back(&row);
            }
        }
        REQUIRE(rows.size() == 6);
        for (const auto* row : rows) {
            CHECK(row->raw == rows.front()->raw);
        }
    }
    std::vector<const TraceRow*> final_rows;
    for (const auto& row : r.trace) {
        if (row.timestep == 0) {
            final_rows.push_back(&row);
        }
    }
    REQUIRE(final_rows.size() == 6);
    for (const auto* row : final_rows) {
        CHECK(row->raw == final_rows.front()->raw);
    }
    CHECK(r.selected_index == 0);
}

TEST_CASE("population is preserved and lineage recorded") {
    const Env& E = env();
    auto cfg = E.config(Strategy::evosearch, 7, E.score(0.5), 2);
    const RunResult r = run_evosearch(E.ctx(), E.task.prompt(3), cfg);
    std::vector<int> counts;
    for (int t : cfg.evo_steps) {
        counts.push_back(static_cast<int>(std::count_if(
            r.trace.begin(), r.trace.end(), [&](const TraceRow& row) { return row.timestep == t; })));
    }
    CHECK(counts == std::vector<int>(cfg.evo_steps.size(), 7));
    int elites = 0;
    for (const auto& row : r.trace) {
        if (row.timestep == cfg.evo_steps.front() && row.selected) {
            ++elites;
        }
    }
    CHECK(elites == cfg.resolved_elite_count());
    CHECK(cfg.resolved_elite_count() == 2);
    // Rows scored at the second evolution step carry the first step's mutations.
    int mutated = 0;
    for (const auto& row : r.trace) {
        if (row.timestep == cfg.evo_steps[1] && row.lineage.has_value()) {
            ++mutated;
        }
    }
    CHECK(mutated == 7 - 2);
    CHECK(r.nfe == 7 * 100 + 3 * 7);
}

TEST_CASE("NFE accounting on random configurations") {
    const Env& E = env();
    RandomStream rng(42);
    const std::array<Strategy, 3> strategies = {Strategy::naive, Strategy::best_of_n,
                                                Strategy::evosearch};
    for (int trial = 0; trial < 20; ++trial) {
        const Schedule sched = make_schedule(10 + static_cast<int>(rng.uniform() * 40));
        const SearchContext ctx{E.task, sched, E.reg, E.stats, 1};
        const Strategy st = strategies[trial % 3];
        SearchConfig cfg;
        cfg.strategy = st;
        cfg.population = st == Strategy::naive ? 1 : 1 + static_cast<int>(rng.uniform() * 9);
        cfg.guidance = trial % 2 == 0 ? GuidanceConfig::rank({"alignment", "quality"})
                                      : GuidanceConfig::single("quality");
        cfg.master_seed = trial;
        if (st == Strategy::evosearch) {
            const int m = 1 + static_cast<int>(rng.uniform() * 4);
            for (int j = 0; j < m; ++j) {
                cfg.evo_steps.push_back(sched.num_steps() - 2 - 2 * j);
            }
            cfg.elite_count = 1 + static_cast<int>(rng.uniform() * cfg.population);
        }
        const RunResult r = run_search(ctx, E.task.prompt(trial % 4), cfg);
        const std::int64_t T = sched.num_steps();
        const std::int64_t N = cfg.population;
        const std::int64_t closed = st == Strategy::evosearch
                                        ? N * T + static_cast<std::int64_t>(cfg.evo_steps.size()) * N
                                        : N * T;
        CHECK(r.nfe == closed);
        CHECK(expected_nfe(cfg, sched) == closed);
    }
}

TEST_CASE("parallel evaluation is bit-identical to sequential") {
    const Env& E = env();
    for (Strategy st : {Strategy::best_of_n, Strategy::evosearch}) {
        const auto cfg = E.config(st, 9, E.score(0.4), 21);
        const RunResult a = run_search(E.ctx(1), E.task.prompt(1), cfg);
        const RunResult b = run_search(E.ctx(4), E.task.prompt(1), cfg);
        check_identical(a, b);
        REQUIRE(a.trace.size() == b.trace.size());
        for (std::size_t i = 0; i < a.trace.size(); ++i) {
            CHECK(a.trace[i].raw == b.trace[i].raw);
            CHECK(a.trace[i].guidance == b.trace[i].guidance);
        }
    }
}

TEST_CASE("configuration errors") {
    const Env& E = env();
    auto evo = E.config(Strategy::evosearch, 4, E.score(0.5), 0);
    evo.evo_steps.clear();
    CHECK_THROWS_AS(run_evosearch(E.ctx(), E.task.prompt(0), evo), ConfigError);
    evo.evo_steps = {50, 60};
    CHECK_THROWS_AS(evo.validate(E.sched), ConfigError);
    evo.evo_steps = {100};
    CHECK_THROWS_AS(evo.validate(E.sched), ConfigError);
    evo.evo_steps = {50};
    evo.elite_count = 5;
    CHECK_THROWS_AS(evo.validate(E.sched), ConfigError);

    auto naive = E.config(Strategy::naive, 1, E.score(0.5), 0);
    naive.population = 3;
    CHECK_THROWS_AS(naive.validate(E.sched), ConfigError);
    auto bon = E.config(Strategy::best_of_n, 0, E.score(0.5), 0);
    CHECK_THROWS_AS(bon.validate(E.sched), ConfigError);
    CHECK_THROWS_AS(run_naive(E.ctx(), E.task.prompt(0),
                              E.config(Strategy::best_of_n, 2, E.score(0.5), 0)),
                    ConfigError);
    CHECK(parse_strategy("evosearch") == Strategy::evosearch);
    CHECK_THROWS_AS(parse_strategy("beam"), ConfigError);
}

TEST_CASE("stale stats abort a run") {
    const Env& E = env();
    const Task other = build_default_task(1);
    const SearchContext ctx{other, E.sched, E.reg, {}, 1};
    CHECK_THROWS_AS(run_best_of_n(ctx, other.prompt(0),
                                  E.config(Strategy::best_of_n, 2, E.score(0.5), 0)),
                    StaleStats);
}

TEST_CASE("default evolution steps") {
    CHECK(default_evo_steps(make_schedule()) == std::vector<int>{74, 50, 25});
    CHECK(default_evo_steps(make_schedule(2)) == std::vector<int>{1});
}

TEST_CASE("Best-of-16 beats naive sampling on alignment") {
    const Env& E = env();
    const SearchContext ctx = E.ctx();
    const int runs = 5000;
    double naive_sum = 0.0;
    double bon_sum = 0.0;
    for (int i = 0; i < runs; ++i) {
        const PromptSpec& p = E.task.prompt(i % 4);
        const CandidatePool pool = generate_pool(ctx, 16, static_cast<std::uint64_t>(i));
        const ScoreMatrix scores = score_pool(ctx, p, pool);
        const auto cfg =
            E.config(Strategy::best_of_n, 16, GuidanceConfig::single("alignment"), i);
        const RunResult r = select_from_pool(ctx, p, pool, cfg, &scores);
        naive_sum += scores(0, 0);
        bon_sum += r.score("alignment").raw;
    }
    CHECK(naive_sum / runs < bon_sum / runs);
}

TEST_CASE("single-reward guidance sacrifices the other reward") {
    const Env& E = env();
    const SearchContext ctx = E.ctx();
    int quality_wins = 0;
    int alignment_wins = 0;
    const int seeds = 20;
    for (int seed = 0; seed < seeds; ++seed) {
        double q_single = 0.0;
        double q_score = 0.0;
        double a_single = 0.0;
        double a_score = 0.0;
        for (int k = 0; k < 4; ++k) {
            const PromptSpec& p = E.task.prompt(k);
            const CandidatePool pool = generate_pool(ctx, 16, seed);
            const ScoreMatrix scores = score_pool(ctx, p, pool);
            auto pick = [&](GuidanceConfig g) {
                return select_from_pool(ctx, p, pool,
                                        E.config(Strategy::best_of_n, 16, std::move(g), seed),
                                        &scores);
            };
            const RunResult sa = pick(GuidanceConfig::single("alignment"));
            const RunResult sq = pick(GuidanceConfig::single("quality"));
            const RunResult sc = pick(E.score(0.5));
            q_single += sa.score("quality").raw;
            q_score += sc.score("quality").raw;
            a_single += sq.score("alignment").raw;
            a_score += sc.score("alignment").raw;
        }
        quality_wins += q_single < q_score;
        alignment_wins += a_single < a_score;
    }
    CHECK(quality_wins >= 14);
    CHECK(alignment_wins >= 14);
}

TEST_CASE("result JSON") {
    const Env& E = env();
    const RunResult r = run_best_of_n(E.ctx(), E.task.prompt(0),
                                      E.config(Strategy::best_of_n, 3, E.score(0.5), 1));
    const auto doc = r.to_json();
    CHECK(doc.at("nfe") == 300);
    CHECK(doc.at("strategy") == "best_of_n");
    CHECK(doc.at("selected_index") == r.selected_index);
    CHECK(doc.contains("trace"));
    CHECK(doc.contains("final_scores"));
}

}
