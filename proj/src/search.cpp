#include "its/search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

#include "its/error.hpp"
#include "its/parallel.hpp"

namespace its {

std::string_view to_string(Strategy strategy) {
    switch (strategy) {
        case Strategy::naive: return "naive";
        case Strategy::best_of_n: return "best_of_n";
        case Strategy::evosearch: return "evosearch";
    }
    return "?";
}

Strategy parse_strategy(std::string_view text) {
    if (text == "naive") return Strategy::naive;
    if (text == "best_of_n" || text == "bon") return Strategy::best_of_n;
    if (text == "evosearch" || text == "evo") return Strategy::evosearch;
    throw ConfigError("unknown strategy '" + std::string(text) + "'");
}

int SearchConfig::resolved_elite_count() const {
    if (elite_count > 0) {
        return elite_count;
    }
    return std::max(1, (population + 3) / 4);
}

void SearchConfig::validate(const Schedule& sched) const {
    if (population < 1) {
        throw ConfigError("population must be >= 1");
    }
    if (strategy == Strategy::naive && population != 1) {
        throw ConfigError("naive sampling uses population 1");
    }
    if (!(mutation_scale >= 0.0)) {
        throw ConfigError("mutation scale must be >= 0");
    }
    if (!(eta >= 0.0)) {
        throw ConfigError("eta must be >= 0");
    }
    guidance.validate();
    if (strategy != Strategy::evosearch) {
        return;
    }
    if (evo_steps.empty()) {
        throw ConfigError("evosearch needs at least one evolution step (use best_of_n otherwise)");
    }
    for (std::size_t i = 0; i < evo_steps.size(); ++i) {
        const int t = evo_steps[i];
        if (t < 1 || t >= sched.num_steps()) {
            throw ConfigError("evolution step " + std::to_string(t) + " outside [1, " +
                              std::to_string(sched.num_steps() - 1) + "]");
        }
        if (i > 0 && t >= evo_steps[i - 1]) {
            throw ConfigError("evolution steps must be strictly decreasing");
        }
    }
    const int k = resolved_elite_count();
    if (k < 1 || k > population) {
        throw ConfigError("elite count " + std::to_string(k) + " outside [1, population]");
    }
}

nlohmann::json SearchConfig::to_json() const {
    return {{"strategy", to_string(strategy)},
            {"population", population},
            {"guidance", guidance.to_json()},
            {"evo_steps", evo_steps},
            {"elite_count", resolved_elite_count()},
            {"mutation_scale", mutation_scale},
            {"master_seed", master_seed},
            {"eta", eta}};
}

std::vector<int> default_evo_steps(const Schedule& sched) {
    const int last = sched.num_steps() - 1;
    std::vector<int> steps;
    for (double f : {0.75, 0.5, 0.25}) {
        const int t = std::clamp(static_cast<int>(std::lround(f * last)), 1, last);
        if (steps.empty() || t < steps.back()) {
            steps.push_back(t);
        }
    }
    return steps;
}

std::int64_t expected_nfe(const SearchConfig& cfg, const Schedule& sched) {
    const std::int64_t T = sched.num_steps();
    const std::int64_t n = cfg.strategy == Strategy::naive ? 1 : cfg.population;
    std::int64_t nfe = n * T;
    if (cfg.strategy == Strategy::evosearch) {
        nfe += static_cast<std::int64_t>(cfg.evo_steps.size()) * n;
    }
    return nfe;
}

const RewardScore& RunResult::score(std::string_view reward) const {
    for (const auto& s : final_scores) {
        if (s.reward == reward) {
            return s;
        }
    }
    throw ConfigError("run result has no score for '" + std::string(reward) + "'");
}

nlohmann::json RunResult::to_json() const {
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& s : final_scores) {
        nlohmann::json e = {{"reward", s.reward}, {"raw", s.raw}};
        e["z"] = s.z ? nlohmann::json(*s.z) : nlohmann::json(nullptr);
        scores.push_back(std::move(e));
    }
    nlohmann::json trace_rows = nlohmann::json::array();
    for (const auto& r : trace) {
        trace_rows.push_back({{"timestep", r.timestep},
                              {"candidate", r.candidate},
                              {"lineage", r.lineage ? nlohmann::json(*r.lineage) : nullptr},
                              {"raw", r.raw},
                              {"guidance", r.guidance},
                              {"selected", r.selected}});
    }
    return {{"strategy", to_string(strategy)},
            {"population", population},
            {"selected_index", selected_index},
            {"selected_latent",
             std::vector<double>(selected_latent.data(),
                                 selected_latent.data() + selected_latent.size())},
            {"final_scores", scores},
            {"guidance_score", guidance_score},
            {"guidance_rewards", guidance_rewards},
            {"nfe", nfe},
            {"reward_calls", reward_calls},
            {"seed", seed},
            {"trace", trace_rows}};
}

std::vector<int> select_elites(std::span<const double> scores, int k) {
    const int n = static_cast<int>(scores.size());
    if (k < 1 || k > n) {
        throw BoundsError("select_elites: k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(n) + "]");
    }
    auto key = [&](int i) {
        const double s = scores[i];
        return std::isnan(s) ? -std::numeric_limits<double>::infinity() : s;
    };
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key(a) > key(b); });
    order.resize(k);
    return order;
}

Latent mutate(const Latent& elite, int t, double sigma_mut, const Schedule& sched,
              RandomStream& stream) {
    if (t < 0 || t >= sched.num_steps()) {
        throw BoundsError("mutate: timestep out of range");
    }
    if (sigma_mut < 0.0) {
        throw InvalidRange("mutate: sigma_mut must be >= 0");
    }
    if (sigma_mut == 0.0) {
        return elite;
    }
    const double scale = sigma_mut * std::sqrt(1.0 - sched.alpha_bar(t));
    return elite + scale * stream.normal_vector(elite.size());
}

namespace {

void denoise_population_step(std::vector<Candidate>& pop, int t, Denoiser& denoiser, double eta,
                             int jobs) {
    parallel_for(pop.size(), jobs, [&](std::size_t i) {
        pop[i].latent = reverse_step(pop[i].latent, t, denoiser, eta, &pop[i].stream);
    });
}

std::vector<Candidate> initial_population(int n, std::uint64_t seed, Eigen::Index dim) {
    std::vector<Candidate> pop;
    pop.reserve(n);
    for (int i = 0; i < n; ++i) {
        auto start = initial_noise(seed, i, dim);
        Candidate c;
        c.index = i;
        c.latent = std::move(start.x);
        c.stream = std::move(start.stream);
        pop.push_back(std::move(c));
    }
    return pop;
}

// Evaluation, selection and mutation at one evolution step.
void evolve_step(const SearchContext& ctx, const PromptSpec& prompt, const SearchConfig& cfg,
                 int t, int generation, CandidatePool& pool, Denoiser& denoiser) {
    auto& pop = pool.members;
    const auto n = pop.size();
    std::vector<Waveform> estimates(n);
    parallel_for(n, ctx.jobs, [&](std::size_t i) {
        estimates[i] = intermediate_waveform(pop[i].latent, t, ctx.task, denoiser);
    });
    const ScoreMatrix raw =
        score_waveforms(estimates, prompt, cfg.guidance.rewards, ctx.registry, ctx.task, ctx.jobs);
    pool.reward_calls += raw.size();
    const std::vector<double> guidance =
        evaluate_guidance(raw, cfg.guidance, ctx.task.fingerprint());

    const int k = cfg.resolved_elite_count();
    const std::vector<int> elites = select_elites(guidance, k);
    std::vector<bool> is_elite(n, false);
    for (int e : elites) {
        is_elite[e] = true;
    }
    for (std::size_t i = 0; i < n; ++i) {
        ScoreRecord rec{t, std::vector<double>(raw.cols()), guidance[i]};
        for (Eigen::Index c = 0; c < raw.cols(); ++c) {
            rec.raw[c] = raw(static_cast<Eigen::Index>(i), c);
        }
        pool.trace.push_back({t, static_cast<int>(i), pop[i].lineage, rec.raw, guidance[i],
                              static_cast<bool>(is_elite[i])});
        pop[i].score_history.push_back(std::move(rec));
    }

    // Replacement slots are filled in ascending index order by cycling over
    // the elites in rank order. Elites pass through untouched.
    int next = 0;
    for (std::size_t slot = 0; slot < n; ++slot) {
        if (is_elite[slot]) {
            continue;
        }
        const int parent = elites[next % k];
        ++next;
        RandomStream stream(stream_seed(cfg.master_seed, slot, generation));
        pop[slot].latent =
            mutate(pop[parent].latent, t, cfg.mutation_scale, ctx.schedule, stream);
        pop[slot].stream = std::move(stream);
        pop[slot].lineage = parent;
    }
}

CandidatePool denoise_pool(const SearchContext& ctx, const PromptSpec* prompt,
                           const SearchConfig& cfg, bool evolve) {
    Denoiser denoiser(ctx.task.prior(), ctx.schedule);
    CandidatePool pool;
    pool.members = initial_population(cfg.population, cfg.master_seed, ctx.task.prior().dim());
    auto next_evo = cfg.evo_steps.begin();
    int generation = 0;
    for (int t = ctx.schedule.num_steps() - 1; t >= 0; --t) {
        if (evolve && next_evo != cfg.evo_steps.end() && *next_evo == t) {
            evolve_step(ctx, *prompt, cfg, t, ++generation, pool, denoiser);
            ++next_evo;
        }
        denoise_population_step(pool.members, t, denoiser, cfg.eta, ctx.jobs);
    }
    pool.nfe = denoiser.calls();
    return pool;
}

std::optional<double> z_for(const SearchContext& ctx, const std::string& reward, double raw) {
    for (const auto& s : ctx.report_stats) {
        if (s.reward_name == reward) {
            if (s.task_fingerprint != ctx.task.fingerprint()) {
                throw StaleStats("report stats for '" + reward + "' belong to another task");
            }
            return normalize(raw, s);
        }
    }
    return std::nullopt;
}

}  // namespace

CandidatePool generate_pool(const SearchContext& ctx, int population, std::uint64_t master_seed,
                            double eta) {
    SearchConfig cfg;
    cfg.strategy = Strategy::best_of_n;
    cfg.population = population;
    cfg.master_seed = master_seed;
    cfg.eta = eta;
    if (population < 1) {
        throw ConfigError("population must be >= 1");
    }
    return denoise_pool(ctx, nullptr, cfg, false);
}

ScoreMatrix score_pool(const SearchContext& ctx, const PromptSpec& prompt,
                       const CandidatePool& pool) {
    std::vector<Waveform> waves(pool.members.size());
    parallel_for(waves.size(), ctx.jobs, [&](std::size_t i) {
        waves[i] = decode_waveform(pool.members[i].latent, ctx.task.decoder());
    });
    const auto names = ctx.registry.names();
    return score_waveforms(waves, prompt, names, ctx.registry, ctx.task, ctx.jobs);
}

RunResult select_from_pool(const SearchContext& ctx, const PromptSpec& prompt,
                           const CandidatePool& pool, const SearchConfig& cfg,
                           const ScoreMatrix* cached_scores) {
    cfg.guidance.validate();
    const auto names = ctx.registry.names();
    ScoreMatrix all;
    std::int64_t reward_calls = pool.reward_calls;
    if (cached_scores != nullptr) {
        all = *cached_scores;
    } else {
        all = score_pool(ctx, prompt, pool);
    }
    reward_calls += all.size();
    if (all.rows() != static_cast<Eigen::Index>(pool.members.size()) ||
        all.cols() != static_cast<Eigen::Index>(names.size())) {
        throw DimensionMismatch("select_from_pool: cached scores do not match the pool");
    }

    ScoreMatrix guided(all.rows(), static_cast<Eigen::Index>(cfg.guidance.rewards.size()));
    for (std::size_t k = 0; k < cfg.guidance.rewards.size(); ++k) {
        const auto it = std::find(names.begin(), names.end(), cfg.guidance.rewards[k]);
        if (it == names.end()) {
            throw ConfigError("guidance reward '" + cfg.guidance.rewards[k] +
                              "' is not registered");
        }
        guided.col(static_cast<Eigen::Index>(k)) = all.col(it - names.begin());
    }
    const std::vector<double> guidance =
        evaluate_guidance(guided, cfg.guidance, ctx.task.fingerprint());
    const int best = select_elites(guidance, 1).front();

    RunResult result;
    result.strategy = cfg.strategy;
    result.population = static_cast<int>(pool.members.size());
    result.selected_index = best;
    result.selected_latent = pool.members[best].latent;
    result.selected_waveform = decode_waveform(result.selected_latent, ctx.task.decoder());
    for (std::size_t k = 0; k < names.size(); ++k) {
        const double raw = all(best, static_cast<Eigen::Index>(k));
        result.final_scores.push_back({names[k], raw, z_for(ctx, names[k], raw)});
    }
    result.guidance_score = guidance[best];
    result.nfe = pool.nfe;
    result.reward_calls = reward_calls;
    result.seed = cfg.master_seed;
    result.guidance_rewards = cfg.guidance.rewards;
    result.trace = pool.trace;
    for (std::size_t i = 0; i < pool.members.size(); ++i) {
        std::vector<double> raw(guided.cols());
        for (Eigen::Index c = 0; c < guided.cols(); ++c) {
            raw[c] = guided(static_cast<Eigen::Index>(i), c);
        }
        result.trace.push_back({0, static_cast<int>(i), pool.members[i].lineage, std::move(raw),
                                guidance[i], static_cast<int>(i) == best});
    }
    return result;
}

RunResult run_naive(const SearchContext& ctx, const PromptSpec& prompt, const SearchConfig& cfg) {
    if (cfg.strategy != Strategy::naive) {
        throw ConfigError("run_naive requires strategy=naive");
    }
    cfg.validate(ctx.schedule);
    CandidatePool pool = denoise_pool(ctx, &prompt, cfg, false);
    return select_from_pool(ctx, prompt, pool, cfg);
}

RunResult run_best_of_n(const SearchContext& ctx, const PromptSpec& prompt,
                        const SearchConfig& cfg) {
    if (cfg.strategy != Strategy::best_of_n) {
        throw ConfigError("run_best_of_n requires strategy=best_of_n");
    }
    cfg.validate(ctx.schedule);
    CandidatePool pool = denoise_pool(ctx, &prompt, cfg, false);
    return select_from_pool(ctx, prompt, pool, cfg);
}

RunResult run_evosearch(const SearchContext& ctx, const PromptSpec& prompt,
                        const SearchConfig& cfg) {
    if (cfg.strategy != Strategy::evosearch) {
        throw ConfigError("run_evosearch requires strategy=evosearch");
    }
    cfg.validate(ctx.schedule);
    CandidatePool pool = denoise_pool(ctx, &prompt, cfg, true);
    return select_from_pool(ctx, prompt, pool, cfg);
}

RunResult run_search(const SearchContext& ctx, const PromptSpec& prompt, const SearchConfig& cfg) {
    switch (cfg.strategy) {
        case Strategy::naive: return run_naive(ctx, prompt, cfg);
        case Strategy::best_of_n: return run_best_of_n(ctx, prompt, cfg);
        case Strategy::evosearch: return run_evosearch(ctx, prompt, cfg);
    }
    throw ConfigError("unknown strategy");
}

}  // namespace its
