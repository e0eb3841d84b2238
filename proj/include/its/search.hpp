#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "its/rewards.hpp"
#include "its/rng.hpp"
#include "its/sampler.hpp"
#include "its/schedule.hpp"
#include "its/toy_model.hpp"

namespace its {

enum class Strategy { naive, best_of_n, evosearch };

std::string_view to_string(Strategy strategy);
Strategy parse_strategy(std::string_view text);

inline constexpr double kDefaultMutationScale = 0.5;

struct SearchConfig {
    Strategy strategy = Strategy::best_of_n;
    int population = 1;
    GuidanceConfig guidance;
    /// Evolution timesteps, strictly decreasing, each in [1, T-1].
    std::vector<int> evo_steps;
    /// 0 selects ceil(population / 4).
    int elite_count = 0;
    double mutation_scale = kDefaultMutationScale;
    std::uint64_t master_seed = 0;
    /// DDIM stochasticity; 0 gives deterministic trajectories.
    double eta = 0.0;

    int resolved_elite_count() const;
    void validate(const Schedule& sched) const;
    nlohmann::json to_json() const;
};

/// Timesteps at 75%, 50% and 25% of the step range.
std::vector<int> default_evo_steps(const Schedule& sched);

/// Denoiser calls the strategy consumes: T for naive, N*T for Best-of-N and
/// N*T + |evo_steps|*N for EvoSearch.
std::int64_t expected_nfe(const SearchConfig& cfg, const Schedule& sched);

/// Shared, read-only inputs of a run. `report_stats` adds z-scores to the
/// reported final scores for any reward it covers.
struct SearchContext {
    const Task& task;
    const Schedule& schedule;
    const RewardRegistry& registry;
    std::vector<RewardStats> report_stats;
    int jobs = 1;
};

struct ScoreRecord {
    int timestep = 0;
    std::vector<double> raw;
    double guidance = 0.0;
};

struct Candidate {
    int index = 0;
    Latent latent;
    RandomStream stream{0};
    std::vector<ScoreRecord> score_history;
    std::optional<int> lineage;
};

/// One row per candidate per evaluation (evolution steps and the final
/// selection, which is recorded at timestep 0).
struct TraceRow {
    int timestep = 0;
    int candidate = 0;
    std::optional<int> lineage;
    std::vector<double> raw;
    double guidance = 0.0;
    bool selected = false;
};

struct RewardScore {
    std::string reward;
    double raw = 0.0;
    std::optional<double> z;
};

struct RunResult {
    Strategy strategy = Strategy::naive;
    int population = 1;
    int selected_index = 0;
    Waveform selected_waveform;
    Latent selected_latent;
    std::vector<RewardScore> final_scores;
    double guidance_score = 0.0;
    std::int64_t nfe = 0;
    std::int64_t reward_calls = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> guidance_rewards;
    std::vector<TraceRow> trace;

    const RewardScore& score(std::string_view reward) const;
    nlohmann::json to_json() const;
};

/// Candidates after denoising to t = 0, before final selection.
struct CandidatePool {
    std::vector<Candidate> members;
    std::int64_t nfe = 0;
    std::int64_t reward_calls = 0;
    std::vector<TraceRow> trace;
};

/// N independent full reverse runs; candidate i uses stream slot i so the
/// pool for N is a prefix of the pool for any larger N.
CandidatePool generate_pool(const SearchContext& ctx, int population, std::uint64_t master_seed,
                            double eta = 0.0);

/// Raw scores of every pool member under every registered reward
/// (columns in registry order).
ScoreMatrix score_pool(const SearchContext& ctx, const PromptSpec& prompt,
                       const CandidatePool& pool);

/// Best-of-N selection over an existing pool. `cached_scores` may carry the
/// result of score_pool for this prompt to avoid rescoring.
RunResult select_from_pool(const SearchContext& ctx, const PromptSpec& prompt,
                           const CandidatePool& pool, const SearchConfig& cfg,
                           const ScoreMatrix* cached_scores = nullptr);

RunResult run_naive(const SearchContext& ctx, const PromptSpec& prompt, const SearchConfig& cfg);
RunResult run_best_of_n(const SearchContext& ctx, const PromptSpec& prompt,
                        const SearchConfig& cfg);
RunResult run_evosearch(const SearchContext& ctx, const PromptSpec& prompt,
                        const SearchConfig& cfg);

/// Dispatches on cfg.strategy.
RunResult run_search(const SearchContext& ctx, const PromptSpec& prompt, const SearchConfig& cfg);

/// Indices of the k best scores, ordered by descending score then
/// ascending index.
std::vector<int> select_elites(std::span<const double> scores, int k);

/// elite + sigma_mut * sqrt(1 - abar_t) * eps with eps ~ N(0, I) from `stream`.
Latent mutate(const Latent& elite, int t, double sigma_mut, const Schedule& sched,
              RandomStream& stream);

}  // namespace its
