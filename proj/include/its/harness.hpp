#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "its/rewards.hpp"
#include "its/schedule.hpp"
#include "its/search.hpp"
#include "its/toy_model.hpp"

namespace its {

struct WorkbenchOptions {
    std::uint64_t task_seed = 0;
    int num_steps = kDefaultSteps;
    double beta_min = kDefaultBetaMin;
    double beta_max = kDefaultBetaMax;
    int calibration_samples = 256;
    std::uint64_t calibration_seed = 0;
    int jobs = 1;
};

/// Task, schedule, rewards and their calibration, shared by every cell of an
/// experiment. Not movable once a SearchContext has been handed out.
struct Workbench {
    Task task;
    Schedule schedule;
    RewardRegistry registry;
    std::vector<RewardStats> stats;
    int jobs = 1;

    SearchContext context() const { return {task, schedule, registry, stats, jobs}; }
    const RewardStats& stats_for(std::string_view reward) const;

    /// Fills in calibration stats for score-scheme guidance that has none.
    GuidanceConfig resolve(GuidanceConfig cfg) const;
};

/// Builds the default task and calibrates every reward in `registry`.
/// `stats` may supply precomputed calibration; missing rewards are calibrated.
Workbench make_workbench(const WorkbenchOptions& opts, RewardRegistry registry = builtin_registry(),
                         std::vector<RewardStats> stats = {});

struct ExperimentPlan {
    std::uint64_t task_seed = 0;
    std::vector<SearchConfig> strategies;
    /// Prompt indices; empty means the whole catalog.
    std::vector<int> prompts;
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    std::filesystem::path outputs;
    /// EvoSearch populations are reduced so their NFE does not exceed that of
    /// a Best-of-N run with the template's population.
    bool matched_nfe = false;

    void validate() const;
};

/// Largest EvoSearch population whose NFE fits in a Best-of-N budget of
/// `bon_population` full trajectories (at least 1).
int matched_evo_population(int bon_population, int num_steps, int num_evo_steps);

/// Prompt-averaged outcome of one cell under one seed.
struct RunRecord {
    std::string strategy;
    std::string scheme;  // "single:<reward>", "rank" or "score"
    double alpha = 0.0;  // NaN unless scheme == score
    int population = 0;
    std::uint64_t seed = 0;
    std::int64_t nfe = 0;
    double guidance = 0.0;
    std::vector<std::string> rewards;
    std::vector<double> raw;
    std::vector<double> z;
};

struct MetricRow {
    std::string strategy;
    std::string scheme;  // "single:<reward>", "rank" or "score"
    double alpha = 0.0;  // NaN unless scheme == score
    int population = 0;
    std::int64_t nfe = 0;
    std::string reward_name;
    double raw_mean = 0.0;
    double raw_std = 0.0;
    double z_mean = 0.0;
    double z_std = 0.0;
    double guidance_mean = 0.0;
    double guidance_std = 0.0;
    int seeds = 0;
};

struct MetricTable {
    std::vector<MetricRow> rows;
    std::vector<RunRecord> runs;

    /// Rows for one reward, in table order.
    std::vector<MetricRow> rows_for(std::string_view reward) const;
    /// Per-seed records of the cell, in seed order.
    std::vector<RunRecord> runs_for(std::string_view strategy, std::string_view scheme,
                                    std::optional<double> alpha, int population) const;
    void append(const MetricTable& other);
};

MetricTable run_matrix(const ExperimentPlan& plan, const Workbench& bench);
MetricTable run_matrix(const ExperimentPlan& plan);

/// One row per alpha (weights {alpha, 1 - alpha}). Best-of-N re-scores one
/// fixed pool per seed; EvoSearch runs fresh.
MetricTable sweep_alpha(const SearchConfig& base, const std::vector<double>& alphas,
                        const ExperimentPlan& plan, const Workbench& bench);

/// One row per population for Best-of-N and one for EvoSearch.
MetricTable sweep_nfe(const SearchConfig& base, const std::vector<int>& populations,
                      const ExperimentPlan& plan, const Workbench& bench);

struct Summary {
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
    double mean = 0.0;
    double stddev = 0.0;
};

/// Five-number summary (linearly interpolated quartiles) plus mean and
/// unbiased standard deviation.
Summary summarize(std::vector<double> values);

struct DistributionEntry {
    std::string reward;
    Summary raw;
    Summary normalized;
};

struct DistributionReport {
    int num_samples = 0;
    std::uint64_t seed = 0;
    std::vector<DistributionEntry> entries;

    nlohmann::json to_json() const;
};

/// Raw and z-normalised reward distributions over `num_samples` naive
/// generations drawn exactly as calibration draws them.
DistributionReport distribution_report(const Workbench& bench,
                                       const std::vector<std::string>& rewards,
                                       const std::vector<RewardStats>& stats, int num_samples,
                                       std::uint64_t seed);

inline const char* const kCsvHeader =
    "strategy,scheme,alpha,population,nfe,reward_name,raw_mean,raw_std,z_mean,z_std,"
    "guidance_mean,guidance_std,seeds";

void emit_csv(const MetricTable& table, const std::filesystem::path& path);
std::vector<MetricRow> parse_csv(const std::filesystem::path& path);

/// Per-seed records: strategy,scheme,alpha,population,seed,nfe,guidance then
/// raw_<reward>,z_<reward> for each reward.
void emit_runs_csv(const MetricTable& table, const std::filesystem::path& path);

}  // namespace its
