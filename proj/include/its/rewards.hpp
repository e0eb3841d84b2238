#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "its/rng.hpp"
#include "its/sampler.hpp"
#include "its/schedule.hpp"
#include "its/toy_model.hpp"

namespace its {

// ---------------------------------------------------------------------------
// Built-in rewards

/// Cosine between the unit-normalised magnitude spectrum of `waveform` and
/// the prompt's target profile. 0 for an all-zero waveform.
double reward_alignment(const Waveform& waveform, const PromptSpec& prompt);

/// Fraction of least-squares energy carried by the decoder's sinusoids:
/// E_signal / (E_signal + E_noise). 0 for an all-zero waveform.
double reward_quality(const Waveform& waveform, const Decoder& dec);

enum class RewardKind { alignment, quality, external };

std::string_view to_string(RewardKind kind);

using RewardFn = std::function<double(const Waveform&, const PromptSpec&, const Task&)>;

struct RewardSpec {
    std::string name;
    RewardKind kind = RewardKind::alignment;
    RewardFn evaluate;
};

class RewardRegistry {
public:
    /// Throws ConfigError on a duplicate name.
    void add(RewardSpec spec);

    const RewardSpec& get(std::string_view name) const;
    bool contains(std::string_view name) const;
    const std::vector<RewardSpec>& all() const noexcept { return specs_; }
    std::vector<std::string> names() const;

    /// True if any of `names` refers to an out-of-process reward.
    bool any_external(std::span<const std::string> names) const;

private:
    std::vector<RewardSpec> specs_;
};

inline constexpr std::string_view kAlignmentReward = "alignment";
inline constexpr std::string_view kQualityReward = "quality";

/// Registry holding "alignment" and "quality".
RewardRegistry builtin_registry();

// ---------------------------------------------------------------------------
// Calibration and normalisation

struct RewardStats {
    std::string reward_name;
    double mu = 0.0;
    double sigma = 1.0;
    int sample_count = 0;
    std::string task_fingerprint;

    nlohmann::json to_json() const;
    static RewardStats from_json(const nlohmann::json& doc);
};

void save_stats(const RewardStats& stats, const std::filesystem::path& path);
RewardStats load_stats(const std::filesystem::path& path);

/// Sample mean and unbiased (n-1) standard deviation of `scores`.
/// Throws PreconditionError for fewer than 2 scores and
/// DegenerateCalibration when sigma < 1e-9.
RewardStats stats_from_scores(std::string reward_name, std::span<const double> scores,
                              std::string task_fingerprint);

/// Naive generations used for calibration. Sample i is the full reverse run
/// of slot i under `seed`, paired with prompt i mod |prompts|.
struct CalibrationSet {
    std::vector<Latent> latents;
    std::vector<Waveform> waveforms;
    std::vector<int> prompt_index;
};

CalibrationSet generate_calibration_set(const Task& task, const Schedule& sched, int num_samples,
                                        std::uint64_t seed, int jobs = 1);

std::vector<double> score_calibration_set(const CalibrationSet& set, const RewardSpec& reward,
                                          const Task& task, int jobs = 1);

RewardStats calibrate_stats(const Task& task, const Schedule& sched, const RewardSpec& reward,
                            int num_samples, std::uint64_t seed, int jobs = 1);

/// Calibrates several rewards on one shared calibration set.
std::vector<RewardStats> calibrate_stats(const Task& task, const Schedule& sched,
                                         const RewardRegistry& registry,
                                         std::span<const std::string> names, int num_samples,
                                         std::uint64_t seed, int jobs = 1);

inline double normalize(double raw, const RewardStats& stats) {
    return (raw - stats.mu) / stats.sigma;
}

/// sum_i weights[i] * z[i]. Weights must lie in [0, 1] and sum to 1 within 1e-12.
double composite_score(std::span<const double> z, std::span<const double> weights);

/// N candidates x K rewards of raw scores.
using ScoreMatrix = Eigen::MatrixXd;

/// Negated sum over rewards of descending ranks (1 = best, ties share the
/// mean of their positions). Higher is better.
std::vector<double> rank_aggregate(const ScoreMatrix& raw);

// ---------------------------------------------------------------------------
// Guidance

enum class Scheme { single, rank_aggregation, score };

std::string_view to_string(Scheme scheme);
Scheme parse_scheme(std::string_view text);

struct GuidanceConfig {
    Scheme scheme = Scheme::single;
    std::vector<std::string> rewards;
    std::vector<double> weights;
    std::vector<RewardStats> stats;

    /// Throws ConfigError or WeightSumError if the invariants do not hold.
    void validate() const;

    /// Weight of the first reward under the score scheme.
    std::optional<double> alpha() const;

    static GuidanceConfig single(std::string reward);
    static GuidanceConfig rank(std::vector<std::string> rewards);
    static GuidanceConfig score(std::vector<std::string> rewards, std::vector<double> weights,
                                std::vector<RewardStats> stats);
    /// Two-reward score guidance: alpha on alignment, 1 - alpha on quality.
    static GuidanceConfig score_alpha(double alpha, const RewardStats& alignment,
                                      const RewardStats& quality);

    nlohmann::json to_json() const;
};

/// One guidance value per row of `raw` (columns in cfg.rewards order).
/// Throws StaleStats if score-scheme stats were calibrated on another task.
std::vector<double> evaluate_guidance(const ScoreMatrix& raw, const GuidanceConfig& cfg,
                                      std::string_view active_fingerprint);

/// Raw scores of each waveform under each named reward.
ScoreMatrix score_waveforms(std::span<const Waveform> waveforms, const PromptSpec& prompt,
                            std::span<const std::string> names, const RewardRegistry& registry,
                            const Task& task, int jobs = 1);

/// Scores the candidates and applies the guidance scheme.
std::vector<double> evaluate_guidance(std::span<const Waveform> candidates,
                                      const PromptSpec& prompt, const GuidanceConfig& cfg,
                                      const RewardRegistry& registry, const Task& task,
                                      int jobs = 1, ScoreMatrix* raw_out = nullptr);

// ---------------------------------------------------------------------------
// Intermediate rewards

/// Decoded posterior-mean estimate of x0 from x_t. Costs one denoiser call.
Waveform intermediate_waveform(const Latent& x_t, int t, const Task& task, Denoiser& denoiser);

/// r(decode(E[x0 | x_t])).
double estimate_intermediate_reward(const Latent& x_t, int t, const PromptSpec& prompt,
                                    const RewardSpec& reward, const Task& task,
                                    const Schedule& sched);

struct MonteCarloEstimate {
    double mean = 0.0;
    double stddev = 0.0;
    int draws = 0;
};

/// Average of r(decode(x0)) over exact posterior draws x0 ~ p(x0 | x_t).
MonteCarloEstimate estimate_intermediate_reward_mc(const Latent& x_t, int t,
                                                   const PromptSpec& prompt,
                                                   const RewardSpec& reward, const Task& task,
                                                   const Schedule& sched, int draws,
                                                   RandomStream& rng);

}  // namespace its
