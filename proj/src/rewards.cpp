#include "its/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "its/error.hpp"
#include "its/parallel.hpp"
#include "its/spectrum.hpp"

namespace its {

double reward_alignment(const Waveform& waveform, const PromptSpec& prompt) {
    if (waveform.size() == 0) {
        throw PreconditionError("alignment reward: empty waveform");
    }
    const Eigen::VectorXd mag = magnitude_spectrum(waveform);
    if (mag.size() != prompt.target_spectrum.size()) {
        throw DimensionMismatch("alignment reward: spectrum has " + std::to_string(mag.size()) +
                                " bins, prompt target has " +
                                std::to_string(prompt.target_spectrum.size()));
    }
    const double norm = mag.norm();
    if (!(norm > 0.0)) {
        return 0.0;
    }
    const double cosine = mag.dot(prompt.target_spectrum) / norm;
    return std::clamp(cosine, 0.0, 1.0);
}

double reward_quality(const Waveform& waveform, const Decoder& dec) {
    const Eigen::VectorXd coef = dec.project(waveform);
    const int ds = dec.num_signal_dims();
    const int dn = dec.num_noise_dims();
    const double e_signal = (dec.basis().leftCols(ds) * coef.head(ds)).squaredNorm();
    const double e_noise =
        dn > 0 ? (dec.basis().rightCols(dn) * coef.tail(dn)).squaredNorm() : 0.0;
    const double total = e_signal + e_noise;
    if (!(total > 0.0)) {
        return 0.0;
    }
    return std::clamp(e_signal / total, 0.0, 1.0);
}

std::string_view to_string(RewardKind kind) {
    switch (kind) {
        case RewardKind::alignment: return "alignment";
        case RewardKind::quality: return "quality";
        case RewardKind::external: return "external";
    }
    return "?";
}

void RewardRegistry::add(RewardSpec spec) {
    if (spec.name.empty()) {
        throw ConfigError("reward registry: empty reward name");
    }
    if (contains(spec.name)) {
        throw ConfigError("reward registry: duplicate reward '" + spec.name + "'");
    }
    if (!spec.evaluate) {
        throw ConfigError("reward registry: reward '" + spec.name + "' has no evaluator");
    }
    specs_.push_back(std::move(spec));
}

const RewardSpec& RewardRegistry::get(std::string_view name) const {
    for (const auto& s : specs_) {
        if (s.name == name) {
            return s;
        }
    }
    throw ConfigError("unknown reward '" + std::string(name) + "'");
}

bool RewardRegistry::contains(std::string_view name) const {
    return std::any_of(specs_.begin(), specs_.end(),
                       [&](const RewardSpec& s) { return s.name == name; });
}

std::vector<std::string> RewardRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& s : specs_) {
        out.push_back(s.name);
    }
    return out;
}

bool RewardRegistry::any_external(std::span<const std::string> names) const {
    return std::any_of(names.begin(), names.end(), [&](const std::string& n) {
        return get(n).kind == RewardKind::external;
    });
}

RewardRegistry builtin_registry() {
    RewardRegistry reg;
    reg.add({std::string(kAlignmentReward), RewardKind::alignment,
             [](const Waveform& w, const PromptSpec& p, const Task&) {
                 return reward_alignment(w, p);
             }});
    reg.add({std::string(kQualityReward), RewardKind::quality,
             [](const Waveform& w, const PromptSpec&, const Task& task) {
                 return reward_quality(w, task.decoder());
             }});
    return reg;
}

nlohmann::json RewardStats::to_json() const {
    return {{"reward_name", reward_name},
            {"mu", mu},
            {"sigma", sigma},
            {"sample_count", sample_count},
            {"task_fingerprint", task_fingerprint}};
}

RewardStats RewardStats::from_json(const nlohmann::json& doc) {
    RewardStats s;
    try {
        s.reward_name = doc.at("reward_name").get<std::string>();
        s.mu = doc.at("mu").get<double>();
        s.sigma = doc.at("sigma").get<double>();
        s.sample_count = doc.at("sample_count").get<int>();
        s.task_fingerprint = doc.at("task_fingerprint").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("reward stats: malformed document: ") + e.what());
    }
    if (!(s.sigma > 0.0) || s.sample_count < 2) {
        throw ConfigError("reward stats for '" + s.reward_name + "' are invalid");
    }
    return s;
}

void save_stats(const RewardStats& stats, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << stats.to_json().dump(2) << '\n';
}

RewardStats load_stats(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot read " + path.string());
    }
    try {
        return RewardStats::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

RewardStats stats_from_scores(std::string reward_name, std::span<const double> scores,
                              std::string task_fingerprint) {
    const auto n = scores.size();
    if (n < 2) {
        throw PreconditionError("calibration needs at least 2 samples");
    }
    const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
    double ss = 0.0;
    for (double s : scores) {
        ss += (s - mean) * (s - mean);
    }
    const double sigma = std::sqrt(ss / (n - 1));
    if (!(sigma >= 1e-9)) {
        throw DegenerateCalibration("reward '" + reward_name +
                                    "' is constant over the calibration set (sigma=" +
                                    std::to_string(sigma) + ")");
    }
    return {std::move(reward_name), mean, sigma, static_cast<int>(n),
            std::move(task_fingerprint)};
}

CalibrationSet generate_calibration_set(const Task& task, const Schedule& sched, int num_samples,
                                        std::uint64_t seed, int jobs) {
    if (num_samples < 2) {
        throw PreconditionError("calibration needs at least 2 samples");
    }
    CalibrationSet set;
    set.latents.resize(num_samples);
    set.waveforms.resize(num_samples);
    set.prompt_index.resize(num_samples);
    Denoiser denoiser(task.prior(), sched);
    parallel_for(num_samples, jobs, [&](std::size_t i) {
        set.latents[i] = generate_latent(seed, i, denoiser);
        set.waveforms[i] = decode_waveform(set.latents[i], task.decoder());
        set.prompt_index[i] = static_cast<int>(i % task.num_prompts());
    });
    return set;
}

std::vector<double> score_calibration_set(const CalibrationSet& set, const RewardSpec& reward,
                                          const Task& task, int jobs) {
    std::vector<double> scores(set.waveforms.size());
    const int lanes = reward.kind == RewardKind::external ? 1 : jobs;
    parallel_for(scores.size(), lanes, [&](std::size_t i) {
        scores[i] = reward.evaluate(set.waveforms[i], task.prompt(set.prompt_index[i]), task);
    });
    return scores;
}

RewardStats calibrate_stats(const Task& task, const Schedule& sched, const RewardSpec& reward,
                            int num_samples, std::uint64_t seed, int jobs) {
    const auto set = generate_calibration_set(task, sched, num_samples, seed, jobs);
    const auto scores = score_calibration_set(set, reward, task, jobs);
    return stats_from_scores(reward.name, scores, task.fingerprint());
}

std::vector<RewardStats> calibrate_stats(const Task& task, const Schedule& sched,
                                         const RewardRegistry& registry,
                                         std::span<const std::string> names, int num_samples,
                                         std::uint64_t seed, int jobs) {
    const auto set = generate_calibration_set(task, sched, num_samples, seed, jobs);
    std::vector<RewardStats> out;
    for (const auto& name : names) {
        const auto scores = score_calibration_set(set, registry.get(name), task, jobs);
        out.push_back(stats_from_scores(name, scores, task.fingerprint()));
    }
    return out;
}

namespace {

void check_weights(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0 && w <= 1.0)) {
            throw WeightSumError("weight " + std::to_string(w) + " outside [0, 1]");
        }
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw WeightSumError("weights sum to " + std::to_string(total) + ", expected 1");
    }
}

}  // namespace

double composite_score(std::span<const double> z, std::span<const double> weights) {
    if (z.size() != weights.size()) {
        throw DimensionMismatch("composite_score: " + std::to_string(z.size()) + " scores, " +
                                std::to_string(weights.size()) + " weights");
    }
    check_weights(weights);
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        acc += weights[i] * z[i];
    }
    return acc;
}

std::vector<double> rank_aggregate(const ScoreMatrix& raw) {
    const auto n = raw.rows();
    std::vector<double> total(n, 0.0);
    std::vector<Eigen::Index> order(n);
    for (Eigen::Index k = 0; k < raw.cols(); ++k) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            return raw(a, k) > raw(b, k);
        });
        for (Eigen::Index lo = 0; lo < n;) {
            Eigen::Index hi = lo + 1;
            while (hi < n && raw(order[hi], k) == raw(order[lo], k)) {
                ++hi;
            }
            // Positions lo..hi-1 (0-based) share rank mean((lo+1)..hi).
            const double rank = 0.5 * static_cast<double>(lo + 1 + hi);
            for (Eigen::Index i = lo; i < hi; ++i) {
                total[order[i]] += rank;
            }
            lo = hi;
        }
    }
    for (double& v : total) {
        v = -v;
    }
    return total;
}

std::string_view to_string(Scheme scheme) {
    switch (scheme) {
        case Scheme::single: return "single";
        case Scheme::rank_aggregation: return "rank";
        case Scheme::score: return "score";
    }
    return "?";
}

Scheme parse_scheme(std::string_view text) {
    if (text == "single") return Scheme::single;
    if (text == "rank" || text == "rank_aggregation") return Scheme::rank_aggregation;
    if (text == "score") return Scheme::score;
    throw ConfigError("unknown guidance scheme '" + std::string(text) + "'");
}

void GuidanceConfig::validate() const {
    switch (scheme) {
        case Scheme::single:
            if (rewards.size() != 1) {
                throw ConfigError("single guidance needs exactly one reward");
            }
            return;
        case Scheme::rank_aggregation:
            if (rewards.size() < 2) {
                throw ConfigError("rank aggregation needs at least two rewards");
            }
            return;
        case Scheme::score:
            if (rewards.size() < 2) {
                throw ConfigError("score guidance needs at least two rewards");
            }
            if (weights.size() != rewards.size()) {
                throw ConfigError("score guidance needs one weight per reward");
            }
            check_weights(weights);
            if (stats.size() != rewards.size()) {
                throw ConfigError("score guidance needs calibration stats for every reward");
            }
            for (std::size_t i = 0; i < rewards.size(); ++i) {
                if (stats[i].reward_name != rewards[i]) {
                    throw ConfigError("stats[" + std::to_string(i) + "] are for '" +
                                      stats[i].reward_name + "', expected '" + rewards[i] + "'");
                }
                if (!(stats[i].sigma > 0.0)) {
                    throw ConfigError("stats for '" + rewards[i] + "' have sigma <= 0");
                }
            }
            return;
    }
}

std::optional<double> GuidanceConfig::alpha() const {
    if (scheme != Scheme::score || weights.empty()) {
        return std::nullopt;
    }
    return weights.front();
}

GuidanceConfig GuidanceConfig::single(std::string reward) {
    return {Scheme::single, {std::move(reward)}, {}, {}};
}

GuidanceConfig GuidanceConfig::rank(std::vector<std::string> rewards) {
    return {Scheme::rank_aggregation, std::move(rewards), {}, {}};
}

GuidanceConfig GuidanceConfig::score(std::vector<std::string> rewards,
                                     std::vector<double> weights,
                                     std::vector<RewardStats> stats) {
    return {Scheme::score, std::move(rewards), std::move(weights), std::move(stats)};
}

GuidanceConfig GuidanceConfig::score_alpha(double alpha, const RewardStats& alignment,
                                           const RewardStats& quality) {
    return score({alignment.reward_name, quality.reward_name}, {alpha, 1.0 - alpha},
                 {alignment, quality});
}

nlohmann::json GuidanceConfig::to_json() const {
    nlohmann::json st = nlohmann::json::array();
    for (const auto& s : stats) {
        st.push_back(s.to_json());
    }
    return {{"scheme", to_string(scheme)}, {"rewards", rewards}, {"weights", weights},
            {"stats", st}};
}

std::vector<double> evaluate_guidance(const ScoreMatrix& raw, const GuidanceConfig& cfg,
                                      std::string_view active_fingerprint) {
    cfg.validate();
    if (raw.cols() != static_cast<Eigen::Index>(cfg.rewards.size())) {
        throw DimensionMismatch("evaluate_guidance: score matrix has " +
                                std::to_string(raw.cols()) + " columns for " +
                                std::to_string(cfg.rewards.size()) + " rewards");
    }
    const auto n = raw.rows();
    std::vector<double> out(n);
    switch (cfg.scheme) {
        case Scheme::single:
            for (Eigen::Index i = 0; i < n; ++i) {
                out[i] = raw(i, 0);
            }
            break;
        case Scheme::rank_aggregation:
            out = rank_aggregate(raw);
            break;
        case Scheme::score: {
            for (const auto& s : cfg.stats) {
                if (s.task_fingerprint != active_fingerprint) {
                    throw StaleStats("stats for '" + s.reward_name + "' were calibrated on task " +
                                     s.task_fingerprint + ", active task is " +
                                     std::string(active_fingerprint));
                }
            }
            std::vector<double> z(raw.cols());
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index k = 0; k < raw.cols(); ++k) {
                    z[k] = normalize(raw(i, k), cfg.stats[k]);
                }
                out[i] = composite_score(z, cfg.weights);
            }
            break;
        }
    }
    return out;
}

ScoreMatrix score_waveforms(std::span<const Waveform> waveforms, const PromptSpec& prompt,
                            std::span<const std::string> names, const RewardRegistry& registry,
                            const Task& task, int jobs) {
    std::vector<const RewardSpec*> specs;
    for (const auto& n : names) {
        specs.push_back(&registry.get(n));
    }
    ScoreMatrix raw(static_cast<Eigen::Index>(waveforms.size()),
                    static_cast<Eigen::Index>(specs.size()));
    const int lanes = registry.any_external(names) ? 1 : jobs;
    parallel_for(waveforms.size(), lanes, [&](std::size_t i) {
        for (std::size_t k = 0; k < specs.size(); ++k) {
            raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                specs[k]->evaluate(waveforms[i], prompt, task);
        }
    });
    return raw;
}

std::vector<double> evaluate_guidance(std::span<const Waveform> candidates,
                                      const PromptSpec& prompt, const GuidanceConfig& cfg,
                                      const RewardRegistry& registry, const Task& task, int jobs,
                                      ScoreMatrix* raw_out) {
    cfg.validate();
    ScoreMatrix raw = score_waveforms(candidates, prompt, cfg.rewards, registry, task, jobs);
    auto out = evaluate_guidance(raw, cfg, task.fingerprint());
    if (raw_out != nullptr) {
        *raw_out = std::move(raw);
    }
    return out;
}

Waveform intermediate_waveform(const Latent& x_t, int t, const Task& task, Denoiser& denoiser) {
    return decode_waveform(denoiser.x0(x_t, t), task.decoder());
}

double estimate_intermediate_reward(const Latent& x_t, int t, const PromptSpec& prompt,
                                    const RewardSpec& reward, const Task& task,
                                    const Schedule& sched) {
    Denoiser denoiser(task.prior(), sched);
    return reward.evaluate(intermediate_waveform(x_t, t, task, denoiser), prompt, task);
}

MonteCarloEstimate estimate_intermediate_reward_mc(const Latent& x_t, int t,
                                                   const PromptSpec& prompt,
                                                   const RewardSpec& reward, const Task& task,
                                                   const Schedule& sched, int draws,
                                                   RandomStream& rng) {
    if (draws < 1) {
        throw PreconditionError("Monte Carlo estimate needs at least one draw");
    }
    if (t < 0 || t >= sched.num_steps()) {
        throw BoundsError("timestep out of range");
    }
    const double ab = sched.alpha_bar(t);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < draws; ++i) {
        const Latent x0 = sample_posterior_x0(x_t, ab, task.prior(), rng);
        const double r = reward.evaluate(decode_waveform(x0, task.decoder()), prompt, task);
        sum += r;
        sum_sq += r * r;
    }
    MonteCarloEstimate est;
    est.draws = draws;
    est.mean = sum / draws;
    est.stddev = draws > 1 ? std::sqrt(std::max(0.0, (sum_sq - draws * est.mean * est.mean) /
                                                         (draws - 1)))
                           : 0.0;
    return est;
}

}  // namespace its
