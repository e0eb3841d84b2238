#include "its/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "json.hpp"

#include "its/error.hpp"
#include "its/spectrum.hpp"

namespace its {

MixturePrior::MixturePrior(std::vector<Latent> means, std::vector<double> weights, double tau)
    : means_(std::move(means)), weights_(std::move(weights)), tau_(tau) {
    if (means_.empty()) {
        throw ConfigError("mixture prior needs at least one component");
    }
    if (means_.size() != weights_.size()) {
        throw DimensionMismatch("mixture prior: means and weights differ in length");
    }
    const auto d = means_.front().size();
    if (d == 0) {
        throw DimensionMismatch("mixture prior: zero-dimensional latent");
    }
    for (const auto& m : means_) {
        if (m.size() != d) {
            throw DimensionMismatch("mixture prior: component means differ in dimension");
        }
    }
    double total = 0.0;
    for (double w : weights_) {
        if (!(w > 0.0)) {
            throw InvalidRange("mixture prior: weights must be positive");
        }
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw WeightSumError("mixture prior: weights sum to " + std::to_string(total));
    }
    if (!(tau >= 0.0) || !std::isfinite(tau)) {
        throw InvalidRange("mixture prior: tau must be finite and >= 0");
    }
}

std::pair<Latent, int> sample_prior(const MixturePrior& prior, RandomStream& rng) {
    const double u = rng.uniform();
    int k = 0;
    double acc = 0.0;
    for (; k + 1 < prior.num_components(); ++k) {
        acc += prior.weight(k);
        if (u < acc) {
            break;
        }
    }
    Latent x = prior.mean(k);
    if (prior.tau() > 0.0) {
        x += prior.tau() * rng.normal_vector(prior.dim());
    }
    return {std::move(x), k};
}

Eigen::VectorXd component_responsibilities(const Latent& x_t, double alpha_bar,
                                           const MixturePrior& prior) {
    if (x_t.size() != prior.dim()) {
        throw DimensionMismatch("responsibilities: latent has dimension " +
                                std::to_string(x_t.size()));
    }
    const double tau2 = prior.tau() * prior.tau();
    const double var = alpha_bar * tau2 + (1.0 - alpha_bar);
    const double scale = std::sqrt(alpha_bar);
    const int k_count = prior.num_components();
    Eigen::VectorXd logw(k_count);
    for (int k = 0; k < k_count; ++k) {
        logw[k] = std::log(prior.weight(k)) -
                  (x_t - scale * prior.mean(k)).squaredNorm() / (2.0 * var);
    }
    const double top = logw.maxCoeff();
    Eigen::VectorXd r = (logw.array() - top).exp();
    return r / r.sum();
}

Latent posterior_x0_mean(const Latent& x_t, double alpha_bar, const MixturePrior& prior) {
    const Eigen::VectorXd resp = component_responsibilities(x_t, alpha_bar, prior);
    const double tau2 = prior.tau() * prior.tau();
    const double var = alpha_bar * tau2 + (1.0 - alpha_bar);
    const double scale = std::sqrt(alpha_bar);
    const double gain = scale * tau2 / var;
    Latent out = Latent::Zero(x_t.size());
    for (int k = 0; k < prior.num_components(); ++k) {
        const Latent& m = prior.mean(k);
        out += resp[k] * (m + gain * (x_t - scale * m));
    }
    return out;
}

Latent posterior_x0_mean(const Latent& x_t, int t, const MixturePrior& prior,
                         const Schedule& sched) {
    if (t < 0 || t >= sched.num_steps()) {
        throw BoundsError("posterior_x0_mean: timestep " + std::to_string(t) + " out of range");
    }
    return posterior_x0_mean(x_t, sched.alpha_bar(t), prior);
}

Latent sample_posterior_x0(const Latent& x_t, double alpha_bar, const MixturePrior& prior,
                           RandomStream& rng) {
    const Eigen::VectorXd resp = component_responsibilities(x_t, alpha_bar, prior);
    const double u = rng.uniform();
    int k = 0;
    double acc = 0.0;
    for (; k + 1 < prior.num_components(); ++k) {
        acc += resp[k];
        if (u < acc) {
            break;
        }
    }
    const double tau2 = prior.tau() * prior.tau();
    const double var = alpha_bar * tau2 + (1.0 - alpha_bar);
    const double scale = std::sqrt(alpha_bar);
    const Latent& m = prior.mean(k);
    Latent post = m + (scale * tau2 / var) * (x_t - scale * m);
    const double post_var = tau2 * (1.0 - alpha_bar) / var;
    if (post_var > 0.0) {
        post += std::sqrt(post_var) * rng.normal_vector(x_t.size());
    }
    return post;
}

Decoder::Decoder(std::vector<double> frequencies, int num_noise_dims, double sample_rate,
                 int num_samples, std::uint64_t noise_seed)
    : frequencies_(std::move(frequencies)),
      num_noise_dims_(num_noise_dims),
      sample_rate_(sample_rate),
      num_samples_(num_samples),
      noise_seed_(noise_seed) {
    if (frequencies_.empty() || num_noise_dims_ < 0 || num_samples_ < 2 || !(sample_rate_ > 0)) {
        throw ConfigError("decoder: invalid dimensions");
    }
    for (std::size_t i = 0; i < frequencies_.size(); ++i) {
        const double f = frequencies_[i];
        if (!(f > 0.0 && f < sample_rate_ / 2.0)) {
            throw InvalidRange("decoder: frequency " + std::to_string(f) +
                               " Hz outside (0, Nyquist)");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (frequencies_[j] == f) {
                throw ConfigError("decoder: duplicate frequency " + std::to_string(f));
            }
        }
    }
    if (dim() > num_samples_) {
        throw ConfigError("decoder: more latent dims than samples");
    }

    const int ds = num_signal_dims();
    basis_.resize(num_samples_, dim());
    for (int k = 0; k < ds; ++k) {
        const double w = 2.0 * std::numbers::pi * frequencies_[k] / sample_rate_;
        for (int n = 0; n < num_samples_; ++n) {
            basis_(n, k) = std::sin(w * n);
        }
    }
    const double target_energy = num_samples_ / 2.0;
    RandomStream rng(noise_seed_);
    for (int j = 0; j < num_noise_dims_; ++j) {
        Eigen::VectorXd v(num_samples_);
        for (int n = 0; n < num_samples_; ++n) {
            v[n] = 2.0 * rng.uniform() - 1.0;
        }
        // Two Gram-Schmidt passes against everything before this column.
        for (int pass = 0; pass < 2; ++pass) {
            for (int c = 0; c < ds + j; ++c) {
                const auto col = basis_.col(c);
                v -= (col.dot(v) / col.squaredNorm()) * col;
            }
        }
        basis_.col(ds + j) = v * std::sqrt(target_energy / v.squaredNorm());
    }
    qr_ = basis_.householderQr();
}

Eigen::VectorXd Decoder::project(const Waveform& waveform) const {
    if (waveform.size() != num_samples_) {
        throw DimensionMismatch("decoder: waveform has " + std::to_string(waveform.size()) +
                                " samples, expected " + std::to_string(num_samples_));
    }
    return qr_.solve(waveform);
}

Waveform decode_waveform(const Latent& latent, const Decoder& dec) {
    if (latent.size() != dec.dim()) {
        throw DimensionMismatch("decode_waveform: latent has dimension " +
                                std::to_string(latent.size()) + ", decoder expects " +
                                std::to_string(dec.dim()));
    }
    return dec.basis() * latent;
}

Eigen::VectorXd signal_target_spectrum(const Latent& latent, const Decoder& dec) {
    Latent signal_only = latent;
    signal_only.tail(dec.num_noise_dims()).setZero();
    Eigen::VectorXd mag = magnitude_spectrum(decode_waveform(signal_only, dec));
    const double norm = mag.norm();
    if (!(norm > 0.0)) {
        throw ConfigError("target spectrum of an all-zero signal is undefined");
    }
    return mag / norm;
}

std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

Task::Task(MixturePrior prior, Decoder decoder, std::vector<std::pair<std::string, int>> prompts)
    : prior_(std::move(prior)), decoder_(std::move(decoder)) {
    if (prior_.dim() != decoder_.dim()) {
        throw DimensionMismatch("task: prior dimension " + std::to_string(prior_.dim()) +
                                " != decoder dimension " + std::to_string(decoder_.dim()));
    }
    if (prior_.num_components() < 2) {
        throw ConfigError("task: at least 2 mixture components are required");
    }
    std::vector<int> used(prior_.num_components(), 0);
    for (auto& [id, component] : prompts) {
        if (component < 0 || component >= prior_.num_components()) {
            throw BoundsError("task: prompt '" + id + "' maps to missing component");
        }
        for (const auto& p : prompts_) {
            if (p.id == id) {
                throw ConfigError("task: duplicate prompt id '" + id + "'");
            }
        }
        ++used[component];
        PromptSpec spec;
        spec.id = id;
        spec.component = component;
        spec.target_spectrum = signal_target_spectrum(prior_.mean(component), decoder_);
        prompts_.push_back(std::move(spec));
    }
    if (prompts_.empty()) {
        throw ConfigError("task: empty prompt catalog");
    }
    for (int c : used) {
        if (c > 1) {
            throw ConfigError("task: two prompts share one mixture component");
        }
    }
    fingerprint_ = fnv1a_hex(to_json().dump());
}

const PromptSpec& Task::prompt(const std::string& id) const {
    for (const auto& p : prompts_) {
        if (p.id == id) {
            return p;
        }
    }
    throw ConfigError("unknown prompt '" + id + "'");
}

nlohmann::json Task::to_json() const {
    nlohmann::json means = nlohmann::json::array();
    for (const auto& m : prior_.means()) {
        means.push_back(std::vector<double>(m.data(), m.data() + m.size()));
    }
    nlohmann::json prompts = nlohmann::json::array();
    for (const auto& p : prompts_) {
        prompts.push_back({{"id", p.id}, {"component", p.component}});
    }
    return {
        {"format", "its-task/1"},
        {"prior",
         {{"means", means}, {"weights", prior_.weights()}, {"tau", prior_.tau()}}},
        {"decoder",
         {{"frequencies", decoder_.frequencies()},
          {"num_noise_dims", decoder_.num_noise_dims()},
          {"sample_rate", decoder_.sample_rate()},
          {"num_samples", decoder_.num_samples()},
          {"noise_seed", decoder_.noise_seed()}}},
        {"prompts", prompts},
    };
}

Task Task::from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format").get<std::string>() != "its-task/1") {
            throw ConfigError("task: unsupported format " + doc.at("format").dump());
        }
        const auto& p = doc.at("prior");
        std::vector<Latent> means;
        for (const auto& m : p.at("means")) {
            const auto v = m.get<std::vector<double>>();
            means.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()));
        }
        MixturePrior prior(std::move(means), p.at("weights").get<std::vector<double>>(),
                           p.at("tau").get<double>());
        const auto& d = doc.at("decoder");
        Decoder decoder(d.at("frequencies").get<std::vector<double>>(),
                        d.at("num_noise_dims").get<int>(), d.at("sample_rate").get<double>(),
                        d.at("num_samples").get<int>(), d.at("noise_seed").get<std::uint64_t>());
        std::vector<std::pair<std::string, int>> prompts;
        for (const auto& entry : doc.at("prompts")) {
            prompts.emplace_back(entry.at("id").get<std::string>(),
                                 entry.at("component").get<int>());
        }
        return Task(std::move(prior), std::move(decoder), std::move(prompts));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("task: malformed document: ") + e.what());
    }
}

namespace {

const char* const kPromptNames[] = {
    "a low steady hum",
    "a warm mid-range drone",
    "a bright chime with hiss",
    "a high whistle in static",
    "a buzzing alarm",
    "a rumbling engine",
    "a ringing bell",
    "a fluttering tone",
};

}  // namespace

Task build_default_task(std::uint64_t seed, const DefaultTaskParams& params) {
    const int ds = params.num_signal_dims;
    const int dn = params.num_noise_dims;
    const int k_count = params.num_components;
    if (ds < 2 * k_count) {
        throw ConfigError("default task: need two signal dims per component");
    }
    // Bin-centred tones 32 bins apart keep the sinusoid basis orthogonal.
    const double bin_hz = params.sample_rate / params.num_samples;
    std::vector<double> freqs;
    for (int k = 0; k < ds; ++k) {
        freqs.push_back(32.0 * (k + 1) * bin_hz);
    }
    Decoder decoder(std::move(freqs), dn, params.sample_rate, params.num_samples, seed);

    // Component k: a pair of tones {2k, 2k+1} at 0.7 over a 0.3 floor, plus a
    // noise-dim offset of magnitude 0.1 * (k + 1) with alternating signs.
    std::vector<Latent> means;
    for (int k = 0; k < k_count; ++k) {
        Latent m(ds + dn);
        m.head(ds).setConstant(0.3);
        m[2 * k] = 0.7;
        m[2 * k + 1] = 0.7;
        for (int j = 0; j < dn; ++j) {
            m[ds + j] = 0.1 * (k + 1) * ((j % 2 == 0) ? 1.0 : -1.0);
        }
        means.push_back(std::move(m));
    }
    std::vector<double> weights(k_count, 1.0 / k_count);
    // Renormalise exactly for awkward k_count (e.g. 3).
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    weights.back() += 1.0 - total;

    std::vector<std::pair<std::string, int>> prompts;
    for (int k = 0; k < k_count; ++k) {
        std::string name = k < static_cast<int>(std::size(kPromptNames))
                               ? kPromptNames[k]
                               : "prompt " + std::to_string(k);
        prompts.emplace_back(std::move(name), k);
    }
    return Task(MixturePrior(std::move(means), std::move(weights), params.tau),
                std::move(decoder), std::move(prompts));
}

}  // namespace its
