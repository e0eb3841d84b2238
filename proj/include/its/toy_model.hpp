#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>
#include "json.hpp"

#include "its/rng.hpp"
#include "its/schedule.hpp"

namespace its {

using Waveform = Eigen::VectorXd;

/// Isotropic Gaussian mixture with one shared component variance tau^2.
class MixturePrior {
public:
    MixturePrior(std::vector<Latent> means, std::vector<double> weights, double tau);

    Eigen::Index dim() const noexcept { return means_.front().size(); }
    int num_components() const noexcept { return static_cast<int>(means_.size()); }
    const Latent& mean(int k) const { return means_.at(k); }
    const std::vector<Latent>& means() const noexcept { return means_; }
    double weight(int k) const { return weights_.at(k); }
    const std::vector<double>& weights() const noexcept { return weights_; }
    double tau() const noexcept { return tau_; }

private:
    std::vector<Latent> means_;
    std::vector<double> weights_;
    double tau_;
};

/// Draws a component by weight, then mean + tau * z.
std::pair<Latent, int> sample_prior(const MixturePrior& prior, RandomStream& rng);

/// Responsibilities p(k | x_t) at noise level alpha_bar, normalised in log space.
Eigen::VectorXd component_responsibilities(const Latent& x_t, double alpha_bar,
                                           const MixturePrior& prior);

/// E[x0 | x_t] under the forward process q(x_t | x0) with cumulative
/// signal coefficient alpha_bar. Exact for the mixture prior.
Latent posterior_x0_mean(const Latent& x_t, double alpha_bar, const MixturePrior& prior);
Latent posterior_x0_mean(const Latent& x_t, int t, const MixturePrior& prior,
                         const Schedule& sched);

/// One exact draw from p(x0 | x_t).
Latent sample_posterior_x0(const Latent& x_t, double alpha_bar, const MixturePrior& prior,
                           RandomStream& rng);

/// Linear latent -> waveform map: sinusoids for the first `num_signal_dims`
/// coordinates, fixed pseudorandom broadband bases for the rest.
///
/// Noise bases are drawn uniformly from a seeded mt19937_64, orthogonalised
/// against the sinusoids and each other, and scaled to the energy of a
/// unit-amplitude sinusoid (num_samples / 2). Latent coordinates therefore
/// carry comparable energy whether they are "signal" or "noise".
class Decoder {
public:
    Decoder(std::vector<double> frequencies, int num_noise_dims, double sample_rate,
            int num_samples, std::uint64_t noise_seed);

    int num_signal_dims() const noexcept { return static_cast<int>(frequencies_.size()); }
    int num_noise_dims() const noexcept { return num_noise_dims_; }
    int dim() const noexcept { return num_signal_dims() + num_noise_dims_; }
    const std::vector<double>& frequencies() const noexcept { return frequencies_; }
    double sample_rate() const noexcept { return sample_rate_; }
    int num_samples() const noexcept { return num_samples_; }
    std::uint64_t noise_seed() const noexcept { return noise_seed_; }

    /// num_samples x dim; column k is the waveform of unit latent e_k.
    const Eigen::MatrixXd& basis() const noexcept { return basis_; }

    /// Least-squares latent coefficients for an arbitrary waveform.
    Eigen::VectorXd project(const Waveform& waveform) const;

private:
    std::vector<double> frequencies_;
    int num_noise_dims_;
    double sample_rate_;
    int num_samples_;
    std::uint64_t noise_seed_;
    Eigen::MatrixXd basis_;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr_;
};

Waveform decode_waveform(const Latent& latent, const Decoder& dec);

struct PromptSpec {
    std::string id;
    /// Unit-norm nonnegative magnitude profile over the decoder's DFT bins.
    Eigen::VectorXd target_spectrum;
    int component = 0;
};

/// Everything needed to run the generative task: the prior, the decoder and
/// the prompt catalog. Immutable once built; `fingerprint()` identifies the
/// serialised form.
class Task {
public:
    Task(MixturePrior prior, Decoder decoder, std::vector<std::pair<std::string, int>> prompts);

    const MixturePrior& prior() const noexcept { return prior_; }
    const Decoder& decoder() const noexcept { return decoder_; }
    const std::vector<PromptSpec>& prompts() const noexcept { return prompts_; }
    const PromptSpec& prompt(int i) const { return prompts_.at(i); }
    const PromptSpec& prompt(const std::string& id) const;
    int num_prompts() const noexcept { return static_cast<int>(prompts_.size()); }
    const std::string& fingerprint() const noexcept { return fingerprint_; }

    nlohmann::json to_json() const;
    static Task from_json(const nlohmann::json& doc);

private:
    MixturePrior prior_;
    Decoder decoder_;
    std::vector<PromptSpec> prompts_;
    std::string fingerprint_;
};

/// Unit-normalised magnitude spectrum of the signal part of `latent`.
Eigen::VectorXd signal_target_spectrum(const Latent& latent, const Decoder& dec);

struct DefaultTaskParams {
    int num_signal_dims = 8;
    int num_noise_dims = 4;
    int num_components = 4;
    double tau = 0.15;
    double sample_rate = 16000.0;
    int num_samples = 4096;
};

/// The shipped benchmark task. The seed drives the decoder's noise bases.
Task build_default_task(std::uint64_t seed, const DefaultTaskParams& params = {});

/// 64-bit FNV-1a of `text`, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view text);

}  // namespace its
