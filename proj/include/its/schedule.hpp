#pragma once

#include <vector>

#include <Eigen/Core>

namespace its {

using Latent = Eigen::VectorXd;

/// Discrete linear-beta diffusion schedule. Timesteps run 0..T-1 with
/// T-1 the noisiest; sampling walks t -> t-1.
class Schedule {
public:
    int num_steps() const noexcept { return static_cast<int>(betas_.size()); }
    double beta(int t) const { return betas_.at(t); }
    double alpha_bar(int t) const { return alpha_bars_.at(t); }
    const std::vector<double>& betas() const noexcept { return betas_; }
    const std::vector<double>& alpha_bars() const noexcept { return alpha_bars_; }

    double beta_min() const noexcept { return betas_.front(); }
    double beta_max() const noexcept { return betas_.back(); }

private:
    friend Schedule make_schedule(int, double, double);
    std::vector<double> betas_;
    std::vector<double> alpha_bars_;
};

inline constexpr int kDefaultSteps = 100;
inline constexpr double kDefaultBetaMin = 1e-4;
inline constexpr double kDefaultBetaMax = 0.15;

/// betas[t] = beta_min + (beta_max - beta_min) * t / (T - 1).
/// Throws InvalidRange unless 0 < beta_min < beta_max < 1 and T >= 2.
Schedule make_schedule(int num_steps = kDefaultSteps, double beta_min = kDefaultBetaMin,
                       double beta_max = kDefaultBetaMax);

/// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
Latent forward_noise(const Latent& x0, int t, const Latent& eps, const Schedule& sched);

/// Noise implied by (x_t, x0_hat) at timestep t.
Latent predicted_noise(const Latent& x_t, const Latent& x0_hat, int t, const Schedule& sched);

/// DDIM update from t to t_prev. With eta = 0 the step is deterministic and
/// `noise` is ignored (it may be empty).
Latent ddim_step(const Latent& x_t, const Latent& x0_hat, int t, int t_prev,
                 const Schedule& sched, double eta = 0.0, const Latent& noise = Latent());

}  // namespace its
