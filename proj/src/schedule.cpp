#include "its/schedule.hpp"

#include <cmath>
#include <string>

#include "its/error.hpp"

namespace its {

Schedule make_schedule(int num_steps, double beta_min, double beta_max) {
    if (num_steps < 2) {
        throw InvalidRange("schedule needs at least 2 steps, got " + std::to_string(num_steps));
    }
    if (!(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0)) {
        throw InvalidRange("schedule requires 0 < beta_min < beta_max < 1");
    }
    Schedule s;
    s.betas_.resize(num_steps);
    s.alpha_bars_.resize(num_steps);
    double prod = 1.0;
    for (int t = 0; t < num_steps; ++t) {
        const double beta =
            beta_min + (beta_max - beta_min) * static_cast<double>(t) / (num_steps - 1);
        s.betas_[t] = beta;
        prod *= 1.0 - beta;
        s.alpha_bars_[t] = prod;
    }
    return s;
}

namespace {

void check_timestep(int t, const Schedule& sched) {
    if (t < 0 || t >= sched.num_steps()) {
        throw BoundsError("timestep " + std::to_string(t) + " outside [0, " +
                          std::to_string(sched.num_steps()) + ")");
    }
}

void check_same_dim(const Latent& a, const Latent& b, const char* what) {
    if (a.size() != b.size()) {
        throw DimensionMismatch(std::string(what) + ": dimension " + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()));
    }
}

}  // namespace

Latent forward_noise(const Latent& x0, int t, const Latent& eps, const Schedule& sched) {
    check_timestep(t, sched);
    check_same_dim(x0, eps, "forward_noise");
    const double ab = sched.alpha_bar(t);
    return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Latent predicted_noise(const Latent& x_t, const Latent& x0_hat, int t, const Schedule& sched) {
    check_timestep(t, sched);
    check_same_dim(x_t, x0_hat, "predicted_noise");
    const double ab = sched.alpha_bar(t);
    return (x_t - std::sqrt(ab) * x0_hat) / std::sqrt(1.0 - ab);
}

Latent ddim_step(const Latent& x_t, const Latent& x0_hat, int t, int t_prev,
                 const Schedule& sched, double eta, const Latent& noise) {
    if (t_prev >= t) {
        throw OrderingError("ddim_step requires t_prev < t (got t=" + std::to_string(t) +
                            ", t_prev=" + std::to_string(t_prev) + ")");
    }
    check_timestep(t_prev, sched);
    if (eta < 0.0) {
        throw InvalidRange("eta must be >= 0");
    }
    const Latent eps_hat = predicted_noise(x_t, x0_hat, t, sched);
    const double ab = sched.alpha_bar(t);
    const double ab_prev = sched.alpha_bar(t_prev);
    if (eta == 0.0) {
        return std::sqrt(ab_prev) * x0_hat + std::sqrt(1.0 - ab_prev) * eps_hat;
    }
    check_same_dim(x_t, noise, "ddim_step noise");
    const double sigma =
        eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
    return std::sqrt(ab_prev) * x0_hat + dir * eps_hat + sigma * noise;
}

}  // namespace its
