#pragma once

#include <atomic>
#include <cstdint>

#include "its/rng.hpp"
#include "its/schedule.hpp"
#include "its/toy_model.hpp"

namespace its {

/// Closed-form x0 predictor for a mixture prior, instrumented with a call
/// counter. Every call is one function evaluation (NFE).
class Denoiser {
public:
    Denoiser(const MixturePrior& prior, const Schedule& sched) : prior_(prior), sched_(sched) {}

    Denoiser(const Denoiser&) = delete;
    Denoiser& operator=(const Denoiser&) = delete;

    Latent x0(const Latent& x_t, int t) {
        calls_.fetch_add(1, std::memory_order_relaxed);
        return posterior_x0_mean(x_t, t, prior_, sched_);
    }

    std::int64_t calls() const noexcept { return calls_.load(std::memory_order_relaxed); }
    const MixturePrior& prior() const noexcept { return prior_; }
    const Schedule& schedule() const noexcept { return sched_; }

private:
    const MixturePrior& prior_;
    const Schedule& sched_;
    std::atomic<std::int64_t> calls_{0};
};

/// One reverse step at timestep t: predicts x0 and, for t > 0, moves to t-1.
/// At t = 0 the prediction itself is the result. `stream` supplies eta noise
/// and may be null when eta == 0.
Latent reverse_step(const Latent& x_t, int t, Denoiser& denoiser, double eta,
                    RandomStream* stream);

/// Runs reverse_step from t_start down to 0 inclusive (t_start + 1 calls).
Latent denoise_from(Latent x, int t_start, Denoiser& denoiser, double eta,
                    RandomStream* stream);

/// Initial noise for candidate `slot` and its stream positioned after the draw.
struct SeededStart {
    Latent x;
    RandomStream stream;
};
SeededStart initial_noise(std::uint64_t master_seed, std::uint64_t slot, Eigen::Index dim);

/// Full naive generation: x_{T-1} ~ N(0, I) from the slot stream, then T
/// reverse steps.
Latent generate_latent(std::uint64_t master_seed, std::uint64_t slot, Denoiser& denoiser,
                       double eta = 0.0);

}  // namespace its
