#include "its/sampler.hpp"

namespace its {

Latent reverse_step(const Latent& x_t, int t, Denoiser& denoiser, double eta,
                    RandomStream* stream) {
    Latent x0_hat = denoiser.x0(x_t, t);
    if (t == 0) {
        return x0_hat;
    }
    if (eta > 0.0 && stream != nullptr) {
        const Latent noise = stream->normal_vector(x_t.size());
        return ddim_step(x_t, x0_hat, t, t - 1, denoiser.schedule(), eta, noise);
    }
    return ddim_step(x_t, x0_hat, t, t - 1, denoiser.schedule());
}

Latent denoise_from(Latent x, int t_start, Denoiser& denoiser, double eta,
                    RandomStream* stream) {
    for (int t = t_start; t >= 0; --t) {
        x = reverse_step(x, t, denoiser, eta, stream);
    }
    return x;
}

SeededStart initial_noise(std::uint64_t master_seed, std::uint64_t slot, Eigen::Index dim) {
    RandomStream stream(stream_seed(master_seed, slot, 0));
    Latent x = stream.normal_vector(dim);
    return {std::move(x), std::move(stream)};
}

Latent generate_latent(std::uint64_t master_seed, std::uint64_t slot, Denoiser& denoiser,
                       double eta) {
    auto start = initial_noise(master_seed, slot, denoiser.prior().dim());
    return denoise_from(std::move(start.x), denoiser.schedule().num_steps() - 1, denoiser, eta,
                        &start.stream);
}

}  // namespace its
