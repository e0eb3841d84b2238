#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace its {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed for the stream owned by (master seed, candidate slot, generation).
/// Generation 0 is the initial noise draw; generation g > 0 belongs to the
/// g-th evolution step.
constexpr std::uint64_t stream_seed(std::uint64_t master, std::uint64_t slot,
                                    std::uint64_t generation) noexcept {
    return mix64(mix64(mix64(master) ^ slot) ^ (generation * 0xd1b54a32d192ed03ULL));
}

class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    Eigen::VectorXd normal_vector(Eigen::Index dim) {
        Eigen::VectorXd v(dim);
        for (Eigen::Index i = 0; i < dim; ++i) {
            v[i] = normal();
        }
        return v;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace its
