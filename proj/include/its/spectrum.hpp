#pragma once

#include <span>

#include <Eigen/Core>

namespace its {

/// One-sided DFT magnitude |X[0..n/2]| of a real signal.
/// Safe to call concurrently.
Eigen::VectorXd magnitude_spectrum(std::span<const double> signal);

inline Eigen::VectorXd magnitude_spectrum(const Eigen::VectorXd& signal) {
    return magnitude_spectrum(std::span<const double>(signal.data(), signal.size()));
}

inline Eigen::Index spectrum_length(Eigen::Index num_samples) { return num_samples / 2 + 1; }

}  // namespace its
