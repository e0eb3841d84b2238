#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace its {

/// Mono IEEE-float (format 3) RIFF/WAVE file, little-endian.
void write_wav_float32(const std::filesystem::path& path, std::span<const double> samples,
                       int sample_rate);

struct WavData {
    int sample_rate = 0;
    std::vector<float> samples;
};

/// Reads files produced by write_wav_float32.
WavData read_wav_float32(const std::filesystem::path& path);

}  // namespace its
