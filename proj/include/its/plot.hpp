#pragma once

#include <filesystem>
#include <string>

#include "its/harness.hpp"

namespace its {

enum class PlotKind { nfe_curve, alpha_curve, boxes };

/// Line plot of `reward`'s raw mean against NFE (nfe_curve) or alpha
/// (alpha_curve), one series per strategy/scheme, with a +-1 std band over
/// seeds. Writes standalone SVG 1.1.
void emit_svg_plot(const MetricTable& table, PlotKind kind, const std::string& reward,
                   const std::filesystem::path& path);

/// Box plots of the raw and normalised distributions side by side.
void emit_svg_plot(const DistributionReport& report, const std::filesystem::path& path);

}  // namespace its
