#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "asr/harness.hpp"

namespace asr {

struct PlotSeries {
  std::string label;
  std::vector<RunRow> rows;
};

/// Static SVG with three stacked panels (windowed accuracy, smoothed label
/// flip, weight norm). Each series contributes one <polyline> per panel, and
/// each triggered step one full-height <line class="trigger">.
/// Throws FormatError when no series is given or a series has no rows.
std::string render_svg(const std::vector<PlotSeries>& series, std::size_t accuracy_window);

}  // namespace asr
