#pragma once

#include <string>
#include <vector>

#include "sspix/tensor.hpp"

namespace sspix {

/// Minimal PNG line chart: white canvas, black axes with numeric tick
/// labels, one polyline. Good enough for metric-vs-count curves.
void render_line_chart(const std::string& path, const std::vector<real>& xs,
                       const std::vector<real>& ys);

}  // namespace sspix
