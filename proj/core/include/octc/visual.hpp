#pragma once

#include <string>

#include "octc/flow.hpp"
#include "octc/image.hpp"

namespace octc {

/// Color-wheel rendering: hue = atan2(v, u), saturation proportional to
/// magnitude normalized by the field's 99th-percentile magnitude (clamped to
/// 1), value 1. Zero flow renders white.
Image flow_to_color(const FlowField& flow);

/// The normalization used by flow_to_color.
double flow_p99_magnitude(const FlowField& flow);

/// Grayscale rendering of per-pixel values in [0,1] (e.g. a predicted
/// visibility mask).
Image gray_image(int width, int height, const std::vector<float>& values);

/// 8-bit RGB PNG writer (zlib-compressed). Visualization output only.
void write_png(const std::string& path, const Image& img);

}  // namespace octc
