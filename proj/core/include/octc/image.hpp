#pragma once

#include <stdexcept>
#include <vector>

namespace octc {

/// Dense image, planar channel layout (CHW), values in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;  // data[c*h*w + y*w + x]

    Image() = default;
    Image(int w, int h, int c, float fill = 0.0f)
        : width(w), height(h), channels(c),
          data(static_cast<size_t>(w) * h * c, fill) {
        if (w <= 0 || h <= 0 || c <= 0) throw std::invalid_argument("bad image extents");
    }

    float& at(int c, int x, int y) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    float at(int c, int x, int y) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }

    bool same_extent(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

}  // namespace octc
