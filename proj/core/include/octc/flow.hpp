#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "octc/image.hpp"
#include "octc/tensor.hpp"

namespace octc {

/// Dense per-pixel displacement field. u points right (+x), v points down (+y),
/// both in pixels. Storage is interleaved (u,v) row-major, matching the .flo
/// on-disk layout.
struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<float> data;  // 2*w*h, interleaved (u,v)

    FlowField() = default;
    FlowField(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 2, 0.0f) {}

    float& u(int x, int y) { return data[2 * (static_cast<size_t>(y) * width + x)]; }
    float& v(int x, int y) { return data[2 * (static_cast<size_t>(y) * width + x) + 1]; }
    float u(int x, int y) const { return data[2 * (static_cast<size_t>(y) * width + x)]; }
    float v(int x, int y) const { return data[2 * (static_cast<size_t>(y) * width + x) + 1]; }
};

/// Per-pixel visibility. 1 = visible, 0 = occluded. The ground-truth variant
/// is binary; predicted masks live in (0,1) and are kept as tensors.
struct OcclusionMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;

    OcclusionMask() = default;
    OcclusionMask(int w, int h, uint8_t fill = 1)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    uint8_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    int64_t count(uint8_t value) const;
};

/// Per-pixel gate for the consistency loss: 1 = pixel participates.
struct IdentifierMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;

    IdentifierMask() = default;
    IdentifierMask(int w, int h, uint8_t fill = 0)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    int64_t count_on() const;
};

enum class TransformKind : int {
    identity = 0,
    hflip = 1,
    vflip = 2,
    rot90cw = 3,
    rot180 = 4,
    rot270cw = 5,
};

const char* transform_kind_name(TransformKind kind);

/// Exact, bijective whole-image transform: a pixel-lattice permutation plus a
/// signed 2x2 permutation acting on displacement vectors. Quarter turns swap
/// the output extent.
class GeoTransform {
public:
    GeoTransform(TransformKind kind, int src_width, int src_height);

    TransformKind kind() const { return kind_; }
    int src_width() const { return w_; }
    int src_height() const { return h_; }
    int dst_width() const;
    int dst_height() const;

    /// Destination of source pixel (x, y).
    std::pair<int, int> map_pixel(int x, int y) const;

    /// Signed permutation applied to displacement vectors, row-major
    /// {a, b, c, d} meaning (u,v) -> (a*u + b*v, c*u + d*v).
    std::array<int, 4> jacobian() const;

    /// Transform taking the output lattice back to the source lattice.
    GeoTransform inverse() const;

    Image apply(const Image& img) const;
    FlowField apply(const FlowField& f) const;
    OcclusionMask apply(const OcclusionMask& m) const;

    /// Differentiable version of apply(FlowField) for [N,2,H,W] tensors.
    Tensor apply_flow_tensor(const Tensor& flow) const;

private:
    TransformKind kind_;
    int w_, h_;
};

Image transform_image(const Image& img, const GeoTransform& t);
FlowField transform_flow(const FlowField& f, const GeoTransform& t);

/// Undo a transform on a flow estimated in the transformed frame:
/// restore_flow(transform_flow(f, t), t) == f bitwise.
FlowField restore_flow(const FlowField& f, const GeoTransform& t);
Tensor restore_flow_tensor(const Tensor& flow, const GeoTransform& t);

/// Mean endpoint error over valid pixels. Throws if the valid set is empty
/// or extents differ.
double epe(const FlowField& pred, const FlowField& gt,
           const OcclusionMask* valid = nullptr);

/// KITTI outlier fraction: endpoint error > 3 px and > 5% of the ground-truth
/// magnitude. Throws if the valid set is empty or extents differ.
double fl_outlier_rate(const FlowField& pred, const FlowField& gt,
                       const OcclusionMask* valid = nullptr);

FlowField flow_from_tensor(const Tensor& t);
Tensor flow_to_tensor(const FlowField& f, bool requires_grad = false);
Tensor image_to_tensor(const Image& img, bool requires_grad = false);

}  // namespace octc
