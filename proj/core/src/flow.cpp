#include "octc/flow.hpp"

#include <cmath>
#include <stdexcept>

namespace octc {

int64_t OcclusionMask::count(uint8_t value) const {
    int64_t n = 0;
    for (uint8_t v : data) n += (v == value);
    return n;
}

int64_t IdentifierMask::count_on() const {
    int64_t n = 0;
    for (uint8_t v : data) n += (v != 0);
    return n;
}

const char* transform_kind_name(TransformKind kind) {
    switch (kind) {
        case TransformKind::identity: return "identity";
        case TransformKind::hflip: return "hflip";
        case TransformKind::vflip: return "vflip";
        case TransformKind::rot90cw: return "rot90cw";
        case TransformKind::rot180: return "rot180";
        case TransformKind::rot270cw: return "rot270cw";
    }
    return "?";
}

GeoTransform::GeoTransform(TransformKind kind, int src_width, int src_height)
    : kind_(kind), w_(src_width), h_(src_height) {
    if (src_width <= 0 || src_height <= 0)
        throw std::invalid_argument("GeoTransform on empty extent");
}

int GeoTransform::dst_width() const {
    return (kind_ == TransformKind::rot90cw || kind_ == TransformKind::rot270cw) ? h_ : w_;
}

int GeoTransform::dst_height() const {
    return (kind_ == TransformKind::rot90cw || kind_ == TransformKind::rot270cw) ? w_ : h_;
}

std::pair<int, int> GeoTransform::map_pixel(int x, int y) const {
    switch (kind_) {
        case TransformKind::identity: return {x, y};
        case TransformKind::hflip: return {w_ - 1 - x, y};
        case TransformKind::vflip: return {x, h_ - 1 - y};
        case TransformKind::rot90cw: return {h_ - 1 - y, x};
        case TransformKind::rot180: return {w_ - 1 - x, h_ - 1 - y};
        case TransformKind::rot270cw: return {y, w_ - 1 - x};
    }
    return {x, y};
}

std::array<int, 4> GeoTransform::jacobian() const {
    // Linear part of the pixel map in image coordinates (y down).
    switch (kind_) {
        case TransformKind::identity: return {1, 0, 0, 1};
        case TransformKind::hflip: return {-1, 0, 0, 1};
        case TransformKind::vflip: return {1, 0, 0, -1};
        case TransformKind::rot90cw: return {0, -1, 1, 0};   // (u,v) -> (-v, u)
        case TransformKind::rot180: return {-1, 0, 0, -1};
        case TransformKind::rot270cw: return {0, 1, -1, 0};  // (u,v) -> (v, -u)
    }
    return {1, 0, 0, 1};
}

GeoTransform GeoTransform::inverse() const {
    TransformKind inv = kind_;
    if (kind_ == TransformKind::rot90cw) inv = TransformKind::rot270cw;
    if (kind_ == TransformKind::rot270cw) inv = TransformKind::rot90cw;
    return GeoTransform(inv, dst_width(), dst_height());
}

Image GeoTransform::apply(const Image& img) const {
    if (img.width != w_ || img.height != h_)
        throw std::invalid_argument("transform extent mismatch");
    Image out(dst_width(), dst_height(), img.channels);
    for (int y = 0; y < h_; ++y)
        for (int x = 0; x < w_; ++x) {
            auto [xd, yd] = map_pixel(x, y);
            for (int c = 0; c < img.channels; ++c) out.at(c, xd, yd) = img.at(c, x, y);
        }
    return out;
}

FlowField GeoTransform::apply(const FlowField& f) const {
    if (f.width != w_ || f.height != h_)
        throw std::invalid_argument("transform extent mismatch");
    FlowField out(dst_width(), dst_height());
    auto j = jacobian();
    for (int y = 0; y < h_; ++y)
        for (int x = 0; x < w_; ++x) {
            auto [xd, yd] = map_pixel(x, y);
            float u = f.u(x, y), v = f.v(x, y);
            out.u(xd, yd) = static_cast<float>(j[0]) * u + static_cast<float>(j[1]) * v;
            out.v(xd, yd) = static_cast<float>(j[2]) * u + static_cast<float>(j[3]) * v;
        }
    return out;
}

OcclusionMask GeoTransform::apply(const OcclusionMask& m) const {
    if (m.width != w_ || m.height != h_)
        throw std::invalid_argument("transform extent mismatch");
    OcclusionMask out(dst_width(), dst_height());
    for (int y = 0; y < h_; ++y)
        for (int x = 0; x < w_; ++x) {
            auto [xd, yd] = map_pixel(x, y);
            out.at(xd, yd) = m.at(x, y);
        }
    return out;
}

Tensor GeoTransform::apply_flow_tensor(const Tensor& flow) const {
    const Shape& s = flow.shape();
    if (s.size() != 4 || s[1] != 2 || s[3] != w_ || s[2] != h_)
        throw std::invalid_argument("apply_flow_tensor expects [N,2," + std::to_string(h_) + "," +
                                    std::to_string(w_) + "], got " + shape_str(s));
    int n = s[0];
    int wd = dst_width(), hd = dst_height();
    int hw_src = w_ * h_, hw_dst = wd * hd;
    auto j = jacobian();

    // Destination index and sign per (source pixel, component): the op is a
    // signed permutation, so backward is the transposed scatter.
    std::vector<int> dst_u(hw_src), dst_v(hw_src);
    for (int y = 0; y < h_; ++y)
        for (int x = 0; x < w_; ++x) {
            auto [xd, yd] = map_pixel(x, y);
            dst_u[y * w_ + x] = yd * wd + xd;
            dst_v[y * w_ + x] = yd * wd + xd;
        }

    const auto& d = flow.data();
    std::vector<float> out(static_cast<size_t>(n) * 2 * hw_dst);
    for (int in = 0; in < n; ++in) {
        const float* su = d.data() + (static_cast<int64_t>(in) * 2 + 0) * hw_src;
        const float* sv = d.data() + (static_cast<int64_t>(in) * 2 + 1) * hw_src;
        float* ou = out.data() + (static_cast<int64_t>(in) * 2 + 0) * hw_dst;
        float* ov = out.data() + (static_cast<int64_t>(in) * 2 + 1) * hw_dst;
        for (int i = 0; i < hw_src; ++i) {
            float u = su[i], v = sv[i];
            ou[dst_u[i]] = static_cast<float>(j[0]) * u + static_cast<float>(j[1]) * v;
            ov[dst_v[i]] = static_cast<float>(j[2]) * u + static_cast<float>(j[3]) * v;
        }
    }

    return Tensor::custom(
        {n, 2, hd, wd}, std::move(out), {flow},
        [n, hw_src, hw_dst, dst_u = std::move(dst_u), j](
            const std::vector<float>& og, const std::vector<std::span<float>>& pg) {
            if (pg[0].empty()) return;
            for (int in = 0; in < n; ++in) {
                const float* gu = og.data() + (static_cast<int64_t>(in) * 2 + 0) * hw_dst;
                const float* gv = og.data() + (static_cast<int64_t>(in) * 2 + 1) * hw_dst;
                float* pu = pg[0].data() + (static_cast<int64_t>(in) * 2 + 0) * hw_src;
                float* pv = pg[0].data() + (static_cast<int64_t>(in) * 2 + 1) * hw_src;
                for (int i = 0; i < hw_src; ++i) {
                    int di = dst_u[i];
                    pu[i] += static_cast<float>(j[0]) * gu[di] + static_cast<float>(j[2]) * gv[di];
                    pv[i] += static_cast<float>(j[1]) * gu[di] + static_cast<float>(j[3]) * gv[di];
                }
            }
        });
}

Image transform_image(const Image& img, const GeoTransform& t) { return t.apply(img); }
FlowField transform_flow(const FlowField& f, const GeoTransform& t) { return t.apply(f); }

FlowField restore_flow(const FlowField& f, const GeoTransform& t) {
    return t.inverse().apply(f);
}

Tensor restore_flow_tensor(const Tensor& flow, const GeoTransform& t) {
    return t.inverse().apply_flow_tensor(flow);
}

namespace {

void check_metric_inputs(const FlowField& pred, const FlowField& gt, const OcclusionMask* valid) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw std::invalid_argument("flow extent mismatch in metric");
    if (valid && (valid->width != gt.width || valid->height != gt.height))
        throw std::invalid_argument("valid mask extent mismatch in metric");
}

}  // namespace

double epe(const FlowField& pred, const FlowField& gt, const OcclusionMask* valid) {
    check_metric_inputs(pred, gt, valid);
    double acc = 0.0;
    int64_t n = 0;
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x) {
            if (valid && !valid->at(x, y)) continue;
            double du = static_cast<double>(pred.u(x, y)) - gt.u(x, y);
            double dv = static_cast<double>(pred.v(x, y)) - gt.v(x, y);
            acc += std::sqrt(du * du + dv * dv);
            ++n;
        }
    if (n == 0) throw std::invalid_argument("epe over an empty valid set");
    return acc / static_cast<double>(n);
}

double fl_outlier_rate(const FlowField& pred, const FlowField& gt, const OcclusionMask* valid) {
    check_metric_inputs(pred, gt, valid);
    int64_t outliers = 0, n = 0;
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x) {
            if (valid && !valid->at(x, y)) continue;
            double du = static_cast<double>(pred.u(x, y)) - gt.u(x, y);
            double dv = static_cast<double>(pred.v(x, y)) - gt.v(x, y);
            double err = std::sqrt(du * du + dv * dv);
            double mag = std::sqrt(static_cast<double>(gt.u(x, y)) * gt.u(x, y) +
                                   static_cast<double>(gt.v(x, y)) * gt.v(x, y));
            if (err > 3.0 && err > 0.05 * mag) ++outliers;
            ++n;
        }
    if (n == 0) throw std::invalid_argument("fl_outlier_rate over an empty valid set");
    return static_cast<double>(outliers) / static_cast<double>(n);
}

FlowField flow_from_tensor(const Tensor& t) {
    const Shape& s = t.shape();
    if (s.size() != 4 || s[0] != 1 || s[1] != 2)
        throw std::invalid_argument("flow tensor must be [1,2,H,W], got " + shape_str(s));
    int h = s[2], w = s[3], hw = h * w;
    FlowField f(w, h);
    const auto& d = t.data();
    for (int i = 0; i < hw; ++i) {
        f.data[2 * i] = d[i];
        f.data[2 * i + 1] = d[hw + i];
    }
    return f;
}

Tensor flow_to_tensor(const FlowField& f, bool requires_grad) {
    int hw = f.width * f.height;
    std::vector<float> d(static_cast<size_t>(2) * hw);
    for (int i = 0; i < hw; ++i) {
        d[i] = f.data[2 * i];
        d[hw + i] = f.data[2 * i + 1];
    }
    return Tensor::from_data({1, 2, f.height, f.width}, std::move(d), requires_grad);
}

Tensor image_to_tensor(const Image& img, bool requires_grad) {
    return Tensor::from_data({1, img.channels, img.height, img.width}, img.data, requires_grad);
}

}  // namespace octc
