#include "octc/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "octc/rng.hpp"

namespace octc {

void ModelConfig::validate() const {
    if (in_channels < 1 || feature_channels < 1 || hidden_channels < 1)
        throw std::invalid_argument("model channel counts must be positive");
    if (downsample < 1) throw std::invalid_argument("downsample must be >= 1");
    if (radius < 1) throw std::invalid_argument("correlation radius must be >= 1");
    if (iterations < 1) throw std::invalid_argument("iteration count must be >= 1");
}

std::string ModelConfig::canonical() const {
    std::ostringstream os;
    os << "downsample=" << downsample << "\n"
       << "feature_channels=" << feature_channels << "\n"
       << "hidden_channels=" << hidden_channels << "\n"
       << "in_channels=" << in_channels << "\n"
       << "iterations=" << iterations << "\n"
       << "radius=" << radius << "\n"
       << "seed=" << seed << "\n";
    return os.str();
}

uint64_t ModelConfig::hash() const {
    std::string c = canonical();
    return fnv1a64(c.data(), c.size());
}

Tensor ModelOutput::occ_prob(size_t i) const {
    // Clamped so float32 sigmoid stays strictly inside (0,1).
    return sigmoid(clamp(occ_logits.at(i), -13.0f, 13.0f));
}

namespace {

constexpr const char* kParamOrder[] = {
    "fenc1.w", "fenc1.b", "fenc2.w", "fenc2.b",
    "cenc1.w", "cenc1.b", "cenc2.w", "cenc2.b",
    "gru.zw", "gru.zb", "gru.hw", "gru.hb",
    "head.flow.w", "head.flow.b", "head.occ.w", "head.occ.b",
};

}  // namespace

void FlowModel::add_param(const std::string& name, Shape shape, Rng& rng, bool zero_init) {
    int64_t n = shape_numel(shape);
    std::vector<float> data(static_cast<size_t>(n), 0.0f);
    if (!zero_init) {
        // fan_in = product of non-output extents (in_channels * k * k for OIKK)
        double fan_in = 1.0;
        for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
        double a = std::sqrt(1.0 / fan_in);
        for (auto& v : data) v = static_cast<float>(rng.uniform(-a, a));
    }
    names_.push_back(name);
    params_.push_back(Tensor::from_data(std::move(shape), std::move(data), true));
}

FlowModel::FlowModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.seed ^ 0x6d6f64656cull);
    int f = cfg_.feature_channels;
    int hid = cfg_.hidden_channels;
    int ctx = hid + f;
    int win = (2 * cfg_.radius + 1) * (2 * cfg_.radius + 1);
    int gru_in = hid + win + 2 + f;

    for (const char* name : kParamOrder) {
        std::string n(name);
        if (n == "fenc1.w") add_param(n, {f, cfg_.in_channels, 3, 3}, rng, false);
        else if (n == "fenc1.b") add_param(n, {f, 1, 1}, rng, true);
        else if (n == "fenc2.w") add_param(n, {f, f, 3, 3}, rng, false);
        else if (n == "fenc2.b") add_param(n, {f, 1, 1}, rng, true);
        else if (n == "cenc1.w") add_param(n, {ctx, cfg_.in_channels, 3, 3}, rng, false);
        else if (n == "cenc1.b") add_param(n, {ctx, 1, 1}, rng, true);
        else if (n == "cenc2.w") add_param(n, {ctx, ctx, 3, 3}, rng, false);
        else if (n == "cenc2.b") add_param(n, {ctx, 1, 1}, rng, true);
        else if (n == "gru.zw") add_param(n, {hid, gru_in, 3, 3}, rng, false);
        else if (n == "gru.zb") add_param(n, {hid, 1, 1}, rng, true);
        else if (n == "gru.hw") add_param(n, {hid, gru_in, 3, 3}, rng, false);
        else if (n == "gru.hb") add_param(n, {hid, 1, 1}, rng, true);
        else if (n == "head.flow.w") add_param(n, {2, hid + win + 2, 3, 3}, rng, false);
        else if (n == "head.flow.b") add_param(n, {2, 1, 1}, rng, true);
        else if (n == "head.occ.w") add_param(n, {1, win, 3, 3}, rng, false);
        else if (n == "head.occ.b") add_param(n, {1, 1, 1}, rng, true);
    }
}

Tensor FlowModel::param(const char* name) const {
    for (size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return params_[i];
    throw std::logic_error(std::string("unknown parameter ") + name);
}

Tensor FlowModel::parameter(const std::string& name) const { return param(name.c_str()); }

void FlowModel::set_parameters(const std::vector<Tensor>& params) {
    if (params.size() != params_.size())
        throw std::invalid_argument("set_parameters count mismatch");
    for (size_t i = 0; i < params.size(); ++i)
        if (params[i].shape() != params_[i].shape())
            throw std::invalid_argument("set_parameters shape mismatch at " + names_[i]);
    params_ = params;
}

int64_t FlowModel::parameter_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.numel();
    return n;
}

void FlowModel::zero_grad() const {
    for (const auto& p : params_) p.zero_grad();
}

Tensor FlowModel::encode(const Tensor& img) const {
    const Shape& s = img.shape();
    if (s.size() != 4) throw std::invalid_argument("encode expects [N,C,H,W]");
    if (s[2] % cfg_.downsample != 0 || s[3] % cfg_.downsample != 0)
        throw std::invalid_argument("image extent " + shape_str(s) +
                                    " not divisible by downsample factor " +
                                    std::to_string(cfg_.downsample));
    Tensor x = conv2d(img, param("fenc1.w"), cfg_.downsample, 1) + param("fenc1.b");
    x = tanh(x);
    x = conv2d(x, param("fenc2.w"), 1, 1) + param("fenc2.b");
    return tanh(x);
}

Tensor FlowModel::context(const Tensor& img) const {
    Tensor x = conv2d(img, param("cenc1.w"), cfg_.downsample, 1) + param("cenc1.b");
    x = tanh(x);
    x = conv2d(x, param("cenc2.w"), 1, 1) + param("cenc2.b");
    return x;
}

Tensor FlowModel::correlation_lookup(const Tensor& feat1, const Tensor& feat2,
                                     const Tensor& flow) const {
    const Shape& s = feat1.shape();
    if (feat2.shape() != s)
        throw std::invalid_argument("correlation feature shape mismatch");
    int n = s[0], h = s[2], w = s[3];
    int64_t hw = static_cast<int64_t>(h) * w;

    std::vector<float> base(static_cast<size_t>(n) * 2 * hw);
    for (int in = 0; in < n; ++in)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                base[(static_cast<int64_t>(in) * 2 + 0) * hw + y * w + x] = static_cast<float>(x);
                base[(static_cast<int64_t>(in) * 2 + 1) * hw + y * w + x] = static_cast<float>(y);
            }
    Tensor grid = Tensor::from_data({n, 2, h, w}, std::move(base));
    Tensor centers = grid + flow;

    float norm = 1.0f / std::sqrt(static_cast<float>(s[1]));
    std::vector<Tensor> slices;
    slices.reserve((2 * cfg_.radius + 1) * (2 * cfg_.radius + 1));
    for (int dy = -cfg_.radius; dy <= cfg_.radius; ++dy)
        for (int dx = -cfg_.radius; dx <= cfg_.radius; ++dx) {
            Tensor offset = Tensor::from_data(
                {2, 1, 1}, {static_cast<float>(dx), static_cast<float>(dy)});
            Tensor sampled = bilinear_sample(feat2, centers + offset);
            slices.push_back(channel_dot(feat1, sampled) * norm);
        }
    return concat_channels(slices);
}

ModelOutput FlowModel::forward(const Tensor& a, const Tensor& b) const {
    if (a.shape() != b.shape())
        throw std::invalid_argument("forward extent mismatch: " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    Tensor fa = encode(a);
    Tensor fb = encode(b);
    Tensor ctx = context(a);
    int hid = cfg_.hidden_channels;
    Tensor h = tanh(slice_channels(ctx, 0, hid));
    Tensor inp = tanh(slice_channels(ctx, hid, hid + cfg_.feature_channels));

    const Shape& fs = fa.shape();
    Tensor flow = Tensor::zeros({fs[0], 2, fs[2], fs[3]});

    ModelOutput out;
    out.flows.reserve(cfg_.iterations);
    out.occ_logits.reserve(cfg_.iterations);
    for (int i = 0; i < cfg_.iterations; ++i) {
        Tensor corr = correlation_lookup(fa, fb, flow);
        Tensor hx = concat_channels({h, corr, flow, inp});
        Tensor z = sigmoid(conv2d(hx, param("gru.zw"), 1, 1) + param("gru.zb"));
        Tensor cand = tanh(conv2d(hx, param("gru.hw"), 1, 1) + param("gru.hb"));
        h = (1.0f - z) * h + z * cand;

        // The increment head reads the cost slice and current flow next to
        // the state.
        Tensor dflow = conv2d(concat_channels({h, corr, flow}), param("head.flow.w"), 1, 1) +
                       param("head.flow.b");
        flow = flow + dflow;
        // The occlusion head reads the cost slice directly: occluded pixels
        // show a flat correlation signature there, and keeping the head off
        // the recurrent state stops mask gradients from perturbing the flow
        // path through the update convs.
        Tensor occ = conv2d(corr, param("head.occ.w"), 1, 1) + param("head.occ.b");

        out.flows.push_back(upsample2d(flow, cfg_.downsample,
                                       static_cast<float>(cfg_.downsample)));
        out.occ_logits.push_back(upsample2d(occ, cfg_.downsample, 1.0f));
    }
    return out;
}

ModelOutput FlowModel::forward(const Image& a, const Image& b) const {
    if (!a.same_extent(b)) throw std::invalid_argument("forward image extent mismatch");
    if (a.channels != cfg_.in_channels)
        throw std::invalid_argument("image channel count " + std::to_string(a.channels) +
                                    " does not match model in_channels");
    return forward(image_to_tensor(a), image_to_tensor(b));
}

}  // namespace octc
