#include "octc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "octc/rng.hpp"

namespace octc {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<float> data;
    bool requires_grad = false;
    std::vector<float> grad;
    bool has_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(const std::vector<float>&, const std::vector<std::span<float>>&)> backward_fn;

    void ensure_grad() {
        if (!has_grad) {
            grad.assign(data.size(), 0.0f);
            has_grad = true;
        }
    }
};

}  // namespace detail

using detail::TensorNode;

namespace {

std::shared_ptr<TensorNode> make_leaf(Shape shape, std::vector<float> data, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw std::invalid_argument("tensor data size " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    for (int d : shape)
        if (d <= 0) throw std::invalid_argument("non-positive extent in shape " + shape_str(shape));
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return node;
}

}  // namespace

Tensor::Tensor() = default;

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    size_t n = static_cast<size_t>(shape_numel(shape));
    return Tensor(make_leaf(std::move(shape), std::vector<float>(n, 0.0f), requires_grad));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    size_t n = static_cast<size_t>(shape_numel(shape));
    return Tensor(make_leaf(std::move(shape), std::vector<float>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
    return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::custom(Shape shape, std::vector<float> data, std::vector<Tensor> parents,
                      std::function<void(const std::vector<float>&,
                                         const std::vector<std::span<float>>&)>
                          backward) {
    auto node = make_leaf(std::move(shape), std::move(data), false);
    bool any_grad = false;
    for (const auto& p : parents) {
        if (!p.defined()) throw std::invalid_argument("undefined parent tensor");
        any_grad = any_grad || p.requires_grad();
    }
    if (any_grad) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (const auto& p : parents) node->parents.push_back(p.node_);
        node->backward_fn = std::move(backward);
    }
    return Tensor(std::move(node));
}

const Shape& Tensor::shape() const { return node_->shape; }
int64_t Tensor::numel() const { return shape_numel(node_->shape); }
const std::vector<float>& Tensor::data() const { return node_->data; }
bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::has_grad() const { return node_ && node_->has_grad; }

const std::vector<float>& Tensor::grad() const {
    if (!node_->has_grad) throw std::logic_error("tensor has no gradient (backward not run?)");
    return node_->grad;
}

float Tensor::item() const {
    if (numel() != 1) throw std::logic_error("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

void Tensor::zero_grad() const {
    node_->grad.clear();
    node_->has_grad = false;
}

void Tensor::set_data(std::vector<float> data) const {
    if (data.size() != node_->data.size())
        throw std::invalid_argument("set_data size mismatch");
    node_->data = std::move(data);
}

Tensor Tensor::detach() const {
    return from_data(node_->shape, node_->data, false);
}

void Tensor::backward() const {
    if (numel() != 1)
        throw std::logic_error("backward requires a scalar, got shape " + shape_str(shape()));
    if (!node_->requires_grad) return;

    // Iterative post-order DFS; reverse gives a topological order.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            TensorNode* p = n->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (TensorNode* n : order) n->ensure_grad();
    node_->grad[0] = 1.0f;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (!n->backward_fn) continue;
        std::vector<std::span<float>> parent_grads;
        parent_grads.reserve(n->parents.size());
        for (auto& p : n->parents) {
            if (p->requires_grad)
                parent_grads.emplace_back(p->grad.data(), p->grad.size());
            else
                parent_grads.emplace_back();
        }
        n->backward_fn(n->grad, parent_grads);
    }
}

// ---------------------------------------------------------------------------
// Broadcasting (trailing-dimension alignment, numpy style)

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b) {
    size_t nd = std::max(a.size(), b.size());
    Shape out(nd);
    for (size_t i = 0; i < nd; ++i) {
        int da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
        int db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
        if (da != db && da != 1 && db != 1)
            throw std::invalid_argument("shapes not broadcastable: " + shape_str(a) + " vs " +
                                        shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// Row-major strides with 0 for broadcast dimensions, aligned to out rank.
std::vector<int64_t> broadcast_strides(const Shape& shape, size_t out_rank) {
    std::vector<int64_t> strides(out_rank, 0);
    int64_t s = 1;
    for (size_t i = 0; i < shape.size(); ++i) {
        size_t rev = shape.size() - 1 - i;
        size_t out_rev = out_rank - 1 - i;
        strides[out_rev] = (shape[rev] == 1) ? 0 : s;
        s *= shape[rev];
    }
    return strides;
}

struct BinaryRule {
    float (*fwd)(float, float);
    // d/da and d/db given inputs and output.
    float (*da)(float, float, float);
    float (*db)(float, float, float);
};

BinaryRule binary_rule(OpKind kind) {
    switch (kind) {
        case OpKind::add:
            return {[](float a, float b) { return a + b; },
                    [](float, float, float) { return 1.0f; },
                    [](float, float, float) { return 1.0f; }};
        case OpKind::sub:
            return {[](float a, float b) { return a - b; },
                    [](float, float, float) { return 1.0f; },
                    [](float, float, float) { return -1.0f; }};
        case OpKind::mul:
            return {[](float a, float b) { return a * b; },
                    [](float, float b, float) { return b; },
                    [](float a, float, float) { return a; }};
        case OpKind::div:
            return {[](float a, float b) { return a / b; },
                    [](float, float b, float) { return 1.0f / b; },
                    [](float a, float b, float) { return -a / (b * b); }};
        default:
            throw std::invalid_argument(std::string("op kind ") + op_kind_name(kind) +
                                        " is not binary");
    }
}

struct UnaryRule {
    float (*fwd)(float);
    float (*grad)(float x, float y);  // x input, y output
};

UnaryRule unary_rule(OpKind kind) {
    switch (kind) {
        case OpKind::abs:
            return {[](float x) { return std::fabs(x); },
                    [](float x, float) { return x > 0.0f ? 1.0f : (x < 0.0f ? -1.0f : 0.0f); }};
        case OpKind::log:
            return {[](float x) { return std::log(x); }, [](float x, float) { return 1.0f / x; }};
        case OpKind::exp:
            return {[](float x) { return std::exp(x); }, [](float, float y) { return y; }};
        case OpKind::sigmoid:
            return {[](float x) { return 1.0f / (1.0f + std::exp(-x)); },
                    [](float, float y) { return y * (1.0f - y); }};
        case OpKind::relu:
            return {[](float x) { return x > 0.0f ? x : 0.0f; },
                    [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; }};
        case OpKind::square:
            return {[](float x) { return x * x; }, [](float x, float) { return 2.0f * x; }};
        default:
            throw std::invalid_argument(std::string("op kind ") + op_kind_name(kind) +
                                        " is not unary");
    }
}

}  // namespace

bool op_kind_is_binary(OpKind kind) {
    switch (kind) {
        case OpKind::add:
        case OpKind::sub:
        case OpKind::mul:
        case OpKind::div:
            return true;
        default:
            return false;
    }
}

const char* op_kind_name(OpKind kind) {
    switch (kind) {
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::div: return "div";
        case OpKind::abs: return "abs";
        case OpKind::log: return "log";
        case OpKind::exp: return "exp";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::relu: return "relu";
        case OpKind::square: return "square";
    }
    return "?";
}

Tensor elementwise(OpKind kind, const Tensor& a, const Tensor& b) {
    BinaryRule rule = binary_rule(kind);
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();

    if (sa == sb) {  // fast path, no index arithmetic
        const auto& da = a.data();
        const auto& db = b.data();
        std::vector<float> out(da.size());
        for (size_t i = 0; i < da.size(); ++i) out[i] = rule.fwd(da[i], db[i]);
        return Tensor::custom(
            sa, std::move(out), {a, b},
            [a, b, rule](const std::vector<float>& og, const std::vector<std::span<float>>& pg) {
                const auto& da = a.data();
                const auto& db = b.data();
                for (size_t i = 0; i < og.size(); ++i) {
                    if (!pg[0].empty()) pg[0][i] += og[i] * rule.da(da[i], db[i], 0.0f);
                    if (!pg[1].empty()) pg[1][i] += og[i] * rule.db(da[i], db[i], 0.0f);
                }
            });
    }

    Shape out_shape = broadcast_shape(sa, sb);
    size_t rank = out_shape.size();
    auto stride_a = broadcast_strides(sa, rank);
    auto stride_b = broadcast_strides(sb, rank);
    int64_t n = shape_numel(out_shape);

    std::vector<int64_t> idx_a(n), idx_b(n);
    {
        std::vector<int> counter(rank, 0);
        int64_t ia = 0, ib = 0;
        for (int64_t i = 0; i < n; ++i) {
            idx_a[i] = ia;
            idx_b[i] = ib;
            for (size_t d = rank; d-- > 0;) {
                if (++counter[d] < out_shape[d]) {
                    ia += stride_a[d];
                    ib += stride_b[d];
                    break;
                }
                counter[d] = 0;
                ia -= stride_a[d] * (out_shape[d] - 1);
                ib -= stride_b[d] * (out_shape[d] - 1);
            }
        }
    }

    const auto& da = a.data();
    const auto& db = b.data();
    std::vector<float> out(n);
    for (int64_t i = 0; i < n; ++i) out[i] = rule.fwd(da[idx_a[i]], db[idx_b[i]]);

    return Tensor::custom(
        std::move(out_shape), std::move(out), {a, b},
        [a, b, rule, idx_a = std::move(idx_a), idx_b = std::move(idx_b)](
            const std::vector<float>& og, const std::vector<std::span<float>>& pg) {
            const auto& da = a.data();
            const auto& db = b.data();
            for (size_t i = 0; i < og.size(); ++i) {
                float xa = da[idx_a[i]], xb = db[idx_b[i]];
                if (!pg[0].empty()) pg[0][idx_a[i]] += og[i] * rule.da(xa, xb, 0.0f);
                if (!pg[1].empty()) pg[1][idx_b[i]] += og[i] * rule.db(xa, xb, 0.0f);
            }
        });
}

Tensor elementwise(OpKind kind, const Tensor& a, float b) {
    BinaryRule rule = binary_rule(kind);
    const auto& da = a.data();
    std::vector<float> out(da.size());
    for (size_t i = 0; i < da.size(); ++i) out[i] = rule.fwd(da[i], b);
    return Tensor::custom(
        a.shape(), std::move(out), {a},
        [a, b, rule](const std::vector<float>& og, const std::vector<std::span<float>>& pg) {
            if (pg[0].empty()) return;
            const auto& da = a.data();
            for (size_t i = 0; i < og.size(); ++i) pg[0][i] += og[i] * rule.da(da[i], b, 0.0f);
        });
}

Tensor elementwise(OpKind kind, const Tensor& a) {
    UnaryRule rule = unary_rule(kind);
    const auto& da = a.data();
    std::vector<float> out(da.size());
    for (size_t i = 0; i < da.size(); ++i) out[i] = rule.fwd(da[i]);
    return Tensor::custom(
        a.shape(), out, {a},
        [a, rule, out](const std::vector<float>& og, const std::vector<std::span<float>>& pg) {
            if (pg[0].empty()) return;
            const auto& da = a.data();
            for (size_t i = 0; i < og.size(); ++i) pg[0][i] += og[i] * rule.grad(da[i], out[i]);
        });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(OpKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(OpKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(OpKind::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(OpKind::div, a, b); }
Tensor add(const Tensor& a, float b) { return elementwise(OpKind::add, a, b); }
Tensor sub(const Tensor& a, float b) { return elementwise(OpKind::sub, a, b); }
Tensor sub(float a, const Tensor& b) { return neg(elementwise(OpKind::sub, b, a)); }
Tensor mul(const Tensor& a, float b) { return elementwise(OpKind::mul, a, b); }
Tensor div(const Tensor& a, float b) { return elementwise(OpKind::div, a, b); }

Tensor neg(const Tensor& a) { return elementwise(OpKind::mul, a, -1.0f); }

Tensor clamp(const Tensor& a, float lo, float hi) {
    if (!(lo <= hi)) throw std::invalid_argument("clamp bounds out of order");
    const auto& da = a.data();
    std::vector<float> out(da.size());
    for (size_t i = 0; i < da.size(); ++i) out[i] = std::clamp(da[i], lo, hi);
    return Tensor::custom(
        a.shape(), std::move(out), {a},
        [a, lo, hi](const std::vector<float>& og, const std::vector<std::span<float>>& pg) {
            if (pg[0].empty()) return;
            const auto& da = a.data();
            for (size_t i = 0; i < og.size(); ++i)
                if (da[i] >= lo && da[i] <= hi) pg[0][i] += og[i];
        });
}
Tensor abs(const Tensor& a) { return elementwise(OpKind::abs, a); }
Tensor log(const Tensor& a) { return elementwise(OpKind::log, a); }
Tensor exp(const Tensor& a) { return elementwise(OpKind::exp, a); }
Tensor sigmoid(const Tensor& a) { return elementwise(OpKind::sigmoid, a); }
Tensor relu(const Tensor& a) { return elementwise(OpKind::relu, a); }
Tensor square(const Tensor& a) { return elementwise(OpKind::square, a); }

// ---------------------------------------------------------------------------
// Reductions and shape ops

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (float v : a.data()) acc += v;
    return Tensor::custom(
        {1}, {static_cast<float>(acc)}, {a},
        [](const std::vector<float>& og, const std::vector<std::span<float>>& pg) {
            if (pg[0].empty()) return;
            for (float& g : pg[0]) g += og[0];
        });
}

Tensor mean(const Tensor& a) {
    double acc = 0.0;
    for (float v : a.data()) acc += v;
    double inv = 1.0 / static_cast<double>(a.numel());
    return Tensor::custom(
        {1}, {static_cast<float>(acc * inv)}, {a},
        [inv](const std::vector<float>& og, const std::vector<std::span<float>>& pg) {
            if (pg[0].empty()) return;
            float g = og[0] * static_cast<float>(inv);
            for (float& pgv : pg[0]) pgv += g;
        });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw std::invalid_argument("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                                    " changes element count");
    return Tensor::custom(
        std::move(shape), a.data(), {a},
        [](const std::vector<float>& og, const std::vector<std::span<float>>& pg) {
            if (pg[0].empty()) return;
            for (size_t i = 0; i < og.size(); ++i) pg[0][i] += og[i];
        });
}

namespace {

void require_4d(const Tensor& t, const char* what) {
    if (t.shape().size() != 4)
        throw std::invalid_argument(std::string(what) + " must be 4D NCHW, got " +
                                    shape_str(t.shape()));
}

}  // namespace

Tensor slice_channels(const Tensor& a, int from, int to) {
    require_4d(a, "slice_channels input");
    const Shape& s = a.shape();
    if (from < 0 || to > s[1] || from >= to)
        throw std::invalid_argument("bad channel slice [" + std::to_string(from) + "," +
                                    std::to_string(to) + ") of " + shape_str(s));
    int n = s[0], c = s[1], hw = s[2] * s[3], co = to - from;
    std::vector<float> out(static_cast<size_t>(n) * co * hw);
    const auto& d = a.data();
    for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < co; ++ic)
            std::copy_n(d.begin() + (static_cast<int64_t>(in) * c + from + ic) * hw, hw,
                        out.begin() + (static_cast<int64_t>(in) * co + ic) * hw);
    return Tensor::custom(
        {n, co, s[2], s[3]}, std::move(out), {a},
        [n, c, hw, co, from](const std::vector<float>& og, const std::vector<std::span<float>>& pg) {
            if (pg[0].empty()) return;
            for (int in = 0; in < n; ++in)
                for (int ic = 0; ic < co; ++ic) {
                    const float* src = og.data() + (static_cast<int64_t>(in) * co + ic) * hw;
                    float* dst = pg[0].data() + (static_cast<int64_t>(in) * c + from + ic) * hw;
                    for (int i = 0; i < hw; ++i) dst[i] += src[i];
                }
        });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_channels of nothing");
    require_4d(parts[0], "concat_channels input");
    const Shape& s0 = parts[0].shape();
    int n = s0[0], h = s0[2], w = s0[3], hw = h * w;
    int c_total = 0;
    for (const auto& p : parts) {
        require_4d(p, "concat_channels input");
        const Shape& s = p.shape();
        if (s[0] != n || s[2] != h || s[3] != w)
            throw std::invalid_argument("concat_channels extent mismatch: " + shape_str(s0) +
                                        " vs " + shape_str(s));
        c_total += s[1];
    }
    std::vector<float> out(static_cast<size_t>(n) * c_total * hw);
    std::vector<int> offsets;
    int off = 0;
    for (const auto& p : parts) {
        int pc = p.shape()[1];
        offsets.push_back(off);
        const auto& d = p.data();
        for (int in = 0; in < n; ++in)
            std::copy_n(d.begin() + static_cast<int64_t>(in) * pc * hw, static_cast<int64_t>(pc) * hw,
                        out.begin() + (static_cast<int64_t>(in) * c_total + off) * hw);
        off += pc;
    }
    std::vector<int> part_channels;
    for (const auto& p : parts) part_channels.push_back(p.shape()[1]);
    return Tensor::custom(
        {n, c_total, h, w}, std::move(out), parts,
        [n, c_total, hw, offsets, part_channels](const std::vector<float>& og,
                                                 const std::vector<std::span<float>>& pg) {
            for (size_t pi = 0; pi < pg.size(); ++pi) {
                if (pg[pi].empty()) continue;
                int pc = part_channels[pi];
                for (int in = 0; in < n; ++in) {
                    const float* src = og.data() + (static_cast<int64_t>(in) * c_total + offsets[pi]) * hw;
                    float* dst = pg[pi].data() + static_cast<int64_t>(in) * pc * hw;
                    for (int64_t i = 0; i < static_cast<int64_t>(pc) * hw; ++i) dst[i] += src[i];
                }
            }
        });
}

Tensor channel_dot(const Tensor& a, const Tensor& b) {
    require_4d(a, "channel_dot input");
    if (a.shape() != b.shape())
        throw std::invalid_argument("channel_dot shape mismatch: " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    const Shape& s = a.shape();
    int n = s[0], c = s[1], hw = s[2] * s[3];
    std::vector<float> out(static_cast<size_t>(n) * hw);
    const auto& da = a.data();
    const auto& db = b.data();
    for (int in = 0; in < n; ++in)
        for (int i = 0; i < hw; ++i) {
            double acc = 0.0;
            for (int ic = 0; ic < c; ++ic) {
                int64_t idx = (static_cast<int64_t>(in) * c + ic) * hw + i;
                acc += static_cast<double>(da[idx]) * db[idx];
            }
            out[static_cast<int64_t>(in) * hw + i] = static_cast<float>(acc);
        }
    return Tensor::custom(
        {n, 1, s[2], s[3]}, std::move(out), {a, b},
        [a, b, n, c, hw](const std::vector<float>& og, const std::vector<std::span<float>>& pg) {
            const auto& da = a.data();
            const auto& db = b.data();
            for (int in = 0; in < n; ++in)
                for (int i = 0; i < hw; ++i) {
                    float g = og[static_cast<int64_t>(in) * hw + i];
                    for (int ic = 0; ic < c; ++ic) {
                        int64_t idx = (static_cast<int64_t>(in) * c + ic) * hw + i;
                        if (!pg[0].empty()) pg[0][idx] += g * db[idx];
                        if (!pg[1].empty()) pg[1][idx] += g * da[idx];
                    }
                }
        });
}

// ---------------------------------------------------------------------------
// conv2d

namespace {

// Valid output range for a kernel tap: o*stride - padding + kt in [0, extent).
int conv_lo(int kt, int stride, int padding) {
    int num = padding - kt;
    return num <= 0 ? 0 : (num + stride - 1) / stride;
}

int conv_hi(int kt, int extent, int out_extent, int stride, int padding) {
    int num = extent - 1 + padding - kt;
    if (num < 0) return -1;
    return std::min(num / stride, out_extent - 1);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
    require_4d(input, "conv2d input");
    require_4d(kernel, "conv2d kernel");
    const Shape& si = input.shape();
    const Shape& sk = kernel.shape();
    if (sk[1] != si[1])
        throw std::invalid_argument("conv2d channel mismatch: input " + shape_str(si) +
                                    " kernel " + shape_str(sk));
    if (sk[2] != sk[3]) throw std::invalid_argument("conv2d kernel must be square");
    if (stride < 1 || padding < 0) throw std::invalid_argument("conv2d bad stride/padding");
    int n = si[0], ci = si[1], h = si[2], w = si[3];
    int co = sk[0], k = sk[2];
    int ho = (h + 2 * padding - k) / stride + 1;
    int wo = (w + 2 * padding - k) / stride + 1;
    if (h + 2 * padding < k || w + 2 * padding < k || ho <= 0 || wo <= 0)
        throw std::invalid_argument("conv2d non-positive output extent for input " +
                                    shape_str(si) + " kernel " + shape_str(sk));

    const auto& din = input.data();
    const auto& dk = kernel.data();
    std::vector<double> acc(static_cast<size_t>(n) * co * ho * wo, 0.0);
    for (int in = 0; in < n; ++in)
        for (int oc = 0; oc < co; ++oc)
            for (int ic = 0; ic < ci; ++ic)
                for (int ky = 0; ky < k; ++ky) {
                    int oy_lo = conv_lo(ky, stride, padding), oy_hi = conv_hi(ky, h, ho, stride, padding);
                    for (int kx = 0; kx < k; ++kx) {
                        double wgt = dk[((static_cast<int64_t>(oc) * ci + ic) * k + ky) * k + kx];
                        if (wgt == 0.0) continue;
                        int ox_lo = conv_lo(kx, stride, padding), ox_hi = conv_hi(kx, w, wo, stride, padding);
                        for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                            int iy = oy * stride - padding + ky;
                            const float* src = din.data() +
                                ((static_cast<int64_t>(in) * ci + ic) * h + iy) * w - padding + kx;
                            double* dst =
                                acc.data() + ((static_cast<int64_t>(in) * co + oc) * ho + oy) * wo;
                            if (stride == 1) {
                                for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                    dst[ox] += wgt * src[ox];
                            } else {
                                for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                    dst[ox] += wgt * src[ox * stride];
                            }
                        }
                    }
                }
    std::vector<float> out(acc.size());
    for (size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i]);

    return Tensor::custom(
        {n, co, ho, wo}, std::move(out), {input, kernel},
        [input, kernel, n, ci, h, w, co, k, ho, wo, stride, padding](
            const std::vector<float>& og, const std::vector<std::span<float>>& pg) {
            const auto& din = input.data();
            const auto& dk = kernel.data();
            if (!pg[0].empty()) {
                std::vector<double> gacc(din.size(), 0.0);
                for (int in = 0; in < n; ++in)
                    for (int oc = 0; oc < co; ++oc)
                        for (int ic = 0; ic < ci; ++ic)
                            for (int ky = 0; ky < k; ++ky) {
                                int oy_lo = conv_lo(ky, stride, padding), oy_hi = conv_hi(ky, h, ho, stride, padding);
                                for (int kx = 0; kx < k; ++kx) {
                                    double wgt =
                                        dk[((static_cast<int64_t>(oc) * ci + ic) * k + ky) * k + kx];
                                    if (wgt == 0.0) continue;
                                    int ox_lo = conv_lo(kx, stride, padding), ox_hi = conv_hi(kx, w, wo, stride, padding);
                                    for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                                        int iy = oy * stride - padding + ky;
                                        const float* src = og.data() +
                                            ((static_cast<int64_t>(in) * co + oc) * ho + oy) * wo;
                                        double* dst = gacc.data() +
                                            ((static_cast<int64_t>(in) * ci + ic) * h + iy) * w -
                                            padding + kx;
                                        for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                            dst[ox * stride] += wgt * src[ox];
                                    }
                                }
                            }
                for (size_t i = 0; i < gacc.size(); ++i) pg[0][i] += static_cast<float>(gacc[i]);
            }
            if (!pg[1].empty()) {
                std::vector<double> gacc(dk.size(), 0.0);
                for (int in = 0; in < n; ++in)
                    for (int oc = 0; oc < co; ++oc)
                        for (int ic = 0; ic < ci; ++ic)
                            for (int ky = 0; ky < k; ++ky) {
                                int oy_lo = conv_lo(ky, stride, padding), oy_hi = conv_hi(ky, h, ho, stride, padding);
                                for (int kx = 0; kx < k; ++kx) {
                                    int ox_lo = conv_lo(kx, stride, padding), ox_hi = conv_hi(kx, w, wo, stride, padding);
                                    double a = 0.0;
                                    for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                                        int iy = oy * stride - padding + ky;
                                        const float* src = og.data() +
                                            ((static_cast<int64_t>(in) * co + oc) * ho + oy) * wo;
                                        const float* ip = din.data() +
                                            ((static_cast<int64_t>(in) * ci + ic) * h + iy) * w -
                                            padding + kx;
                                        if (stride == 1) {
                                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                                a += static_cast<double>(src[ox]) * ip[ox];
                                        } else {
                                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                                a += static_cast<double>(src[ox]) * ip[ox * stride];
                                        }
                                    }
                                    gacc[((static_cast<int64_t>(oc) * ci + ic) * k + ky) * k + kx] += a;
                                }
                            }
                for (size_t i = 0; i < gacc.size(); ++i) pg[1][i] += static_cast<float>(gacc[i]);
            }
        });
}

// ---------------------------------------------------------------------------
// bilinear_sample

namespace {

struct Corner {
    int x0, y0;
    float wx, wy;
    bool clamped_x, clamped_y;
};

Corner sample_cell(float x, float y, int w, int h) {
    Corner c{};
    float cx = std::clamp(x, 0.0f, static_cast<float>(w - 1));
    float cy = std::clamp(y, 0.0f, static_cast<float>(h - 1));
    c.clamped_x = cx != x;
    c.clamped_y = cy != y;
    c.x0 = std::min(static_cast<int>(std::floor(cx)), std::max(w - 2, 0));
    c.y0 = std::min(static_cast<int>(std::floor(cy)), std::max(h - 2, 0));
    c.wx = cx - static_cast<float>(c.x0);
    c.wy = cy - static_cast<float>(c.y0);
    return c;
}

}  // namespace

Tensor bilinear_sample(const Tensor& input, const Tensor& coords) {
    require_4d(input, "bilinear_sample input");
    require_4d(coords, "bilinear_sample coords");
    const Shape& si = input.shape();
    const Shape& sc = coords.shape();
    if (sc[1] != 2 || sc[0] != si[0])
        throw std::invalid_argument("coords must be [N,2,Hc,Wc] matching input batch, got " +
                                    shape_str(sc) + " for input " + shape_str(si));
    int n = si[0], c = si[1], h = si[2], w = si[3];
    int hc = sc[2], wc = sc[3], hwc = hc * wc, hw = h * w;
    const auto& din = input.data();
    const auto& dco = coords.data();

    std::vector<float> out(static_cast<size_t>(n) * c * hwc);
    for (int in = 0; in < n; ++in)
        for (int i = 0; i < hwc; ++i) {
            float x = dco[(static_cast<int64_t>(in) * 2 + 0) * hwc + i];
            float y = dco[(static_cast<int64_t>(in) * 2 + 1) * hwc + i];
            Corner cc = sample_cell(x, y, w, h);
            int x1 = std::min(cc.x0 + 1, w - 1), y1 = std::min(cc.y0 + 1, h - 1);
            for (int ic = 0; ic < c; ++ic) {
                const float* plane = din.data() + (static_cast<int64_t>(in) * c + ic) * hw;
                float v00 = plane[cc.y0 * w + cc.x0];
                float v01 = plane[cc.y0 * w + x1];
                float v10 = plane[y1 * w + cc.x0];
                float v11 = plane[y1 * w + x1];
                float top = v00 + cc.wx * (v01 - v00);
                float bot = v10 + cc.wx * (v11 - v10);
                out[(static_cast<int64_t>(in) * c + ic) * hwc + i] = top + cc.wy * (bot - top);
            }
        }

    return Tensor::custom(
        {n, c, hc, wc}, std::move(out), {input, coords},
        [input, coords, n, c, h, w, hwc, hw](const std::vector<float>& og,
                                             const std::vector<std::span<float>>& pg) {
            const auto& din = input.data();
            const auto& dco = coords.data();
            std::vector<double> gcoord;
            if (!pg[1].empty()) gcoord.assign(dco.size(), 0.0);
            for (int in = 0; in < n; ++in)
                for (int i = 0; i < hwc; ++i) {
                    float x = dco[(static_cast<int64_t>(in) * 2 + 0) * hwc + i];
                    float y = dco[(static_cast<int64_t>(in) * 2 + 1) * hwc + i];
                    Corner cc = sample_cell(x, y, w, h);
                    int x1 = std::min(cc.x0 + 1, w - 1), y1 = std::min(cc.y0 + 1, h - 1);
                    double gx = 0.0, gy = 0.0;
                    for (int ic = 0; ic < c; ++ic) {
                        float g = og[(static_cast<int64_t>(in) * c + ic) * hwc + i];
                        if (g == 0.0f && pg[1].empty()) continue;
                        const float* plane = din.data() + (static_cast<int64_t>(in) * c + ic) * hw;
                        float v00 = plane[cc.y0 * w + cc.x0];
                        float v01 = plane[cc.y0 * w + x1];
                        float v10 = plane[y1 * w + cc.x0];
                        float v11 = plane[y1 * w + x1];
                        if (!pg[0].empty()) {
                            float* gplane = pg[0].data() + (static_cast<int64_t>(in) * c + ic) * hw;
                            gplane[cc.y0 * w + cc.x0] += g * (1 - cc.wx) * (1 - cc.wy);
                            gplane[cc.y0 * w + x1] += g * cc.wx * (1 - cc.wy);
                            gplane[y1 * w + cc.x0] += g * (1 - cc.wx) * cc.wy;
                            gplane[y1 * w + x1] += g * cc.wx * cc.wy;
                        }
                        gx += static_cast<double>(g) *
                              ((1 - cc.wy) * (v01 - v00) + cc.wy * (v11 - v10));
                        gy += static_cast<double>(g) *
                              ((1 - cc.wx) * (v10 - v00) + cc.wx * (v11 - v01));
                    }
                    if (!pg[1].empty()) {
                        if (!cc.clamped_x)
                            gcoord[(static_cast<int64_t>(in) * 2 + 0) * hwc + i] += gx;
                        if (!cc.clamped_y)
                            gcoord[(static_cast<int64_t>(in) * 2 + 1) * hwc + i] += gy;
                    }
                }
            if (!pg[1].empty())
                for (size_t i = 0; i < gcoord.size(); ++i)
                    pg[1][i] += static_cast<float>(gcoord[i]);
        });
}

Tensor upsample2d(const Tensor& a, int factor, float value_scale) {
    require_4d(a, "upsample2d input");
    if (factor < 1) throw std::invalid_argument("upsample2d factor must be >= 1");
    const Shape& s = a.shape();
    int n = s[0], h = s[2], w = s[3];
    int ho = h * factor, wo = w * factor;
    std::vector<float> cdata(static_cast<size_t>(n) * 2 * ho * wo);
    float inv = 1.0f / static_cast<float>(factor);
    for (int in = 0; in < n; ++in)
        for (int y = 0; y < ho; ++y)
            for (int x = 0; x < wo; ++x) {
                int64_t i = (static_cast<int64_t>(y)) * wo + x;
                cdata[(static_cast<int64_t>(in) * 2 + 0) * ho * wo + i] =
                    (static_cast<float>(x) + 0.5f) * inv - 0.5f;
                cdata[(static_cast<int64_t>(in) * 2 + 1) * ho * wo + i] =
                    (static_cast<float>(y) + 0.5f) * inv - 0.5f;
            }
    Tensor coords = Tensor::from_data({n, 2, ho, wo}, std::move(cdata), false);
    Tensor up = bilinear_sample(a, coords);
    if (value_scale != 1.0f) up = mul(up, value_scale);
    return up;
}

// ---------------------------------------------------------------------------
// grad_check

GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                           const std::vector<Tensor>& inputs, double h, double tol,
                           int max_coords_per_input, uint64_t seed) {
    if (h < 1e-4 || h > 1e-2)
        throw std::invalid_argument("grad_check step h must lie in [1e-4, 1e-2]");
    GradCheckReport report;
    report.inputs.resize(inputs.size());

    std::vector<Tensor> base;
    base.reserve(inputs.size());
    for (const auto& t : inputs)
        base.push_back(Tensor::from_data(t.shape(), t.data(), true));

    Tensor loss = f(base);
    if (!std::isfinite(loss.item())) {
        report.failure = "non-finite loss value " + std::to_string(loss.item());
        return report;
    }
    loss.backward();

    std::vector<std::vector<float>> analytic;
    for (size_t i = 0; i < base.size(); ++i) {
        if (!base[i].has_grad()) {
            report.failure = "input " + std::to_string(i) + " received no gradient";
            return report;
        }
        analytic.push_back(base[i].grad());
        for (size_t j = 0; j < analytic.back().size(); ++j)
            if (!std::isfinite(analytic.back()[j])) {
                report.failure = "non-finite analytic gradient at input " + std::to_string(i) +
                                 " coord " + std::to_string(j);
                return report;
            }
    }

    auto eval = [&](size_t which, int64_t coord, double delta) -> double {
        std::vector<Tensor> probe;
        probe.reserve(base.size());
        for (size_t i = 0; i < base.size(); ++i) {
            if (i == which) {
                std::vector<float> d = inputs[i].data();
                d[coord] = static_cast<float>(static_cast<double>(d[coord]) + delta);
                probe.push_back(Tensor::from_data(inputs[i].shape(), std::move(d), true));
            } else {
                probe.push_back(base[i]);
            }
        }
        return static_cast<double>(f(probe).item());
    };

    Rng rng(seed ^ 0x6772616463686bull);
    double global_max = 0.0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        int64_t n = inputs[i].numel();
        std::vector<int64_t> coords;
        if (max_coords_per_input > 0 && n > max_coords_per_input) {
            std::unordered_set<int64_t> chosen;
            while (static_cast<int>(chosen.size()) < max_coords_per_input)
                chosen.insert(static_cast<int64_t>(rng.next_u64() % static_cast<uint64_t>(n)));
            coords.assign(chosen.begin(), chosen.end());
            std::sort(coords.begin(), coords.end());
        } else {
            coords.resize(n);
            for (int64_t j = 0; j < n; ++j) coords[j] = j;
        }
        auto& per = report.inputs[i];
        per.checked_coords = static_cast<int>(coords.size());
        for (int64_t coord : coords) {
            double fp = eval(i, coord, h);
            double fm = eval(i, coord, -h);
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                report.failure = "non-finite perturbed loss at input " + std::to_string(i) +
                                 " coord " + std::to_string(coord);
                return report;
            }
            double numeric = (fp - fm) / (2.0 * h);
            double a = analytic[i][coord];
            double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            if (err > per.max_rel_err) {
                per.max_rel_err = err;
                per.worst_coord = coord;
            }
        }
        global_max = std::max(global_max, per.max_rel_err);
    }
    report.max_rel_err = global_max;
    report.pass = global_max < tol;
    return report;
}

}  // namespace octc
