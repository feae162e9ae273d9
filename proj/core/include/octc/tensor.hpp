#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace octc {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorNode;
}

/// Dense float32 tensor participating in a recorded computation graph.
///
/// Tensors are cheap shared handles. Data is immutable once a tensor has
/// been consumed by an op; leaves may be updated in place between training
/// steps via set_data() once no graph referencing them is alive. Reductions
/// and convolution inner products accumulate in float64 before rounding
/// back to float32 storage.
class Tensor {
public:
    Tensor();

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    /// Custom differentiable op. `backward` receives the output gradient and
    /// one writable gradient span per parent (empty when that parent does not
    /// require grad); it must accumulate (+=), not assign.
    static Tensor custom(Shape shape, std::vector<float> data, std::vector<Tensor> parents,
                         std::function<void(const std::vector<float>& out_grad,
                                            const std::vector<std::span<float>>& parent_grads)>
                             backward);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int64_t numel() const;
    const std::vector<float>& data() const;
    bool requires_grad() const;
    bool has_grad() const;
    const std::vector<float>& grad() const;

    /// Value of a single-element tensor.
    float item() const;

    /// Reverse-mode pass from a scalar. Populates grad on every reachable
    /// tensor with requires_grad, visiting each node exactly once.
    void backward() const;

    void zero_grad() const;

    /// In-place data replacement for leaf tensors (optimizer steps). Must not
    /// be called while a graph built from this tensor is still alive.
    void set_data(std::vector<float> data) const;

    /// Same values, no graph history.
    Tensor detach() const;

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::TensorNode> node_;
    friend struct detail::TensorNode;
};

enum class OpKind { add, sub, mul, div, abs, log, exp, sigmoid, relu, square };

// Binary kinds take two tensors (trailing-dimension broadcasting) or a
// tensor and a scalar; unary kinds ignore/reject the second argument.
Tensor elementwise(OpKind kind, const Tensor& a, const Tensor& b);
Tensor elementwise(OpKind kind, const Tensor& a, float b);
Tensor elementwise(OpKind kind, const Tensor& a);
bool op_kind_is_binary(OpKind kind);
const char* op_kind_name(OpKind kind);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, float b);
Tensor sub(const Tensor& a, float b);
Tensor sub(float a, const Tensor& b);
Tensor mul(const Tensor& a, float b);
Tensor div(const Tensor& a, float b);

Tensor neg(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, float b) { return add(a, b); }
inline Tensor operator+(float a, const Tensor& b) { return add(b, a); }
inline Tensor operator-(const Tensor& a, float b) { return sub(a, b); }
inline Tensor operator-(float a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, float b) { return mul(a, b); }
inline Tensor operator*(float a, const Tensor& b) { return mul(b, a); }
inline Tensor operator/(const Tensor& a, float b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

inline Tensor tanh(const Tensor& a) { return 2.0f * sigmoid(2.0f * a) - 1.0f; }

/// Elementwise clamp; gradient passes through inside [lo, hi], zero outside.
Tensor clamp(const Tensor& a, float lo, float hi);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

/// Slice channels [from, to) along axis 1 of an NCHW tensor.
Tensor slice_channels(const Tensor& a, int from, int to);
/// Concatenate NCHW tensors along axis 1.
Tensor concat_channels(const std::vector<Tensor>& parts);
/// Per-pixel dot product over the channel axis: [N,C,H,W] x [N,C,H,W] -> [N,1,H,W].
Tensor channel_dot(const Tensor& a, const Tensor& b);

/// 2D convolution, input [N,Ci,H,W], kernel [Co,Ci,K,K], zero padding.
/// Output spatial extent floor((H + 2*padding - K)/stride) + 1 must be positive.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);

/// Bilinear sampling of input [N,C,H,W] at coords [N,2,Hc,Wc] (channel 0 = x,
/// channel 1 = y, continuous pixel coordinates). Out-of-range coordinates are
/// clamped to the border; clamped coordinates get zero coordinate-gradient.
Tensor bilinear_sample(const Tensor& input, const Tensor& coords);

/// Bilinear upsampling of [N,C,H,W] by an integer factor, with values
/// multiplied by value_scale (flow fields scale with resolution).
Tensor upsample2d(const Tensor& a, int factor, float value_scale);

struct GradCheckReport {
    struct PerInput {
        double max_rel_err = 0.0;
        int64_t worst_coord = -1;
        int checked_coords = 0;
    };
    std::vector<PerInput> inputs;
    double max_rel_err = 0.0;
    bool pass = false;
    /// Non-empty when non-finite values were encountered; names the location.
    std::string failure;
};

/// Central-difference check of a scalar-valued tensor function.
///
/// Per-coordinate error is |analytic - numeric| / max(1, |analytic|, |numeric|);
/// the report carries the max per input. When max_coords_per_input > 0 and an
/// input is larger, a seeded subset of coordinates is checked. Requires
/// h in [1e-4, 1e-2] and a deterministic f.
GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                           const std::vector<Tensor>& inputs, double h, double tol,
                           int max_coords_per_input = 0, uint64_t seed = 0);

}  // namespace octc
