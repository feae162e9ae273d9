#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "octc/flow.hpp"
#include "octc/image.hpp"
#include "octc/tensor.hpp"

namespace octc {

struct ModelConfig {
    int in_channels = 3;
    int feature_channels = 32;
    int downsample = 2;
    int radius = 3;         // correlation search radius, window (2r+1)^2
    int hidden_channels = 48;
    int iterations = 4;     // N
    uint64_t seed = 0;

    void validate() const;
    /// Canonical key=value serialization, one line per field, sorted keys.
    std::string canonical() const;
    /// Fingerprint of canonical(); embedded in checkpoints.
    uint64_t hash() const;
};

struct ModelOutput {
    std::vector<Tensor> flows;       // per iteration, [1,2,H,W], full resolution
    std::vector<Tensor> occ_logits;  // per iteration, [1,1,H,W], full resolution

    /// Predicted visibility mask for iteration i, strictly inside (0,1).
    Tensor occ_prob(size_t i) const;
    FlowField final_flow() const { return flow_from_tensor(flows.back()); }
};

/// Iterative flow estimator: shared feature encoder, a context encoder that
/// seeds the recurrent state, all-pairs correlation lookups around the
/// current estimate, and a gated recurrent update emitting a flow increment
/// plus an occlusion logit per iteration. Coarse outputs are bilinearly
/// upsampled to input resolution (flow values scaled by the factor).
class FlowModel {
public:
    explicit FlowModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }

    ModelOutput forward(const Image& a, const Image& b) const;
    ModelOutput forward(const Tensor& a, const Tensor& b) const;

    /// Feature map at 1/downsample resolution. Rejects indivisible extents.
    Tensor encode(const Tensor& img) const;

    /// Cost slice: normalized dot products between feat1 at p and bilinear
    /// samples of feat2 at p + flow(p) + delta over the (2r+1)^2 window,
    /// ordered row-major in (dy, dx); channel count (2r+1)^2.
    Tensor correlation_lookup(const Tensor& feat1, const Tensor& feat2,
                              const Tensor& flow) const;

    const std::vector<std::string>& parameter_names() const { return names_; }
    const std::vector<Tensor>& parameters() const { return params_; }
    Tensor parameter(const std::string& name) const;
    /// Replace all parameters (same order and shapes as parameters()).
    void set_parameters(const std::vector<Tensor>& params);
    int64_t parameter_count() const;
    void zero_grad() const;

private:
    Tensor context(const Tensor& img) const;
    Tensor param(const char* name) const;
    void add_param(const std::string& name, Shape shape, class Rng& rng, bool zero_init);

    ModelConfig cfg_;
    std::vector<std::string> names_;
    std::vector<Tensor> params_;
};

}  // namespace octc
