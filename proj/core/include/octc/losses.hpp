#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "octc/flow.hpp"
#include "octc/tensor.hpp"

namespace octc {

struct LossConfig {
    int iterations = 4;       // N, refinement iterations
    double gamma = 0.8;       // per-iteration decay, must be < 1
    double lambda1 = 0.1;     // mask match weight
    double lambda2 = 0.01;    // transformation consistency weight
    double epsilon = 25.0;    // identifier-mask gate, squared pixels
    bool zero_star = false;   // add the identical-pair zero-forcing term
    bool mask_match_bce = false;  // two-term cross entropy instead of the
                                  // visible-pixel-only term

    void validate() const;
};

/// Decayed sum of per-iteration mean L1 flow errors:
/// sum_i gamma^(N-i) * mean over valid pixels of |du|+|dv|.
/// preds holds iterations 1..N, each [1,2,H,W]; rejects an empty list.
Tensor sequence_loss(const std::vector<Tensor>& preds, const FlowField& gt,
                     const OcclusionMask* valid, const LossConfig& cfg);

/// sequence_loss against the all-zero field, for pairs with no motion.
Tensor zero_forcing_loss(const std::vector<Tensor>& preds, const LossConfig& cfg);

/// Decayed sum of -1/(wh) * sum_p O(p) * log(pred(p)) per iteration; preds are
/// predicted visibility masks strictly inside (0,1), each [1,1,H,W]. With
/// cfg.mask_match_bce the occluded-pixel term -(1-O)*log(1-pred) is added.
Tensor mask_match_loss(const std::vector<Tensor>& pred_masks, const OcclusionMask& gt,
                       const LossConfig& cfg);

/// Gated equivariance loss. pred_trans holds predictions on the transformed
/// pair; each iteration is restored, compared per pixel by squared L2 error,
/// gated by the identifier mask (error < epsilon, strict), and averaged over
/// gated pixels. An all-zero gate contributes 0 with zero gradient. Returns
/// the loss and the per-iteration identifier masks.
std::pair<Tensor, std::vector<IdentifierMask>> transformation_consistency_loss(
    const std::vector<Tensor>& pred_orig, const std::vector<Tensor>& pred_trans,
    const GeoTransform& t, const LossConfig& cfg);

/// L_total = L_base + L_zf + lambda1 * L_mm + lambda2 * L_tr, absent
/// components contributing 0.
Tensor total_loss(const std::optional<Tensor>& base, const std::optional<Tensor>& zero_forcing,
                  const std::optional<Tensor>& mask_match,
                  const std::optional<Tensor>& transformation_consistency,
                  const LossConfig& cfg);

}  // namespace octc
