#include "octc/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace octc {

void LossConfig::validate() const {
    if (iterations < 1) throw std::invalid_argument("loss iterations must be >= 1");
    if (gamma <= 0.0 || gamma >= 1.0) throw std::invalid_argument("gamma must lie in (0,1)");
    if (epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
    if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("lambdas must be >= 0");
}

namespace {

void check_flow_pred(const Tensor& pred, int h, int w, const char* what) {
    const Shape& s = pred.shape();
    if (s.size() != 4 || s[0] != 1 || s[1] != 2 || s[2] != h || s[3] != w)
        throw std::invalid_argument(std::string(what) + " must be [1,2," + std::to_string(h) +
                                    "," + std::to_string(w) + "], got " + shape_str(s));
}

std::vector<double> decay_weights(size_t n, double gamma) {
    std::vector<double> w(n);
    for (size_t i = 0; i < n; ++i) w[i] = std::pow(gamma, static_cast<double>(n - 1 - i));
    return w;
}

}  // namespace

Tensor sequence_loss(const std::vector<Tensor>& preds, const FlowField& gt,
                     const OcclusionMask* valid, const LossConfig& cfg) {
    cfg.validate();
    if (preds.empty()) throw std::invalid_argument("sequence_loss needs at least one prediction");
    int h = gt.height, w = gt.width;
    int64_t hw = static_cast<int64_t>(h) * w;

    int64_t n_valid = valid ? valid->count(1) : hw;
    if (n_valid == 0) throw std::invalid_argument("sequence_loss over an empty valid set");

    Tensor gt_t = flow_to_tensor(gt);
    Tensor valid_t;
    if (valid) {
        std::vector<float> vd(hw);
        for (int64_t i = 0; i < hw; ++i) vd[i] = valid->data[i] ? 1.0f : 0.0f;
        valid_t = Tensor::from_data({1, 1, h, w}, std::move(vd));
    }

    auto weights = decay_weights(preds.size(), cfg.gamma);
    Tensor loss = Tensor::scalar(0.0f);
    for (size_t i = 0; i < preds.size(); ++i) {
        check_flow_pred(preds[i], h, w, "sequence_loss prediction");
        Tensor l1 = abs(preds[i] - gt_t);
        if (valid) l1 = l1 * valid_t;
        Tensor mean_l1 = sum(l1) * (1.0f / static_cast<float>(n_valid));
        loss = loss + mean_l1 * static_cast<float>(weights[i]);
    }
    return loss;
}

Tensor zero_forcing_loss(const std::vector<Tensor>& preds, const LossConfig& cfg) {
    if (preds.empty()) throw std::invalid_argument("zero_forcing_loss needs predictions");
    const Shape& s = preds[0].shape();
    if (s.size() != 4) throw std::invalid_argument("zero_forcing_loss expects [1,2,H,W] preds");
    FlowField zero(s[3], s[2]);
    return sequence_loss(preds, zero, nullptr, cfg);
}

Tensor mask_match_loss(const std::vector<Tensor>& pred_masks, const OcclusionMask& gt,
                       const LossConfig& cfg) {
    cfg.validate();
    if (pred_masks.empty()) throw std::invalid_argument("mask_match_loss needs predictions");
    int h = gt.height, w = gt.width;
    int64_t hw = static_cast<int64_t>(h) * w;

    std::vector<float> od(hw), not_od(hw);
    for (int64_t i = 0; i < hw; ++i) {
        od[i] = gt.data[i] ? 1.0f : 0.0f;
        not_od[i] = gt.data[i] ? 0.0f : 1.0f;
    }
    Tensor o_t = Tensor::from_data({1, 1, h, w}, std::move(od));
    Tensor not_o_t = Tensor::from_data({1, 1, h, w}, std::move(not_od));

    auto weights = decay_weights(pred_masks.size(), cfg.gamma);
    Tensor loss = Tensor::scalar(0.0f);
    for (size_t i = 0; i < pred_masks.size(); ++i) {
        const Shape& s = pred_masks[i].shape();
        if (s.size() != 4 || s[0] != 1 || s[1] != 1 || s[2] != h || s[3] != w)
            throw std::invalid_argument("mask prediction must be [1,1," + std::to_string(h) + "," +
                                        std::to_string(w) + "], got " + shape_str(s));
        for (float v : pred_masks[i].data())
            if (!(v > 0.0f && v < 1.0f))
                throw std::invalid_argument("predicted mask value " + std::to_string(v) +
                                            " outside (0,1)");
        Tensor term = neg(mean(o_t * log(pred_masks[i])));
        if (cfg.mask_match_bce)
            term = term + neg(mean(not_o_t * log(1.0f - pred_masks[i])));
        loss = loss + term * static_cast<float>(weights[i]);
    }
    return loss;
}

std::pair<Tensor, std::vector<IdentifierMask>> transformation_consistency_loss(
    const std::vector<Tensor>& pred_orig, const std::vector<Tensor>& pred_trans,
    const GeoTransform& t, const LossConfig& cfg) {
    cfg.validate();
    if (pred_orig.empty() || pred_orig.size() != pred_trans.size())
        throw std::invalid_argument("transformation_consistency_loss needs equal-length nonempty "
                                    "prediction lists");

    auto weights = decay_weights(pred_orig.size(), cfg.gamma);
    Tensor loss = Tensor::scalar(0.0f);
    std::vector<IdentifierMask> gates;
    gates.reserve(pred_orig.size());
    float eps = static_cast<float>(cfg.epsilon);

    for (size_t i = 0; i < pred_orig.size(); ++i) {
        Tensor restored = restore_flow_tensor(pred_trans[i], t);
        if (restored.shape() != pred_orig[i].shape())
            throw std::invalid_argument("extent mismatch after restoration: " +
                                        shape_str(restored.shape()) + " vs " +
                                        shape_str(pred_orig[i].shape()));
        Tensor d = pred_orig[i] - restored;
        Tensor err = channel_dot(d, d);  // per-pixel squared L2, [1,1,H,W]

        const Shape& s = err.shape();
        int h = s[2], w = s[3];
        int64_t hw = static_cast<int64_t>(h) * w;
        IdentifierMask gate(w, h);
        std::vector<float> gd(hw, 0.0f);
        int64_t on = 0;
        const auto& ed = err.data();
        for (int64_t p = 0; p < hw; ++p)
            if (ed[p] < eps) {  // strict, per Eq. of the gate
                gate.data[p] = 1;
                gd[p] = 1.0f;
                ++on;
            }
        gates.push_back(std::move(gate));

        if (on > 0) {
            Tensor gate_t = Tensor::from_data({1, 1, h, w}, std::move(gd));
            Tensor contrib = sum(err * gate_t) * (1.0f / static_cast<float>(on));
            loss = loss + contrib * static_cast<float>(weights[i]);
        }
    }
    return {loss, gates};
}

Tensor total_loss(const std::optional<Tensor>& base, const std::optional<Tensor>& zero_forcing,
                  const std::optional<Tensor>& mask_match,
                  const std::optional<Tensor>& transformation_consistency,
                  const LossConfig& cfg) {
    cfg.validate();
    Tensor loss = Tensor::scalar(0.0f);
    if (base) loss = loss + *base;
    if (zero_forcing) loss = loss + *zero_forcing;
    if (mask_match) loss = loss + *mask_match * static_cast<float>(cfg.lambda1);
    if (transformation_consistency)
        loss = loss + *transformation_consistency * static_cast<float>(cfg.lambda2);
    return loss;
}

}  // namespace octc
