#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "octc/cowmask.hpp"
#include "octc/losses.hpp"
#include "octc/model.hpp"

namespace octc {

/// Training strategies mirroring the ablation presets: baseline trains the
/// supervised loss only; oc adds zero forcing and mask match; tc adds the
/// transformation-consistency loss; octc combines both.
enum class Strategy { baseline, oc, tc, octc };

Strategy strategy_from_string(const std::string& s);
const char* strategy_name(Strategy s);

struct ActiveLosses {
    bool base = false, zero_forcing = false, mask_match = false, transformation = false;
};
ActiveLosses active_losses(Strategy s);

struct RunConfig {
    Strategy strategy = Strategy::baseline;
    ModelConfig model;
    LossConfig loss;
    std::vector<int> k_set = {1};
    std::vector<TransformKind> transforms = {TransformKind::hflip, TransformKind::rot90cw,
                                             TransformKind::rot180, TransformKind::rot270cw};
    int steps = 1000;
    double learning_rate = 0.02;
    uint64_t seed = 0;
    std::string out_dir = "out";

    // Synthetic data settings.
    int image_width = 64;
    int image_height = 64;
    int frames_per_sequence = 4;
    int train_sequences = 40;
    int eval_sequences = 20;
    int sprites_per_scene = 3;
    int max_speed = 3;
    CowmaskParams cowmask;
    int eval_every = 200;
    int batch_size = 1;
    bool zf_only = false;  // train exclusively on occlusion pairs

    void validate() const;

    /// Canonical key=value serialization (sorted keys, one per line).
    std::string canonical() const;
    /// Fingerprint of canonical() excluding the output directory.
    uint64_t hash() const;

    void save(const std::string& path) const;
    static RunConfig load(const std::string& path);
    /// Applies "key=value" lines to an existing config; unknown keys throw.
    void apply_line(const std::string& line);
};

/// Preset matching a named strategy row: adjusts k_set and transform set the
/// way the ablation tables pair them (tc/octc sample k in {1,2} and use
/// rotations; baseline/oc train on consecutive pairs only).
RunConfig make_preset(Strategy s, uint64_t seed);

std::vector<TransformKind> parse_transform_list(const std::string& csv);
std::vector<int> parse_k_set(const std::string& csv);

}  // namespace octc
