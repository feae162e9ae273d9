#pragma once

#include <optional>
#include <vector>

#include "octc/cowmask.hpp"
#include "octc/flow.hpp"
#include "octc/image.hpp"
#include "octc/rng.hpp"

namespace octc {

enum class SpriteShape { rect, disk };

struct Sprite {
    SpriteShape shape = SpriteShape::rect;
    int x0 = 0, y0 = 0;   // top-left of the bounding box at frame 0
    int w = 8, h = 8;     // bounding box extent
    int vx = 0, vy = 0;   // integer velocity, px/frame
    uint64_t texture_seed = 0;
};

/// Textured background plus rigidly translating sprites, drawn back to front.
/// All motion is integer-valued so flow and warp identities are exact; the
/// background texture wraps toroidally when it moves.
struct SyntheticScene {
    int width = 64, height = 64;
    int frames = 4;  // L, must be >= 3 so k=2 pairs exist
    int bg_vx = 0, bg_vy = 0;
    uint64_t seed = 0;
    std::vector<Sprite> sprites;

    void validate() const;

    /// Random scene with n_sprites sprites, velocities in [-max_speed, max_speed].
    static SyntheticScene random(int width, int height, int frames, int n_sprites,
                                 int max_speed, Rng& rng);
};

struct RenderedSequence {
    std::vector<Image> frames;          // L images
    std::vector<FlowField> flows;       // L-1 fields, t -> t+1
    std::vector<OcclusionMask> occ;     // L-1 masks for frame t (1 = visible)
};

/// Renders frames plus exact consecutive-frame flow and occlusion ground
/// truth. A frame-t pixel is occluded when its target leaves the image, its
/// surface is covered at the target, or the surface at its own location
/// changes between t and t+1 (covered or revealed).
RenderedSequence render_scene(const SyntheticScene& scene);

/// Analytic flow over a gap of k frames (surface velocity times k).
FlowField render_flow(const SyntheticScene& scene, int t, int k);

/// f_{t->t+2}(p) = f12(p) + f23(p + f12(p)), bilinear lookup in f23.
FlowField compose_flow(const FlowField& f12, const FlowField& f23);

struct TrainSample {
    Image a, b;
    int k = 1;
    std::optional<FlowField> gt_flow;
    std::optional<OcclusionMask> gt_occlusion;
    bool labeled = false;
    bool zero_forcing = false;
};

/// Uniformly samples (sequence, t, k) pairs. k == 1 samples carry ground
/// truth; k > 1 samples are emitted unlabeled (consistency training only).
class FrameHopSampler {
public:
    FrameHopSampler(const std::vector<RenderedSequence>* sequences, std::vector<int> k_set,
                    uint64_t seed);
    TrainSample next();

private:
    const std::vector<RenderedSequence>* sequences_;
    std::vector<int> k_set_;
    Rng rng_;
};

/// Zero-motion pair (I_t, I_{t,occ}) with the generated mask as occlusion
/// ground truth and the all-zero field as flow ground truth.
TrainSample make_occlusion_pair(const Image& img, const CowmaskParams& params, Rng& rng);

}  // namespace octc
