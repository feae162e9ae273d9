#include "octc/data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace octc {

void SyntheticScene::validate() const {
    if (width < 8 || height < 8) throw std::invalid_argument("scene extent too small");
    if (frames < 3) throw std::invalid_argument("scene needs at least 3 frames");
    for (const auto& s : sprites) {
        if (s.w <= 0 || s.h <= 0) throw std::invalid_argument("sprite with empty extent");
        if (std::abs(s.vx) * frames > 2 * width || std::abs(s.vy) * frames > 2 * height)
            throw std::invalid_argument("sprite velocity too large for scene");
    }
}

SyntheticScene SyntheticScene::random(int width, int height, int frames, int n_sprites,
                                      int max_speed, Rng& rng) {
    SyntheticScene scene;
    scene.width = width;
    scene.height = height;
    scene.frames = frames;
    scene.seed = rng.next_u64();
    // Mildly biased downward to mimic driving-style footage; harmless for
    // training, and it gives the CDF tooling something to detect.
    scene.bg_vx = rng.uniform_int(-1, 1);
    scene.bg_vy = rng.uniform_int(0, 1);
    for (int i = 0; i < n_sprites; ++i) {
        Sprite s;
        s.shape = rng.uniform() < 0.5 ? SpriteShape::rect : SpriteShape::disk;
        s.w = rng.uniform_int(width / 6, width / 3);
        s.h = rng.uniform_int(height / 6, height / 3);
        s.x0 = rng.uniform_int(0, width - s.w);
        s.y0 = rng.uniform_int(0, height - s.h);
        do {
            s.vx = rng.uniform_int(-max_speed, max_speed);
            s.vy = rng.uniform_int(-max_speed, max_speed);
        } while (s.vx == 0 && s.vy == 0);
        s.texture_seed = rng.next_u64();
        scene.sprites.push_back(s);
    }
    return scene;
}

namespace {

// 8-bit procedural texture so float pixels sit exactly on the k/255 grid and
// PPM round-trips are lossless.
struct Texture {
    int w, h;
    std::vector<uint8_t> rgb;  // 3 per texel

    Texture(int w_, int h_, uint64_t seed) : w(w_), h(h_), rgb(static_cast<size_t>(w_) * h_ * 3) {
        Rng rng(seed);
        // Blocky random colors with per-texel jitter: textured enough for
        // matching, cheap to generate.
        int block = std::max(2, std::min(w, h) / 8);
        int bw = (w + block - 1) / block, bh = (h + block - 1) / block;
        std::vector<uint8_t> base(static_cast<size_t>(bw) * bh * 3);
        for (auto& v : base) v = static_cast<uint8_t>(rng.uniform_int(30, 225));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                size_t bi = (static_cast<size_t>(y / block) * bw + (x / block)) * 3;
                for (int c = 0; c < 3; ++c) {
                    int v = base[bi + c] + rng.uniform_int(-25, 25);
                    rgb[(static_cast<size_t>(y) * w + x) * 3 + c] =
                        static_cast<uint8_t>(std::clamp(v, 0, 255));
                }
            }
    }

    uint8_t at(int x, int y, int c) const {
        x = ((x % w) + w) % w;
        y = ((y % h) + h) % h;
        return rgb[(static_cast<size_t>(y) * w + x) * 3 + c];
    }
};

bool sprite_covers(const Sprite& s, int sx, int sy) {
    if (sx < 0 || sy < 0 || sx >= s.w || sy >= s.h) return false;
    if (s.shape == SpriteShape::rect) return true;
    double cx = (s.w - 1) / 2.0, cy = (s.h - 1) / 2.0;
    double rx = s.w / 2.0, ry = s.h / 2.0;
    double dx = (sx - cx) / rx, dy = (sy - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
}

// -1 is the background; sprites are indexed back to front.
struct FrameRaster {
    Image image;
    std::vector<int> surface;  // per pixel topmost surface id
};

FrameRaster raster_frame(const SyntheticScene& scene, const Texture& bg,
                         const std::vector<Texture>& sprite_tex, int t) {
    FrameRaster fr{Image(scene.width, scene.height, 3), {}};
    fr.surface.assign(static_cast<size_t>(scene.width) * scene.height, -1);
    for (int y = 0; y < scene.height; ++y)
        for (int x = 0; x < scene.width; ++x)
            for (int c = 0; c < 3; ++c)
                fr.image.at(c, x, y) =
                    static_cast<float>(bg.at(x - t * scene.bg_vx, y - t * scene.bg_vy, c)) / 255.0f;

    for (size_t si = 0; si < scene.sprites.size(); ++si) {
        const Sprite& s = scene.sprites[si];
        int px = s.x0 + t * s.vx, py = s.y0 + t * s.vy;
        for (int sy = 0; sy < s.h; ++sy)
            for (int sx = 0; sx < s.w; ++sx) {
                if (!sprite_covers(s, sx, sy)) continue;
                int x = px + sx, y = py + sy;
                if (x < 0 || y < 0 || x >= scene.width || y >= scene.height) continue;
                for (int c = 0; c < 3; ++c)
                    fr.image.at(c, x, y) =
                        static_cast<float>(sprite_tex[si].at(sx, sy, c)) / 255.0f;
                fr.surface[static_cast<size_t>(y) * scene.width + x] = static_cast<int>(si);
            }
    }
    return fr;
}

void surface_velocity(const SyntheticScene& scene, int id, int& vx, int& vy) {
    if (id < 0) {
        vx = scene.bg_vx;
        vy = scene.bg_vy;
    } else {
        vx = scene.sprites[static_cast<size_t>(id)].vx;
        vy = scene.sprites[static_cast<size_t>(id)].vy;
    }
}

}  // namespace

RenderedSequence render_scene(const SyntheticScene& scene) {
    scene.validate();
    Texture bg(scene.width, scene.height, scene.seed ^ 0xb61ull);
    std::vector<Texture> sprite_tex;
    sprite_tex.reserve(scene.sprites.size());
    for (const auto& s : scene.sprites) sprite_tex.emplace_back(s.w, s.h, s.texture_seed);

    std::vector<FrameRaster> rasters;
    rasters.reserve(static_cast<size_t>(scene.frames));
    for (int t = 0; t < scene.frames; ++t)
        rasters.push_back(raster_frame(scene, bg, sprite_tex, t));

    RenderedSequence seq;
    for (auto& r : rasters) seq.frames.push_back(std::move(r.image));
    for (int t = 0; t + 1 < scene.frames; ++t) {
        FlowField flow(scene.width, scene.height);
        OcclusionMask occ(scene.width, scene.height);
        const auto& surf_t = rasters[static_cast<size_t>(t)].surface;
        const auto& surf_t1 = rasters[static_cast<size_t>(t) + 1].surface;
        for (int y = 0; y < scene.height; ++y)
            for (int x = 0; x < scene.width; ++x) {
                size_t i = static_cast<size_t>(y) * scene.width + x;
                int id = surf_t[i];
                int vx, vy;
                surface_velocity(scene, id, vx, vy);
                flow.u(x, y) = static_cast<float>(vx);
                flow.v(x, y) = static_cast<float>(vy);

                int tx = x + vx, ty = y + vy;
                bool occluded = false;
                if (tx < 0 || ty < 0 || tx >= scene.width || ty >= scene.height)
                    occluded = true;  // leaves the view
                else if (surf_t1[static_cast<size_t>(ty) * scene.width + tx] != id)
                    occluded = true;  // covered at the target
                if (surf_t1[i] != id) occluded = true;  // covered or revealed in place
                occ.at(x, y) = occluded ? 0 : 1;
            }
        seq.flows.push_back(std::move(flow));
        seq.occ.push_back(std::move(occ));
    }
    return seq;
}

FlowField render_flow(const SyntheticScene& scene, int t, int k) {
    scene.validate();
    if (t < 0 || k < 1 || t + k >= scene.frames)
        throw std::invalid_argument("render_flow frame range out of bounds");
    Texture bg(scene.width, scene.height, scene.seed ^ 0xb61ull);
    std::vector<Texture> sprite_tex;
    for (const auto& s : scene.sprites) sprite_tex.emplace_back(s.w, s.h, s.texture_seed);
    FrameRaster fr = raster_frame(scene, bg, sprite_tex, t);

    FlowField flow(scene.width, scene.height);
    for (int y = 0; y < scene.height; ++y)
        for (int x = 0; x < scene.width; ++x) {
            int id = fr.surface[static_cast<size_t>(y) * scene.width + x];
            int vx, vy;
            surface_velocity(scene, id, vx, vy);
            flow.u(x, y) = static_cast<float>(k * vx);
            flow.v(x, y) = static_cast<float>(k * vy);
        }
    return flow;
}

FlowField compose_flow(const FlowField& f12, const FlowField& f23) {
    if (f12.width != f23.width || f12.height != f23.height)
        throw std::invalid_argument("compose_flow extent mismatch");
    int w = f12.width, h = f12.height;
    FlowField out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float lx = std::clamp(static_cast<float>(x) + f12.u(x, y), 0.0f,
                                  static_cast<float>(w - 1));
            float ly = std::clamp(static_cast<float>(y) + f12.v(x, y), 0.0f,
                                  static_cast<float>(h - 1));
            if (lx == std::floor(lx) && ly == std::floor(ly)) {
                // Lattice lookup reads the field exactly.
                int ix = static_cast<int>(lx), iy = static_cast<int>(ly);
                out.u(x, y) = f12.u(x, y) + f23.u(ix, iy);
                out.v(x, y) = f12.v(x, y) + f23.v(ix, iy);
                continue;
            }
            int x0 = std::min(static_cast<int>(std::floor(lx)), std::max(w - 2, 0));
            int y0 = std::min(static_cast<int>(std::floor(ly)), std::max(h - 2, 0));
            float wx = lx - static_cast<float>(x0), wy = ly - static_cast<float>(y0);
            int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
            auto lerp2 = [&](auto get) {
                float top = get(x0, y0) + wx * (get(x1, y0) - get(x0, y0));
                float bot = get(x0, y1) + wx * (get(x1, y1) - get(x0, y1));
                return top + wy * (bot - top);
            };
            out.u(x, y) =
                f12.u(x, y) + lerp2([&](int a, int b) { return f23.u(a, b); });
            out.v(x, y) =
                f12.v(x, y) + lerp2([&](int a, int b) { return f23.v(a, b); });
        }
    return out;
}

FrameHopSampler::FrameHopSampler(const std::vector<RenderedSequence>* sequences,
                                 std::vector<int> k_set, uint64_t seed)
    : sequences_(sequences), k_set_(std::move(k_set)), rng_(seed ^ 0x686f70ull) {
    if (!sequences_ || sequences_->empty())
        throw std::invalid_argument("sampler needs at least one sequence");
    if (k_set_.empty()) throw std::invalid_argument("sampler k_set must be nonempty");
    for (const auto& seq : *sequences_)
        for (int k : k_set_)
            if (k < 1 || static_cast<size_t>(k) >= seq.frames.size())
                throw std::invalid_argument("k=" + std::to_string(k) +
                                            " too large for a sequence of " +
                                            std::to_string(seq.frames.size()) + " frames");
}

TrainSample FrameHopSampler::next() {
    const auto& seq =
        (*sequences_)[static_cast<size_t>(rng_.uniform_int(0, static_cast<int>(sequences_->size()) - 1))];
    int k = k_set_[static_cast<size_t>(rng_.uniform_int(0, static_cast<int>(k_set_.size()) - 1))];
    int t = rng_.uniform_int(0, static_cast<int>(seq.frames.size()) - 1 - k);

    TrainSample sample;
    sample.a = seq.frames[static_cast<size_t>(t)];
    sample.b = seq.frames[static_cast<size_t>(t + k)];
    sample.k = k;
    sample.labeled = (k == 1);
    if (sample.labeled) {
        sample.gt_flow = seq.flows[static_cast<size_t>(t)];
        sample.gt_occlusion = seq.occ[static_cast<size_t>(t)];
    }
    return sample;
}

TrainSample make_occlusion_pair(const Image& img, const CowmaskParams& params, Rng& rng) {
    TrainSample sample;
    sample.a = img;
    OcclusionMask mask = generate_mask(img.width, img.height, params, rng);
    sample.b = apply_occlusion(img, mask);
    sample.k = 0;
    sample.gt_flow = FlowField(img.width, img.height);  // no motion, only occlusion
    sample.gt_occlusion = std::move(mask);
    sample.labeled = true;
    sample.zero_forcing = true;
    return sample;
}

}  // namespace octc
