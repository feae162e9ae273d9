#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "octc/checkpoint.hpp"
#include "octc/losses.hpp"
#include "octc/model.hpp"
#include "octc/rng.hpp"

using namespace octc;

namespace {

ModelConfig tiny_config(uint64_t seed = 0) {
    ModelConfig cfg;
    cfg.in_channels = 3;
    cfg.feature_channels = 6;
    cfg.downsample = 2;
    cfg.radius = 1;
    cfg.hidden_channels = 8;
    cfg.iterations = 2;
    cfg.seed = seed;
    return cfg;
}

Image noise_image(int w, int h, uint64_t seed) {
    Image img(w, h, 3);
    Rng rng(seed);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
    return img;
}

Tensor unit_norm_features(int c, int h, int w, Rng& rng) {
    std::vector<float> d(static_cast<size_t>(c) * h * w);
    for (auto& v : d) v = static_cast<float>(rng.normal());
    for (int i = 0; i < h * w; ++i) {
        double norm = 0.0;
        for (int ch = 0; ch < c; ++ch) {
            float v = d[static_cast<size_t>(ch) * h * w + i];
            norm += static_cast<double>(v) * v;
        }
        norm = std::sqrt(norm);
        for (int ch = 0; ch < c; ++ch)
            d[static_cast<size_t>(ch) * h * w + i] =
                static_cast<float>(d[static_cast<size_t>(ch) * h * w + i] / norm);
    }
    return Tensor::from_data({1, c, h, w}, std::move(d));
}

}  // namespace

TEST_CASE("encode: shape, divisibility, determinism, weight sensitivity") {
    FlowModel model(tiny_config(1));
    Image img = noise_image(12, 8, 5);
    Tensor feat = model.encode(image_to_tensor(img));
    CHECK(feat.shape() == Shape{1, 6, 4, 6});

    CHECK_THROWS(model.encode(image_to_tensor(noise_image(11, 8, 5))));

    Tensor feat2 = model.encode(image_to_tensor(img));
    CHECK(feat.data() == feat2.data());  // bitwise

    // Perturbing a weight changes the features: the map is not constant.
    FlowModel perturbed(tiny_config(1));
    std::vector<Tensor> params = perturbed.parameters();
    std::vector<float> w0 = params[0].data();
    w0[0] += 0.05f;
    params[0] = Tensor::from_data(params[0].shape(), w0, true);
    perturbed.set_parameters(params);
    CHECK(perturbed.encode(image_to_tensor(img)).data() != feat.data());
}

TEST_CASE("correlation: self-similarity peaks at the center offset") {
    FlowModel model(tiny_config(2));
    Rng rng(7);
    Tensor feat = unit_norm_features(6, 5, 5, rng);
    Tensor flow = Tensor::zeros({1, 2, 5, 5});
    Tensor corr = model.correlation_lookup(feat, feat, flow);
    int win = 3 * 3;
    CHECK(corr.shape() == Shape{1, win, 5, 5});
    int center = win / 2;
    for (int p = 0; p < 25; ++p) {
        float center_v = corr.data()[static_cast<size_t>(center) * 25 + p];
        for (int o = 0; o < win; ++o)
            CHECK(corr.data()[static_cast<size_t>(o) * 25 + p] <= center_v + 1e-6f);
    }
}

TEST_CASE("correlation: orthogonal features give zero everywhere") {
    FlowModel model(tiny_config(2));
    std::vector<float> e1(static_cast<size_t>(6) * 16, 0.0f);
    std::vector<float> e2(static_cast<size_t>(6) * 16, 0.0f);
    for (int i = 0; i < 16; ++i) {
        e1[static_cast<size_t>(0) * 16 + i] = 1.0f;  // channel 0 only
        e2[static_cast<size_t>(1) * 16 + i] = 1.0f;  // channel 1 only
    }
    Tensor f1 = Tensor::from_data({1, 6, 4, 4}, e1);
    Tensor f2 = Tensor::from_data({1, 6, 4, 4}, e2);
    Tensor corr = model.correlation_lookup(f1, f2, Tensor::zeros({1, 2, 4, 4}));
    for (float v : corr.data()) CHECK(v == 0.0f);
}

TEST_CASE("correlation matches a brute-force windowed all-pairs oracle on 6x6") {
    FlowModel model(tiny_config(3));
    Rng rng(9);
    int c = 6, h = 6, w = 6, r = 1;
    Tensor f1 = unit_norm_features(c, h, w, rng);
    Tensor f2 = unit_norm_features(c, h, w, rng);
    Tensor corr = model.correlation_lookup(f1, f2, Tensor::zeros({1, 2, h, w}));

    // Independent scalar loop: clamped integer lookups, channel dot, 1/sqrt(C).
    int win = 2 * r + 1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int o = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx, ++o) {
                    int sx = std::clamp(x + dx, 0, w - 1);
                    int sy = std::clamp(y + dy, 0, h - 1);
                    double expect = 0.0;
                    for (int ch = 0; ch < c; ++ch)
                        expect += static_cast<double>(
                                      f1.data()[(static_cast<size_t>(ch) * h + y) * w + x]) *
                                  f2.data()[(static_cast<size_t>(ch) * h + sy) * w + sx];
                    expect /= std::sqrt(static_cast<double>(c));
                    float got = corr.data()[(static_cast<size_t>(o) * h + y) * w + x];
                    CHECK(got == doctest::Approx(expect).epsilon(1e-4));
                }
            CHECK(o == win * win);
        }
}

TEST_CASE("zero increment head leaves the flow at zero through all iterations") {
    FlowModel model(tiny_config(4));
    std::vector<Tensor> params = model.parameters();
    const auto& names = model.parameter_names();
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == "head.flow.w" || names[i] == "head.flow.b")
            params[i] = Tensor::zeros(params[i].shape(), true);
    model.set_parameters(params);

    Image a = noise_image(12, 12, 1), b = noise_image(12, 12, 2);
    ModelOutput out = model.forward(a, b);
    for (const auto& flow : out.flows)
        for (float v : flow.data()) CHECK(v == 0.0f);
}

TEST_CASE("forward: output lists, extents, determinism, asymmetry") {
    ModelConfig cfg = tiny_config(5);
    FlowModel model(cfg);
    Image a = noise_image(16, 12, 11), b = noise_image(16, 12, 12);
    ModelOutput out = model.forward(a, b);

    CHECK(out.flows.size() == static_cast<size_t>(cfg.iterations));
    CHECK(out.occ_logits.size() == static_cast<size_t>(cfg.iterations));
    for (int i = 0; i < cfg.iterations; ++i) {
        CHECK(out.flows[static_cast<size_t>(i)].shape() == Shape{1, 2, 12, 16});
        CHECK(out.occ_logits[static_cast<size_t>(i)].shape() == Shape{1, 1, 12, 16});
    }

    // Same weights and inputs: bitwise identical output.
    ModelOutput again = model.forward(a, b);
    for (size_t i = 0; i < out.flows.size(); ++i)
        CHECK(out.flows[i].data() == again.flows[i].data());

    // Same config hash implies same init: a fresh model agrees bitwise.
    FlowModel twin(cfg);
    ModelOutput twin_out = twin.forward(a, b);
    CHECK(out.flows.back().data() == twin_out.flows.back().data());

    // Swapping the pair generally changes the answer.
    ModelOutput swapped = model.forward(b, a);
    CHECK(out.flows.back().data() != swapped.flows.back().data());

    CHECK_THROWS(model.forward(a, noise_image(8, 8, 1)));
}

TEST_CASE("occlusion outputs are finite logits with probabilities inside (0,1)") {
    FlowModel model(tiny_config(6));
    Image a = noise_image(12, 12, 3), b = noise_image(12, 12, 4);
    ModelOutput out = model.forward(a, b);
    for (size_t i = 0; i < out.occ_logits.size(); ++i) {
        for (float v : out.occ_logits[i].data()) CHECK(std::isfinite(v));
        Tensor prob = out.occ_prob(i);
        for (float v : prob.data()) {
            CHECK(v > 0.0f);
            CHECK(v < 1.0f);
        }
    }
}

TEST_CASE("parameter count is reported and stable for a fixed config") {
    FlowModel a(tiny_config(7)), b(tiny_config(8));
    CHECK(a.parameter_count() == b.parameter_count());
    CHECK(a.parameter_count() > 0);

    // Hand count for the tiny config: conv kernels plus biases.
    int f = 6, hid = 8, ctx = hid + f, win = 9, gru_in = hid + win + 2 + f;
    int64_t expect = 0;
    expect += static_cast<int64_t>(f) * 3 * 9 + f;        // fenc1
    expect += static_cast<int64_t>(f) * f * 9 + f;        // fenc2
    expect += static_cast<int64_t>(ctx) * 3 * 9 + ctx;    // cenc1
    expect += static_cast<int64_t>(ctx) * ctx * 9 + ctx;  // cenc2
    expect += 2 * (static_cast<int64_t>(hid) * gru_in * 9 + hid);
    expect += static_cast<int64_t>(2) * (hid + win + 2) * 9 + 2;  // flow head
    expect += static_cast<int64_t>(1) * win * 9 + 1;      // occ head reads the cost slice
    CHECK(a.parameter_count() == expect);
}

TEST_CASE("checkpoint round-trip is bitwise and hash mismatches are rejected") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "octc_ckpt_test";
    fs::create_directories(dir);
    std::string path = (dir / "model.bin").string();

    ModelConfig cfg = tiny_config(9);
    FlowModel model(cfg);
    save_checkpoint(path, model, 0xabcdef, 123);

    FlowModel loaded(cfg);
    CheckpointMeta meta = load_checkpoint(path, loaded);
    CHECK(meta.steps == 123);
    CHECK(meta.run_hash == 0xabcdef);
    for (size_t i = 0; i < model.parameters().size(); ++i)
        CHECK(model.parameters()[i].data() == loaded.parameters()[i].data());

    // Mismatched model config (different seed changes the hash).
    FlowModel other(tiny_config(10));
    CHECK_THROWS(load_checkpoint(path, other));

    // Corrupt magic.
    std::string bad = (dir / "bad.bin").string();
    std::ofstream os(bad, std::ios::binary);
    os << "NOTACKPTxxxxxxxxxxxxxxxx";
    os.close();
    CHECK_THROWS(load_checkpoint(bad, loaded));
    CHECK_THROWS(read_checkpoint_meta(bad));
    fs::remove_all(dir);
}

TEST_CASE("end-to-end gradients through the iterative model") {
    ModelConfig cfg = tiny_config(11);
    Image a = noise_image(8, 8, 21), b = noise_image(8, 8, 22);
    FlowField gt(8, 8);
    Rng rng(23);
    for (auto& v : gt.data) v = static_cast<float>(rng.uniform(2.0, 4.0));
    OcclusionMask gt_mask(8, 8, 1);
    for (int x = 0; x < 8; ++x) gt_mask.at(x, 3) = 0;
    LossConfig loss_cfg;

    // Flow and occlusion terms together reach every parameter.
    FlowModel probe(cfg);
    auto f = [&](const std::vector<Tensor>& params) {
        FlowModel m(cfg);
        m.set_parameters(params);
        ModelOutput out = m.forward(a, b);
        Tensor base = sequence_loss(out.flows, gt, nullptr, loss_cfg);
        std::vector<Tensor> probs;
        for (size_t i = 0; i < out.occ_logits.size(); ++i) probs.push_back(out.occ_prob(i));
        Tensor mm = mask_match_loss(probs, gt_mask, loss_cfg);
        return base + 0.1f * mm;
    };
    GradCheckReport r = grad_check(f, probe.parameters(), 5e-3, 1e-3, 4, 99);
    INFO("model grad err ", r.max_rel_err, " failure ", r.failure);
    CHECK(r.pass);
}
