#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "octc/cdf.hpp"
#include "octc/config.hpp"
#include "octc/rng.hpp"
#include "octc/trainer.hpp"
#include "octc/visual.hpp"

using namespace octc;
namespace fs = std::filesystem;

namespace {

fs::path test_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("octc_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

RunConfig tiny_run(Strategy strategy, uint64_t seed, const std::string& out) {
    RunConfig cfg = make_preset(strategy, seed);
    cfg.out_dir = out;
    cfg.image_width = 16;
    cfg.image_height = 16;
    cfg.model.feature_channels = 6;
    cfg.model.hidden_channels = 8;
    cfg.model.radius = 1;
    cfg.model.iterations = 2;
    cfg.loss.iterations = 2;
    cfg.train_sequences = 4;
    cfg.eval_sequences = 2;
    cfg.sprites_per_scene = 1;
    cfg.max_speed = 2;
    cfg.steps = 0;
    cfg.eval_every = 50;
    return cfg;
}

// Hue in degrees from RGB, the max/min chroma construction.
double hue_of(float r, float g, float b) {
    double M = std::max({r, g, b}), m = std::min({r, g, b});
    double c = M - m;
    if (c <= 0.0) return -1.0;  // achromatic
    double h;
    if (M == r) h = std::fmod((g - b) / c + 6.0, 6.0);
    else if (M == g) h = (b - r) / c + 2.0;
    else h = (r - g) / c + 4.0;
    return 60.0 * h;
}

}  // namespace

TEST_CASE("config round-trips through the key=value file format") {
    fs::path dir = test_dir("config");
    RunConfig cfg = make_preset(Strategy::octc, 7);
    cfg.steps = 123;
    cfg.learning_rate = 0.005;
    cfg.k_set = {1, 2};
    cfg.transforms = parse_transform_list("hflip,rot");
    cfg.loss.zero_star = true;
    cfg.out_dir = (dir / "run").string();

    std::string path = (dir / "config.txt").string();
    cfg.save(path);
    RunConfig loaded = RunConfig::load(path);
    CHECK(loaded.canonical() == cfg.canonical());
    CHECK(loaded.hash() == cfg.hash());

    // The output directory is excluded from the identity hash.
    RunConfig moved = loaded;
    moved.out_dir = "elsewhere";
    CHECK(moved.hash() == cfg.hash());
    CHECK(moved.canonical() != cfg.canonical());

    // Any other knob changes the hash.
    RunConfig tweaked = loaded;
    tweaked.loss.lambda2 = 0.5;
    CHECK(tweaked.hash() != cfg.hash());

    CHECK_THROWS(loaded.apply_line("no_such_key=1"));
    CHECK_THROWS(loaded.apply_line("garbage"));
    CHECK_THROWS(strategy_from_string("bogus"));
}

TEST_CASE("strategies map to exactly their active loss set") {
    ActiveLosses base = active_losses(Strategy::baseline);
    CHECK(base.base);
    CHECK_FALSE(base.zero_forcing);
    CHECK_FALSE(base.mask_match);
    CHECK_FALSE(base.transformation);

    ActiveLosses oc = active_losses(Strategy::oc);
    CHECK(oc.base);
    CHECK(oc.zero_forcing);
    CHECK(oc.mask_match);
    CHECK_FALSE(oc.transformation);

    ActiveLosses tc = active_losses(Strategy::tc);
    CHECK(tc.base);
    CHECK_FALSE(tc.zero_forcing);
    CHECK(tc.transformation);

    ActiveLosses octc_ = active_losses(Strategy::octc);
    CHECK(octc_.base);
    CHECK(octc_.zero_forcing);
    CHECK(octc_.mask_match);
    CHECK(octc_.transformation);

    // Table pairing: consistency presets see k in {1,2}, others k=1 only.
    CHECK(make_preset(Strategy::baseline, 0).k_set == std::vector<int>{1});
    CHECK(make_preset(Strategy::tc, 0).k_set == std::vector<int>{1, 2});
    CHECK(make_preset(Strategy::octc, 0).k_set == std::vector<int>{1, 2});
}

TEST_CASE("train with 0 steps leaves the random-init evaluation untouched") {
    fs::path dir = test_dir("zerosteps");
    RunConfig cfg = tiny_run(Strategy::baseline, 3, (dir / "run").string());
    TrainResult result = train(cfg);
    REQUIRE(result.evals.size() == 1);

    FlowModel fresh(cfg.model);
    EvalReport direct = evaluate_model(fresh, build_eval_data(cfg));
    CHECK(result.evals[0].second.epe == doctest::Approx(direct.epe));
    CHECK(result.evals[0].second.to_text() == direct.to_text());
    CHECK(fs::exists(cfg.out_dir + "/checkpoint.bin"));
    CHECK(fs::exists(cfg.out_dir + "/train.csv"));
}

TEST_CASE("logged components match the strategy's active set") {
    fs::path dir = test_dir("components");
    RunConfig base_cfg = tiny_run(Strategy::baseline, 4, (dir / "base").string());
    base_cfg.steps = 2;
    TrainResult base_run = train(base_cfg);
    for (const auto& log : base_run.steps) {
        CHECK(log.base.has_value());
        CHECK_FALSE(log.zero_forcing.has_value());
        CHECK_FALSE(log.mask_match.has_value());
        CHECK_FALSE(log.transformation.has_value());
    }
    {
        std::ifstream is(base_cfg.out_dir + "/train.csv");
        std::string header;
        std::getline(is, header);
        CHECK(header == "step,l_base,total");
    }

    RunConfig octc_cfg = tiny_run(Strategy::octc, 4, (dir / "octc").string());
    octc_cfg.k_set = {1};  // labeled every step, so all four components appear
    octc_cfg.steps = 2;
    TrainResult octc_run = train(octc_cfg);
    for (const auto& log : octc_run.steps) {
        CHECK(log.base.has_value());
        CHECK(log.zero_forcing.has_value());
        CHECK(log.mask_match.has_value());
        CHECK(log.transformation.has_value());
        CHECK_FALSE(log.tc_transform.empty());  // drawn transform is recorded
    }
    {
        std::ifstream is(octc_cfg.out_dir + "/train.csv");
        std::string header;
        std::getline(is, header);
        CHECK(header == "step,l_base,l_zf,l_mm,l_tr,tc_transform,total");
    }

    // Unlabeled k>1 pairs contribute no supervised term, only consistency.
    RunConfig hop_cfg = tiny_run(Strategy::octc, 4, (dir / "hop").string());
    hop_cfg.k_set = {2};
    hop_cfg.steps = 2;
    TrainResult hop_run = train(hop_cfg);
    for (const auto& log : hop_run.steps) {
        CHECK_FALSE(log.base.has_value());
        CHECK(log.zero_forcing.has_value());
        CHECK(log.transformation.has_value());
    }
}

TEST_CASE("zero-forcing loss decreases over a short self-supervised run") {
    fs::path dir = test_dir("zfrun");
    RunConfig cfg = tiny_run(Strategy::oc, 5, (dir / "run").string());
    cfg.zf_only = true;
    cfg.steps = 120;
    cfg.learning_rate = 0.05;
    cfg.eval_every = 120;
    TrainResult result = train(cfg);

    auto mean_zf = [&](size_t from, size_t to) {
        double acc = 0.0;
        for (size_t i = from; i < to; ++i) acc += *result.steps[i].zero_forcing;
        return acc / static_cast<double>(to - from);
    };
    double early = mean_zf(0, 10);
    double late = mean_zf(result.steps.size() - 10, result.steps.size());
    INFO("zf early ", early, " late ", late);
    CHECK(late < early);

    // The held-out zero-forcing EPE drops as well.
    CHECK(result.evals.back().second.zf_epe < result.evals.front().second.zf_epe);
}

TEST_CASE("evaluate: oracle predictor scores zero, zero predictor scores mean magnitude") {
    RunConfig cfg = tiny_run(Strategy::baseline, 6, "unused");
    EvalData data = build_eval_data(cfg);
    REQUIRE_FALSE(data.pairs.empty());

    // Perfect-oracle predictor: feed back the ground truth per pair.
    size_t cursor = 0;
    EvalReport perfect = evaluate_predictor(
        [&](const Image&, const Image&) { return data.pairs[cursor++].gt; }, data);
    CHECK(perfect.epe == doctest::Approx(0.0));
    CHECK(perfect.fl == doctest::Approx(0.0));

    // All-zero predictor: EPE equals the mean ground-truth magnitude.
    EvalReport zero = evaluate_predictor(
        [&](const Image& a, const Image&) { return FlowField(a.width, a.height); }, data);
    double mag_sum = 0.0;
    int64_t pixels = 0;
    for (const auto& p : data.pairs)
        for (int y = 0; y < p.gt.height; ++y)
            for (int x = 0; x < p.gt.width; ++x) {
                mag_sum += std::hypot(static_cast<double>(p.gt.u(x, y)),
                                      static_cast<double>(p.gt.v(x, y)));
                ++pixels;
            }
    CHECK(zero.epe == doctest::Approx(mag_sum / static_cast<double>(pixels)).epsilon(1e-9));
}

TEST_CASE("evaluation is deterministic and checkpoint hashes are enforced") {
    fs::path dir = test_dir("evaldet");
    RunConfig cfg = tiny_run(Strategy::oc, 8, (dir / "run").string());
    cfg.steps = 3;
    TrainResult result = train(cfg);

    EvalReport r1 = evaluate(cfg, result.checkpoint_path);
    EvalReport r2 = evaluate(cfg, result.checkpoint_path);
    CHECK(r1.to_text() == r2.to_text());  // byte-identical report

    RunConfig other = cfg;
    other.learning_rate = 0.123;  // different run identity
    CHECK_THROWS(evaluate(other, result.checkpoint_path));
}

TEST_CASE("flow rendering: zero flow is white, constant flow is one hue") {
    FlowField zero(8, 8);
    Image white = flow_to_color(zero);
    for (float v : white.data) CHECK(v == 1.0f);

    FlowField right(8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) right.u(x, y) = 2.5f;
    Image red = flow_to_color(right);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            CHECK(red.at(0, x, y) == red.at(0, 0, 0));
            CHECK(red.at(1, x, y) == red.at(1, 0, 0));
            CHECK(red.at(2, x, y) == red.at(2, 0, 0));
        }
    CHECK(hue_of(red.at(0, 0, 0), red.at(1, 0, 0), red.at(2, 0, 0)) == doctest::Approx(0.0));
}

TEST_CASE("pinwheel field runs the full hue cycle, against a per-pixel hue oracle") {
    int n = 32;
    FlowField wheel(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double theta = 2.0 * 3.14159265358979323846 *
                           ((static_cast<double>(y) * n + x) / (n * n));
            wheel.u(x, y) = static_cast<float>(3.0 * std::cos(theta));
            wheel.v(x, y) = static_cast<float>(3.0 * std::sin(theta));
        }
    Image img = flow_to_color(wheel);
    std::vector<bool> bins(12, false);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double expect = std::atan2(wheel.v(x, y), wheel.u(x, y)) * 180.0 / 3.14159265358979;
            if (expect < 0) expect += 360.0;
            double got = hue_of(img.at(0, x, y), img.at(1, x, y), img.at(2, x, y));
            REQUIRE(got >= 0.0);
            double diff = std::fabs(got - expect);
            diff = std::min(diff, 360.0 - diff);
            CHECK(diff < 1.0);
            bins[static_cast<size_t>(got / 30.0)] = true;
        }
    for (bool b : bins) CHECK(b);  // all 30-degree sectors hit
}

TEST_CASE("displacement CDF: steps, medians, and the sort-based oracle") {
    // Constant zero field: step CDF at 0.
    FlowField zero(6, 6);
    DisplacementCdf z = displacement_cdf({zero});
    for (size_t i = 0; i < z.grid.size(); ++i) {
        double expect = z.grid[i] >= 0 ? 1.0 : 0.0;
        CHECK(z.cdf_u[i] == expect);
        CHECK(z.cdf_v[i] == expect);
    }
    CHECK(z.median_u == 0.0);

    // v identically 5: CDF_v steps at 5 and median(v) = 5.
    FlowField five(6, 6);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) five.v(x, y) = 5.0f;
    DisplacementCdf c5 = displacement_cdf({five});
    CHECK(c5.median_v == 5.0);
    CHECK(c5.v_axis_asymmetric());
    for (size_t i = 0; i < c5.grid.size(); ++i)
        CHECK(c5.cdf_v[i] == (c5.grid[i] >= 5 ? 1.0 : 0.0));

    // Mixture field against an independent sort-based empirical CDF.
    Rng rng(15);
    FlowField mix(10, 10);
    for (auto& v : mix.data) {
        double r = rng.uniform();
        if (r < 0.05) v = static_cast<float>(rng.uniform(150.0, 300.0));  // outliers
        else v = static_cast<float>(rng.uniform(-40.0, 40.0));
    }
    DisplacementCdf got = displacement_cdf({mix});
    std::vector<float> us, vs;
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) {
            if (mix.u(x, y) >= -100.0f && mix.u(x, y) <= 100.0f) us.push_back(mix.u(x, y));
            if (mix.v(x, y) >= -100.0f && mix.v(x, y) <= 100.0f) vs.push_back(mix.v(x, y));
        }
    std::sort(us.begin(), us.end());
    std::sort(vs.begin(), vs.end());
    for (size_t i = 0; i < got.grid.size(); ++i) {
        double eu = 0, ev = 0;
        for (float u : us) eu += (u <= static_cast<float>(got.grid[i]));
        for (float v : vs) ev += (v <= static_cast<float>(got.grid[i]));
        CHECK(got.cdf_u[i] == eu / static_cast<double>(us.size()));  // exact
        CHECK(got.cdf_v[i] == ev / static_cast<double>(vs.size()));
    }
    CHECK(got.excluded_u + got.excluded_v > 0);

    CHECK_THROWS(displacement_cdf({}));
}

TEST_CASE("cdf csv and plot render without surprises") {
    FlowField f(8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            f.u(x, y) = static_cast<float>(x - 4);
            f.v(x, y) = static_cast<float>(y);
        }
    DisplacementCdf cdf = displacement_cdf({f});
    std::string csv = cdf_to_csv(cdf);
    CHECK(csv.rfind("value,cdf_u,cdf_v\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 202);  // header + 201 rows

    Image plot = plot_cdf(cdf);
    CHECK(plot.width == 640);
    CHECK(plot.height == 480);

    fs::path dir = test_dir("plot");
    write_png((dir / "cdf.png").string(), plot);
    CHECK(fs::file_size(dir / "cdf.png") > 100);
}
