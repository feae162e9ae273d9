#include <doctest.h>

#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "octc/flow.hpp"
#include "octc/rng.hpp"

using namespace octc;

namespace {

const std::array<TransformKind, 6> kAllKinds = {
    TransformKind::identity, TransformKind::hflip,   TransformKind::vflip,
    TransformKind::rot90cw,  TransformKind::rot180,  TransformKind::rot270cw};

FlowField random_flow(int w, int h, Rng& rng) {
    FlowField f(w, h);
    for (auto& v : f.data) v = static_cast<float>(rng.uniform(-5.0, 5.0));
    return f;
}

Image random_image(int w, int h, Rng& rng) {
    Image img(w, h, 1);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
    return img;
}

// Brute-force pixel-map oracle: independently enumerates where each source
// pixel must land for every transform kind, from first principles (flip =
// mirror index, quarter turns via (x,y) -> rotated lattice coordinates).
std::pair<int, int> oracle_map(TransformKind kind, int x, int y, int w, int h) {
    switch (kind) {
        case TransformKind::identity: return {x, y};
        case TransformKind::hflip: return {w - 1 - x, y};
        case TransformKind::vflip: return {x, h - 1 - y};
        case TransformKind::rot90cw: return {h - 1 - y, x};
        case TransformKind::rot180: return {w - 1 - x, h - 1 - y};
        case TransformKind::rot270cw: return {y, w - 1 - x};
    }
    return {x, y};
}

bool flows_bitwise_equal(const FlowField& a, const FlowField& b) {
    return a.width == b.width && a.height == b.height && a.data == b.data;
}

}  // namespace

TEST_CASE("transform_image examples") {
    Rng rng(1);
    Image img = random_image(4, 3, rng);
    CHECK(transform_image(img, GeoTransform(TransformKind::identity, 4, 3)).data == img.data);

    // hflip of a 2x1 row [a, b] -> [b, a]
    Image row(2, 1, 1);
    row.at(0, 0, 0) = 1.0f;
    row.at(0, 1, 0) = 2.0f;
    Image flipped = transform_image(row, GeoTransform(TransformKind::hflip, 2, 1));
    CHECK(flipped.at(0, 0, 0) == 2.0f);
    CHECK(flipped.at(0, 1, 0) == 1.0f);

    // rot90cw of [[a,b],[c,d]] -> [[c,a],[d,b]]
    Image sq(2, 2, 1);
    sq.at(0, 0, 0) = 1;  // a
    sq.at(0, 1, 0) = 2;  // b
    sq.at(0, 0, 1) = 3;  // c
    sq.at(0, 1, 1) = 4;  // d
    Image rot = transform_image(sq, GeoTransform(TransformKind::rot90cw, 2, 2));
    CHECK(rot.at(0, 0, 0) == 3);
    CHECK(rot.at(0, 1, 0) == 1);
    CHECK(rot.at(0, 0, 1) == 4);
    CHECK(rot.at(0, 1, 1) == 2);
}

TEST_CASE("pixel maps agree with the brute-force enumeration oracle") {
    int w = 5, h = 4;
    for (TransformKind kind : kAllKinds) {
        GeoTransform t(kind, w, h);
        std::map<std::pair<int, int>, int> hits;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                auto got = t.map_pixel(x, y);
                auto want = oracle_map(kind, x, y, w, h);
                CHECK(got == want);
                CHECK(got.first >= 0);
                CHECK(got.second >= 0);
                CHECK(got.first < t.dst_width());
                CHECK(got.second < t.dst_height());
                hits[got]++;
            }
        // Bijection: every destination pixel hit exactly once.
        CHECK(static_cast<int>(hits.size()) == w * h);
    }
}

TEST_CASE("jacobians are signed permutations undone by the inverse") {
    for (TransformKind kind : kAllKinds) {
        GeoTransform t(kind, 6, 6);
        auto j = t.jacobian();
        // Orthogonal with entries in {-1,0,1}: row norms 1, rows orthogonal.
        CHECK(j[0] * j[0] + j[1] * j[1] == 1);
        CHECK(j[2] * j[2] + j[3] * j[3] == 1);
        CHECK(j[0] * j[2] + j[1] * j[3] == 0);

        auto ji = t.inverse().jacobian();
        // J_inv * J == identity
        CHECK(ji[0] * j[0] + ji[1] * j[2] == 1);
        CHECK(ji[0] * j[1] + ji[1] * j[3] == 0);
        CHECK(ji[2] * j[0] + ji[3] * j[2] == 0);
        CHECK(ji[2] * j[1] + ji[3] * j[3] == 1);
    }
}

TEST_CASE("transform_flow examples") {
    // identity
    Rng rng(2);
    FlowField f = random_flow(6, 5, rng);
    CHECK(flows_bitwise_equal(transform_flow(f, GeoTransform(TransformKind::identity, 6, 5)), f));

    // hflip of 1x2 field [(1,0), (-2,3)] -> [(2,3), (-1,0)]
    FlowField row(2, 1);
    row.u(0, 0) = 1.0f;  row.v(0, 0) = 0.0f;
    row.u(1, 0) = -2.0f; row.v(1, 0) = 3.0f;
    FlowField hf = transform_flow(row, GeoTransform(TransformKind::hflip, 2, 1));
    CHECK(hf.u(0, 0) == 2.0f);
    CHECK(hf.v(0, 0) == 3.0f);
    CHECK(hf.u(1, 0) == -1.0f);
    CHECK(hf.v(1, 0) == 0.0f);

    // rot180 twice is the identity, exactly.
    GeoTransform r180(TransformKind::rot180, 6, 5);
    CHECK(flows_bitwise_equal(transform_flow(transform_flow(f, r180), r180), f));
}

TEST_CASE("commutation: g(P(p)) == J*f(p) for all kinds on random 8x8 fields") {
    Rng rng(3);
    for (TransformKind kind : kAllKinds) {
        for (int trial = 0; trial < 4; ++trial) {
            FlowField f = random_flow(8, 8, rng);
            GeoTransform t(kind, 8, 8);
            FlowField g = transform_flow(f, t);
            auto j = t.jacobian();
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) {
                    auto [xd, yd] = t.map_pixel(x, y);
                    float ju = static_cast<float>(j[0]) * f.u(x, y) +
                               static_cast<float>(j[1]) * f.v(x, y);
                    float jv = static_cast<float>(j[2]) * f.u(x, y) +
                               static_cast<float>(j[3]) * f.v(x, y);
                    CHECK(g.u(xd, yd) == ju);
                    CHECK(g.v(xd, yd) == jv);
                }
        }
    }
}

TEST_CASE("restore_flow round-trips bitwise on 100 random fields") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        TransformKind kind = kAllKinds[static_cast<size_t>(rng.uniform_int(0, 5))];
        int w = rng.uniform_int(3, 9), h = rng.uniform_int(3, 9);
        FlowField f = random_flow(w, h, rng);
        GeoTransform t(kind, w, h);
        CHECK(flows_bitwise_equal(restore_flow(transform_flow(f, t), t), f));
    }
    // identity restore leaves the field untouched
    FlowField f = random_flow(4, 4, rng);
    CHECK(flows_bitwise_equal(restore_flow(f, GeoTransform(TransformKind::identity, 4, 4)), f));
}

TEST_CASE("rot90cw restore equals a rot270cw transform (composition table)") {
    Rng rng(5);
    FlowField f = random_flow(6, 4, rng);
    GeoTransform r90(TransformKind::rot90cw, 6, 4);
    FlowField transformed = transform_flow(f, r90);  // now 4x6
    FlowField restored = restore_flow(transformed, r90);
    FlowField via270 =
        transform_flow(transformed, GeoTransform(TransformKind::rot270cw, 4, 6));
    CHECK(flows_bitwise_equal(restored, via270));
}

TEST_CASE("warp consistency: transformed pair of an integer translation") {
    // A pair whose exact flow is a constant integer translation (3, -2): the
    // flow of the transformed pair must equal transform_flow of the original.
    int w = 8, h = 8;
    int tu = 3, tv = -2;
    for (TransformKind kind : kAllKinds) {
        FlowField f(w, h);
        for (auto& v : f.data) v = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                f.u(x, y) = static_cast<float>(tu);
                f.v(x, y) = static_cast<float>(tv);
            }
        GeoTransform t(kind, w, h);
        // Analytic flow of (T(I_t), T(I_{t+1})): a translated scene transforms
        // into a scene translated by J*(tu,tv).
        auto j = t.jacobian();
        FlowField expected(t.dst_width(), t.dst_height());
        for (int y = 0; y < t.dst_height(); ++y)
            for (int x = 0; x < t.dst_width(); ++x) {
                expected.u(x, y) = static_cast<float>(j[0] * tu + j[1] * tv);
                expected.v(x, y) = static_cast<float>(j[2] * tu + j[3] * tv);
            }
        CHECK(flows_bitwise_equal(transform_flow(f, t), expected));
    }
}

TEST_CASE("epe examples and scalar-loop oracle") {
    Rng rng(6);
    FlowField gt = random_flow(7, 5, rng);
    CHECK(epe(gt, gt) == doctest::Approx(0.0));

    FlowField pred(7, 5), zero(7, 5);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 7; ++x) {
            pred.u(x, y) = 3.0f;
            pred.v(x, y) = 4.0f;
        }
    CHECK(epe(pred, zero) == doctest::Approx(5.0));

    // Mixed field against an independent scalar loop.
    FlowField a = random_flow(7, 5, rng), b = random_flow(7, 5, rng);
    double expect = 0.0;
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 7; ++x)
            expect += std::sqrt(std::pow(static_cast<double>(a.u(x, y)) - b.u(x, y), 2) +
                                std::pow(static_cast<double>(a.v(x, y)) - b.v(x, y), 2));
    expect /= 35.0;
    CHECK(epe(a, b) == doctest::Approx(expect).epsilon(1e-12));

    // Valid-mask variant and the empty-set rejection.
    OcclusionMask valid(7, 5, 0);
    CHECK_THROWS(epe(a, b, &valid));
    valid.at(2, 2) = 1;
    double single = std::sqrt(std::pow(static_cast<double>(a.u(2, 2)) - b.u(2, 2), 2) +
                              std::pow(static_cast<double>(a.v(2, 2)) - b.v(2, 2), 2));
    CHECK(epe(a, b, &valid) == doctest::Approx(single));
}

TEST_CASE("fl_outlier_rate applies both thresholds") {
    FlowField gt(2, 1), pred(2, 1);
    // gt=(100,0), pred=(96,0): error 4 > 3px but 4% of 100 <= 5% -> inlier
    gt.u(0, 0) = 100.0f;
    pred.u(0, 0) = 96.0f;
    // gt=(0,0), pred=(4,0): error 4 > 3px and > 5% of 0 -> outlier
    pred.u(1, 0) = 4.0f;
    CHECK(fl_outlier_rate(pred, gt) == doctest::Approx(0.5));

    OcclusionMask first_only(2, 1, 0);
    first_only.at(0, 0) = 1;
    CHECK(fl_outlier_rate(pred, gt, &first_only) == doctest::Approx(0.0));
    OcclusionMask second_only(2, 1, 0);
    second_only.at(1, 0) = 1;
    CHECK(fl_outlier_rate(pred, gt, &second_only) == doctest::Approx(1.0));

    CHECK(fl_outlier_rate(gt, gt) == doctest::Approx(0.0));
    OcclusionMask empty(2, 1, 0);
    CHECK_THROWS(fl_outlier_rate(pred, gt, &empty));
}

TEST_CASE("metrics are invariant under a joint transform of pred and gt") {
    Rng rng(7);
    FlowField pred = random_flow(8, 6, rng), gt = random_flow(8, 6, rng);
    double base_epe = epe(pred, gt);
    double base_fl = fl_outlier_rate(pred, gt);
    for (TransformKind kind : kAllKinds) {
        GeoTransform t(kind, 8, 6);
        CHECK(epe(transform_flow(pred, t), transform_flow(gt, t)) ==
              doctest::Approx(base_epe).epsilon(1e-12));
        CHECK(fl_outlier_rate(transform_flow(pred, t), transform_flow(gt, t)) ==
              doctest::Approx(base_fl).epsilon(1e-12));
    }
}

TEST_CASE("tensor-side transform matches the value-type transform and restores") {
    Rng rng(8);
    for (TransformKind kind : kAllKinds) {
        FlowField f = random_flow(6, 4, rng);
        GeoTransform t(kind, 6, 4);
        Tensor ft = flow_to_tensor(f, true);
        Tensor gt_tensor = t.apply_flow_tensor(ft);
        CHECK(flows_bitwise_equal(flow_from_tensor(gt_tensor), transform_flow(f, t)));
        CHECK(flows_bitwise_equal(flow_from_tensor(restore_flow_tensor(gt_tensor, t)), f));

        // The op is a signed permutation, so its gradient is too: grad-check it.
        auto fn = [&t](const std::vector<Tensor>& in) {
            return mean(square(t.apply_flow_tensor(in[0])));
        };
        CHECK(grad_check(fn, {ft}, 1e-3, 1e-3).pass);
    }
}

TEST_CASE("mask transform and round-trip conversions") {
    Rng rng(9);
    OcclusionMask m(5, 4, 1);
    m.at(1, 2) = 0;
    m.at(4, 0) = 0;
    GeoTransform t(TransformKind::rot90cw, 5, 4);
    OcclusionMask tm = t.apply(m);
    CHECK(tm.count(0) == 2);
    auto [xd, yd] = t.map_pixel(1, 2);
    CHECK(tm.at(xd, yd) == 0);

    FlowField f = random_flow(5, 4, rng);
    CHECK(flows_bitwise_equal(flow_from_tensor(flow_to_tensor(f)), f));
}
