#include "doctest.h"

#include "derainsplat/common/error.hpp"
#include "derainsplat/rain/rain.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace drs;
using namespace drs::rain;
using drs::test::bit_equal;
using drs::test::random_tensor;

namespace {

std::size_t count_nonzero(const Tensor& t) {
    std::size_t n = 0;
    for (double v : t.values()) n += v != 0.0;
    return n;
}

bool same_params(const StreakParams& a, const StreakParams& b) {
    return a.n == b.n && a.l == b.l && a.theta == b.theta && a.w == b.w && a.seed == b.seed;
}

}  // namespace

TEST_CASE("sample_streak_params: default ranges, collapsed intervals, determinism") {
    SceneRainConfig cfg;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        cfg.base_seed = seed * 7919;
        for (std::uint64_t v = 0; v < 5; ++v) {
            auto p = sample_streak_params(cfg, v);
            CHECK(p.n >= 100);
            CHECK(p.n <= 300);
            CHECK(p.l >= 20);
            CHECK(p.l <= 40);
            CHECK(p.theta >= 40.0);
            CHECK(p.theta <= 120.0);
            CHECK(p.w >= 3);
            CHECK(p.w <= 7);
            CHECK(same_params(p, sample_streak_params(cfg, v)));
        }
    }
    cfg.streaks.l = {20, 20};
    for (std::uint64_t v = 0; v < 50; ++v) CHECK(sample_streak_params(cfg, v).l == 20);

    cfg.streaks.l = {30, 20};
    CHECK_THROWS_AS(sample_streak_params(cfg, 0), ValidationError);
    cfg.streaks.l = {20.2, 20.8};
    CHECK_THROWS_AS(sample_streak_params(cfg, 0), ValidationError);
}

TEST_CASE("sample_streak_params: per-view seed is base_seed xor view_index") {
    SceneRainConfig cfg;
    cfg.base_seed = 0xabcdef;
    CHECK(sample_streak_params(cfg, 3).seed == (0xabcdefULL ^ 3ULL));
    CHECK_FALSE(same_params(sample_streak_params(cfg, 1), sample_streak_params(cfg, 2)));
}

TEST_CASE("gen_noise_layer: exact counts") {
    StreakParams p;
    p.n = 0;
    CHECK(count_nonzero(gen_noise_layer(p, 8, 9)) == 0);
    p.n = 72;
    Tensor full = gen_noise_layer(p, 8, 9);
    for (double v : full.values()) CHECK(v == 1.0);
    p.n = 150;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        p.seed = seed;
        Tensor t = gen_noise_layer(p, 256, 256);
        CHECK(count_nonzero(t) == 150);
        for (double v : t.values()) CHECK((v == 0.0 || v == 1.0));
    }
    p.n = 73;
    CHECK_THROWS_AS(gen_noise_layer(p, 8, 9), ValidationError);
}

TEST_CASE("build_motion_kernel: hand-built vertical line, normalization, symmetry") {
    Tensor k = build_motion_kernel(3, 90.0, 1);
    REQUIRE(k.shape() == ad::Shape{3, 3});
    for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 3; ++x) CHECK(k[y * 3 + x] == (x == 1 ? 1.0 / 3.0 : 0.0));

    Tensor kh = build_motion_kernel(5, 0.0, 1);
    for (std::size_t x = 0; x < 5; ++x) CHECK(kh[2 * 5 + x] == doctest::Approx(0.2));

    CHECK(build_motion_kernel(20, 45.0, 3).shape() == ad::Shape{21, 21});

    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const int l = static_cast<int>(rng.integer(1, 40));
        const int w = static_cast<int>(rng.integer(1, 7));
        const double theta = rng.uniform(-200.0, 400.0);
        Tensor a = build_motion_kernel(l, theta, w);
        double s = 0.0;
        for (double v : a.values()) {
            s += v;
            CHECK(v >= 0.0);
        }
        CHECK(std::fabs(s - 1.0) < 1e-12);
        CHECK(bit_equal(a, build_motion_kernel(l, theta + 180.0, w)));
    }
    CHECK_THROWS_AS(build_motion_kernel(0, 90.0, 1), ValidationError);
}

TEST_CASE("synth_streaks: empty layer, single streak, monotone") {
    Rng rng(2);
    Tensor bg = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    StreakParams p;
    p.n = 0;
    p.l = 21;
    p.w = 3;
    CHECK(bit_equal(synth_streaks(bg, p).rainy, bg));

    // find a seed whose single noise pixel is away from the border
    Tensor black({3, 9, 9}, 0.0);
    p = {1, 3, 90.0, 1, 0};
    for (;; ++p.seed) {
        Tensor n = gen_noise_layer(p, 9, 9);
        std::size_t at = 0;
        while (n[at] == 0.0) ++at;
        const std::size_t y = at / 9, x = at % 9;
        if (y == 0 || y == 8 || x == 0 || x == 8) continue;
        const double gain = 0.75;
        auto r = synth_streaks(black, p, gain);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < 81; ++i) {
                const bool on = (i % 9 == x) && (i / 9 + 1 >= y) && (i / 9 <= y + 1);
                CHECK(r.rainy[c * 81 + i] == (on ? gain / 3.0 : 0.0));
            }
        break;
    }

    for (std::uint64_t s = 0; s < 10; ++s) {
        StreakParams q{40, 7, 70.0, 3, s};
        auto r = synth_streaks(bg, q, 2.0);
        for (std::size_t i = 0; i < bg.numel(); ++i) CHECK(r.rainy[i] >= bg[i]);
        for (double v : r.layer.values()) CHECK((v >= 0.0 && v <= 1.0));
    }
}

TEST_CASE("gen_drop_field: empty, area of a single drop, determinism, shape") {
    Rng rng(3);
    Tensor bg = random_tensor({3, 64, 64}, rng, 0.0, 1.0);
    auto empty = gen_drop_field(1, bg, 0, {3, 6});
    CHECK(count_nonzero(empty.mask) == 0);
    CHECK(count_nonzero(empty.appearance) == 0);

    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        auto f = gen_drop_field(seed, bg, 1, {5, 5});
        const auto area = count_nonzero(f.mask);
        CHECK(area >= 69);
        CHECK(area <= 90);
    }

    auto a = gen_drop_field(42, bg, 6, {2, 5});
    auto b = gen_drop_field(42, bg, 6, {2, 5});
    CHECK(bit_equal(a.mask, b.mask));
    CHECK(bit_equal(a.appearance, b.appearance));
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 64 * 64; ++i) {
            if (a.mask[i] == 0.0) CHECK(a.appearance[c * 4096 + i] == 0.0);
            CHECK((a.mask[i] == 0.0 || a.mask[i] == 1.0));
        }

    // layout is independent of the background (lens-fixed)
    Tensor bg2 = random_tensor({3, 64, 64}, rng, 0.0, 1.0);
    CHECK(bit_equal(gen_drop_field(42, bg2, 6, {2, 5}).mask, a.mask));

    CHECK_THROWS_AS(gen_drop_field(0, Tensor({3, 10, 10}, 0.5), 1, {6, 6}), ValidationError);
}

TEST_CASE("composite_drops: exact against direct evaluation") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor bg = random_tensor({3, 32, 32}, rng, 0.0, 1.0);
        auto field = gen_drop_field(static_cast<std::uint64_t>(trial), bg, 5, {2, 6});
        Tensor out = composite_drops(bg, field);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < 1024; ++i) {
                const double m = field.mask[i];
                const double want = (1.0 - m) * bg[c * 1024 + i] + field.appearance[c * 1024 + i];
                CHECK(out[c * 1024 + i] == want);
                if (m == 0.0) CHECK(out[c * 1024 + i] == bg[c * 1024 + i]);
            }
    }
    Tensor bg = random_tensor({3, 8, 8}, rng);
    DropField full;
    full.mask = Tensor({1, 8, 8}, 1.0);
    full.appearance = random_tensor({3, 8, 8}, rng);
    CHECK(bit_equal(composite_drops(bg, full), full.appearance));
    full.mask = Tensor({1, 7, 8}, 1.0);
    CHECK_THROWS_AS(composite_drops(bg, full), DimensionError);
}

TEST_CASE("apply_scene_rain: scene consistency and determinism") {
    Rng rng(5);
    Tensor bg = random_tensor({3, 32, 32}, rng, 0.0, 1.0);
    SceneRainConfig cfg;
    cfg.mode = RainMode::both;
    cfg.base_seed = 99;
    cfg.streaks = {{10, 30}, {5, 9}, {60, 80}, {1, 3}};
    cfg.drop_count = 3;
    cfg.drop_radius = {2, 4};
    auto v0 = apply_scene_rain(cfg, bg, 0);
    auto v0b = apply_scene_rain(cfg, bg, 0);
    auto v1 = apply_scene_rain(cfg, bg, 1);
    CHECK(bit_equal(v0.image, v0b.image));
    CHECK(bit_equal(v0.drop_mask, v1.drop_mask));
    CHECK_FALSE(bit_equal(v0.streaks, v1.streaks));
    for (const auto* v : {&v0, &v1}) {
        CHECK(v->params.n >= 10);
        CHECK(v->params.n <= 30);
        CHECK(v->params.l >= 5);
        CHECK(v->params.l <= 9);
    }
    CHECK(parse_rain_mode("drop") == RainMode::drop);
    CHECK_THROWS_AS(parse_rain_mode("snow"), ValidationError);
}
