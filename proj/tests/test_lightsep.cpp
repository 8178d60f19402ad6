#include "support.hpp"
#include "waxsep/lightsep.hpp"

#include <doctest.h>

using namespace waxsep;
using waxsep::testing::random_image;

namespace {

std::vector<RasterImage> constant_stack(int w, int h, double lo, double hi) {
    std::vector<RasterImage> stack(kPatternCount, RasterImage(w, h, 1, (lo + hi) / 2));
    stack[3] = RasterImage(w, h, 1, lo);
    stack[19] = RasterImage(w, h, 1, hi);
    return stack;
}

BlackLevel level(double b) { return {b, RasterImage(1, 1, 1, b)}; }

}  // namespace

TEST_CASE("pattern offsets use stride ceil(cell/4)") {
    const auto p = generate_patterns(64, 64, 8);
    CHECK(p.shift_stride() == 2);
    for (int iy = 0; iy < 5; ++iy)
        for (int ix = 0; ix < 5; ++ix) {
            CHECK(p.offsets()[static_cast<std::size_t>(iy * 5 + ix)].dx == 2 * ix);
            CHECK(p.offsets()[static_cast<std::size_t>(iy * 5 + ix)].dy == 2 * iy);
        }
    CHECK(generate_patterns(40, 40, 5).shift_stride() == 2);
    CHECK(generate_patterns(40, 40, 12).shift_stride() == 3);
}

TEST_CASE("top-left cell is transparent in the unshifted mask") {
    const auto p = generate_patterns(16, 16, 8);
    CHECK(p.lit(0, 0, 0));
    CHECK(!p.lit(0, 8, 0));
    CHECK(p.lit(0, 8, 8));
    CHECK(p.mask(0).at(0, 0, 0) == 1.0);
}

TEST_CASE("every pixel is lit and dark somewhere (exhaustive 64x64)") {
    for (int cell : {1, 2, 4, 8, 16}) {
        const auto p = generate_patterns(64, 64, cell);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                bool lit = false, dark = false;
                for (int k = 0; k < kPatternCount; ++k) (p.lit(k, x, y) ? lit : dark) = true;
                REQUIRE((lit && dark));
            }
    }
}

TEST_CASE("pattern coverage sampled at HD size") {
    const auto p = generate_patterns(1920, 1080, 8);
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> ux(0, 1919), uy(0, 1079);
    for (int i = 0; i < 5000; ++i) {
        const int x = ux(rng), y = uy(rng);
        int lit = 0;
        for (int k = 0; k < kPatternCount; ++k) lit += p.lit(k, x, y);
        REQUIRE(lit > 0);
        REQUIRE(lit < kPatternCount);
    }
}

TEST_CASE("degenerate pattern dimensions") {
    CHECK_THROWS_AS(generate_patterns(15, 64, 8), Error);
    CHECK_THROWS_AS(generate_patterns(64, 64, 0), Error);
}

TEST_CASE("black value is the mean of the black capture") {
    CHECK(estimate_black_value(RasterImage(4, 3, 3, 0.0)).b_value == 0.0);
    CHECK(estimate_black_value(RasterImage(4, 3, 3, 0.05)).b_value == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("as-written formulas by substitution") {
    auto out = separate_pattern_as_written(constant_stack(2, 2, 0.2, 0.8), level(0.5));
    CHECK(out.direct.at(1, 1, 0) == doctest::Approx(1.8).epsilon(1e-12));
    CHECK(out.global.at(1, 1, 0) == doctest::Approx(0.4).epsilon(1e-12));

    out = separate_pattern_as_written(constant_stack(2, 2, 0.5, 0.5), level(0.5));
    CHECK(out.direct.at(0, 0, 0) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(out.global.at(0, 0, 0) == doctest::Approx(0.0));

    CHECK_THROWS_AS(separate_pattern_as_written(constant_stack(2, 2, 0.2, 0.8), level(1.0)), Error);
    CHECK_THROWS_AS(separate_pattern_as_written(constant_stack(2, 2, 0.2, 0.8), level(-1.0)), Error);
}

TEST_CASE("reference formulas by substitution") {
    auto out = separate_pattern_reference(constant_stack(2, 2, 0.2, 0.8), level(0.0));
    CHECK(out.direct.at(0, 1, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(out.global.at(0, 1, 0) == doctest::Approx(0.4).epsilon(1e-12));

    out = separate_pattern_reference(constant_stack(2, 2, 0.3, 0.3), level(0.0));
    CHECK(out.direct.at(0, 0, 0) == 0.0);
    CHECK(out.global.at(0, 0, 0) == doctest::Approx(0.6).epsilon(1e-12));

    CHECK_THROWS_AS(separate_pattern_reference(constant_stack(2, 2, 0.2, 0.8), level(1.0)), Error);
}

TEST_CASE("with b = 0 the reference split satisfies direct + global = max + min") {
    std::mt19937_64 rng(21);
    for (int t = 0; t < 10; ++t) {
        std::vector<RasterImage> stack;
        for (int k = 0; k < kPatternCount; ++k) stack.push_back(random_image(6, 5, 3, rng));
        const auto out = separate_pattern_reference(stack, level(0.0));
        for (std::size_t i = 0; i < out.direct.data().size(); ++i) {
            double lo = 1e9, hi = -1e9;
            for (const auto& img : stack) {
                lo = std::min(lo, img.data()[i]);
                hi = std::max(hi, img.data()[i]);
            }
            REQUIRE(std::abs(out.direct.data()[i] + out.global.data()[i] - (hi + lo)) < 1e-9);
        }
    }
}

TEST_CASE("separation is pure and reports negative samples") {
    std::mt19937_64 rng(8);
    std::vector<RasterImage> stack;
    for (int k = 0; k < kPatternCount; ++k) stack.push_back(random_image(5, 5, 1, rng));
    const auto a = separate_pattern_as_written(stack, level(0.4));
    const auto b = separate_pattern_as_written(stack, level(0.4));
    CHECK(std::equal(a.direct.data().begin(), a.direct.data().end(), b.direct.data().begin()));
    const auto r = separate_pattern_reference(stack, level(0.9));
    CHECK(r.negative_fraction > 0.0);
    CHECK(r.negative_fraction <= 1.0);
}

TEST_CASE("stack errors") {
    std::vector<RasterImage> short_stack(24, RasterImage(2, 2, 1));
    CHECK_THROWS_WITH_AS(separate_pattern_reference(short_stack, level(0.0)), doctest::Contains("25"), Error);
    std::vector<RasterImage> mixed(kPatternCount, RasterImage(2, 2, 1));
    mixed[7] = RasterImage(3, 2, 1);
    CHECK_THROWS_WITH_AS(separate_pattern_as_written(mixed, level(0.0)), doctest::Contains("dimension mismatch"),
                         Error);
}

TEST_CASE("polarization by substitution") {
    const auto out = separate_polarization(RasterImage(1, 1, 1, 0.9), RasterImage(1, 1, 1, 0.3));
    CHECK(out.diffuse.at(0, 0, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(out.specular.at(0, 0, 0) == doctest::Approx(0.6).epsilon(1e-12));

    std::mt19937_64 rng(3);
    const auto par = random_image(4, 4, 3, rng);
    const auto zero = separate_polarization(par, RasterImage(4, 4, 3, 0.0));
    CHECK(waxsep::testing::max_abs_diff(zero.specular, par) == 0.0);
    CHECK_THROWS_AS(separate_polarization(par, RasterImage(4, 3, 3)), Error);
}

TEST_CASE("polarization identity holds on random pairs") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 20; ++t) {
        const auto par = random_image(8, 8, 3, rng, -0.5, 1.5);
        const auto perp = random_image(8, 8, 3, rng, -0.5, 1.5);
        const auto out = separate_polarization(par, perp);
        for (std::size_t i = 0; i < par.data().size(); ++i) {
            REQUIRE(std::abs(out.specular.data()[i] + out.diffuse.data()[i] / 2 - par.data()[i]) <= 1e-9);
            REQUIRE(out.diffuse.data()[i] == 2 * perp.data()[i]);
        }
    }
}

TEST_CASE("separate_capture fills the requested halves") {
    const auto spec = [] {
        SceneSpec s;
        s.noise_sigma = 0.0;
        return s;
    }();
    const auto scene = render_scene(spec);
    const auto cap = simulate_capture(scene, generate_patterns(spec.width, spec.height), spec);
    auto res = separate_capture(cap, SeparationMode::pattern, SeparationResult::Formulation::reference);
    CHECK(res.direct.has_value());
    CHECK(!res.diffuse.has_value());
    CHECK(res.b_value == doctest::Approx(spec.ambient_b));
    res = separate_capture(cap, SeparationMode::both, SeparationResult::Formulation::as_written);
    CHECK(res.direct.has_value());
    CHECK(res.specular.has_value());
    CHECK(res.formulation == SeparationResult::Formulation::as_written);
    clamp_nonnegative(res);
    for (double v : res.direct->data()) REQUIRE(v >= 0.0);
    CHECK_THROWS_AS(parse_separation_mode("both-ish"), Error);
}

TEST_CASE("noiseless closed loop recovers the planted maps") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto loop = waxsep::testing::closed_loop(0.0, seed);
        CHECK(loop.direct_rmse < 1e-6);
        CHECK(loop.global_rmse < 1e-6);
    }
}
