#include "support.hpp"
#include "waxsep/scene.hpp"
#include "waxsep/stats.hpp"

#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

using namespace waxsep;
using waxsep::testing::slurp;
using waxsep::testing::TempDir;

namespace {

std::size_t count_class(const GroundTruthScene& s, TruthClass c) {
    return static_cast<std::size_t>(std::count(s.labels.begin(), s.labels.end(), c));
}


}  // namespace

TEST_CASE("coverage 0.6 with seed 7 lands within two points") {
    SceneSpec spec;
    spec.wax_coverage = 0.6;
    spec.seed = 7;
    const auto s = render_scene(spec);
    CHECK(s.wax_proportion_true >= 0.58);
    CHECK(s.wax_proportion_true <= 0.62);
    const double counted = static_cast<double>(count_class(s, TruthClass::wax)) /
                           static_cast<double>(count_class(s, TruthClass::wax) + count_class(s, TruthClass::nowax));
    CHECK(counted == doctest::Approx(s.wax_proportion_true).epsilon(1e-12));
}

TEST_CASE("coverage targets are met across seeds") {
    for (double target : {0.1, 0.35, 0.5, 0.8}) {
        for (std::uint64_t seed = 1; seed <= 4; ++seed) {
            SceneSpec spec;
            spec.wax_coverage = target;
            spec.seed = seed;
            CHECK(std::abs(render_scene(spec).wax_proportion_true - target) <= 0.02);
        }
    }
}

TEST_CASE("zero coverage plants no wax") {
    SceneSpec spec;
    spec.wax_coverage = 0.0;
    const auto s = render_scene(spec);
    CHECK(count_class(s, TruthClass::wax) == 0);
    CHECK(s.wax_proportion_true == 0.0);
}

TEST_CASE("rendering is deterministic per seed") {
    SceneSpec spec;
    spec.seed = 42;
    spec.noise_sigma = 0.01;
    spec.pedicle = true;
    const auto a = render_scene(spec);
    const auto b = render_scene(spec);
    CHECK(a.labels == b.labels);
    CHECK(std::equal(a.direct_map.data().begin(), a.direct_map.data().end(), b.direct_map.data().begin()));
    const auto pa = generate_patterns(spec.width, spec.height);
    const auto ca = simulate_capture(a, pa, spec);
    const auto cb = simulate_capture(b, pa, spec);
    CHECK(std::equal(ca.pattern_stack[12].data().begin(), ca.pattern_stack[12].data().end(),
                     cb.pattern_stack[12].data().begin()));
}

TEST_CASE("berry labels stay inside the disk") {
    SceneSpec spec;
    spec.seed = 3;
    spec.pedicle = true;
    const auto s = render_scene(spec);
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x)
            if (s.is_berry(x, y)) REQUIRE(inside_disk(spec.center_x, spec.center_y, spec.radius, x, y));
}

TEST_CASE("scene invariants are enforced") {
    SceneSpec spec;
    spec.center_x = spec.radius + 1.0;
    CHECK_THROWS_WITH_AS(render_scene(spec), doctest::Contains("margin"), Error);
    spec = SceneSpec{};
    spec.wax_coverage = 1.5;
    CHECK_THROWS_AS(render_scene(spec), Error);
    spec = SceneSpec{};
    spec.ambient_b = 1.0;
    CHECK_THROWS_AS(render_scene(spec), Error);
}

TEST_CASE("image formation on a fully lit pixel") {
    SceneSpec spec;
    spec.ambient_b = 0.0;
    spec.noise_sigma = 0.0;
    const auto s = render_scene(spec);
    const auto p = generate_patterns(spec.width, spec.height);
    const auto cap = simulate_capture(s, p, spec);
    const int x = static_cast<int>(spec.center_x), y = static_cast<int>(spec.center_y);
    for (int k = 0; k < kPatternCount; ++k) {
        const double expect = (p.lit(k, x, y) ? 1.0 : 0.0) * s.direct_map.at(x, y, 1) + s.global_map.at(x, y, 1) / 2;
        CHECK(cap.pattern_stack[static_cast<std::size_t>(k)].at(x, y, 1) == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK(cap.standard.at(x, y, 0) == doctest::Approx(s.direct_map.at(x, y, 0) + s.global_map.at(x, y, 0)));
    CHECK(cap.parallel.at(x, y, 2) ==
          doctest::Approx(s.specular_map.at(x, y, 2) + s.diffuse_map.at(x, y, 2) / 2));
    CHECK(cap.perpendicular.at(x, y, 2) == doctest::Approx(s.diffuse_map.at(x, y, 2) / 2));
    CHECK_THROWS_AS(simulate_capture(s, generate_patterns(64, 64), spec), Error);
}

TEST_CASE("black value recovers the planted ambient level") {
    SceneSpec spec;
    spec.ambient_b = 0.03;
    spec.noise_sigma = 0.005;
    spec.seed = 12;
    const auto s = render_scene(spec);
    const auto cap = simulate_capture(s, generate_patterns(spec.width, spec.height), spec);
    CHECK(std::abs(estimate_black_value(cap.black_capture).b_value - 0.03) <= 0.002);
}

TEST_CASE("noiseless polarization closed loop") {
    SceneSpec spec;
    spec.noise_sigma = 0.0;
    const auto s = render_scene(spec);
    const auto cap = simulate_capture(s, generate_patterns(spec.width, spec.height), spec);
    const auto pol = separate_polarization(cap.parallel, cap.perpendicular);
    CHECK(waxsep::testing::rmse(pol.diffuse, s.diffuse_map) < 1e-6);
    CHECK(waxsep::testing::rmse(pol.specular, s.specular_map) < 1e-6);
}

TEST_CASE("impedance line") {
    std::mt19937_64 rng(1);
    CultivarProfile p;
    p.alpha = 1.0;
    p.beta = 0.1;
    p.sigma_z = 0.0;
    CHECK(synthesize_impedance(0.5, p, rng).z_rel_cw == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(synthesize_impedance(0.0, p, rng).z_rel_cw == doctest::Approx(0.1).epsilon(1e-12));
    p.beta = -1.0;
    CHECK(synthesize_impedance(0.2, p, rng).z_rel_cw == 0.0);
    CHECK_THROWS_AS(synthesize_impedance(1.2, p, rng), Error);
}

TEST_CASE("solved impedance noise reaches the planted correlation") {
    const auto profiles = default_profiles(0.76);
    CHECK(profiles.size() == 6);
    CHECK(profiles.front().name == "Morio Muskat");
    double lowest = 1.0, highest = 0.0;
    for (const auto& p : profiles) {
        lowest = std::min(lowest, p.coverage_mean);
        highest = std::max(highest, p.coverage_mean);
    }
    CHECK(profiles.front().coverage_mean == lowest);
    CHECK(profiles[4].name == "Cabernet Sauvignon");
    CHECK(profiles[4].coverage_mean == highest);

    std::mt19937_64 rng(77);
    int within = 0;
    const int trials = 40;
    for (int t = 0; t < trials; ++t) {
        std::vector<double> cov, z;
        for (int i = 0; i < 270; ++i) {
            const auto& p = profiles[static_cast<std::size_t>(i % 6)];
            const double c =
                std::clamp(std::normal_distribution<double>(p.coverage_mean, p.coverage_spread)(rng), 0.0, 1.0);
            cov.push_back(c);
            z.push_back(synthesize_impedance(c, p, rng).z_rel_cw);
        }
        within += std::abs(pearson(cov, z).r - 0.76) <= 0.08;
    }
    CHECK(within >= trials - 1);
}

TEST_CASE("berries are deterministic in (seed, index)") {
    const auto profiles = default_profiles();
    DatasetOptions opt;
    const auto a = simulate_berry(profiles[2], 5, 99, opt);
    const auto b = simulate_berry(profiles[2], 5, 99, opt);
    const auto c = simulate_berry(profiles[2], 6, 99, opt);
    CHECK(a.id == b.id);
    CHECK(a.truth.labels == b.truth.labels);
    CHECK(a.impedance.z_rel_cw == b.impedance.z_rel_cw);
    CHECK(a.truth.labels != c.truth.labels);
}

TEST_CASE("truth sidecar rectangles reproduce the ground truth") {
    DatasetOptions opt;
    const auto berry = simulate_berry(default_profiles()[1], 0, 5, opt);
    const auto sidecar = truth_sidecar(berry, opt);
    CHECK(validate_sidecar(sidecar, opt.width, opt.height).empty());
    std::size_t berry_area = 0, wax_area = 0;
    for (const auto& r : sidecar.rectangles) {
        for (int y = r.y; y < r.y + r.height; ++y)
            for (int x = r.x; x < r.x + r.width; ++x) {
                const auto t = berry.truth.label(x, y);
                if (r.task == LabelTask::detection) REQUIRE(berry.truth.is_berry(x, y) == (r.cls == "berry"));
                if (r.task == LabelTask::segmentation && r.cls == "wax") REQUIRE(t == TruthClass::wax);
                if (r.task == LabelTask::segmentation && r.cls == "nowax") REQUIRE(t == TruthClass::nowax);
            }
        const auto area = static_cast<std::size_t>(r.width) * r.height;
        if (r.cls == "berry") berry_area += area;
        if (r.cls == "wax") wax_area += area;
    }
    CHECK(berry_area == count_class(berry.truth, TruthClass::wax) + count_class(berry.truth, TruthClass::nowax));
    CHECK(wax_area == count_class(berry.truth, TruthClass::wax));
}

TEST_CASE("dataset generation writes a complete, reproducible set") {
    TempDir a("ds_a"), b("ds_b");
    CultivarProfile p{"Riesling", 0.5, 0.1, 1.0, 0.2, 0.05, {0.55, 0.68, 0.30}};
    DatasetOptions opt;
    const auto m = generate_dataset(a.path(), 1, {p}, 4, opt);
    REQUIRE(m.entries.size() == 1);
    const auto dir = a.path() / m.entries[0].directory;
    for (const char* f : {"standard.png", "black.png", "parallel.png", "perpendicular.png", "labels.json", "truth.png"})
        CHECK(std::filesystem::exists(dir / f));
    for (int i = 0; i < kPatternCount; ++i) CHECK(std::filesystem::exists(dir / capture_files::pattern(i)));
    const auto loaded = load_manifest(a / "manifest.json");
    CHECK(loaded.entries[0].impedance.has_value());

    generate_dataset(b.path(), 1, {p}, 4, opt);
    CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
    CHECK(slurp(dir / "pattern_07.png") == slurp(b.path() / m.entries[0].directory / "pattern_07.png"));
    CHECK_THROWS_AS(generate_dataset(b.path(), 0, {p}, 4, opt), Error);
}

TEST_CASE("six profiles of 45 give 270 manifest entries") {
    TempDir dir("ds270");
    DatasetOptions opt;
    opt.width = 40;
    opt.height = 40;
    opt.min_radius = 8;
    opt.max_radius = 10;
    const auto m = generate_dataset(dir.path(), 45, default_profiles(), 1, opt);
    CHECK(m.entries.size() == 270);
    CHECK(load_manifest(dir / "manifest.json").entries.size() == 270);
}
