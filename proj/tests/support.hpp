#pragma once

#include "waxsep/capture.hpp"
#include "waxsep/image.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <random>
#include <string>
#include <unistd.h>

namespace waxsep::testing {

/// Unique scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("waxsep_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline RasterImage random_image(int w, int h, int c, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    RasterImage img(w, h, c);
    for (auto& v : img.data()) v = u(rng);
    return img;
}

inline double max_abs_diff(const RasterImage& a, const RasterImage& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace waxsep::testing

#include "waxsep/lightsep.hpp"
#include "waxsep/scene.hpp"

namespace waxsep::testing {

inline double rmse(const RasterImage& a, const RasterImage& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(a.data().size()));
}

struct ClosedLoop {
    double direct_rmse = 0.0;
    double global_rmse = 0.0;
    double worst() const { return std::max(direct_rmse, global_rmse); }
};

/// Renders a scene, simulates its 25-pattern stack and inverts it with the
/// reference separation.
inline ClosedLoop closed_loop(double noise_sigma, std::uint64_t seed, double ambient_b = 0.03) {
    SceneSpec spec;
    spec.noise_sigma = noise_sigma;
    spec.ambient_b = ambient_b;
    spec.seed = seed;
    spec.wax_coverage = 0.4;
    const auto scene = render_scene(spec);
    const auto patterns = generate_patterns(spec.width, spec.height, 8);
    const auto cap = simulate_capture(scene, patterns, spec);
    const auto sep = separate_pattern_reference(cap.pattern_stack, estimate_black_value(cap.black_capture));
    return {rmse(sep.direct, scene.direct_map), rmse(sep.global, scene.global_map)};
}

}  // namespace waxsep::testing

#include "waxsep/dataset.hpp"
#include "waxsep/nn.hpp"

namespace waxsep::testing {

inline DatasetOptions small_options() {
    DatasetOptions opt;
    opt.width = 96;
    opt.height = 80;
    opt.min_radius = 20.0;
    opt.max_radius = 26.0;
    return opt;
}

/// First `cultivars` default profiles, `per_cultivar` berries each.
inline DatasetManifest small_dataset(const std::filesystem::path& dir, int per_cultivar, std::uint64_t seed,
                                     std::size_t cultivars = 2) {
    auto profiles = default_profiles();
    profiles.resize(cultivars);
    return generate_dataset(dir, per_cultivar, profiles, seed, small_options());
}

struct ModelPair {
    CnnModel berry;
    CnnModel wax;
};

/// Quick models trained on every labeled capture of the manifest.
inline ModelPair quick_models(const DatasetManifest& manifest, InputMode mode, long iterations = 600) {
    const auto sidecars = load_manifest_sidecars(manifest);
    TrainConfig cfg;
    cfg.iterations = iterations;
    cfg.batch_size = 64;
    const int c = channel_count(mode);
    ModelPair out{init_model(ModelKind::berry, c, 1), init_model(ModelKind::wax, c, 2)};
    train(out.berry, extract_training_pixels(manifest, sidecars, mode, LabelTask::detection, 1500, 3).samples, cfg);
    train(out.wax, extract_training_pixels(manifest, sidecars, mode, LabelTask::segmentation, 1500, 4).samples, cfg);
    return out;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace waxsep::testing
