#pragma once

#include "waxsep/capture.hpp"
#include "waxsep/labels.hpp"
#include "waxsep/lightsep.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace waxsep {

struct Rgb {
    double r = 0.0, g = 0.0, b = 0.0;
};

/// Reflectance contrasts of the synthetic berry skin. Free parameters: the
/// simulator has no measured optical model of wax to draw on.
struct SkinOptics {
    double skin_direct = 0.40;       // body reflectance share reaching the camera directly
    double skin_sheen = 0.06;        // grey surface sheen on wax-free skin (direct)
    double wax_scatter = 0.22;       // whitish scattering added by wax (direct)
    double skin_global = 0.55;       // subsurface share, wax-free
    double wax_global = 0.45;        // subsurface share under wax
    double skin_diffuse_offset = 0.04;
    double wax_diffuse_offset = 0.30;
    double skin_specular = 0.14;
    double wax_specular = 0.02;
    double highlight = 0.9;          // specular lobe peak on wax-free skin
    double wax_highlight = 0.05;
    double highlight_exponent = 40.0;
};

struct SceneSpec {
    int width = 160;
    int height = 128;
    double center_x = 80.0;
    double center_y = 64.0;
    double radius = 36.0;
    Rgb base_color{0.55, 0.68, 0.30};
    double wax_coverage = 0.5;
    double wax_patch_scale = 12.0;
    bool pedicle = false;
    double background_level = 0.03;
    double ambient_b = 0.03;    // black level: fraction of full projector output leaking from dark cells
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    SkinOptics optics{};

    /// Throws waxsep::Error on invariant violations.
    void validate() const;
};

/// Per-pixel ground truth classes of a rendered scene.
enum class TruthClass : std::uint8_t { wax = 0, nowax = 1, background = 2, pedicle = 3 };

struct GroundTruthScene {
    int width = 0;
    int height = 0;
    RasterImage direct_map;
    RasterImage global_map;
    RasterImage diffuse_map;
    RasterImage specular_map;
    std::vector<TruthClass> labels;  // row-major
    double wax_proportion_true = 0.0;

    TruthClass label(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    bool is_berry(int x, int y) const {
        const auto c = label(x, y);
        return c == TruthClass::wax || c == TruthClass::nowax;
    }
};

/// Pixel (x, y) belongs to the disk iff (x-cx)^2 + (y-cy)^2 <= r^2.
bool inside_disk(double cx, double cy, double r, int x, int y) noexcept;

GroundTruthScene render_scene(const SceneSpec& spec);

/// Image formation for every capture of the set (noise N(0, sigma) per sample):
///   pattern k  = (lit ? 1 : b) * direct + (1 + b)/2 * global
///   standard   = direct + global
///   parallel   = specular + diffuse / 2
///   perpendicular = diffuse / 2
///   black      = b
CaptureSet simulate_capture(const GroundTruthScene& scene, const PatternSet& patterns, const SceneSpec& spec);

struct CultivarProfile {
    std::string name;
    double coverage_mean = 0.5;
    double coverage_spread = 0.1;
    double alpha = 1.0;  // impedance slope
    double beta = 0.2;   // impedance intercept
    double sigma_z = 0.0;
    Rgb base_color{0.55, 0.68, 0.30};

    void validate() const;
};

/// z = alpha * proportion + beta + N(0, sigma_z), truncated at zero.
ImpedanceRecord synthesize_impedance(double wax_proportion, const CultivarProfile& profile, std::mt19937_64& rng,
                                     std::string berry_id = {});

/// Six cultivars with coverage means ordered Morio Muskat (lowest) ...
/// Cabernet Sauvignon (highest). sigma_z is solved so that the pooled
/// proportion/impedance correlation equals `target_rho`.
std::vector<CultivarProfile> default_profiles(double target_rho = 0.76);

/// Noise level giving population correlation rho between the pooled coverage
/// mixture and alpha * coverage + beta + noise (all profiles share alpha).
double solve_impedance_noise(const std::vector<CultivarProfile>& profiles, double rho);

struct DatasetOptions {
    int width = 160;
    int height = 128;
    double min_radius = 30.0;
    double max_radius = 44.0;
    double noise_sigma = 0.01;
    double ambient_b = 0.03;
    int cell_size = 8;
    int bit_depth = 8;
    double pedicle_probability = 0.5;
    double segmentation_margin = 1.25;  // label box half-size as a multiple of the radius
};

/// Everything the simulator knows about one synthetic berry.
struct SimulatedBerry {
    std::string id;
    std::string cultivar;
    SceneSpec spec;
    GroundTruthScene truth;
    CaptureSet capture;
    ImpedanceRecord impedance;
};

/// Deterministic in (seed, index): the RNG stream is derived from both, so
/// generation order does not matter.
SimulatedBerry simulate_berry(const CultivarProfile& profile, std::size_t index, std::uint64_t seed,
                              const DatasetOptions& options);

/// Perfect rectangle labels for both tasks derived from the ground truth.
LabelSidecar truth_sidecar(const SimulatedBerry& berry, const DatasetOptions& options);

IndexedImage truth_index_image(const GroundTruthScene& scene);
std::vector<TruthClass> truth_from_index_image(const IndexedImage& image);

/// Writes captures, label sidecars, ground-truth maps and manifest.json
/// under `out_dir`; returns the manifest as written.
DatasetManifest generate_dataset(const std::filesystem::path& out_dir, int n_per_cultivar,
                                 const std::vector<CultivarProfile>& profiles, std::uint64_t seed,
                                 const DatasetOptions& options = {});

}  // namespace waxsep
