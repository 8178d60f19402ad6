#include "waxsep/scene.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>

namespace waxsep {

namespace {
std::mt19937_64 seeded_rng(std::initializer_list<std::uint32_t> words) {
    std::seed_seq seq(words);
    return std::mt19937_64(seq);
}
}  // namespace

namespace {

constexpr std::array<PaletteColor, 4> kTruthPalette{{
    {0, 255, 0},     // wax
    {255, 0, 0},     // nowax
    {0, 0, 255},     // background
    {139, 90, 43},   // pedicle
}};

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Smooth lattice value noise in [0,1].
class ValueNoise {
public:
    ValueNoise(int width, int height, double cell, std::mt19937_64& rng)
        : cell_(std::max(cell, 1.0)),
          nx_(static_cast<int>(width / cell_) + 3),
          ny_(static_cast<int>(height / cell_) + 3),
          lattice_(static_cast<std::size_t>(nx_) * ny_) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (double& v : lattice_) v = u(rng);
    }

    double operator()(double x, double y) const {
        const double gx = x / cell_;
        const double gy = y / cell_;
        const int ix = static_cast<int>(std::floor(gx));
        const int iy = static_cast<int>(std::floor(gy));
        const double tx = smoothstep(gx - ix);
        const double ty = smoothstep(gy - iy);
        const double a = at(ix, iy), b = at(ix + 1, iy), c = at(ix, iy + 1), d = at(ix + 1, iy + 1);
        return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
    }

private:
    double at(int ix, int iy) const {
        ix = std::clamp(ix, 0, nx_ - 1);
        iy = std::clamp(iy, 0, ny_ - 1);
        return lattice_[static_cast<std::size_t>(iy) * nx_ + ix];
    }

    double cell_;
    int nx_;
    int ny_;
    std::vector<double> lattice_;
};

void set_rgb(RasterImage& img, int x, int y, Rgb v) {
    img.at(x, y, 0) = v.r;
    img.at(x, y, 1) = v.g;
    img.at(x, y, 2) = v.b;
}

Rgb scale(Rgb c, double s) { return {c.r * s, c.g * s, c.b * s}; }
Rgb add(Rgb c, double s) { return {c.r + s, c.g + s, c.b + s}; }

std::string slug(const std::string& name) {
    std::string out;
    for (char ch : name) {
        if (std::isalnum(static_cast<unsigned char>(ch)))
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        else if (!out.empty() && out.back() != '-')
            out += '-';
    }
    while (!out.empty() && out.back() == '-') out.pop_back();
    return out;
}

}  // namespace

bool inside_disk(double cx, double cy, double r, int x, int y) noexcept {
    const double dx = x - cx;
    const double dy = y - cy;
    return dx * dx + dy * dy <= r * r;
}

void SceneSpec::validate() const {
    if (width <= 0 || height <= 0) throw Error("scene size must be positive");
    if (!(radius > 0.0)) throw Error("berry radius must be positive");
    if (center_x - radius < 2.0 || center_y - radius < 2.0 || center_x + radius > width - 3.0 ||
        center_y + radius > height - 3.0)
        throw Error("berry circle must lie inside the frame with a 2-pixel margin");
    if (wax_coverage < 0.0 || wax_coverage > 1.0) throw Error("wax coverage must lie in [0,1]");
    if (!(wax_patch_scale > 0.0)) throw Error("wax patch scale must be positive");
    if (ambient_b < 0.0 || ambient_b >= 1.0) throw Error("ambient black level must lie in [0,1)");
    if (noise_sigma < 0.0) throw Error("noise sigma must be non-negative");
}

GroundTruthScene render_scene(const SceneSpec& spec) {
    spec.validate();
    const int w = spec.width;
    const int h = spec.height;
    GroundTruthScene scene;
    scene.width = w;
    scene.height = h;
    scene.direct_map = RasterImage(w, h, 3);
    scene.global_map = RasterImage(w, h, 3);
    scene.diffuse_map = RasterImage(w, h, 3);
    scene.specular_map = RasterImage(w, h, 3);
    scene.labels.assign(static_cast<std::size_t>(w) * h, TruthClass::background);

    const double cx = spec.center_x, cy = spec.center_y, r = spec.radius;

    // Pedicle: short stem over the top of the berry.
    const double stem_half_w = std::max(1.0, r / 10.0);
    const double stem_h = std::max(3.0, r / 3.0);
    auto in_pedicle = [&](int x, int y) {
        return spec.pedicle && std::abs(x - cx) <= stem_half_w && y >= cy - r - stem_h / 2 && y <= cy - r + stem_h / 2;
    };

    std::vector<std::size_t> berry_pixels;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto idx = static_cast<std::size_t>(y) * w + x;
            if (in_pedicle(x, y))
                scene.labels[idx] = TruthClass::pedicle;
            else if (inside_disk(cx, cy, r, x, y)) {
                scene.labels[idx] = TruthClass::nowax;
                berry_pixels.push_back(idx);
            }
        }

    // Wax texture: two octaves of value noise, thresholded so the waxed share
    // of the berry surface matches the target.
    auto rng = seeded_rng({static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                                      0x5741u});
    const ValueNoise coarse(w, h, spec.wax_patch_scale, rng);
    const ValueNoise fine(w, h, spec.wax_patch_scale / 2.0, rng);
    std::vector<double> texture(berry_pixels.size());
    for (std::size_t i = 0; i < berry_pixels.size(); ++i) {
        const int x = static_cast<int>(berry_pixels[i] % w);
        const int y = static_cast<int>(berry_pixels[i] / w);
        texture[i] = 0.65 * coarse(x, y) + 0.35 * fine(x, y);
    }
    auto share_above = [&](double t) {
        std::size_t n = 0;
        for (double v : texture) n += v >= t;
        return texture.empty() ? 0.0 : static_cast<double>(n) / texture.size();
    };
    double threshold = 2.0;  // nothing waxed
    if (spec.wax_coverage >= 1.0) {
        threshold = -1.0;
    } else if (spec.wax_coverage > 0.0) {
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 60; ++it) {
            threshold = 0.5 * (lo + hi);
            const double share = share_above(threshold);
            if (std::abs(share - spec.wax_coverage) <= 0.002) break;
            (share > spec.wax_coverage ? lo : hi) = threshold;
        }
    }
    std::size_t wax_count = 0;
    for (std::size_t i = 0; i < berry_pixels.size(); ++i)
        if (texture[i] >= threshold) {
            scene.labels[berry_pixels[i]] = TruthClass::wax;
            ++wax_count;
        }
    scene.wax_proportion_true =
        berry_pixels.empty() ? 0.0 : static_cast<double>(wax_count) / static_cast<double>(berry_pixels.size());

    // Shading: Lambertian sphere lit from the upper left, Phong highlight.
    const double lnorm = std::sqrt(0.35 * 0.35 + 0.45 * 0.45 + 1.0);
    const double lx = -0.35 / lnorm, ly = -0.45 / lnorm, lz = 1.0 / lnorm;
    const auto& o = spec.optics;
    const Rgb c = spec.base_color;
    const double bg = spec.background_level;
    const Rgb stem{0.40, 0.30, 0.15};

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto label = scene.labels[static_cast<std::size_t>(y) * w + x];
            if (label == TruthClass::background) {
                set_rgb(scene.direct_map, x, y, {0.4 * bg, 0.4 * bg, 0.4 * bg});
                set_rgb(scene.global_map, x, y, {0.6 * bg, 0.6 * bg, 0.6 * bg});
                set_rgb(scene.diffuse_map, x, y, {bg, bg, bg});
                set_rgb(scene.specular_map, x, y, {0.1 * bg, 0.1 * bg, 0.1 * bg});
                continue;
            }
            if (label == TruthClass::pedicle) {
                set_rgb(scene.direct_map, x, y, scale(stem, 0.5));
                set_rgb(scene.global_map, x, y, scale(stem, 0.3));
                set_rgb(scene.diffuse_map, x, y, scale(stem, 0.6));
                set_rgb(scene.specular_map, x, y, {0.03, 0.03, 0.03});
                continue;
            }
            const double nx = (x - cx) / r, ny = (y - cy) / r;
            const double nz = std::sqrt(std::max(0.0, 1.0 - nx * nx - ny * ny));
            const double ndotl = std::max(0.0, nx * lx + ny * ly + nz * lz);
            const double shade = 0.35 + 0.65 * ndotl;
            // reflect L about n, dot with view (0,0,1)
            const double rz = 2.0 * ndotl * nz - lz;
            const double lobe = std::pow(std::max(0.0, rz), o.highlight_exponent);
            if (label == TruthClass::wax) {
                set_rgb(scene.direct_map, x, y, add(scale(add(scale(c, o.skin_direct), o.wax_scatter), shade), o.wax_highlight * lobe));
                set_rgb(scene.global_map, x, y, scale(c, o.wax_global * shade));
                set_rgb(scene.diffuse_map, x, y, scale(add(scale(c, 0.45), o.wax_diffuse_offset), shade));
                const double s = o.wax_specular * shade + o.wax_highlight * lobe;
                set_rgb(scene.specular_map, x, y, {s, s, s});
            } else {
                set_rgb(scene.direct_map, x, y, add(scale(add(scale(c, o.skin_direct), o.skin_sheen), shade), o.highlight * lobe));
                set_rgb(scene.global_map, x, y, scale(c, o.skin_global * shade));
                set_rgb(scene.diffuse_map, x, y, scale(add(scale(c, 0.45), o.skin_diffuse_offset), shade));
                const double s = o.skin_specular * shade + o.highlight * lobe;
                set_rgb(scene.specular_map, x, y, {s, s, s});
            }
        }
    return scene;
}

CaptureSet simulate_capture(const GroundTruthScene& scene, const PatternSet& patterns, const SceneSpec& spec) {
    if (patterns.width() != scene.width || patterns.height() != scene.height)
        throw Error("dimension mismatch: pattern set vs scene");
    const int w = scene.width, h = scene.height;
    const double b = spec.ambient_b;
    auto rng = seeded_rng({static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                                      0x4E01u});
    std::normal_distribution<double> noise(0.0, 1.0);
    const double sigma = spec.noise_sigma;
    auto noisy = [&](double v) { return sigma > 0.0 ? v + sigma * noise(rng) : v; };

    CaptureSet cap;
    cap.standard = RasterImage(w, h, 3);
    cap.black_capture = RasterImage(w, h, 3);
    cap.parallel = RasterImage(w, h, 3);
    cap.perpendicular = RasterImage(w, h, 3);

    const auto direct = scene.direct_map.data();
    const auto global = scene.global_map.data();
    const auto diffuse = scene.diffuse_map.data();
    const auto specular = scene.specular_map.data();
    {
        auto std_img = cap.standard.data();
        auto blk = cap.black_capture.data();
        auto par = cap.parallel.data();
        auto perp = cap.perpendicular.data();
        for (std::size_t i = 0; i < std_img.size(); ++i) std_img[i] = noisy(direct[i] + global[i]);
        for (std::size_t i = 0; i < blk.size(); ++i) blk[i] = noisy(b);
        for (std::size_t i = 0; i < par.size(); ++i) par[i] = noisy(specular[i] + diffuse[i] / 2.0);
        for (std::size_t i = 0; i < perp.size(); ++i) perp[i] = noisy(diffuse[i] / 2.0);
    }

    cap.pattern_stack.reserve(kPatternCount);
    for (int k = 0; k < kPatternCount; ++k) {
        RasterImage img(w, h, 3);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double f = patterns.lit(k, x, y) ? 1.0 : b;
                for (int c = 0; c < 3; ++c) {
                    const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3 + c;
                    img.at(x, y, c) = noisy(f * direct[i] + 0.5 * (1.0 + b) * global[i]);
                }
            }
        cap.pattern_stack.push_back(std::move(img));
    }
    return cap;
}

void CultivarProfile::validate() const {
    if (coverage_spread < 0.0) throw Error("cultivar " + name + ": coverage spread must be >= 0");
    if (sigma_z < 0.0) throw Error("cultivar " + name + ": sigma_z must be >= 0");
}

ImpedanceRecord synthesize_impedance(double wax_proportion, const CultivarProfile& profile, std::mt19937_64& rng,
                                     std::string berry_id) {
    if (wax_proportion < 0.0 || wax_proportion > 1.0) throw Error("wax proportion must lie in [0,1]");
    double z = profile.alpha * wax_proportion + profile.beta;
    if (profile.sigma_z > 0.0) z += std::normal_distribution<double>(0.0, profile.sigma_z)(rng);
    return {std::move(berry_id), std::max(0.0, z)};
}

double solve_impedance_noise(const std::vector<CultivarProfile>& profiles, double rho) {
    if (profiles.empty()) throw Error("need at least one cultivar profile");
    if (!(rho > 0.0 && rho <= 1.0)) throw Error("target correlation must lie in (0,1]");
    double mean = 0.0, second = 0.0;
    for (const auto& p : profiles) {
        mean += p.coverage_mean;
        second += p.coverage_spread * p.coverage_spread + p.coverage_mean * p.coverage_mean;
    }
    mean /= static_cast<double>(profiles.size());
    second /= static_cast<double>(profiles.size());
    const double sd = std::sqrt(std::max(0.0, second - mean * mean));
    // rho = alpha sd / sqrt(alpha^2 sd^2 + sigma^2)
    return std::abs(profiles.front().alpha) * sd * std::sqrt(1.0 / (rho * rho) - 1.0);
}

std::vector<CultivarProfile> default_profiles(double target_rho) {
    const Rgb white{0.55, 0.68, 0.30};
    const Rgb red{0.36, 0.20, 0.38};
    std::vector<CultivarProfile> profiles{
        {"Morio Muskat", 0.12, 0.06, 1.0, 0.2, 0.0, white},
        {"Dakapo", 0.50, 0.15, 1.0, 0.2, 0.0, red},
        {"Seibel 7511", 0.70, 0.08, 1.0, 0.2, 0.0, red},
        {"Sauvignon Blanc", 0.50, 0.07, 1.0, 0.2, 0.0, white},
        {"Cabernet Sauvignon", 0.82, 0.06, 1.0, 0.2, 0.0, red},
        {"Riesling", 0.48, 0.15, 1.0, 0.2, 0.0, white},
    };
    const double sigma = solve_impedance_noise(profiles, target_rho);
    for (auto& p : profiles) p.sigma_z = sigma;
    return profiles;
}

SimulatedBerry simulate_berry(const CultivarProfile& profile, std::size_t index, std::uint64_t seed,
                              const DatasetOptions& options) {
    profile.validate();
    auto rng = seeded_rng({static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)});
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    SceneSpec spec;
    spec.width = options.width;
    spec.height = options.height;
    spec.radius = options.min_radius + (options.max_radius - options.min_radius) * unit(rng);
    const double lo_x = std::ceil(spec.radius + 2.0), hi_x = std::floor(spec.width - 3.0 - spec.radius);
    const double lo_y = std::ceil(spec.radius + 2.0), hi_y = std::floor(spec.height - 3.0 - spec.radius);
    if (hi_x < lo_x || hi_y < lo_y) throw Error("berry radius does not fit the configured image size");
    spec.center_x = std::min(hi_x, lo_x + std::floor((hi_x - lo_x + 1.0) * unit(rng)));
    spec.center_y = std::min(hi_y, lo_y + std::floor((hi_y - lo_y + 1.0) * unit(rng)));
    spec.base_color = profile.base_color;
    spec.wax_coverage = std::clamp(std::normal_distribution<double>(profile.coverage_mean, profile.coverage_spread)(rng), 0.0, 1.0);
    spec.wax_patch_scale = spec.radius * (0.25 + 0.2 * unit(rng));
    spec.pedicle = unit(rng) < options.pedicle_probability;
    spec.ambient_b = options.ambient_b;
    spec.noise_sigma = options.noise_sigma;
    spec.seed = rng();

    SimulatedBerry berry;
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "_%03zu", index);
    berry.id = slug(profile.name) + suffix;
    berry.cultivar = profile.name;
    berry.spec = spec;
    berry.truth = render_scene(spec);
    const PatternSet patterns = generate_patterns(spec.width, spec.height, options.cell_size);
    berry.capture = simulate_capture(berry.truth, patterns, spec);
    berry.capture.id = berry.id;
    berry.capture.cultivar = profile.name;
    berry.impedance = synthesize_impedance(berry.truth.wax_proportion_true, profile, rng, berry.id);
    berry.capture.impedance = berry.impedance;
    return berry;
}

LabelSidecar truth_sidecar(const SimulatedBerry& berry, const DatasetOptions& options) {
    const auto& t = berry.truth;
    std::vector<int> det(t.labels.size());
    std::vector<int> seg(t.labels.size());
    for (std::size_t i = 0; i < t.labels.size(); ++i) {
        const auto c = t.labels[i];
        const bool berry_px = c == TruthClass::wax || c == TruthClass::nowax;
        det[i] = berry_px ? detection_class::berry : detection_class::background;
        seg[i] = c == TruthClass::wax     ? segmentation_class::wax
                 : c == TruthClass::nowax ? segmentation_class::nowax
                                          : segmentation_class::other;
    }
    LabelSidecar sidecar;
    sidecar.capture_id = berry.id;
    sidecar.annotator = "simulator";
    sidecar.timestamp = "1970-01-01T00:00:00Z";
    sidecar.rectangles =
        rectangles_from_class_grid(det, t.width, t.height, {0, 0, t.width, t.height}, LabelTask::detection);
    const double half = options.segmentation_margin * berry.spec.radius;
    const Region box{static_cast<int>(std::floor(berry.spec.center_x - half)),
                     static_cast<int>(std::floor(berry.spec.center_y - half)),
                     static_cast<int>(std::ceil(2 * half)) + 1, static_cast<int>(std::ceil(2 * half)) + 1};
    auto seg_rects = rectangles_from_class_grid(seg, t.width, t.height, box, LabelTask::segmentation);
    sidecar.rectangles.insert(sidecar.rectangles.end(), seg_rects.begin(), seg_rects.end());
    return sidecar;
}

IndexedImage truth_index_image(const GroundTruthScene& scene) {
    IndexedImage img{scene.width, scene.height, {}};
    img.indices.reserve(scene.labels.size());
    for (auto c : scene.labels) img.indices.push_back(static_cast<std::uint8_t>(c));
    return img;
}

std::vector<TruthClass> truth_from_index_image(const IndexedImage& image) {
    std::vector<TruthClass> out;
    out.reserve(image.indices.size());
    for (auto v : image.indices) {
        if (v > 3) throw Error("ground-truth map holds an unknown class index");
        out.push_back(static_cast<TruthClass>(v));
    }
    return out;
}

DatasetManifest generate_dataset(const std::filesystem::path& out_dir, int n_per_cultivar,
                                 const std::vector<CultivarProfile>& profiles, std::uint64_t seed,
                                 const DatasetOptions& options) {
    if (n_per_cultivar < 1) throw Error("need at least one berry per cultivar");
    if (profiles.empty()) throw Error("need at least one cultivar profile");
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "captures", ec);
    if (ec) throw Error("unwritable output directory: " + out_dir.string());

    DatasetManifest manifest;
    manifest.seed = seed;
    manifest.root = out_dir;
    std::size_t index = 0;
    for (const auto& profile : profiles) {
        for (int i = 0; i < n_per_cultivar; ++i, ++index) {
            const SimulatedBerry berry = simulate_berry(profile, index, seed, options);
            const std::filesystem::path rel = std::filesystem::path("captures") / berry.id;
            const auto dir = out_dir / rel;
            save_capture(berry.capture, dir, options.bit_depth);
            save_sidecar_atomic(truth_sidecar(berry, options), dir / "labels.json");
            write_indexed_png(truth_index_image(berry.truth), kTruthPalette, dir / "truth.png");
            manifest.entries.push_back({berry.id, rel, berry.cultivar, berry.impedance.z_rel_cw,
                                        rel / "labels.json", rel / "truth.png"});
        }
    }
    save_manifest(manifest, out_dir / "manifest.json");
    return manifest;
}

}  // namespace waxsep
