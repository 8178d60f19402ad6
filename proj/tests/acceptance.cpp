// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include "nn_data.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "waxsep/detect.hpp"
#include "waxsep/evaluate.hpp"
#include "waxsep/pipeline.hpp"

#include <cstdio>
#include <functional>
#include <map>

using namespace waxsep;
namespace wt = waxsep::testing;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Outcome polarization_identity() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1001);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const auto par = wt::random_image(64, 64, 3, rng, -0.2, 1.2);
        const auto perp = wt::random_image(64, 64, 3, rng, -0.2, 1.2);
        const auto out = separate_polarization(par, perp);
        for (std::size_t k = 0; k < par.data().size(); ++k)
            worst = std::max(worst, std::abs(out.specular.data()[k] + out.diffuse.data()[k] / 2 - par.data()[k]));
    }
    const double secs = wt::seconds_since(t0);
    return {worst <= 1e-9 && secs < 5.0, fmt("max |specular + diffuse/2 - parallel| = %.3g (<= 1e-9), %.2f s (< 5 s)", worst, secs)};
}

Outcome as_written_fidelity() {
    std::mt19937_64 rng(1002);
    std::uniform_real_distribution<double> ub(0.0, 0.9);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        std::vector<RasterImage> stack;
        for (int k = 0; k < kPatternCount; ++k) stack.push_back(wt::random_image(8, 8, i % 2 ? 3 : 1, rng));
        const double b = ub(rng);
        const auto got = separate_pattern_as_written(stack, {b, RasterImage(1, 1, 1, b)});
        RasterImage d, g;
        wt::scalar_as_written(stack, b, d, g);
        worst = std::max({worst, wt::max_abs_diff(got.direct, d), wt::max_abs_diff(got.global, g)});
    }
    return {worst < 1e-6, fmt("max |vectorized - scalar loop| = %.3g over 50 stacks (< 1e-6)", worst)};
}

Outcome closed_loop() {
    const auto t0 = Clock::now();
    double clean = 0.0, noisy = 0.0, noisy_direct = 0.0, noisy_global = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        clean = std::max(clean, wt::closed_loop(0.0, seed).worst());
        const auto n = wt::closed_loop(0.01, seed);
        noisy = std::max(noisy, n.worst());
        noisy_direct = std::max(noisy_direct, n.direct_rmse);
        noisy_global = std::max(noisy_global, n.global_rmse);
    }
    const double secs = wt::seconds_since(t0);
    return {clean < 1e-6 && noisy <= 0.02 && secs < 30.0,
            fmt("noiseless RMSE %.3g (< 1e-6); sigma=0.01 RMSE %.4f (direct %.4f, global %.4f; <= 0.02); %.1f s (< 30 s)",
                clean, noisy, noisy_direct, noisy_global, secs)};
}

Outcome pattern_coverage() {
    const auto p = generate_patterns(64, 64, 8);
    std::size_t bad = 0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            int lit = 0;
            for (int k = 0; k < kPatternCount; ++k) lit += p.lit(k, x, y);
            bad += lit == 0 || lit == kPatternCount;
        }
    return {bad == 0, fmt("%zu of 4096 pixels lack a lit or a dark mask", bad)};
}

Outcome gradient_check_all() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::size_t retries = 0;
    int runs = 0;
    const int channels[] = {3, 6, 15};
    for (std::uint64_t seed = 1; seed <= 20; ++seed)
        for (auto kind : {ModelKind::berry, ModelKind::wax}) {
            const int c = channels[seed % 3];
            std::mt19937_64 rng(seed * 7919 + static_cast<std::uint64_t>(kind));
            const auto model = init_model(kind, c, seed);
            const auto batch = wt::random_batch(model.architecture(), 4, rng);
            const auto r = gradient_check(model, batch);
            worst = std::max(worst, r.max_relative_error);
            retries += r.kink_retries;
            ++runs;
        }
    const double secs = wt::seconds_since(t0);
    return {worst < 1e-4 && secs < 60.0,
            fmt("%d models (20 seeds x berry/wax), max relative error %.3g (< 1e-4), %zu kink re-probes, %.1f s (< 60 s)",
                runs, worst, retries, secs)};
}

Outcome training_sanity() {
    auto model = init_model(ModelKind::berry, 3, 2024);
    // class bands [0.1, 0.4] and [0.6, 0.9] of the crop mean
    const auto data = wt::separable_batch(model.architecture(), 10'000, 2025, 0.1);
    TrainConfig cfg;
    cfg.iterations = 5000;
    const auto t0 = Clock::now();
    train(model, data, cfg);
    const double acc = accuracy(model, data);
    TrainConfig full;
    full.schedule_scale = 1.0;
    const double l0 = full.learning_rate(0), l1 = full.learning_rate(50'000), l2 = full.learning_rate(100'000);
    const bool schedule = std::abs(l0 - 1e-4) < 1e-15 && std::abs(l1 - 1e-5) < 1e-16 && std::abs(l2 - 1e-6) < 1e-17;
    return {acc >= 0.99 && schedule,
            fmt("train accuracy %.4f on 10k samples after 5000 iterations (>= 0.99, %.1f s); lr at 0/50k/100k = %.0e/%.0e/%.0e", acc,
                wt::seconds_since(t0), l0, l1, l2)};
}

Outcome detector_soundness() {
    const auto t0 = Clock::now();
    const int w = 64, h = 64;
    std::size_t scenes = 0, missed = 0;
    double worst_cover = 1.0, worst_area = 0.0;
    std::string worst_case;
    for (double r = 2.0; r <= 31.0; r += 0.5)
        for (int cy = static_cast<int>(std::ceil(r)); cy + r <= h - 1; ++cy)
            for (int cx = static_cast<int>(std::ceil(r)); cx + r <= w - 1; ++cx) {
                ++scenes;
                OracleSensorClassifier oracle(w, h, [&](int x, int y) { return inside_disk(cx, cy, r, x, y); });
                const auto det = detect_berry(oracle);
                if (!det.aoi) {
                    ++missed;
                    continue;
                }
                std::size_t berry = 0, covered = 0;
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        if (inside_disk(cx, cy, r, x, y)) {
                            ++berry;
                            covered += det.aoi->contains(x, y);
                        }
                const double cover = static_cast<double>(covered) / static_cast<double>(berry);
                const double area = static_cast<double>(det.aoi->pixel_count(w, h)) / static_cast<double>(berry);
                if (cover < worst_cover || area > worst_area)
                    worst_case = fmt("r=%.1f at (%d,%d)", r, cx, cy);
                worst_cover = std::min(worst_cover, cover);
                worst_area = std::max(worst_area, area);
            }
    std::size_t false_hits = 0;
    for (auto [bw, bh] : {std::pair{64, 64}, std::pair{160, 128}, std::pair{300, 260}}) {
        OracleSensorClassifier blank(bw, bh, [](int, int) { return false; });
        false_hits += detect_berry(blank).hit.has_value();
    }
    return {missed == 0 && false_hits == 0 && worst_cover >= 0.95 && worst_area <= 2.5,
            fmt("%zu scenes (r = 2..31 step 0.5, every centre): %zu missed, %zu false hits on blank scenes; worst AoI "
                "coverage %.4f (>= 0.95), worst area ratio %.3f (<= 2.5); last worst %s; %.1f s",
                scenes, missed, false_hits, worst_cover, worst_area, worst_case.c_str(), wt::seconds_since(t0))};
}

TrainConfig acceptance_training() {
    TrainConfig cfg;
    cfg.iterations = 5000;
    cfg.batch_size = 64;
    return cfg;
}

struct Shared {
    wt::TempDir dir{"acceptance"};
    DatasetManifest dataset;  // 60 berries, 10 per cultivar
};

Outcome cross_validation(Shared& s) {
    const auto t0 = Clock::now();
    CrossValidationConfig cfg;
    cfg.k = 3;
    cfg.train = acceptance_training();
    const auto report = cross_validate(s.dataset, {InputMode::I, InputMode::IV}, cfg);
    emit_report(report, s.dir / "cv");
    const auto* iv = report.find(InputMode::IV);
    const auto* one = report.find(InputMode::I);
    const double secs = wt::seconds_since(t0);
    const bool ordered = iv->mean_berry_accuracy >= one->mean_berry_accuracy && iv->mean_wax_accuracy >= one->mean_wax_accuracy;
    return {iv->mean_berry_accuracy >= 0.95 && iv->mean_wax_accuracy >= 0.90 && secs < 600.0,
            fmt("60 berries, k=3: mode IV berry %.4f (>= 0.95), wax %.4f (>= 0.90); mode I berry %.4f, wax %.4f; "
                "IV >= I %s (logged only); %.0f s (< 600 s)",
                iv->mean_berry_accuracy, iv->mean_wax_accuracy, one->mean_berry_accuracy, one->mean_wax_accuracy,
                ordered ? "yes" : "no", secs)};
}

wt::ModelPair train_models(const DatasetManifest& m) {
    const auto sidecars = load_manifest_sidecars(m);
    auto cfg = acceptance_training();
    wt::ModelPair out{init_model(ModelKind::berry, 15, 71), init_model(ModelKind::wax, 15, 72)};
    cfg.seed = 73;
    train(out.berry, extract_training_pixels(m, sidecars, InputMode::IV, LabelTask::detection, 4000, 74).samples, cfg);
    cfg.seed = 75;
    train(out.wax, extract_training_pixels(m, sidecars, InputMode::IV, LabelTask::segmentation, 4000, 76).samples, cfg);
    return out;
}

double brute_force_r(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

Outcome correlation_recovery(const wt::ModelPair& models) {
    const auto t0 = Clock::now();
    const auto profiles = default_profiles(0.76);
    const DatasetOptions opt;
    std::vector<double> props, imps;
    std::size_t failures = 0;
    std::size_t index = 0;
    for (const auto& p : profiles)
        for (int i = 0; i < 45; ++i, ++index) {
            const auto berry = simulate_berry(p, index, 8675309, opt);
            const auto out = process_capture(berry.capture, models.berry, models.wax, {}, nullptr);
            if (!out.ok()) {
                ++failures;
                continue;
            }
            props.push_back(out.report->wax_proportion);
            imps.push_back(berry.impedance.z_rel_cw);
        }
    const auto est = pearson(props, imps);
    const double brute = brute_force_r(props, imps);
    return {failures == 0 && std::abs(est.r - 0.76) <= 0.08 && est.p < 1e-30 && std::abs(est.r - brute) <= 1e-12,
            fmt("270 berries, %zu analysis failures; estimated r = %.4f (0.76 +- 0.08), p = %.3g (< 1e-30); "
                "|r - brute force| = %.3g (<= 1e-12); %.0f s",
                failures, est.r, est.p, std::abs(est.r - brute), wt::seconds_since(t0))};
}

Outcome region_extraction() {
    std::mt19937_64 rng(1010);
    std::uniform_int_distribution<int> u(0, 3);
    int mismatches = 0;
    for (int t = 0; t < 200; ++t) {
        LabelMap m(64, 64);
        // mix of noise and blocky maps so large regions occur too
        const int block = 1 + t % 8;
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                if (x % block == 0 && y % block == 0)
                    m.at(x, y) = static_cast<std::uint8_t>(u(rng));
                else
                    m.at(x, y) = m.at(x - x % block, y - y % block);
        mismatches += extract_regions(m) != wt::flood_fill_regions(m);
    }
    return {mismatches == 0, fmt("%d of 200 random 64x64 maps differ from the flood-fill oracle", mismatches)};
}

Outcome determinism(Shared& s, const wt::ModelPair& models) {
    const auto again = train_models(s.dataset);
    const bool same_models =
        std::equal(models.berry.parameters().begin(), models.berry.parameters().end(), again.berry.parameters().begin()) &&
        std::equal(models.wax.parameters().begin(), models.wax.parameters().end(), again.wax.parameters().begin());
    PipelineOptions opt;
    opt.threads = 1;
    run_pipeline(s.dataset, models.berry, models.wax, opt, s.dir / "run_a");
    opt.threads = 2;
    run_pipeline(s.dataset, again.berry, again.wax, opt, s.dir / "run_b");
    std::size_t files = 0, differ = 0;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(s.dir / "run_a")) {
        if (!entry.is_regular_file()) continue;
        ++files;
        const auto rel = std::filesystem::relative(entry.path(), s.dir / "run_a");
        differ += wt::slurp(entry.path()) != wt::slurp(s.dir / "run_b" / rel);
    }
    return {same_models && files > 0 && differ == 0,
            fmt("retrained models identical: %s; %zu output files compared, %zu differ", same_models ? "yes" : "no",
                files, differ)};
}

}  // namespace

int main() {
    int failed = 0;
    auto report = [&](const char* name, const std::function<Outcome()>& fn) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s  %-28s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
    };

    report("polarization-identity", polarization_identity);
    report("as-written-fidelity", as_written_fidelity);
    report("closed-loop-separation", closed_loop);
    report("pattern-coverage", pattern_coverage);
    report("gradient-check", gradient_check_all);
    report("training-sanity", training_sanity);
    report("detector-soundness", detector_soundness);

    Shared shared;
    shared.dataset = generate_dataset(shared.dir.path(), 10, default_profiles(0.76), 2718);
    report("cross-validation", [&] { return cross_validation(shared); });
    std::optional<wt::ModelPair> models;
    report("correlation-recovery", [&] {
        models = train_models(shared.dataset);
        return correlation_recovery(*models);
    });
    report("region-extraction", region_extraction);
    report("determinism", [&] {
        if (!models) models = train_models(shared.dataset);
        return determinism(shared, *models);
    });

    std::printf("%d criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
