#include "waxsep/evaluate.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

namespace waxsep {

using ojson = nlohmann::ordered_json;

std::vector<std::string> FoldPlan::test_ids(int fold) const {
    std::vector<std::string> out;
    for (const auto& [id, f] : assignment)
        if (f == fold) out.push_back(id);
    return out;
}

std::vector<std::string> FoldPlan::train_ids(int fold) const {
    std::vector<std::string> out;
    for (const auto& [id, f] : assignment)
        if (f != fold) out.push_back(id);
    return out;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
    for (const auto& [id, f] : assignment) ++sizes[static_cast<std::size_t>(f)];
    return sizes;
}

FoldPlan plan_folds(const DatasetManifest& manifest, int k, std::uint64_t seed) {
    if (k < 2) throw Error("k must be >= 2");
    if (static_cast<std::size_t>(k) > manifest.entries.size())
        throw Error("k = " + std::to_string(k) + " exceeds the " + std::to_string(manifest.entries.size()) +
                    " manifest entries");
    std::map<std::string, std::vector<std::string>> by_cultivar;
    for (const auto& e : manifest.entries) by_cultivar[e.cultivar].push_back(e.id);

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    std::mt19937_64 rng(seed);
    std::size_t counter = 0;
    for (auto& [cultivar, ids] : by_cultivar) {
        std::sort(ids.begin(), ids.end());
        std::shuffle(ids.begin(), ids.end(), rng);
        for (const auto& id : ids) plan.assignment[id] = static_cast<int>(counter++ % static_cast<std::size_t>(k));
    }
    return plan;
}

double pixel_accuracy(const LabelMap& predicted, const LabelMap& truth) {
    if (predicted.width != truth.width || predicted.height != truth.height)
        throw Error("shape mismatch: label maps differ in size");
    std::size_t total = 0, correct = 0;
    for (std::size_t i = 0; i < truth.labels.size(); ++i) {
        if (predicted.labels[i] == label_code::outside || truth.labels[i] == label_code::outside) continue;
        ++total;
        correct += predicted.labels[i] == truth.labels[i];
    }
    if (total == 0) throw Error("no evaluated pixels");
    return static_cast<double>(correct) / static_cast<double>(total);
}

double pixel_accuracy(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size()) throw Error("shape mismatch: label vectors differ in length");
    if (truth.empty()) throw Error("no evaluated pixels");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
    return static_cast<double>(correct) / static_cast<double>(truth.size());
}

const ModeResult* EvaluationReport::find(InputMode mode) const {
    for (const auto& m : modes)
        if (m.mode == mode) return &m;
    return nullptr;
}

ChannelStack slice_stack(const ChannelStack& full, InputMode mode) {
    if (full.mode() == mode) return full;
    std::vector<ChannelStack::Plane> planes;
    for (const auto& name : plane_names(mode)) planes.push_back({name, full.plane(name)});
    return ChannelStack(mode, std::move(planes));
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t z = seed;
    for (std::uint64_t v : {a, b, c}) {
        z += 0x9E3779B97F4A7C15ull + v;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        z ^= z >> 31;
    }
    return z;
}

PixelBatch channels_for(const PixelBatch& full, InputMode mode) {
    if (mode == InputMode::IV) return full;
    const auto ch = channels_within_mode_iv(mode);
    return full.select_channels(ch);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

EvaluationReport cross_validate(const DatasetManifest& manifest, const std::vector<LabelSidecar>& sidecars,
                                std::vector<InputMode> modes, const CrossValidationConfig& config,
                                const StackProvider& stacks) {
    const auto started = std::chrono::steady_clock::now();
    if (modes.empty()) throw Error("no input modes requested");
    std::sort(modes.begin(), modes.end());
    modes.erase(std::unique(modes.begin(), modes.end()), modes.end());

    std::map<std::string, const LabelSidecar*> by_id;
    for (const auto& s : sidecars) by_id[s.capture_id] = &s;
    for (const auto& e : manifest.entries)
        if (!by_id.count(e.id)) throw Error("missing ground-truth labels for capture '" + e.id + "'");

    const FoldPlan plan = plan_folds(manifest, config.k, config.seed);
    EvaluationReport report;
    report.k = config.k;
    report.seed = config.seed;
    report.folds = plan.assignment;
    for (auto m : modes) report.modes.push_back({m, {}, 0.0, 0.0});

    std::map<std::string, ChannelStack> cache;
    auto full_stack = [&](const ManifestEntry& e) -> const ChannelStack& {
        auto it = cache.find(e.id);
        if (it == cache.end()) it = cache.emplace(e.id, stacks(e, InputMode::IV)).first;
        return it->second;
    };
    const StackProvider cached = [&](const ManifestEntry& e, InputMode) { return full_stack(e); };

    for (int fold = 0; fold < config.k; ++fold) {
        std::vector<LabelSidecar> train_sc, test_sc;
        std::set<std::string> train_set, test_set;
        for (const auto& e : manifest.entries) {
            const bool is_test = plan.assignment.at(e.id) == fold;
            (is_test ? test_sc : train_sc).push_back(*by_id.at(e.id));
            (is_test ? test_set : train_set).insert(e.id);
        }
        for (const auto& id : test_set)
            if (train_set.count(id)) throw Error("capture '" + id + "' is in both training and test folds");

        auto t0 = std::chrono::steady_clock::now();
        const auto berry_train = extract_training_pixels(manifest, train_sc, InputMode::IV, LabelTask::detection,
                                                         config.berry_train_cap, mix_seed(config.seed, fold, 1), cached);
        const auto wax_train = extract_training_pixels(manifest, train_sc, InputMode::IV, LabelTask::segmentation,
                                                       config.wax_train_cap, mix_seed(config.seed, fold, 2), cached);
        const auto berry_test = extract_training_pixels(manifest, test_sc, InputMode::IV, LabelTask::detection,
                                                        config.eval_cap, mix_seed(config.seed, fold, 3), cached);
        const auto wax_test = extract_training_pixels(manifest, test_sc, InputMode::IV, LabelTask::segmentation,
                                                      config.eval_cap, mix_seed(config.seed, fold, 4), cached);
        for (const auto* d : {&berry_train, &wax_train})
            for (const auto& id : d->capture_ids)
                if (test_set.count(id)) throw Error("training pixels drawn from test capture '" + id + "'");
        report.timings_seconds["extract_fold_" + std::to_string(fold)] = seconds_since(t0);

        for (auto& mr : report.modes) {
            const InputMode mode = mr.mode;
            const int channels = channel_count(mode);
            t0 = std::chrono::steady_clock::now();

            TrainConfig tc = config.train;
            CnnModel berry = init_model(ModelKind::berry, channels, mix_seed(config.seed, fold, 10, static_cast<int>(mode)));
            tc.seed = mix_seed(config.seed, fold, 11, static_cast<int>(mode));
            train(berry, channels_for(berry_train.samples, mode), tc);
            CnnModel wax = init_model(ModelKind::wax, channels, mix_seed(config.seed, fold, 20, static_cast<int>(mode)));
            tc.seed = mix_seed(config.seed, fold, 21, static_cast<int>(mode));
            train(wax, channels_for(wax_train.samples, mode), tc);
            report.timings_seconds["train_mode_" + std::string(to_string(mode)) + "_fold_" + std::to_string(fold)] =
                seconds_since(t0);

            FoldResult fr;
            fr.fold = fold;
            fr.berry_accuracy = accuracy(berry, channels_for(berry_test.samples, mode));
            fr.wax_accuracy = accuracy(wax, channels_for(wax_test.samples, mode));
            fr.berry_train_pixels = berry_train.samples.size();
            fr.wax_train_pixels = wax_train.samples.size();
            fr.berry_test_pixels = berry_test.samples.size();
            fr.wax_test_pixels = wax_test.samples.size();
            mr.folds.push_back(fr);

            if (config.estimate_proportions) {
                t0 = std::chrono::steady_clock::now();
                for (const auto& e : manifest.entries) {
                    if (!test_set.count(e.id)) continue;
                    BerryEstimate est;
                    est.id = e.id;
                    est.cultivar = e.cultivar;
                    est.mode = mode;
                    est.fold = fold;
                    est.impedance = e.impedance;
                    try {
                        const auto stack = slice_stack(full_stack(e), mode);
                        est.wax_proportion = analyze_stack(berry, wax, stack, e.id).report.wax_proportion;
                    } catch (const Error& err) {
                        est.error = err.what();
                    }
                    report.estimates.push_back(std::move(est));
                }
                report.timings_seconds["analyze_mode_" + std::string(to_string(mode)) + "_fold_" +
                                       std::to_string(fold)] = seconds_since(t0);
            }
        }
        cache.clear();
    }

    for (auto& mr : report.modes) {
        for (const auto& f : mr.folds) {
            mr.mean_berry_accuracy += f.berry_accuracy;
            mr.mean_wax_accuracy += f.wax_accuracy;
        }
        mr.mean_berry_accuracy /= static_cast<double>(mr.folds.size());
        mr.mean_wax_accuracy /= static_cast<double>(mr.folds.size());
    }
    std::stable_sort(report.estimates.begin(), report.estimates.end(), [](const BerryEstimate& a, const BerryEstimate& b) {
        if (a.mode != b.mode) return a.mode < b.mode;
        return a.id < b.id;
    });
    report.correlation_mode = modes.back();
    summarize_estimates(report, report.correlation_mode);
    report.timings_seconds["total"] = seconds_since(started);
    return report;
}

EvaluationReport cross_validate(const DatasetManifest& manifest, std::vector<InputMode> modes,
                                const CrossValidationConfig& config) {
    return cross_validate(manifest, load_manifest_sidecars(manifest), std::move(modes), config,
                          disk_stack_provider(manifest));
}

void summarize_estimates(EvaluationReport& report, InputMode mode) {
    report.correlation_mode = mode;
    report.cultivars.clear();
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> per;
    std::vector<double> xs, ys;
    for (const auto& e : report.estimates) {
        if (e.mode != mode) continue;
        auto& [props, imps] = per[e.cultivar];
        if (e.wax_proportion) props.push_back(*e.wax_proportion);
        if (e.impedance) imps.push_back(*e.impedance);
        if (e.wax_proportion && e.impedance) {
            xs.push_back(*e.wax_proportion);
            ys.push_back(*e.impedance);
        }
    }
    for (const auto& [name, vals] : per) {
        CultivarSummary s;
        s.cultivar = name;
        if (!vals.first.empty()) s.proportion = quartiles(vals.first);
        if (!vals.second.empty()) s.impedance = quartiles(vals.second);
        report.cultivars.push_back(std::move(s));
    }
    report.correlation = {mode, std::nullopt, {}};
    try {
        report.correlation.result = pearson(xs, ys);
    } catch (const Error& e) {
        report.correlation.error = e.what();
    }
}

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

ojson quartile_json(const std::optional<Quartiles>& q) {
    if (!q) return nullptr;
    return {{"n", q->n}, {"min", q->min}, {"q1", q->q1}, {"median", q->median}, {"q3", q->q3}, {"max", q->max}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("unwritable path: " + path.string());
    out << text;
    if (!out) throw Error("failed writing " + path.string());
}

}  // namespace

void emit_report(const EvaluationReport& report, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error("unwritable directory " + out_dir.string() + ": " + ec.message());

    ojson doc;
    doc["k"] = report.k;
    doc["seed"] = report.seed;
    doc["folds"] = ojson::object();
    for (const auto& [id, f] : report.folds) doc["folds"][id] = f;
    doc["modes"] = ojson::array();
    for (const auto& m : report.modes) {
        ojson jm;
        jm["mode"] = std::string(to_string(m.mode));
        jm["mean_berry_accuracy"] = m.mean_berry_accuracy;
        jm["mean_wax_accuracy"] = m.mean_wax_accuracy;
        jm["folds"] = ojson::array();
        for (const auto& f : m.folds)
            jm["folds"].push_back({{"fold", f.fold},
                                   {"berry_accuracy", f.berry_accuracy},
                                   {"wax_accuracy", f.wax_accuracy},
                                   {"berry_train_pixels", f.berry_train_pixels},
                                   {"wax_train_pixels", f.wax_train_pixels},
                                   {"berry_test_pixels", f.berry_test_pixels},
                                   {"wax_test_pixels", f.wax_test_pixels}});
        doc["modes"].push_back(std::move(jm));
    }
    doc["estimates"] = ojson::array();
    for (const auto& e : report.estimates) {
        ojson je{{"id", e.id}, {"cultivar", e.cultivar}, {"mode", std::string(to_string(e.mode))}, {"fold", e.fold}};
        je["wax_proportion"] = e.wax_proportion ? ojson(*e.wax_proportion) : ojson(nullptr);
        je["z_rel_cw"] = e.impedance ? ojson(*e.impedance) : ojson(nullptr);
        if (!e.error.empty()) je["error"] = e.error;
        doc["estimates"].push_back(std::move(je));
    }
    doc["correlation"] = {{"mode", std::string(to_string(report.correlation.mode))}};
    if (report.correlation.result) {
        doc["correlation"]["r"] = report.correlation.result->r;
        doc["correlation"]["p"] = report.correlation.result->p;
        doc["correlation"]["n"] = report.correlation.result->n;
    } else {
        doc["correlation"]["error"] = report.correlation.error;
    }
    doc["cultivars"] = ojson::array();
    for (const auto& c : report.cultivars)
        doc["cultivars"].push_back(
            {{"cultivar", c.cultivar}, {"proportion", quartile_json(c.proportion)}, {"impedance", quartile_json(c.impedance)}});
    write_text(out_dir / "report.json", doc.dump(2) + "\n");

    std::string table = "mode,berry_accuracy,wax_accuracy\n";
    for (const auto& m : report.modes)
        table += std::string(to_string(m.mode)) + "," + num(m.mean_berry_accuracy) + "," + num(m.mean_wax_accuracy) + "\n";
    write_text(out_dir / "table1.csv", table);

    std::string box = "cultivar,variable,n,min,q1,median,q3,max\n";
    for (const auto& c : report.cultivars)
        for (const auto& [name, q] : {std::pair{"wax_proportion", c.proportion}, std::pair{"z_rel_cw", c.impedance}})
            if (q)
                box += csv_field(c.cultivar) + "," + name + "," + std::to_string(q->n) + "," + num(q->min) + "," +
                       num(q->q1) + "," + num(q->median) + "," + num(q->q3) + "," + num(q->max) + "\n";
    write_text(out_dir / "boxplot_data.csv", box);

    std::string corr = "id,cultivar,wax_proportion,z_rel_cw,r,p,n\n";
    if (report.correlation.result) {
        const auto& r = *report.correlation.result;
        for (const auto& e : report.estimates)
            if (e.mode == report.correlation.mode && e.wax_proportion && e.impedance)
                corr += csv_field(e.id) + "," + csv_field(e.cultivar) + "," + num(*e.wax_proportion) + "," +
                        num(*e.impedance) + "," + num(r.r) + "," + num(r.p) + "," + std::to_string(r.n) + "\n";
    }
    write_text(out_dir / "correlation.csv", corr);

    ojson timings(report.timings_seconds);
    write_text(out_dir / "timings.json", timings.dump(2) + "\n");
}

}  // namespace waxsep
