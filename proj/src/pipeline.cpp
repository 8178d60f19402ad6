#include "waxsep/pipeline.hpp"

#include "waxsep/lightsep.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <thread>

namespace waxsep {

using ojson = nlohmann::ordered_json;

unsigned worker_count(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("WAXSEP_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("unwritable path: " + path.string());
    out << text;
    if (!out) throw Error("failed writing " + path.string());
}

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

}  // namespace

std::string aoi_json(const CaptureOutcome& o) {
    ojson doc;
    doc["id"] = o.id;
    if (o.aoi) {
        doc["center"] = {o.aoi->center_x, o.aoi->center_y};
        doc["radius"] = o.aoi->radius;
        doc["scale"] = o.scale;
    } else {
        doc["center"] = nullptr;
        doc["radius"] = nullptr;
        doc["scale"] = nullptr;
    }
    doc["evaluations"] = o.evaluations;
    return doc.dump(2) + "\n";
}

CaptureOutcome process_capture(const CaptureSet& capture, const CnnModel& berry_model, const CnnModel& wax_model,
                               const PipelineOptions& options, const std::filesystem::path* out_dir) {
    CaptureOutcome out;
    out.id = capture.id;
    out.cultivar = capture.cultivar;
    if (capture.impedance) out.impedance = capture.impedance->z_rel_cw;
    std::string stage = "separation";
    try {
        if (out_dir) std::filesystem::create_directories(*out_dir);
        const auto separated = separate_capture(capture, SeparationMode::both, options.formulation);
        stage = "stack assembly";
        const auto stack = assemble_channel_stack(capture, separated, options.mode);
        stage = "detection";
        CnnSensorClassifier sensors(berry_model, stack);
        const auto detection = detect_berry(sensors, options.scales);
        out.evaluations = detection.evaluations;
        if (detection.hit) out.scale = detection.hit->scale;
        out.aoi = detection.aoi;
        if (out_dir) write_text(*out_dir / "aoi.json", aoi_json(out));
        if (!detection.aoi) throw Error("no berry detected");
        stage = "segmentation";
        const auto labels = classify_aoi(wax_model, stack, *detection.aoi);
        stage = "quantification";
        auto report = quantify_wax(labels, capture.id);
        if (out_dir) {
            stage = "output";
            write_text(*out_dir / "wax_report.json", wax_report_json(report) + "\n");
            if (options.write_images) {
                write_label_map(labels, *out_dir / "labelmap.png");
                write_image(render_overlay(stack, labels), *out_dir / "overlay.png", 8);
            }
        }
        out.report = std::move(report);
    } catch (const std::exception& e) {
        out.error = stage + ": " + e.what();
    }
    return out;
}

std::size_t PipelineReport::succeeded() const {
    return static_cast<std::size_t>(std::count_if(captures.begin(), captures.end(), [](const auto& c) { return c.ok(); }));
}

void summarize_outcomes(PipelineReport& report) {
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> per;
    std::vector<double> xs, ys;
    for (const auto& c : report.captures) {
        if (!c.ok()) continue;
        auto& [props, imps] = per[c.cultivar];
        props.push_back(c.report->wax_proportion);
        if (c.impedance) {
            imps.push_back(*c.impedance);
            xs.push_back(c.report->wax_proportion);
            ys.push_back(*c.impedance);
        }
    }
    report.cultivars.clear();
    for (const auto& [name, vals] : per) {
        CultivarSummary s;
        s.cultivar = name;
        if (!vals.first.empty()) s.proportion = quartiles(vals.first);
        if (!vals.second.empty()) s.impedance = quartiles(vals.second);
        report.cultivars.push_back(std::move(s));
    }
    report.correlation.reset();
    report.correlation_error.clear();
    try {
        report.correlation = pearson(xs, ys);
    } catch (const Error& e) {
        report.correlation_error = e.what();
    }
}

void write_pipeline_report(const PipelineReport& report, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    ojson doc;
    doc["mode"] = std::string(to_string(report.mode));
    doc["captures_total"] = report.captures.size();
    doc["captures_succeeded"] = report.succeeded();
    doc["captures"] = ojson::array();
    for (const auto& c : report.captures) {
        ojson jc{{"id", c.id}, {"cultivar", c.cultivar}};
        jc["z_rel_cw"] = c.impedance ? ojson(*c.impedance) : ojson(nullptr);
        if (c.aoi) {
            jc["aoi"] = {{"center", {c.aoi->center_x, c.aoi->center_y}}, {"radius", c.aoi->radius}, {"scale", c.scale}};
        } else {
            jc["aoi"] = nullptr;
        }
        jc["evaluations"] = c.evaluations;
        if (c.ok()) {
            jc["wax_pixels"] = c.report->wax_pixels;
            jc["nowax_pixels"] = c.report->nowax_pixels;
            jc["other_pixels"] = c.report->other_pixels;
            jc["wax_proportion"] = c.report->wax_proportion;
            jc["regions"] = c.report->regions.size();
        } else {
            jc["error"] = c.error;
        }
        doc["captures"].push_back(std::move(jc));
    }
    if (report.correlation) {
        doc["correlation"] = {{"r", report.correlation->r}, {"p", report.correlation->p}, {"n", report.correlation->n}};
    } else {
        doc["correlation"] = {{"error", report.correlation_error}};
    }
    doc["cultivars"] = ojson::array();
    for (const auto& c : report.cultivars)
        doc["cultivars"].push_back(
            {{"cultivar", c.cultivar}, {"proportion", quartile_json(c.proportion)}, {"impedance", quartile_json(c.impedance)}});
    write_text(out_dir / "report.json", doc.dump(2) + "\n");

    std::string corr = "id,cultivar,wax_proportion,z_rel_cw,r,p,n\n";
    if (report.correlation)
        for (const auto& c : report.captures)
            if (c.ok() && c.impedance)
                corr += csv_field(c.id) + "," + csv_field(c.cultivar) + "," + num(c.report->wax_proportion) + "," +
                        num(*c.impedance) + "," + num(report.correlation->r) + "," + num(report.correlation->p) + "," +
                        std::to_string(report.correlation->n) + "\n";
    write_text(out_dir / "correlation.csv", corr);

    std::string box = "cultivar,variable,n,min,q1,median,q3,max\n";
    for (const auto& c : report.cultivars)
        for (const auto& [name, q] : {std::pair{"wax_proportion", c.proportion}, std::pair{"z_rel_cw", c.impedance}})
            if (q)
                box += csv_field(c.cultivar) + "," + name + "," + std::to_string(q->n) + "," + num(q->min) + "," +
                       num(q->q1) + "," + num(q->median) + "," + num(q->q3) + "," + num(q->max) + "\n";
    write_text(out_dir / "boxplot_data.csv", box);
}

PipelineReport run_pipeline(const DatasetManifest& manifest, const CnnModel& berry_model, const CnnModel& wax_model,
                            const PipelineOptions& options, const std::filesystem::path& out_dir) {
    PipelineReport report;
    report.mode = options.mode;
    if (manifest.entries.empty()) {
        report.exit_status = exit_code::failure;
        report.correlation_error = "no captures";
        write_pipeline_report(report, out_dir);
        return report;
    }

    std::vector<const ManifestEntry*> entries;
    for (const auto& e : manifest.entries) entries.push_back(&e);
    std::sort(entries.begin(), entries.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
    report.captures.resize(entries.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < entries.size(); i = next++) {
            const auto& e = *entries[i];
            const auto dir = out_dir / "captures" / e.id;
            try {
                const auto capture = load_capture(manifest, e);
                report.captures[i] = process_capture(capture, berry_model, wax_model, options, &dir);
            } catch (const std::exception& ex) {
                CaptureOutcome o;
                o.id = e.id;
                o.cultivar = e.cultivar;
                o.impedance = e.impedance;
                o.error = std::string("load: ") + ex.what();
                report.captures[i] = std::move(o);
            }
        }
    };
    const unsigned n = std::min<std::size_t>(worker_count(options.threads), entries.size());
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    summarize_outcomes(report);
    report.exit_status = report.succeeded() > 0 ? exit_code::ok : exit_code::failure;
    write_pipeline_report(report, out_dir);
    return report;
}

}  // namespace waxsep
