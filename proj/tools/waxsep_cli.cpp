#include "waxsep/annotate_server.hpp"
#include "waxsep/dataset.hpp"
#include "waxsep/evaluate.hpp"
#include "waxsep/lightsep.hpp"
#include "waxsep/pipeline.hpp"
#include "waxsep/scene.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace waxsep;

namespace {

struct TrainFlags {
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double lr = 1e-4;
    double gamma = 0.1;
    std::vector<long> steps{50'000, 100'000};
    double schedule_scale = 0.1;
    int batch_size = 256;
    long iterations = 15'000;
    std::uint64_t seed = 1;
    bool no_balance = false;

    void add(CLI::App* app) {
        app->add_option("--momentum", momentum, "SGD momentum")->capture_default_str();
        app->add_option("--weight-decay", weight_decay, "L2 weight decay")->capture_default_str();
        app->add_option("--lr", lr, "initial learning rate")->capture_default_str();
        app->add_option("--gamma", gamma, "learning-rate decay factor")->capture_default_str();
        app->add_option("--steps", steps, "decay thresholds (iterations, before scaling)")->delimiter(',')->capture_default_str();
        app->add_option("--schedule-scale", schedule_scale, "multiplier applied to the thresholds")->capture_default_str();
        app->add_option("--batch-size", batch_size, "mini-batch size")->capture_default_str();
        app->add_option("--iterations", iterations, "training iterations")->capture_default_str();
        app->add_option("--train-seed", seed, "training RNG seed")->capture_default_str();
        app->add_flag("--no-balance", no_balance, "disable class-balanced batches");
    }

    TrainConfig config() const {
        TrainConfig c;
        c.momentum = momentum;
        c.weight_decay = weight_decay;
        c.base_lr = lr;
        c.gamma = gamma;
        c.steps = steps;
        c.schedule_scale = schedule_scale;
        c.batch_size = batch_size;
        c.iterations = iterations;
        c.seed = seed;
        c.balance_classes = !no_balance;
        c.validate();
        return c;
    }
};

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("unwritable path: " + path.string());
    out << text;
}

std::vector<const ManifestEntry*> selected(const DatasetManifest& m, const std::string& id) {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : m.entries)
        if (id.empty() || e.id == id) out.push_back(&e);
    if (!id.empty() && out.empty()) throw Error("unknown capture id '" + id + "'");
    return out;
}

AnnotationServer* g_server = nullptr;
void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"waxsep: berry light separation, detection and wax quantification"};
    app.set_config("--config", "", "key = value config file (TOML/INI); command-line flags win");
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset with ground truth");
    std::filesystem::path sim_out;
    int per_cultivar = 10;
    std::uint64_t sim_seed = 1;
    double rho = 0.76;
    DatasetOptions dopts;
    sim->add_option("--out", sim_out, "output directory")->required();
    sim->add_option("--per-cultivar", per_cultivar, "berries per cultivar (6 cultivars)")->capture_default_str();
    sim->add_option("--seed", sim_seed, "dataset seed")->capture_default_str();
    sim->add_option("--rho", rho, "planted proportion/impedance correlation")->capture_default_str();
    sim->add_option("--noise", dopts.noise_sigma, "capture noise sigma")->capture_default_str();
    sim->add_option("--black", dopts.ambient_b, "projector black level b")->capture_default_str();
    sim->add_option("--width", dopts.width)->capture_default_str();
    sim->add_option("--height", dopts.height)->capture_default_str();
    sim->add_option("--bit-depth", dopts.bit_depth, "8 or 16")->capture_default_str();

    // separate
    auto* sep = app.add_subcommand("separate", "direct/global and diffuse/specular separation");
    std::filesystem::path manifest_path, out_dir;
    std::string method = "both", formulation = "reference", only_id;
    bool clamp = false;
    sep->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
    sep->add_option("--out", out_dir)->required();
    sep->add_option("--method", method, "pattern | polarization | both")->capture_default_str();
    sep->add_option("--formulation", formulation, "reference | as-written")->capture_default_str();
    sep->add_option("--id", only_id, "single capture id");
    sep->add_flag("--clamp", clamp, "clamp negative components to zero before export");

    // annotate
    auto* ann = app.add_subcommand("annotate", "serve the annotation HTTP API");
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path ui_dir;
    ann->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
    ann->add_option("--host", host)->capture_default_str();
    ann->add_option("--port", port)->capture_default_str();
    ann->add_option("--ui", ui_dir, "directory of UI assets served at /");

    // extract
    auto* ext = app.add_subcommand("extract", "training pixels from label rectangles");
    std::string mode_text = "IV", task_text = "detection";
    std::size_t cap = 0;
    std::uint64_t seed = 1;
    std::filesystem::path out_file;
    ext->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
    ext->add_option("--mode", mode_text, "I | II | III | IV")->capture_default_str();
    ext->add_option("--task", task_text, "detection | segmentation")->capture_default_str();
    ext->add_option("--cap", cap, "samples per class (0 = all)")->capture_default_str();
    ext->add_option("--seed", seed)->capture_default_str();
    ext->add_option("--out", out_file)->required();

    // train
    auto* trn = app.add_subcommand("train", "train a pixel classifier");
    std::filesystem::path data_file;
    std::string kind_text;
    TrainFlags tflags;
    trn->add_option("--data", data_file, "pixel dataset from `extract`")->required()->check(CLI::ExistingFile);
    trn->add_option("--kind", kind_text, "berry | wax (default from the dataset task)");
    trn->add_option("--model-seed", seed, "initialization seed")->capture_default_str();
    trn->add_option("--out", out_file)->required();
    tflags.add(trn);

    // detect
    auto* det = app.add_subcommand("detect", "sliding-template berry detection and AoI");
    std::filesystem::path berry_model_path, wax_model_path;
    det->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
    det->add_option("--model", berry_model_path)->required()->check(CLI::ExistingFile);
    det->add_option("--mode", mode_text)->capture_default_str();
    det->add_option("--out", out_dir)->required();

    // segment
    auto* seg = app.add_subcommand("segment", "AoI wax segmentation, quantification and overlays");
    seg->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
    seg->add_option("--berry-model", berry_model_path)->required()->check(CLI::ExistingFile);
    seg->add_option("--wax-model", wax_model_path)->required()->check(CLI::ExistingFile);
    seg->add_option("--mode", mode_text)->capture_default_str();
    seg->add_option("--out", out_dir)->required();

    // evaluate
    auto* eva = app.add_subcommand("evaluate", "k-fold cross-validation over input modes");
    std::vector<std::string> mode_list{"I", "II", "III", "IV"};
    int k = 3;
    CrossValidationConfig cv;
    eva->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
    eva->add_option("--modes", mode_list)->delimiter(',')->capture_default_str();
    eva->add_option("--k", k)->capture_default_str();
    eva->add_option("--seed", seed)->capture_default_str();
    eva->add_option("--berry-cap", cv.berry_train_cap, "training pixels per class (berry)")->capture_default_str();
    eva->add_option("--wax-cap", cv.wax_train_cap, "training pixels per class (wax)")->capture_default_str();
    eva->add_option("--eval-cap", cv.eval_cap, "test pixels per class")->capture_default_str();
    eva->add_option("--out", out_dir)->required();
    TrainFlags eflags;
    eflags.add(eva);

    // run
    auto* run = app.add_subcommand("run", "end-to-end pipeline over a manifest");
    unsigned threads = 0;
    run->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
    run->add_option("--berry-model", berry_model_path)->required()->check(CLI::ExistingFile);
    run->add_option("--wax-model", wax_model_path)->required()->check(CLI::ExistingFile);
    run->add_option("--mode", mode_text)->capture_default_str();
    run->add_option("--formulation", formulation)->capture_default_str();
    run->add_option("--threads", threads, "worker threads (default WAXSEP_THREADS or all cores)");
    run->add_option("--out", out_dir)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_code::usage;
    }

    try {
        if (*sim) {
            const auto profiles = default_profiles(rho);
            const auto m = generate_dataset(sim_out, per_cultivar, profiles, sim_seed, dopts);
            std::cout << "wrote " << m.entries.size() << " captures to " << sim_out.string() << "\n";
        } else if (*sep) {
            const auto m = load_manifest(manifest_path);
            const auto sm = parse_separation_mode(method);
            const auto f = parse_formulation(formulation);
            for (const auto* e : selected(m, only_id)) {
                const auto capture = load_capture(m, *e);
                auto r = separate_capture(capture, sm, f);
                const double negative = r.clamp_fraction;
                if (clamp) clamp_nonnegative(r);
                const auto dir = out_dir / e->id;
                std::filesystem::create_directories(dir);
                if (r.direct) write_image(*r.direct, dir / "direct.png");
                if (r.global) write_image(*r.global, dir / "global.png");
                if (r.diffuse) write_image(*r.diffuse, dir / "diffuse.png");
                if (r.specular) write_image(*r.specular, dir / "specular.png");
                nlohmann::ordered_json info{{"id", e->id},
                                            {"formulation", std::string(to_string(f))},
                                            {"b_value", r.b_value},
                                            {"negative_fraction", negative},
                                            {"clamped", clamp}};
                write_file(dir / "separation.json", info.dump(2) + "\n");
            }
        } else if (*ann) {
            AnnotationServerOptions o;
            o.manifest_path = manifest_path;
            if (!ui_dir.empty()) o.ui_dir = ui_dir;
            AnnotationServer server(o);
            const int bound = server.bind(host, port);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << "serving http://" << host << ":" << bound << "/" << std::endl;
            server.listen();
            g_server = nullptr;
        } else if (*ext) {
            const auto m = load_manifest(manifest_path);
            const auto data = extract_training_pixels(m, load_manifest_sidecars(m), parse_input_mode(mode_text),
                                                      parse_label_task(task_text), cap, seed);
            save_pixel_dataset(data, out_file);
            std::cout << "extracted " << data.samples.size() << " samples";
            for (std::size_t c = 0; c < data.class_counts.size(); ++c)
                std::cout << (c ? ", " : " (") << class_name(data.task, static_cast<int>(c)) << " "
                          << data.class_counts[c];
            std::cout << ")\n";
        } else if (*trn) {
            const auto data = load_pixel_dataset(data_file);
            const ModelKind kind = kind_text.empty()
                                       ? (data.task == LabelTask::detection ? ModelKind::berry : ModelKind::wax)
                                       : parse_model_kind(kind_text);
            auto model = init_model(kind, data.samples.channels, seed);
            const auto result = train(model, data.samples, tflags.config());
            save_model(model, out_file);
            std::cout << "final loss " << (result.loss_history.empty() ? 0.0 : result.loss_history.back())
                      << ", training accuracy " << accuracy(model, data.samples) << "\n";
        } else if (*det) {
            const auto m = load_manifest(manifest_path);
            const auto model = load_model(berry_model_path);
            const auto mode = parse_input_mode(mode_text);
            int found = 0;
            for (const auto& e : m.entries) {
                CaptureOutcome o;
                o.id = e.id;
                const auto capture = load_capture(m, e);
                const auto stack = assemble_channel_stack(
                    capture, separate_capture(capture, SeparationMode::both, SeparationResult::Formulation::reference),
                    mode);
                CnnSensorClassifier sensors(model, stack);
                const auto d = detect_berry(sensors);
                o.aoi = d.aoi;
                o.scale = d.hit ? d.hit->scale : 0;
                o.evaluations = d.evaluations;
                found += d.aoi.has_value();
                std::filesystem::create_directories(out_dir / e.id);
                write_file(out_dir / e.id / "aoi.json", aoi_json(o));
            }
            std::cout << "berry found in " << found << " of " << m.entries.size() << " captures\n";
            if (found == 0 && !m.entries.empty()) return exit_code::failure;
        } else if (*seg || *run) {
            const auto m = load_manifest(manifest_path);
            const auto berry = load_model(berry_model_path);
            const auto wax = load_model(wax_model_path);
            PipelineOptions o;
            o.mode = parse_input_mode(mode_text);
            o.formulation = parse_formulation(formulation);
            o.threads = threads;
            const auto report = run_pipeline(m, berry, wax, o, out_dir);
            if (report.captures.empty()) std::cerr << "error: no captures\n";
            for (const auto& c : report.captures)
                if (!c.ok()) std::cerr << c.id << ": " << c.error << "\n";
            std::cout << report.succeeded() << " of " << report.captures.size() << " captures processed";
            if (report.correlation)
                std::cout << "; r = " << report.correlation->r << ", p = " << report.correlation->p
                          << ", N = " << report.correlation->n;
            std::cout << "\n";
            return report.exit_status;
        } else if (*eva) {
            const auto m = load_manifest(manifest_path);
            std::vector<InputMode> modes;
            for (const auto& t : mode_list) modes.push_back(parse_input_mode(t));
            cv.k = k;
            cv.seed = seed;
            cv.train = eflags.config();
            const auto report = cross_validate(m, modes, cv);
            emit_report(report, out_dir);
            for (const auto& mr : report.modes)
                std::cout << "mode " << to_string(mr.mode) << ": berry " << mr.mean_berry_accuracy << ", wax "
                          << mr.mean_wax_accuracy << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code::failure;
    }
    return exit_code::ok;
}
