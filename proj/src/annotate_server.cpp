#include "waxsep/annotate_server.hpp"

#include "waxsep/capture.hpp"
#include "waxsep/labels.hpp"
#include "waxsep/lightsep.hpp"

#include <httplib.h>
#include <json.hpp>

#include <map>
#include <mutex>

namespace waxsep {

using json = nlohmann::json;

namespace {

constexpr const char* kPlaceholderPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>waxsep annotate</title></head>"
    "<body><h1>waxsep annotation service</h1><p>No UI bundle configured. The JSON API is available under "
    "<code>/api/images</code>.</p></body></html>";

const std::vector<std::string> kChannels{"standard", "direct", "global", "diffuse", "specular"};

void send_error(httplib::Response& res, int status, const std::string& message, const json& fields = nullptr) {
    json body{{"error", message}};
    if (!fields.is_null()) body["fields"] = fields;
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

}  // namespace

struct AnnotationServer::Impl {
    AnnotationServerOptions options;
    DatasetManifest manifest;
    httplib::Server server;

    std::mutex manifest_mutex;
    std::mutex table_mutex;
    std::map<std::string, std::unique_ptr<std::mutex>> write_locks;
    std::map<std::string, std::map<std::string, std::string>> png_cache;  // id -> channel -> bytes

    explicit Impl(AnnotationServerOptions opts) : options(std::move(opts)), manifest(load_manifest(options.manifest_path)) {
        routes();
    }

    std::mutex& write_lock(const std::string& id) {
        std::lock_guard lock(table_mutex);
        auto& slot = write_locks[id];
        if (!slot) slot = std::make_unique<std::mutex>();
        return *slot;
    }

    std::filesystem::path sidecar_path(const ManifestEntry& e) {
        std::lock_guard lock(manifest_mutex);
        return manifest.resolve(e.labels ? *e.labels : e.directory / "labels.json");
    }

    std::optional<LabelSidecar> stored(const ManifestEntry& e) {
        const auto path = sidecar_path(e);
        if (!std::filesystem::exists(path)) return std::nullopt;
        return load_sidecar(path);
    }

    std::pair<int, int> dimensions(const ManifestEntry& e) {
        const auto img = read_image(manifest.resolve(e.directory) / capture_files::kStandard);
        return {img.width(), img.height()};
    }

    const std::map<std::string, std::string>& channels(const ManifestEntry& e) {
        {
            std::lock_guard lock(table_mutex);
            if (auto it = png_cache.find(e.id); it != png_cache.end()) return it->second;
        }
        const auto capture = load_capture(manifest, e);
        const auto sep = separate_capture(capture, SeparationMode::both, SeparationResult::Formulation::reference);
        std::map<std::string, std::string> pngs;
        pngs["standard"] = encode_png(capture.standard);
        pngs["direct"] = encode_png(*sep.direct);
        pngs["global"] = encode_png(*sep.global);
        pngs["diffuse"] = encode_png(*sep.diffuse);
        pngs["specular"] = encode_png(*sep.specular);
        std::lock_guard lock(table_mutex);
        return png_cache.emplace(e.id, std::move(pngs)).first->second;
    }

    // Records a newly created sidecar path in the manifest so extraction finds it.
    void register_sidecar(const ManifestEntry& e) {
        std::lock_guard lock(manifest_mutex);
        for (auto& m : manifest.entries)
            if (m.id == e.id && !m.labels) {
                m.labels = m.directory / "labels.json";
                auto tmp = options.manifest_path;
                tmp += ".tmp";
                save_manifest(manifest, tmp);
                std::filesystem::rename(tmp, options.manifest_path);
            }
    }

    void routes() {
        server.Get("/api/images", [this](const httplib::Request&, httplib::Response& res) {
            json list = json::array();
            for (const auto& e : manifest.entries) {
                try {
                    const auto [w, h] = dimensions(e);
                    const auto sc = stored(e);
                    list.push_back({{"id", e.id},
                                    {"width", w},
                                    {"height", h},
                                    {"cultivar", e.cultivar},
                                    {"rectangles", sc ? sc->rectangles.size() : 0}});
                } catch (const Error& err) {
                    list.push_back({{"id", e.id}, {"cultivar", e.cultivar}, {"error", err.what()}});
                }
            }
            res.set_content(list.dump(), "application/json");
        });

        server.Get(R"(/api/images/([^/]+)/channel/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            const auto* e = manifest.find(req.matches[1].str());
            if (!e) return send_error(res, 404, "unknown image '" + req.matches[1].str() + "'");
            const std::string name = req.matches[2].str();
            if (std::find(kChannels.begin(), kChannels.end(), name) == kChannels.end())
                return send_error(res, 404, "unknown channel '" + name + "'");
            try {
                res.set_content(channels(*e).at(name), "image/png");
            } catch (const Error& err) {
                send_error(res, 500, err.what());
            }
        });

        server.Get(R"(/api/images/([^/]+)/labels)", [this](const httplib::Request& req, httplib::Response& res) {
            const auto* e = manifest.find(req.matches[1].str());
            if (!e) return send_error(res, 404, "unknown image '" + req.matches[1].str() + "'");
            try {
                std::lock_guard lock(write_lock(e->id));
                auto sc = stored(*e);
                if (!sc) {
                    sc = LabelSidecar{};
                    sc->capture_id = e->id;
                }
                res.set_content(sidecar_to_json(*sc), "application/json");
            } catch (const Error& err) {
                send_error(res, 500, err.what());
            }
        });

        server.Put(R"(/api/images/([^/]+)/labels)", [this](const httplib::Request& req, httplib::Response& res) {
            const auto* e = manifest.find(req.matches[1].str());
            if (!e) return send_error(res, 404, "unknown image '" + req.matches[1].str() + "'");
            LabelSidecar incoming;
            std::optional<std::int64_t> base_version;
            try {
                const json body = json::parse(req.body);
                if (body.contains("version") && !body["version"].is_null())
                    base_version = body["version"].get<std::int64_t>();
                incoming = sidecar_from_json(req.body);
            } catch (const std::exception& err) {
                return send_error(res, 400, std::string("malformed label sidecar: ") + err.what());
            }
            if (incoming.capture_id != e->id)
                return send_error(res, 400, "capture_id does not match the URL",
                                  json::array({{{"field", "capture_id"}, {"message", "must equal '" + e->id + "'"}}}));
            try {
                const auto [w, h] = dimensions(*e);
                const auto errors = validate_sidecar(incoming, w, h);
                if (!errors.empty()) {
                    json fields = json::array();
                    for (const auto& f : errors) fields.push_back({{"field", f.field}, {"message", f.message}});
                    return send_error(res, 400, "invalid labels", fields);
                }
                std::lock_guard lock(write_lock(e->id));
                const auto current = stored(*e);
                const std::int64_t current_version = current ? current->version : 0;
                if (base_version && *base_version != current_version) {
                    res.status = 409;
                    res.set_content(json{{"error", "version conflict"}, {"current_version", current_version}}.dump(),
                                    "application/json");
                    return;
                }
                incoming.version = current_version + 1;
                save_sidecar_atomic(incoming, sidecar_path(*e));
                register_sidecar(*e);
                res.set_content(sidecar_to_json(incoming), "application/json");
            } catch (const std::exception& err) {
                send_error(res, 500, err.what());
            }
        });

        if (options.ui_dir) {
            server.set_mount_point("/", options.ui_dir->string());
        } else {
            server.Get("/", [](const httplib::Request&, httplib::Response& res) {
                res.set_content(kPlaceholderPage, "text/html");
            });
        }
    }
};

AnnotationServer::AnnotationServer(AnnotationServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw Error("cannot bind " + host);
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) throw Error("port " + std::to_string(port) + " is not available");
    return port;
}

void AnnotationServer::listen() { impl_->server.listen_after_bind(); }

void AnnotationServer::stop() {
    if (impl_) impl_->server.stop();
}

}  // namespace waxsep
