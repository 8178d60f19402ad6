#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace waxsep {

struct AnnotationServerOptions {
    std::filesystem::path manifest_path;
    std::optional<std::filesystem::path> ui_dir;  // static assets served at /
};

/// Local HTTP JSON API over a dataset manifest:
///   GET  /api/images                       [{id, width, height, cultivar, rectangles}]
///   GET  /api/images/{id}/channel/{name}   PNG; standard, direct, global, diffuse, specular
///   GET  /api/images/{id}/labels           label sidecar (empty, version 0, if none saved)
///   PUT  /api/images/{id}/labels           validate + atomic save; returns the stored sidecar
/// A PUT whose "version" differs from the stored version is rejected with
/// 409; a PUT without "version" overwrites. Every save increments the version.
class AnnotationServer {
public:
    explicit AnnotationServer(AnnotationServerOptions options);
    ~AnnotationServer();
    AnnotationServer(const AnnotationServer&) = delete;
    AnnotationServer& operator=(const AnnotationServer&) = delete;

    /// Binds; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks serving requests until stop().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace waxsep
