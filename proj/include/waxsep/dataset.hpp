#pragma once

#include "waxsep/capture.hpp"
#include "waxsep/labels.hpp"
#include "waxsep/nn.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace waxsep {

struct PixelDataset {
    InputMode mode = InputMode::I;
    LabelTask task = LabelTask::detection;
    PixelBatch samples;
    std::vector<std::size_t> class_counts;
    std::vector<std::string> capture_ids;  // source capture of each sample

    void recount();
};

/// Builds the channel stack of a manifest entry for `mode`.
using StackProvider = std::function<ChannelStack(const ManifestEntry&, InputMode)>;

/// load_capture -> separate (both methods, reference formulation) -> assemble.
StackProvider disk_stack_provider(const DatasetManifest& manifest);

/// One sample per pixel of every `task` rectangle (3x3 edge-replicated crop,
/// plus (x/W, y/H) for detection), then a seeded uniform subsample of at most
/// `cap` samples per class (cap 0 keeps everything). Sample order is
/// sidecar order, then rectangle order, then scanline order.
PixelDataset extract_training_pixels(const DatasetManifest& manifest, const std::vector<LabelSidecar>& sidecars,
                                     InputMode mode, LabelTask task, std::size_t cap, std::uint64_t seed,
                                     const StackProvider& stacks);

PixelDataset extract_training_pixels(const DatasetManifest& manifest, const std::vector<LabelSidecar>& sidecars,
                                     InputMode mode, LabelTask task, std::size_t cap, std::uint64_t seed);

/// Sidecars of every manifest entry that has one, in manifest order.
std::vector<LabelSidecar> load_manifest_sidecars(const DatasetManifest& manifest);

void save_pixel_dataset(const PixelDataset& data, const std::filesystem::path& path);
PixelDataset load_pixel_dataset(const std::filesystem::path& path);

}  // namespace waxsep
