#pragma once

#include "waxsep/nn.hpp"

#include <random>

namespace waxsep::testing {

/// Uniform [0,1] crops with uniform coordinates, labels uniform over classes.
inline PixelBatch random_batch(const Architecture& arch, std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::uniform_int_distribution<int> label(0, arch.classes() - 1);
    PixelBatch b;
    b.channels = arch.input_channels;
    b.has_coords = arch.coordinate_branch();
    std::vector<float> crop(static_cast<std::size_t>(arch.crop_values()));
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& v : crop) v = u(rng);
        const float cx = u(rng), cy = u(rng);
        b.append(crop, cx, cy, label(rng));
    }
    return b;
}

/// Linearly separable set: the class is the band of the crop mean, with a
/// dead zone of `margin` around each band edge.
inline PixelBatch separable_batch(const Architecture& arch, std::size_t n, std::uint64_t seed, double margin = 0.02) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    const int k = arch.classes();
    PixelBatch b;
    b.channels = arch.input_channels;
    b.has_coords = arch.coordinate_branch();
    std::vector<float> crop(static_cast<std::size_t>(arch.crop_values()));
    while (b.size() < n) {
        const int cls = static_cast<int>(b.size() % static_cast<std::size_t>(k));
        const double lo = static_cast<double>(cls) / k + margin, hi = static_cast<double>(cls + 1) / k - margin;
        const double target = lo + (hi - lo) * u(rng);
        double mean = 0.0;
        for (auto& v : crop) {
            v = u(rng);
            mean += v;
        }
        mean /= static_cast<double>(crop.size());
        for (auto& v : crop) v = static_cast<float>(v - mean + target);
        b.append(crop, u(rng), u(rng), cls);
    }
    return b;
}

}  // namespace waxsep::testing
