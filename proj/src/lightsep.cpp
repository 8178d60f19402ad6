#include "waxsep/lightsep.hpp"

#include <algorithm>
#include <cmath>

namespace waxsep {

namespace {

int floor_div(int a, int b) noexcept {
    int q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

void check_stack(std::span<const RasterImage> stack) {
    if (stack.size() != kPatternCount)
        throw Error("pattern stack must hold 25 images, got " + std::to_string(stack.size()));
    for (const auto& img : stack) {
        if (img.empty()) throw Error("empty image in pattern stack");
        require_same_shape(stack.front(), img, "pattern stack");
    }
}

// Calls fn(i, min, max) for every sample index of the stack.
template <typename Fn>
void for_each_extrema(std::span<const RasterImage> stack, Fn&& fn) {
    const std::size_t n = stack.front().data().size();
    for (std::size_t i = 0; i < n; ++i) {
        double lo = stack[0].data()[i];
        double hi = lo;
        for (std::size_t k = 1; k < stack.size(); ++k) {
            const double v = stack[k].data()[i];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        fn(i, lo, hi);
    }
}

double negative_share(const RasterImage& a, const RasterImage& b) {
    std::size_t neg = 0;
    for (double v : a.data()) neg += v < 0.0;
    for (double v : b.data()) neg += v < 0.0;
    return static_cast<double>(neg) / static_cast<double>(a.data().size() + b.data().size());
}

}  // namespace

PatternSet::PatternSet(int width, int height, int cell_size)
    : width_(width), height_(height), cell_(cell_size), stride_((cell_size + 3) / 4) {
    if (cell_size < 1) throw Error("pattern cell size must be >= 1");
    if (width < 2 * cell_size || height < 2 * cell_size)
        throw Error("degenerate pattern dimensions: image must span at least two cells per axis");
    for (int iy = 0; iy < 5; ++iy)
        for (int ix = 0; ix < 5; ++ix) offsets_[static_cast<std::size_t>(iy * 5 + ix)] = {ix * stride_, iy * stride_};
}

bool PatternSet::lit(int mask, int x, int y) const noexcept {
    const auto& o = offsets_[static_cast<std::size_t>(mask)];
    return ((floor_div(x - o.dx, cell_) + floor_div(y - o.dy, cell_)) & 1) == 0;
}

RasterImage PatternSet::mask(int k) const {
    if (k < 0 || k >= kPatternCount) throw Error("mask index out of range");
    RasterImage m(width_, height_, 1);
    for (int y = 0; y < height_; ++y)
        for (int x = 0; x < width_; ++x) m.at(x, y, 0) = lit(k, x, y) ? 1.0 : 0.0;
    return m;
}

PatternSet generate_patterns(int width, int height, int cell_size) {
    return PatternSet(width, height, cell_size);
}

BlackLevel estimate_black_value(const RasterImage& black_capture) {
    if (black_capture.empty()) throw Error("black capture is empty");
    black_capture.check_finite();
    double sum = 0.0;
    for (double v : black_capture.data()) sum += v;
    return {sum / static_cast<double>(black_capture.data().size()), black_capture};
}

PatternComponents separate_pattern_as_written(std::span<const RasterImage> stack, const BlackLevel& black) {
    check_stack(stack);
    const double b = black.b_value;
    if (b == 1.0 || b == -1.0) throw Error("b_value of +-1 makes the direct/global formulas divide by zero");
    const auto& ref = stack.front();
    PatternComponents out{RasterImage(ref.width(), ref.height(), ref.channels()),
                          RasterImage(ref.width(), ref.height(), ref.channels()), 0.0};
    auto direct = out.direct.data();
    auto global = out.global.data();
    for_each_extrema(stack, [&](std::size_t i, double lo, double hi) {
        direct[i] = lo - hi / (b - 1.0);
        global[i] = 2.0 * hi - direct[i] / (b + 1.0);
    });
    out.negative_fraction = negative_share(out.direct, out.global);
    return out;
}

PatternComponents separate_pattern_reference(std::span<const RasterImage> stack, const BlackLevel& black) {
    check_stack(stack);
    const double b = black.b_value;
    if (!(b < 1.0) || b <= -1.0) throw Error("reference separation requires -1 < b_value < 1");
    const auto& ref = stack.front();
    PatternComponents out{RasterImage(ref.width(), ref.height(), ref.channels()),
                          RasterImage(ref.width(), ref.height(), ref.channels()), 0.0};
    auto direct = out.direct.data();
    auto global = out.global.data();
    const double inv_direct = 1.0 / (1.0 - b);
    const double inv_global = 1.0 / (1.0 - b * b);
    for_each_extrema(stack, [&](std::size_t i, double lo, double hi) {
        direct[i] = (hi - lo) * inv_direct;
        global[i] = 2.0 * (lo - b * hi) * inv_global;
    });
    out.negative_fraction = negative_share(out.direct, out.global);
    return out;
}

PolarizationComponents separate_polarization(const RasterImage& parallel, const RasterImage& perpendicular) {
    if (parallel.empty() || perpendicular.empty()) throw Error("empty polarization image");
    require_same_shape(parallel, perpendicular, "parallel vs perpendicular");
    PolarizationComponents out{RasterImage(parallel.width(), parallel.height(), parallel.channels()),
                               RasterImage(parallel.width(), parallel.height(), parallel.channels())};
    auto par = parallel.data();
    auto perp = perpendicular.data();
    auto diffuse = out.diffuse.data();
    auto specular = out.specular.data();
    for (std::size_t i = 0; i < par.size(); ++i) {
        diffuse[i] = 2.0 * perp[i];
        specular[i] = par[i] - diffuse[i] / 2.0;
    }
    return out;
}

SeparationMode parse_separation_mode(std::string_view text) {
    if (text == "pattern") return SeparationMode::pattern;
    if (text == "polarization") return SeparationMode::polarization;
    if (text == "both") return SeparationMode::both;
    throw Error("unknown separation mode '" + std::string(text) + "'");
}

SeparationResult separate_capture(const CaptureSet& capture, SeparationMode mode,
                                  SeparationResult::Formulation formulation) {
    capture.validate();
    SeparationResult result;
    result.formulation = formulation;
    if (mode != SeparationMode::polarization) {
        const BlackLevel black = estimate_black_value(capture.black_capture);
        auto parts = formulation == SeparationResult::Formulation::reference
                         ? separate_pattern_reference(capture.pattern_stack, black)
                         : separate_pattern_as_written(capture.pattern_stack, black);
        result.b_value = black.b_value;
        result.clamp_fraction = parts.negative_fraction;
        result.direct = std::move(parts.direct);
        result.global = std::move(parts.global);
    }
    if (mode != SeparationMode::pattern) {
        auto parts = separate_polarization(capture.parallel, capture.perpendicular);
        result.diffuse = std::move(parts.diffuse);
        result.specular = std::move(parts.specular);
    }
    return result;
}

void clamp_nonnegative(SeparationResult& result) {
    for (auto* img : {&result.direct, &result.global, &result.diffuse, &result.specular})
        if (img->has_value())
            for (double& v : (*img)->data()) v = std::max(v, 0.0);
}

}  // namespace waxsep
