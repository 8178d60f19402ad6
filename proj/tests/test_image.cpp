#include "support.hpp"
#include "waxsep/image.hpp"

#include <doctest.h>
#include <png.h>

#include <array>
#include <cstdio>
#include <fstream>

using namespace waxsep;
using waxsep::testing::TempDir;

namespace {

void write_raw_gray_png(const std::filesystem::path& path, int w, int h, int depth, const std::vector<unsigned>& values) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    REQUIRE(fp);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    png_init_io(png, fp);
    png_set_IHDR(png, info, w, h, depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const int bytes = depth / 8;
    std::vector<unsigned char> row(static_cast<std::size_t>(w * bytes));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const unsigned v = values[static_cast<std::size_t>(y * w + x)];
            if (bytes == 1)
                row[x] = static_cast<unsigned char>(v);
            else {
                row[2 * x] = static_cast<unsigned char>(v >> 8);
                row[2 * x + 1] = static_cast<unsigned char>(v & 0xff);
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

}  // namespace

TEST_CASE("8-bit PNG intensities are normalized by 255") {
    TempDir dir;
    write_raw_gray_png(dir / "a.png", 2, 2, 8, {0, 255, 128, 64});
    const auto img = read_image(dir / "a.png");
    REQUIRE(img.width() == 2);
    REQUIRE(img.height() == 2);
    REQUIRE(img.channels() == 1);
    CHECK(img.at(0, 0, 0) == 0.0);
    CHECK(img.at(1, 0, 0) == 1.0);
    CHECK(img.at(0, 1, 0) == doctest::Approx(128.0 / 255.0).epsilon(1e-12));
    CHECK(img.at(1, 1, 0) == doctest::Approx(64.0 / 255.0).epsilon(1e-12));
}

TEST_CASE("16-bit PNG value 65535 reads as 1.0") {
    TempDir dir;
    write_raw_gray_png(dir / "b.png", 1, 1, 16, {65535});
    CHECK(read_image(dir / "b.png").at(0, 0, 0) == 1.0);
}

TEST_CASE("read errors name the problem") {
    TempDir dir;
    CHECK_THROWS_WITH_AS(read_image(dir / "nope.png"), doctest::Contains("missing file"), Error);
    std::ofstream(dir / "junk.png") << "not an image";
    CHECK_THROWS_WITH_AS(read_image(dir / "junk.png"), doctest::Contains("unsupported format"), Error);
    CHECK_THROWS_WITH_AS(RasterImage(0, 3, 1), doctest::Contains("zero-dimension"), Error);
}

TEST_CASE("round trip stays within one quantization step") {
    TempDir dir;
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        const int c = trial % 2 ? 1 : 3;
        const auto img = waxsep::testing::random_image(7 + trial, 5 + trial, c, rng);
        for (const char* ext : {".png", ".pnm"}) {
            for (int depth : {8, 16}) {
                const auto path = dir / ("rt" + std::to_string(trial) + std::to_string(depth) + ext);
                write_image(img, path, depth);
                const auto back = read_image(path);
                REQUIRE(back.same_shape(img));
                const double step = 1.0 / (depth == 8 ? 255.0 : 65535.0);
                CHECK(waxsep::testing::max_abs_diff(img, back) <= step + 1e-12);
            }
        }
    }
}

TEST_CASE("values outside [0,1] are clamped on export only") {
    TempDir dir;
    RasterImage img(2, 1, 1, std::vector<double>{1.3, -0.2});
    CHECK(img.at(0, 0, 0) == 1.3);
    write_image(img, dir / "c.png");
    const auto back = read_image(dir / "c.png");
    CHECK(back.at(0, 0, 0) == 1.0);
    CHECK(back.at(1, 0, 0) == 0.0);
}

TEST_CASE("check_finite and shape checks") {
    RasterImage img(2, 2, 1);
    CHECK_NOTHROW(img.check_finite());
    img.at(1, 1, 0) = std::nan("");
    CHECK_THROWS_AS(img.check_finite(), Error);
    CHECK_THROWS_WITH_AS(require_same_shape(RasterImage(2, 2, 1), RasterImage(2, 3, 1), "x"),
                         doctest::Contains("dimension mismatch"), Error);
    CHECK_THROWS_AS(RasterImage(2, 2, 2), Error);
    CHECK_THROWS_AS(RasterImage(2, 2, 1, std::vector<double>(3)), Error);
}

TEST_CASE("indexed PNG keeps palette indices") {
    TempDir dir;
    const std::array<PaletteColor, 3> palette{{{0, 255, 0}, {255, 0, 0}, {0, 0, 255}}};
    IndexedImage img{3, 2, {0, 1, 2, 2, 1, 0}};
    write_indexed_png(img, palette, dir / "l.png");
    const auto back = read_indexed_png(dir / "l.png");
    CHECK(back.width == 3);
    CHECK(back.height == 2);
    CHECK(back.indices == img.indices);
    IndexedImage bad{1, 1, {3}};
    CHECK_THROWS_AS(write_indexed_png(bad, palette, dir / "bad.png"), Error);
}

TEST_CASE("encode_png produces a PNG signature") {
    const auto bytes = encode_png(RasterImage(4, 4, 3, 0.5));
    REQUIRE(bytes.size() > 8);
    CHECK(static_cast<unsigned char>(bytes[0]) == 0x89);
    CHECK(bytes.substr(1, 3) == "PNG");
}
