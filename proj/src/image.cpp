#include "waxsep/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>

namespace waxsep {

RasterImage::RasterImage(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
    if (width <= 0 || height <= 0) throw Error("zero-dimension image");
    if (channels != 1 && channels != 3) throw Error("image must have 1 or 3 channels");
    data_.assign(pixel_count() * static_cast<std::size_t>(channels), fill);
}

RasterImage::RasterImage(int width, int height, int channels, std::vector<double> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (width <= 0 || height <= 0) throw Error("zero-dimension image");
    if (channels != 1 && channels != 3) throw Error("image must have 1 or 3 channels");
    if (data_.size() != pixel_count() * static_cast<std::size_t>(channels))
        throw Error("image data length does not match width x height x channels");
}

void RasterImage::check_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) throw Error("image contains non-finite values");
}

void require_same_shape(const RasterImage& a, const RasterImage& b, const std::string& what) {
    if (!a.same_shape(b))
        throw Error("dimension mismatch: " + what + " (" + std::to_string(a.width()) + "x" +
                    std::to_string(a.height()) + "x" + std::to_string(a.channels()) + " vs " +
                    std::to_string(b.width()) + "x" + std::to_string(b.height()) + "x" +
                    std::to_string(b.channels()) + ")");
}

namespace {

std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return ext;
}

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

struct PngReadInfo {
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    int channels = 0;
    int bit_depth = 0;
    std::vector<unsigned char> rows;  // packed rows, big-endian 16-bit samples
    std::size_t rowbytes = 0;
};

// Decodes into `out`; returns an error message (empty on success). No C++
// objects with destructors live across setjmp in this function.
std::string png_decode(std::FILE* fp, PngReadInfo& out, bool keep_palette) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) return "png: out of memory";
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        return "png: out of memory";
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return "corrupt or unsupported PNG data";
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    const int color_type = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (!keep_palette) {
        if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        png_set_strip_alpha(png);
    } else if (depth < 8) {
        png_set_packing(png);
    }
    png_read_update_info(png, info);

    out.width = png_get_image_width(png, info);
    out.height = png_get_image_height(png, info);
    out.channels = png_get_channels(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    out.rowbytes = png_get_rowbytes(png, info);
    if (out.width == 0 || out.height == 0) {
        png_destroy_read_struct(&png, &info, nullptr);
        return "zero-dimension image";
    }
    out.rows.resize(out.rowbytes * out.height);
    for (png_uint_32 y = 0; y < out.height; ++y)
        png_read_row(png, out.rows.data() + y * out.rowbytes, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return {};
}

void png_write_to_memory(png_structp png, png_bytep data, png_size_t length) {
    auto* buffer = static_cast<std::string*>(png_get_io_ptr(png));
    buffer->append(reinterpret_cast<const char*>(data), length);
}

void png_flush_noop(png_structp) {}

// Shared writer: either to `fp` or into `memory` when fp is null.
std::string png_encode(std::FILE* fp, std::string* memory, int width, int height, int color_type,
                       int bit_depth, const std::vector<unsigned char>& rows, std::size_t rowbytes,
                       std::span<const PaletteColor> palette) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) return "png: out of memory";
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        return "png: out of memory";
    }
    std::vector<png_color> pal(palette.size());
    for (std::size_t i = 0; i < palette.size(); ++i) pal[i] = {palette[i].r, palette[i].g, palette[i].b};
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return "failed to encode PNG";
    }
    if (fp)
        png_init_io(png, fp);
    else
        png_set_write_fn(png, memory, png_write_to_memory, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    if (color_type == PNG_COLOR_TYPE_PALETTE)
        png_set_PLTE(png, info, pal.data(), static_cast<int>(pal.size()));
    png_write_info(png, info);
    for (int y = 0; y < height; ++y)
        png_write_row(png, rows.data() + static_cast<std::size_t>(y) * rowbytes);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return {};
}

bool has_png_signature(std::FILE* fp) {
    unsigned char sig[8] = {};
    const std::size_t n = std::fread(sig, 1, 8, fp);
    std::rewind(fp);
    return n == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

RasterImage decode_png_file(std::FILE* fp, const std::filesystem::path& path) {
    PngReadInfo info;
    const std::string err = png_decode(fp, info, false);
    if (!err.empty()) throw Error(err + ": " + path.string());
    int channels = info.channels;
    if (channels == 2) channels = 1;  // alpha already stripped; defensive for gray+alpha
    if (channels == 4) channels = 3;
    if (channels != 1 && channels != 3) throw Error("unsupported format: " + path.string());

    const double scale = info.bit_depth == 16 ? 65535.0 : 255.0;
    const int bytes = info.bit_depth == 16 ? 2 : 1;
    RasterImage img(static_cast<int>(info.width), static_cast<int>(info.height), channels);
    auto out = img.data();
    std::size_t k = 0;
    for (png_uint_32 y = 0; y < info.height; ++y) {
        const unsigned char* row = info.rows.data() + y * info.rowbytes;
        for (png_uint_32 x = 0; x < info.width; ++x) {
            for (int c = 0; c < channels; ++c) {
                const std::size_t off = (static_cast<std::size_t>(x) * info.channels + c) * bytes;
                const unsigned v = bytes == 2 ? (static_cast<unsigned>(row[off]) << 8) | row[off + 1]
                                              : row[off];
                out[k++] = v / scale;
            }
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// PNM (P5 / P6)
// ---------------------------------------------------------------------------

int read_pnm_int(std::istream& in) {
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        } else if (!std::isspace(ch)) {
            break;
        }
        ch = in.get();
    }
    if (ch == EOF || !std::isdigit(ch)) throw Error("malformed PNM header");
    long value = 0;
    while (ch != EOF && std::isdigit(ch)) {
        value = value * 10 + (ch - '0');
        if (value > 1'000'000'000) throw Error("malformed PNM header");
        ch = in.get();
    }
    return static_cast<int>(value);  // the single whitespace after the value is consumed
}

RasterImage read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("missing file: " + path.string());
    char magic[2] = {};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
        throw Error("unsupported format: " + path.string());
    const int channels = magic[1] == '6' ? 3 : 1;
    const int width = read_pnm_int(in);
    const int height = read_pnm_int(in);
    const int maxval = read_pnm_int(in);
    if (width <= 0 || height <= 0) throw Error("zero-dimension image: " + path.string());
    if (maxval <= 0 || maxval > 65535) throw Error("unsupported PNM maxval: " + path.string());
    const int bytes = maxval > 255 ? 2 : 1;
    const std::size_t count = static_cast<std::size_t>(width) * height * channels;
    std::vector<unsigned char> raw(count * bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw Error("truncated PNM data: " + path.string());
    std::vector<double> data(count);
    for (std::size_t i = 0; i < count; ++i) {
        const unsigned v = bytes == 2 ? (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1] : raw[i];
        data[i] = static_cast<double>(v) / maxval;
    }
    return RasterImage(width, height, channels, std::move(data));
}

unsigned quantize(double v, unsigned maxval) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned>(std::lround(clamped * maxval));
}

std::vector<unsigned char> quantize_rows(const RasterImage& image, int bit_depth) {
    const unsigned maxval = bit_depth == 16 ? 65535u : 255u;
    const int bytes = bit_depth == 16 ? 2 : 1;
    auto src = image.data();
    std::vector<unsigned char> out(src.size() * bytes);
    for (std::size_t i = 0; i < src.size(); ++i) {
        const unsigned q = quantize(src[i], maxval);
        if (bytes == 2) {
            out[2 * i] = static_cast<unsigned char>(q >> 8);
            out[2 * i + 1] = static_cast<unsigned char>(q & 0xFF);
        } else {
            out[i] = static_cast<unsigned char>(q);
        }
    }
    return out;
}

}  // namespace

RasterImage read_image(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) throw Error("missing file: " + path.string());
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw Error("missing file: " + path.string());
    if (has_png_signature(fp.get())) return decode_png_file(fp.get(), path);
    fp.reset();
    return read_pnm(path);
}

void write_image(const RasterImage& image, const std::filesystem::path& path, int bit_depth) {
    if (image.empty()) throw Error("cannot write an empty image");
    if (bit_depth != 8 && bit_depth != 16) throw Error("bit depth must be 8 or 16");
    const std::string ext = lower_extension(path);
    const auto rows = quantize_rows(image, bit_depth);
    const std::size_t rowbytes = rows.size() / static_cast<std::size_t>(image.height());

    if (ext == ".png") {
        FilePtr fp(std::fopen(path.c_str(), "wb"));
        if (!fp) throw Error("unwritable path: " + path.string());
        const int color = image.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
        const std::string err =
            png_encode(fp.get(), nullptr, image.width(), image.height(), color, bit_depth, rows, rowbytes, {});
        if (!err.empty()) throw Error(err + ": " + path.string());
        return;
    }
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("unwritable path: " + path.string());
        out << (image.channels() == 3 ? "P6" : "P5") << '\n'
            << image.width() << ' ' << image.height() << '\n'
            << (bit_depth == 16 ? 65535 : 255) << '\n';
        out.write(reinterpret_cast<const char*>(rows.data()), static_cast<std::streamsize>(rows.size()));
        if (!out) throw Error("unwritable path: " + path.string());
        return;
    }
    throw Error("unsupported format: " + path.string());
}

std::string encode_png(const RasterImage& image, int bit_depth) {
    if (image.empty()) throw Error("cannot encode an empty image");
    const auto rows = quantize_rows(image, bit_depth);
    const std::size_t rowbytes = rows.size() / static_cast<std::size_t>(image.height());
    std::string buffer;
    const int color = image.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    const std::string err =
        png_encode(nullptr, &buffer, image.width(), image.height(), color, bit_depth, rows, rowbytes, {});
    if (!err.empty()) throw Error(err);
    return buffer;
}

void write_indexed_png(const IndexedImage& image, std::span<const PaletteColor> palette,
                       const std::filesystem::path& path) {
    if (image.width <= 0 || image.height <= 0) throw Error("zero-dimension image");
    if (palette.empty() || palette.size() > 256) throw Error("palette must hold 1..256 colors");
    for (auto idx : image.indices)
        if (idx >= palette.size()) throw Error("label index outside palette");
    std::vector<unsigned char> rows(image.indices.begin(), image.indices.end());
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw Error("unwritable path: " + path.string());
    const std::string err = png_encode(fp.get(), nullptr, image.width, image.height, PNG_COLOR_TYPE_PALETTE, 8,
                                       rows, static_cast<std::size_t>(image.width), palette);
    if (!err.empty()) throw Error(err + ": " + path.string());
}

IndexedImage read_indexed_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw Error("missing file: " + path.string());
    if (!has_png_signature(fp.get())) throw Error("unsupported format: " + path.string());
    PngReadInfo info;
    const std::string err = png_decode(fp.get(), info, true);
    if (!err.empty()) throw Error(err + ": " + path.string());
    if (info.channels != 1 || info.bit_depth != 8) throw Error("not an 8-bit indexed image: " + path.string());
    IndexedImage out;
    out.width = static_cast<int>(info.width);
    out.height = static_cast<int>(info.height);
    out.indices.resize(static_cast<std::size_t>(out.width) * out.height);
    for (int y = 0; y < out.height; ++y)
        std::copy_n(info.rows.data() + static_cast<std::size_t>(y) * info.rowbytes, out.width,
                    out.indices.begin() + static_cast<std::ptrdiff_t>(y) * out.width);
    return out;
}

}  // namespace waxsep
