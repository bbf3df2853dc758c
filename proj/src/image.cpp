#include "reeflora/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace reeflora {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail_read(const std::filesystem::path& path, const std::string& why) {
    throw IoError("cannot read raster '" + path.string() + "': " + why);
}

ImageU8 read_png_file(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) fail_read(path, "open failed");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail_read(path, "libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail_read(path, "libpng info init failed");
    }
    std::vector<png_bytep> row_ptrs;
    ImageU8 out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail_read(path, "malformed PNG");
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_byte color_type = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_strip_alpha(png);
    png_read_update_info(png, info);

    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = static_cast<int>(png_get_channels(png, info));
    if (out.channels != 1 && out.channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail_read(path, "unsupported channel count " + std::to_string(out.channels));
    }
    out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * out.channels);
    row_ptrs.resize(static_cast<std::size_t>(out.height));
    const std::size_t stride = static_cast<std::size_t>(out.width) * out.channels;
    for (int y = 0; y < out.height; ++y) row_ptrs[static_cast<std::size_t>(y)] = out.pixels.data() + y * stride;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

ImageU8 read_pnm_file(const std::filesystem::path& path, int channels) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_read(path, "open failed");
    std::string magic;
    in >> magic;
    auto next_int = [&in]() {
        // skip whitespace and '#' comment lines
        for (;;) {
            int c = in.peek();
            if (c == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(c)) {
                in.get();
            } else {
                break;
            }
        }
        int v = -1;
        in >> v;
        return v;
    };
    const int w = next_int(), h = next_int(), maxval = next_int();
    if (!in || w <= 0 || h <= 0) fail_read(path, "bad PNM header");
    if (maxval != 255) fail_read(path, "only 8-bit PNM supported (maxval 255)");
    in.get();  // single whitespace after maxval
    ImageU8 out(w, h, channels);
    in.read(reinterpret_cast<char*>(out.pixels.data()),
            static_cast<std::streamsize>(out.pixels.size()));
    if (!in) fail_read(path, "truncated PNM payload");
    return out;
}

}  // namespace

ImageU8 read_image(const std::filesystem::path& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) fail_read(path, "open failed");
    unsigned char magic[2] = {0, 0};
    probe.read(reinterpret_cast<char*>(magic), 2);
    probe.close();
    if (magic[0] == 0x89 && magic[1] == 'P') return read_png_file(path);
    if (magic[0] == 'P' && magic[1] == '6') return read_pnm_file(path, 3);
    if (magic[0] == 'P' && magic[1] == '5') return read_pnm_file(path, 1);
    fail_read(path, "unknown format (expected PNG, P6 PPM or P5 PGM)");
}

void write_png(const std::filesystem::path& path, const ImageU8& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw ContractError("write_png supports 1 or 3 channels");
    }
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError("cannot write '" + path.string() + "'");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng info init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encode failed for '" + path.string() + "'");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 8,
                 image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(image.width) * image.channels;
    for (int y = 0; y < image.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(image.pixels.data() + y * stride));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_ppm(const std::filesystem::path& path, const ImageU8& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw ContractError("write_ppm supports 1 or 3 channels");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << (image.channels == 3 ? "P6" : "P5") << "\n"
        << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()),
              static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw IoError("short write to '" + path.string() + "'");
}

void write_image(const std::filesystem::path& path, const ImageU8& image) {
    const auto ext = path.extension().string();
    if (ext == ".ppm" || ext == ".pgm") {
        write_ppm(path, image);
    } else {
        write_png(path, image);
    }
}

ImageU8 crop(const ImageU8& image, int x, int y, int w, int h) {
    if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > image.width || y + h > image.height) {
        throw GeometryError("crop " + std::to_string(w) + "x" + std::to_string(h) + "+" +
                            std::to_string(x) + "+" + std::to_string(y) +
                            " outside image " + std::to_string(image.width) + "x" +
                            std::to_string(image.height));
    }
    ImageU8 out(w, h, image.channels);
    const std::size_t src_stride = static_cast<std::size_t>(image.width) * image.channels;
    const std::size_t dst_stride = static_cast<std::size_t>(w) * image.channels;
    for (int row = 0; row < h; ++row) {
        const std::uint8_t* src =
            image.pixels.data() + (static_cast<std::size_t>(y + row)) * src_stride +
            static_cast<std::size_t>(x) * image.channels;
        std::copy_n(src, dst_stride, out.pixels.data() + static_cast<std::size_t>(row) * dst_stride);
    }
    return out;
}

ImageU8 gray_from_unit(const std::vector<double>& values, int width, int height) {
    if (static_cast<std::size_t>(width) * height != values.size()) {
        throw DimensionError("gray_from_unit: " + std::to_string(values.size()) +
                             " values for " + std::to_string(width) + "x" +
                             std::to_string(height));
    }
    ImageU8 out(width, height, 1);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = std::clamp(values[i], 0.0, 1.0);
        out.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return out;
}

}  // namespace reeflora
