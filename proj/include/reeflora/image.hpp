#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "reeflora/errors.hpp"
#include "reeflora/tensor.hpp"

namespace reeflora {

// 8-bit raster, row-major, interleaved channels (1 = gray, 3 = RGB).
struct ImageU8 {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;

    ImageU8() = default;
    ImageU8(int w, int h, int c)
        : width(w), height(h), channels(c),
          pixels(static_cast<std::size_t>(w) * h * c, 0) {}

    std::uint8_t& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

// Reads PNG (any 8/16-bit variant, folded to 8-bit gray or RGB), binary PPM
// (P6) or binary PGM (P5), sniffing the magic bytes.
ImageU8 read_image(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const ImageU8& image);
void write_ppm(const std::filesystem::path& path, const ImageU8& image);  // P6 / P5

// Writes PNG or PPM/PGM depending on the extension (.png vs .ppm/.pgm).
void write_image(const std::filesystem::path& path, const ImageU8& image);

ImageU8 crop(const ImageU8& image, int x, int y, int w, int h);

// H x W x C tensor with values scaled to [0, 1].
template <typename T>
Tensor<T> image_to_tensor(const ImageU8& image) {
    Tensor<T> t({image.height, image.width, image.channels});
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
        t.data[i] = static_cast<T>(image.pixels[i]) / T(255);
    }
    return t;
}

// Grayscale image from unit-interval values (values clamped to [0, 1]).
ImageU8 gray_from_unit(const std::vector<double>& values, int width, int height);

}  // namespace reeflora
