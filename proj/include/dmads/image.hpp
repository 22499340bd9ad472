#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dmads/metrics.hpp"
#include "dmads/ops.hpp"
#include "dmads/tensor.hpp"

namespace dmads {

// 8-bit raster with 1 (gray) or 3 (RGB) interleaved channels.
struct Image8 {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> pixels;

    Image8() = default;
    Image8(std::size_t h, std::size_t w, std::size_t c) : height(h), width(w), channels(c), pixels(h * w * c, 0) {}
};

// Any PNG is reduced to 8-bit gray or RGB: palettes expand, 16-bit strips,
// alpha is dropped, gray+alpha becomes gray. Throws DataError on failure.
Image8 read_png(const std::filesystem::path& path);

// Writes through a temporary file and renames it into place.
void write_png(const std::filesystem::path& path, const Image8& image);

Image8 to_image(const RgbImage& rgb);
Image8 to_image(const BinaryMask& mask);  // 0 / 255
RgbImage to_rgb(const Image8& image);     // gray replicates into all channels

// 1 x channels x H x W in [0, 1]; gray images are replicated when channels == 3.
Tensor<float> image_tensor(const Image8& image, std::size_t channels);

// 8-bit image in [0, 255] resized with the given interpolation.
Image8 resize_image(const Image8& image, std::size_t height, std::size_t width, ResizeMode mode);

// First channel thresholded at >= 128.
BinaryMask threshold_mask(const Image8& image);

}  // namespace dmads
