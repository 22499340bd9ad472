#include "dmads/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dmads/error.hpp"
#include "dmads/tape.hpp"

namespace dmads {

namespace fs = std::filesystem;

Image8 read_png(const fs::path& path) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw DataError("cannot read PNG '" + path.string() + "': " + png.message);
    }
    const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
    png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    Image8 image(png.height, png.width, color ? 3 : 1);
    if (!png_image_finish_read(&png, nullptr, image.pixels.data(), 0, nullptr)) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw DataError("cannot decode PNG '" + path.string() + "': " + msg);
    }
    return image;
}

void write_png(const fs::path& path, const Image8& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw DataError("write_png: unsupported channel count " + std::to_string(image.channels));
    }
    if (image.pixels.size() != image.height * image.width * image.channels || image.pixels.empty()) {
        throw DataError("write_png: pixel buffer does not match the image size");
    }
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    fs::path tmp = path;
    tmp += ".tmp";
    if (!png_image_write_to_file(&png, tmp.c_str(), 0, image.pixels.data(), 0, nullptr)) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw DataError("cannot write PNG '" + path.string() + "': " + png.message);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        throw DataError("cannot move PNG into place at '" + path.string() + "': " + ec.message());
    }
}

Image8 to_image(const RgbImage& rgb) {
    Image8 out(rgb.height, rgb.width, 3);
    out.pixels = rgb.pixels;
    return out;
}

Image8 to_image(const BinaryMask& mask) {
    Image8 out(mask.height, mask.width, 1);
    for (std::size_t i = 0; i < mask.size(); ++i) out.pixels[i] = mask.values[i] ? 255 : 0;
    return out;
}

RgbImage to_rgb(const Image8& image) {
    RgbImage out(image.height, image.width);
    const std::size_t n = image.height * image.width;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < 3; ++k) {
            out.pixels[3 * i + k] = image.pixels[i * image.channels + (image.channels == 3 ? k : 0)];
        }
    }
    return out;
}

namespace {

Tensor<float> planar(const Image8& image, std::size_t channels, float scale) {
    if (image.channels != 1 && image.channels != 3) {
        throw DataError("image has " + std::to_string(image.channels) + " channels, expected 1 or 3");
    }
    if (channels != 1 && channels != 3) {
        throw ConfigError("image tensors need 1 or 3 channels, got " + std::to_string(channels));
    }
    const std::size_t plane = image.height * image.width;
    Tensor<float> t(Shape{1, channels, image.height, image.width});
    auto dst = t.mutable_data();
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            std::size_t src_c = 0;
            if (image.channels == 3) src_c = channels == 3 ? c : 0;
            float v = image.pixels[i * image.channels + src_c];
            if (image.channels == 3 && channels == 1) {
                v = (float(image.pixels[3 * i]) + float(image.pixels[3 * i + 1]) + float(image.pixels[3 * i + 2])) / 3.0f;
            }
            dst[c * plane + i] = v * scale;
        }
    }
    return t;
}

}  // namespace

Tensor<float> image_tensor(const Image8& image, std::size_t channels) {
    return planar(image, channels, 1.0f / 255.0f);
}

Image8 resize_image(const Image8& image, std::size_t height, std::size_t width, ResizeMode mode) {
    if (image.height == height && image.width == width) return image;
    NoGradScope<float> no_grad;
    const Tensor<float> src = planar(image, image.channels, 1.0f);
    const Tensor<float> dst = resize(src, height, width, mode);
    Image8 out(height, width, image.channels);
    const std::size_t plane = height * width;
    auto d = dst.data();
    for (std::size_t c = 0; c < image.channels; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            const float v = std::clamp(std::nearbyint(d[c * plane + i]), 0.0f, 255.0f);
            out.pixels[i * image.channels + c] = static_cast<std::uint8_t>(v);
        }
    }
    return out;
}

BinaryMask threshold_mask(const Image8& image) {
    BinaryMask m(image.height, image.width);
    for (std::size_t i = 0; i < m.size(); ++i) m.values[i] = image.pixels[i * image.channels] >= 128 ? 1 : 0;
    return m;
}

}  // namespace dmads
