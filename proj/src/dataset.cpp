#include "dmads/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

#include "dmads/error.hpp"

namespace dmads {

namespace fs = std::filesystem;

namespace {

bool is_png(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png";
}

std::map<std::string, fs::path> png_files(const fs::path& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) {
        throw DataError("dataset: directory '" + dir.string() + "' does not exist");
    }
    std::map<std::string, fs::path> files;
    for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && is_png(e.path())) files.emplace(e.path().stem().string(), e.path());
    }
    return files;
}

Tensor<float> mask_tensor(const BinaryMask& m) {
    Tensor<float> t(Shape{1, 1, m.height, m.width});
    auto d = t.mutable_data();
    for (std::size_t i = 0; i < m.size(); ++i) d[i] = m.values[i];
    return t;
}

std::uint8_t clamp_byte(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

Tensor<float> stack(std::span<const Sample> samples, std::span<const std::size_t> indices, bool masks) {
    if (indices.empty()) {
        throw DataError("batch: no samples selected");
    }
    auto pick = [&](std::size_t i) -> const Tensor<float>& {
        if (i >= samples.size()) throw DataError("batch: sample index " + std::to_string(i) + " out of range");
        return masks ? samples[i].mask : samples[i].image;
    };
    const Shape one = pick(indices[0]).shape();
    Tensor<float> out(Shape{indices.size(), one.c, one.h, one.w});
    auto dst = out.mutable_data();
    const std::size_t per = one.numel();
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const Tensor<float>& t = pick(indices[b]);
        if (!(t.shape() == one)) {
            throw ShapeError("batch: sample " + samples[indices[b]].id + " is " + t.shape().str() + ", expected " +
                             one.str());
        }
        std::copy(t.data().begin(), t.data().end(), dst.begin() + static_cast<std::ptrdiff_t>(b * per));
    }
    return out;
}

}  // namespace

std::vector<Sample> load_samples(const fs::path& dir, std::size_t image_size, std::size_t image_channels) {
    const auto images = png_files(dir / "images");
    const auto masks = png_files(dir / "masks");
    if (images.empty()) {
        throw DataError("dataset: no PNG images in '" + (dir / "images").string() + "'");
    }
    std::string missing;
    for (const auto& [stem, path] : images) {
        if (!masks.count(stem)) missing += (missing.empty() ? "" : ", ") + stem;
    }
    if (!missing.empty()) {
        throw DataError("dataset: no mask for image(s): " + missing);
    }
    std::vector<Sample> samples;
    samples.reserve(images.size());
    for (const auto& [stem, path] : images) {
        const Image8 image = resize_image(read_png(path), image_size, image_size, ResizeMode::bilinear);
        const Image8 mask = resize_image(read_png(masks.at(stem)), image_size, image_size, ResizeMode::nearest);
        samples.push_back({stem, image_tensor(image, image_channels), mask_tensor(threshold_mask(mask))});
    }
    return samples;
}

Dataset split_dataset(std::vector<Sample> samples, std::uint64_t seed) {
    Dataset d;
    const std::size_t n = samples.size();
    if (n == 0) {
        throw DataError("dataset: nothing to split");
    }
    if (n == 1) {
        d.train = samples;
        d.val = std::move(samples);
        return d;
    }
    const auto rounded = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
    const std::size_t n_train = std::clamp<std::size_t>(rounded, 1, n - 1);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());
    std::vector<bool> is_train(n, false);
    for (std::size_t i = 0; i < n_train; ++i) is_train[order[i]] = true;
    for (std::size_t i = 0; i < n; ++i) (is_train[i] ? d.train : d.val).push_back(std::move(samples[i]));
    return d;
}

Dataset load_dataset(const fs::path& dir, std::size_t image_size, std::uint64_t seed, std::size_t image_channels) {
    return split_dataset(load_samples(dir, image_size, image_channels), seed);
}

SyntheticPair synthesize(std::size_t size, Rng& rng) {
    const double s = static_cast<double>(size);
    const double cx = rng.uniform(0.25, 0.75) * s;
    const double cy = rng.uniform(0.25, 0.75) * s;
    const double ax = rng.uniform(0.1, 0.35) * s;
    const double ay = rng.uniform(0.1, 0.35) * s;
    const double angle = rng.uniform(0.0, 3.141592653589793);
    const double ca = std::cos(angle);
    const double sa = std::sin(angle);
    double bg[3], fg[3];
    for (int k = 0; k < 3; ++k) {
        bg[k] = rng.uniform(30.0, 90.0);
        fg[k] = rng.uniform(160.0, 230.0);
    }
    SyntheticPair pair{Image8(size, size, 3), BinaryMask(size, size)};
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double dx = static_cast<double>(x) + 0.5 - cx;
            const double dy = static_cast<double>(y) + 0.5 - cy;
            const double u = (dx * ca + dy * sa) / ax;
            const double v = (-dx * sa + dy * ca) / ay;
            const bool inside = u * u + v * v <= 1.0;
            const std::size_t i = y * size + x;
            pair.mask.values[i] = inside ? 1 : 0;
            for (int k = 0; k < 3; ++k) {
                const double noise = 12.0 * rng.normal();
                pair.image.pixels[3 * i + k] = clamp_byte((inside ? fg[k] : bg[k]) + noise);
            }
        }
    }
    return pair;
}

void generate_synthetic(const fs::path& dir, std::size_t n, std::size_t size, std::uint64_t seed) {
    if (size < 4 || size % 4 != 0) {
        throw ConfigError("synthetic size " + std::to_string(size) + " must be a positive multiple of 4");
    }
    std::error_code ec;
    fs::create_directories(dir / "images", ec);
    fs::create_directories(dir / "masks", ec);
    if (ec) {
        throw DataError("cannot create '" + dir.string() + "': " + ec.message());
    }
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        char stem[32];
        std::snprintf(stem, sizeof(stem), "synth_%04zu.png", i);
        const SyntheticPair pair = synthesize(size, rng);
        write_png(dir / "images" / stem, pair.image);
        write_png(dir / "masks" / stem, to_image(pair.mask));
    }
}

Tensor<float> stack_images(std::span<const Sample> samples, std::span<const std::size_t> indices) {
    return stack(samples, indices, false);
}

Tensor<float> stack_masks(std::span<const Sample> samples, std::span<const std::size_t> indices) {
    return stack(samples, indices, true);
}

}  // namespace dmads
