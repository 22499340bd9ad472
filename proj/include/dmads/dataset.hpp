#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dmads/image.hpp"
#include "dmads/rng.hpp"
#include "dmads/tensor.hpp"

namespace dmads {

struct Sample {
    std::string id;       // file stem
    Tensor<float> image;  // 1 x C x S x S in [0, 1]
    Tensor<float> mask;   // 1 x 1 x S x S in {0, 1}
};

struct Dataset {
    std::vector<Sample> train;
    std::vector<Sample> val;
};

// Reads dir/images/*.png and dir/masks/*.png matched by stem, in lexicographic
// stem order. Images are resized bilinearly to image_size, masks by nearest
// neighbour and thresholded at >= 128.
std::vector<Sample> load_samples(const std::filesystem::path& dir, std::size_t image_size,
                                 std::size_t image_channels = 3);

// Seeded shuffle, then round(0.8 n) samples (clamped so both splits are
// non-empty) train and the rest validate; n = 1 puts the sample in both.
// Each split keeps stem order.
Dataset split_dataset(std::vector<Sample> samples, std::uint64_t seed);

Dataset load_dataset(const std::filesystem::path& dir, std::size_t image_size, std::uint64_t seed,
                     std::size_t image_channels = 3);

struct SyntheticPair {
    Image8 image;  // RGB
    BinaryMask mask;
};

// One draw of the generator below.
SyntheticPair synthesize(std::size_t size, Rng& rng);

// Writes n pairs dir/images/synth_XXXX.png (RGB) and dir/masks/synth_XXXX.png:
// one filled ellipse, textured and brighter than a noisy background. Output is
// a pure function of (n, size, seed).
void generate_synthetic(const std::filesystem::path& dir, std::size_t n, std::size_t size, std::uint64_t seed);

// Stacks samples[indices] along the batch dimension.
Tensor<float> stack_images(std::span<const Sample> samples, std::span<const std::size_t> indices);
Tensor<float> stack_masks(std::span<const Sample> samples, std::span<const std::size_t> indices);

}  // namespace dmads
