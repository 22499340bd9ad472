#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dmads/tensor.hpp"

namespace dmads {

// Single-channel binary mask, row-major, values 0 or 1.
struct BinaryMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> values;

    BinaryMask() = default;
    BinaryMask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), values(h * w, fill) {}

    std::size_t size() const { return values.size(); }
    std::size_t count() const;

    // Sample n of an N x 1 x H x W tensor whose values are exactly 0 or 1.
    // Anything else throws DataError.
    static BinaryMask from_binary(const Tensor<float>& t, std::size_t n = 0);
    // Thresholds sigmoid(logit) > 0.5, i.e. logit > 0.
    static BinaryMask from_logits(const Tensor<float>& logits, std::size_t n = 0);
};

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
};

struct SampleMetrics {
    std::string id;
    ConfusionCounts counts;
    double dice = 0.0;
    double iou = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

struct MetricsReport {
    std::vector<SampleMetrics> samples;
    // Arithmetic mean of the per-sample values.
    double dice = 0.0;
    double iou = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

// Throws ShapeError on a size mismatch and DataError on a non-binary value.
ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);

// An empty union (tp + fp + fn == 0) scores 1 everywhere. Otherwise a zero
// precision or recall denominator scores 0.
SampleMetrics score(const ConfusionCounts& c, std::string id = {});

SampleMetrics compute_metrics(const BinaryMask& pred, const BinaryMask& gt, std::string id = {});

MetricsReport summarize(std::vector<SampleMetrics> samples);

// Interleaved 8-bit RGB.
struct RgbImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;

    RgbImage() = default;
    RgbImage(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w * 3, 0) {}
};

// FP red, FN green, TP white. TN pixels are black, or the base image at half
// intensity when one is given (never pure red, green or white).
RgbImage render_overlay(const BinaryMask& pred, const BinaryMask& gt, const RgbImage* base = nullptr);

}  // namespace dmads
