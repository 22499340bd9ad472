#include "dmads/metrics.hpp"

#include <algorithm>

#include "dmads/error.hpp"

namespace dmads {

namespace {

std::string dims(std::size_t h, std::size_t w) {
    return std::to_string(h) + "x" + std::to_string(w);
}

void require_channel(const Tensor<float>& t, std::size_t n, const char* what) {
    const Shape& s = t.shape();
    if (s.c != 1 || n >= s.n) {
        throw ShapeError(std::string(what) + ": expected an N x 1 x H x W tensor with sample " + std::to_string(n) +
                         ", got " + s.str());
    }
}

}  // namespace

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

BinaryMask BinaryMask::from_binary(const Tensor<float>& t, std::size_t n) {
    require_channel(t, n, "binary mask");
    const Shape& s = t.shape();
    BinaryMask m(s.h, s.w);
    const float* src = t.data().data() + n * s.plane();
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (src[i] == 1.0f) {
            m.values[i] = 1;
        } else if (src[i] != 0.0f) {
            throw DataError("binary mask: value " + std::to_string(src[i]) + " at pixel " + std::to_string(i) +
                            " is neither 0 nor 1");
        }
    }
    return m;
}

BinaryMask BinaryMask::from_logits(const Tensor<float>& logits, std::size_t n) {
    require_channel(logits, n, "logit map");
    const Shape& s = logits.shape();
    BinaryMask m(s.h, s.w);
    const float* src = logits.data().data() + n * s.plane();
    for (std::size_t i = 0; i < m.size(); ++i) m.values[i] = src[i] > 0.0f ? 1 : 0;
    return m;
}

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.height != gt.height || pred.width != gt.width || pred.size() != gt.size()) {
        throw ShapeError("metrics: prediction is " + dims(pred.height, pred.width) + ", ground truth is " +
                         dims(gt.height, gt.width));
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const std::uint8_t p = pred.values[i];
        const std::uint8_t g = gt.values[i];
        if (p > 1 || g > 1) {
            throw DataError("metrics: non-binary value at pixel " + std::to_string(i));
        }
        // Index 2p + g: 0 TN, 1 FN, 2 FP, 3 TP.
        switch (2 * p + g) {
            case 0: ++c.tn; break;
            case 1: ++c.fn; break;
            case 2: ++c.fp; break;
            default: ++c.tp; break;
        }
    }
    return c;
}

SampleMetrics score(const ConfusionCounts& c, std::string id) {
    SampleMetrics m;
    m.id = std::move(id);
    m.counts = c;
    const double tp = static_cast<double>(c.tp);
    const double fp = static_cast<double>(c.fp);
    const double fn = static_cast<double>(c.fn);
    if (c.tp + c.fp + c.fn == 0) {
        m.dice = m.iou = m.precision = m.recall = 1.0;
        return m;
    }
    m.dice = 2.0 * tp / (2.0 * tp + fp + fn);
    m.iou = tp / (tp + fp + fn);
    m.precision = c.tp + c.fp == 0 ? 0.0 : tp / (tp + fp);
    m.recall = c.tp + c.fn == 0 ? 0.0 : tp / (tp + fn);
    return m;
}

SampleMetrics compute_metrics(const BinaryMask& pred, const BinaryMask& gt, std::string id) {
    return score(confusion(pred, gt), std::move(id));
}

MetricsReport summarize(std::vector<SampleMetrics> samples) {
    MetricsReport r;
    r.samples = std::move(samples);
    if (r.samples.empty()) return r;
    for (const SampleMetrics& m : r.samples) {
        r.dice += m.dice;
        r.iou += m.iou;
        r.precision += m.precision;
        r.recall += m.recall;
    }
    const double n = static_cast<double>(r.samples.size());
    r.dice /= n;
    r.iou /= n;
    r.precision /= n;
    r.recall /= n;
    return r;
}

RgbImage render_overlay(const BinaryMask& pred, const BinaryMask& gt, const RgbImage* base) {
    if (pred.height != gt.height || pred.width != gt.width) {
        throw ShapeError("overlay: prediction is " + dims(pred.height, pred.width) + ", ground truth is " +
                         dims(gt.height, gt.width));
    }
    if (base != nullptr && (base->height != gt.height || base->width != gt.width)) {
        throw ShapeError("overlay: base image is " + dims(base->height, base->width) + ", masks are " +
                         dims(gt.height, gt.width));
    }
    RgbImage out(gt.height, gt.width);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const std::uint8_t p = pred.values[i];
        const std::uint8_t g = gt.values[i];
        if (p > 1 || g > 1) {
            throw DataError("overlay: non-binary value at pixel " + std::to_string(i));
        }
        std::uint8_t* px = &out.pixels[3 * i];
        if (p && g) {
            px[0] = px[1] = px[2] = 255;
        } else if (p) {
            px[0] = 255;
        } else if (g) {
            px[1] = 255;
        } else if (base != nullptr) {
            for (int k = 0; k < 3; ++k) px[k] = static_cast<std::uint8_t>(base->pixels[3 * i + k] / 2);
        }
    }
    return out;
}

}  // namespace dmads
