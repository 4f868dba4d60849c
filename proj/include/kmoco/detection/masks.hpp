#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "kmoco/correction/losses.hpp"
#include "kmoco/field/image.hpp"
#include "kmoco/motion/types.hpp"

namespace kmoco {

/// Per-pixel corruption scores in [0, 1] on the k-space grid.
using ScoreMap = Grid<double, ScoreDomain>;

/// Mean of each phase-encoding line of `scores` along the readout axis.
inline LineMask spatial_average(const ScoreMap& scores) {
    LineMask out(scores.meta());
    for (int y = 0; y < scores.ny(); ++y) {
        double acc = 0.0;
        for (double v : scores.line(y)) acc += v;
        out[y] = std::clamp(acc / scores.nx(), 0.0, 1.0);
    }
    return out;
}

/// Lines scoring >= t become 1, all others 0.
inline LineMask threshold_mask(const LineMask& soft, double t) {
    require(t > 0.0 && t < 1.0, ErrorCategory::invalid_argument, "threshold must lie in (0, 1)");
    LineMask out(soft.meta);
    for (int y = 0; y < soft.ny(); ++y) out[y] = soft[y] >= t ? 1.0 : 0.0;
    return out;
}

/// 1 - (2 sum(p g) + eps) / (sum p + sum g + eps), eps = 1e-6.
inline double dice_loss(std::span<const double> pred, std::span<const double> gt) {
    require(pred.size() == gt.size(), ErrorCategory::shape_mismatch, "dice_loss: size mismatch");
    double inter = 0.0, sp = 0.0, sg = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        inter += pred[i] * gt[i];
        sp += pred[i];
        sg += gt[i];
    }
    return 1.0 - (2.0 * inter + nn::dice_epsilon) / (sp + sg + nn::dice_epsilon);
}

/// Binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
inline double bce_loss(std::span<const double> pred, std::span<const double> gt, Reduction red = Reduction::mean) {
    require(pred.size() == gt.size(), ErrorCategory::shape_mismatch, "bce_loss: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = std::clamp(pred[i], nn::probability_clamp, 1.0 - nn::probability_clamp);
        acc -= gt[i] * std::log(p) + (1.0 - gt[i]) * std::log(1.0 - p);
    }
    return red == Reduction::mean ? acc / double(pred.size()) : acc;
}

inline double seg_loss(std::span<const double> pred, std::span<const double> gt, Reduction red = Reduction::mean) {
    return dice_loss(pred, gt) + bce_loss(pred, gt, red);
}

inline double dice_loss(const LineMask& pred, const LineMask& gt) {
    require(pred.ny() == gt.ny(), ErrorCategory::shape_mismatch, "dice_loss: masks differ in line count");
    return dice_loss(pred.line_values, gt.line_values);
}

inline double bce_loss(const LineMask& pred, const LineMask& gt, Reduction red = Reduction::mean) {
    require(pred.ny() == gt.ny(), ErrorCategory::shape_mismatch, "bce_loss: masks differ in line count");
    return bce_loss(pred.line_values, gt.line_values, red);
}

inline double seg_loss(const LineMask& pred, const LineMask& gt, Reduction red = Reduction::mean) {
    return dice_loss(pred, gt) + bce_loss(pred, gt, red);
}

/// Pixel-level variants against the 2D broadcast of a line mask.
inline double dice_loss(const ScoreMap& pred, const LineMask& gt) {
    require(pred.ny() == gt.ny(), ErrorCategory::shape_mismatch, "dice_loss: grid mismatch");
    const auto b = gt.broadcast();
    return dice_loss(pred.data(), b);
}

inline double bce_loss(const ScoreMap& pred, const LineMask& gt, Reduction red = Reduction::mean) {
    require(pred.ny() == gt.ny(), ErrorCategory::shape_mismatch, "bce_loss: grid mismatch");
    const auto b = gt.broadcast();
    return bce_loss(pred.data(), b, red);
}

/// Ground-truth pass-through so the correction stage can run without a
/// trained detector.
inline LineMask oracle_detector(const LineMask& m_gt) { return m_gt; }

struct LineScores {
    std::size_t true_positive = 0;
    std::size_t false_positive = 0;
    std::size_t false_negative = 0;
    std::size_t true_negative = 0;

    LineScores& operator+=(const LineScores& o) {
        true_positive += o.true_positive;
        false_positive += o.false_positive;
        false_negative += o.false_negative;
        true_negative += o.true_negative;
        return *this;
    }

    double precision() const {
        const auto d = true_positive + false_positive;
        return d ? double(true_positive) / double(d) : 1.0;
    }
    double recall() const {
        const auto d = true_positive + false_negative;
        return d ? double(true_positive) / double(d) : 1.0;
    }
    double f1() const {
        const auto d = 2 * true_positive + false_positive + false_negative;
        return d ? 2.0 * double(true_positive) / double(d) : 1.0;
    }
};

/// Confusion counts of a binary prediction against the ground-truth lines.
inline LineScores score_lines(const LineMask& pred, const LineMask& gt) {
    require(pred.ny() == gt.ny(), ErrorCategory::shape_mismatch, "score_lines: masks differ in line count");
    LineScores s;
    for (int y = 0; y < gt.ny(); ++y) {
        const bool p = pred[y] >= 0.5, g = gt[y] >= 0.5;
        if (p && g) ++s.true_positive;
        else if (p) ++s.false_positive;
        else if (g) ++s.false_negative;
        else ++s.true_negative;
    }
    return s;
}

} // namespace kmoco
