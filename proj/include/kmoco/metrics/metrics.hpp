#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "kmoco/field/image.hpp"

namespace kmoco {

namespace detail {

inline void require_metric_pair(const RealImage& pred, const RealImage& gt, const char* what) {
    require(pred.meta().same_grid(gt.meta()), ErrorCategory::shape_mismatch, std::string(what) + ": image grids differ");
    pred.require_finite(what);
    gt.require_finite(what);
}

inline double data_range(const RealImage& img) {
    const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
    return *hi - *lo;
}

} // namespace detail

/// Returned by psnr() for identical images.
inline constexpr double psnr_identical = std::numeric_limits<double>::infinity();

/// 10 log10(peak^2 / MSE). peak defaults to the data range of `gt` (1.0 if
/// `gt` is constant).
inline double psnr(const RealImage& pred, const RealImage& gt, std::optional<double> peak = std::nullopt) {
    detail::require_metric_pair(pred, gt, "psnr");
    double p = peak ? *peak : detail::data_range(gt);
    if (!peak && p <= 0.0) p = 1.0;
    require(p > 0.0, ErrorCategory::invalid_argument, "psnr: peak must be positive");
    double mse = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const double d = pred.data()[i] - gt.data()[i];
        mse += d * d;
    }
    mse /= double(gt.size());
    if (mse == 0.0) return psnr_identical;
    return 10.0 * std::log10(p * p / mse);
}

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    /// L in the stabilising constants; defaults to the data range of gt.
    std::optional<double> data_range;
};

/// Mean SSIM over all fully contained Gaussian windows.
inline double ssim(const RealImage& pred, const RealImage& gt, const SsimParams& p = {}) {
    detail::require_metric_pair(pred, gt, "ssim");
    const int nx = gt.nx(), ny = gt.ny(), w = p.window;
    require(nx >= w && ny >= w, ErrorCategory::invalid_argument,
            "ssim: image must be at least " + std::to_string(w) + "x" + std::to_string(w));
    double L = p.data_range ? *p.data_range : detail::data_range(gt);
    if (!p.data_range && L <= 0.0) L = 1.0;
    require(L > 0.0, ErrorCategory::invalid_argument, "ssim: data range must be positive");
    const double c1 = (p.k1 * L) * (p.k1 * L), c2 = (p.k2 * L) * (p.k2 * L);

    std::vector<double> g(static_cast<std::size_t>(w));
    double gs = 0.0;
    for (int i = 0; i < w; ++i) {
        const double d = i - (w - 1) / 2.0;
        g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * p.sigma * p.sigma));
        gs += g[static_cast<std::size_t>(i)];
    }
    for (auto& v : g) v /= gs;

    double acc = 0.0;
    for (int y0 = 0; y0 + w <= ny; ++y0)
        for (int x0 = 0; x0 + w <= nx; ++x0) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int j = 0; j < w; ++j)
                for (int i = 0; i < w; ++i) {
                    const double wt = g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(j)];
                    const double a = pred(x0 + i, y0 + j), b = gt(x0 + i, y0 + j);
                    mx += wt * a;
                    my += wt * b;
                    sxx += wt * a * a;
                    syy += wt * b * b;
                    sxy += wt * a * b;
                }
            const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
            acc += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    const double n = double(nx - w + 1) * double(ny - w + 1);
    return std::clamp(acc / n, -1.0, 1.0);
}

/// 100 ||pred - gt||^2 / ||gt||^2.
inline double nmse(const RealImage& pred, const RealImage& gt) {
    detail::require_metric_pair(pred, gt, "nmse");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const double d = pred.data()[i] - gt.data()[i];
        num += d * d;
        den += gt.data()[i] * gt.data()[i];
    }
    require(den > 0.0, ErrorCategory::invalid_argument, "nmse: ground truth has zero energy");
    return 100.0 * num / den;
}

struct SliceMetrics {
    double psnr_db = 0.0;
    double ssim = 0.0;
    double nmse_pct = 0.0;
};

inline SliceMetrics evaluate_slice(const RealImage& pred, const RealImage& gt) {
    return {psnr(pred, gt), ssim(pred, gt), nmse(pred, gt)};
}

} // namespace kmoco
