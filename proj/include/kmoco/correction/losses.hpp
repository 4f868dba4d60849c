#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "kmoco/field/fft.hpp"
#include "kmoco/motion/types.hpp"
#include "kmoco/nn/layers.hpp"
#include "kmoco/nn/ops.hpp"
#include "kmoco/rng.hpp"

namespace kmoco {

enum class Reduction { mean, sum };

/// Weights of the reconstruction, perceptual and k-space consistency terms.
struct LossWeights {
    double lambda_r = 10.0;
    double lambda_l = 0.5;
    double lambda_d = 100.0;

    void validate() const {
        require(lambda_r >= 0.0 && lambda_l >= 0.0 && lambda_d >= 0.0, ErrorCategory::invalid_argument,
                "loss weights must be non-negative");
    }
};

struct LossBreakdown {
    double l1 = 0.0;
    double lpips = 0.0;
    double dc = 0.0;
    double total = 0.0;
};

namespace nn {

/// Masked k-space squared error, F the centred orthonormal DFT of each
/// (N, 1, H, W) sample. `mask` is (N, 1, H, 1), one weight per PE line.
/// Mean reduction divides by the masked sample count (sum of broadcast
/// weights); an empty mask yields 0.
template <class T>
Var<T> dc_loss(const Var<T>& x, const Tensor<T>& target, const Tensor<T>& mask, Reduction red = Reduction::mean) {
    const Shape s = x->shape();
    require(s.c == 1, ErrorCategory::shape_mismatch, "dc_loss: expects single-channel images");
    require_shape(target, s, "dc_loss target");
    require_shape(mask, Shape{s.n, 1, s.h, 1}, "dc_loss mask");
    const std::size_t HW = s.plane();
    auto residual = std::make_shared<std::vector<cplx>>(static_cast<std::size_t>(s.n) * HW);
    std::vector<cplx> a(HW), b(HW), fa(HW), fb(HW);
    double acc = 0.0, weight = 0.0;
    for (int n = 0; n < s.n; ++n) {
        for (std::size_t i = 0; i < HW; ++i) {
            a[i] = cplx(double(x->value.sample(n)[i]), 0.0);
            b[i] = cplx(double(target.sample(n)[i]), 0.0);
        }
        centered_dft(a, fa, s.w, s.h, FFTW_FORWARD);
        centered_dft(b, fb, s.w, s.h, FFTW_FORWARD);
        for (int y = 0; y < s.h; ++y) {
            const double m = double(mask.at(n, 0, y, 0));
            weight += m * s.w;
            for (int xx = 0; xx < s.w; ++xx) {
                const std::size_t i = static_cast<std::size_t>(y) * s.w + xx;
                const cplx r = m * (fa[i] - fb[i]);
                (*residual)[static_cast<std::size_t>(n) * HW + i] = m * r;
                acc += std::norm(r);
            }
        }
    }
    const double norm = (red == Reduction::mean) ? (weight > 0.0 ? 1.0 / weight : 0.0) : 1.0;
    return make_result<T>(detail::scalar_tensor(T(acc * norm)), {x}, [=](Node<T>& self) {
        auto& g = self.input(0).grad_ref();
        std::vector<cplx> r(HW), back(HW);
        const double up = 2.0 * norm * double(self.grad[0]);
        for (int n = 0; n < s.n; ++n) {
            std::copy_n(residual->begin() + static_cast<std::ptrdiff_t>(n * HW), HW, r.begin());
            // F is unitary, so the adjoint is the inverse transform.
            centered_dft(r, back, s.w, s.h, FFTW_BACKWARD);
            T* gp = g.sample(n);
            for (std::size_t i = 0; i < HW; ++i) gp[i] += T(up * back[i].real());
        }
    });
}

} // namespace nn

/// Frozen random convolutional feature stack standing in for a pretrained
/// perceptual network: three stride-2 3x3 stages (8, 16, 32 channels) with
/// SiLU. Deterministic in the seed and never trained.
template <class T>
class FeatureExtractor {
public:
    static constexpr std::uint64_t default_seed = 0x4c504950ULL;

    explicit FeatureExtractor(std::uint64_t seed = default_seed) : seed_(seed) {
        Rng rng(seed);
        const int widths[] = {1, 8, 16, 32};
        for (int i = 0; i < 3; ++i)
            stages_.emplace_back(params_, "stage" + std::to_string(i), widths[i], widths[i + 1], 3, 2, 1, rng,
                                 nn::Init::he, /*trainable=*/false);
    }

    FeatureExtractor(const FeatureExtractor&) = delete;
    FeatureExtractor& operator=(const FeatureExtractor&) = delete;
    FeatureExtractor(FeatureExtractor&&) = default;

    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t stage_count() const noexcept { return stages_.size(); }

    std::vector<nn::Var<T>> features(const nn::Var<T>& x) const {
        std::vector<nn::Var<T>> out;
        nn::Var<T> h = x;
        for (const auto& st : stages_) {
            h = nn::silu(st(h));
            out.push_back(h);
        }
        return out;
    }

    /// Sum over stages of the mean squared feature difference.
    nn::Var<T> loss(const nn::Var<T>& x, const nn::Tensor<T>& target) const {
        std::vector<nn::Var<T>> ref;
        {
            nn::NoGradGuard guard;
            ref = features(nn::constant(target));
        }
        const auto fx = features(x);
        std::vector<std::pair<nn::Var<T>, T>> terms;
        for (std::size_t i = 0; i < fx.size(); ++i) terms.emplace_back(nn::mse(fx[i], ref[i]), T(1));
        return nn::weighted_sum(terms);
    }

    const nn::ParamSet<T>& params() const noexcept { return params_; }

private:
    std::uint64_t seed_;
    nn::ParamSet<T> params_;
    std::vector<nn::Conv2d<T>> stages_;
};

namespace detail {

template <class T>
nn::Tensor<T> image_tensor(const RealImage& img) {
    nn::Tensor<T> t(nn::Shape{1, 1, img.ny(), img.nx()});
    for (std::size_t i = 0; i < img.size(); ++i) t[i] = static_cast<T>(img.data()[i]);
    return t;
}

template <class T>
nn::Tensor<T> mask_tensor(const LineMask& m) {
    nn::Tensor<T> t(nn::Shape{1, 1, m.ny(), 1});
    for (int y = 0; y < m.ny(); ++y) t[static_cast<std::size_t>(y)] = static_cast<T>(m[y]);
    return t;
}

inline void require_same_grid(const RealImage& a, const RealImage& b, const char* what) {
    require(a.meta().same_grid(b.meta()), ErrorCategory::shape_mismatch, std::string(what) + ": image grids differ");
}

} // namespace detail

/// Mean (or summed) absolute difference.
inline double l1_loss(const RealImage& pred, const RealImage& gt, Reduction red = Reduction::mean) {
    detail::require_same_grid(pred, gt, "l1_loss");
    double acc = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) acc += std::abs(pred.data()[i] - gt.data()[i]);
    return red == Reduction::mean ? acc / double(gt.size()) : acc;
}

inline double lpips_loss(const RealImage& pred, const RealImage& gt, const FeatureExtractor<double>& fe) {
    detail::require_same_grid(pred, gt, "lpips_loss");
    nn::NoGradGuard guard;
    return fe.loss(nn::constant(detail::image_tensor<double>(pred)), detail::image_tensor<double>(gt))->value[0];
}

/// ||F(pred) . M - F(gt) . M||^2, mean over masked samples by default.
inline double dc_loss(const RealImage& pred, const RealImage& gt, const LineMask& mask, Reduction red = Reduction::mean) {
    detail::require_same_grid(pred, gt, "dc_loss");
    require(mask.ny() == gt.ny(), ErrorCategory::shape_mismatch, "dc_loss: mask has wrong number of lines");
    nn::NoGradGuard guard;
    return nn::dc_loss(nn::constant(detail::image_tensor<double>(pred)), detail::image_tensor<double>(gt),
                       detail::mask_tensor<double>(mask), red)
        ->value[0];
}

/// Graph form of the three-term objective. Terms with zero weight are not
/// evaluated.
template <class T>
struct LossTerms {
    nn::Var<T> total;
    nn::Var<T> l1;
    nn::Var<T> lpips;
    nn::Var<T> dc;

    LossBreakdown values() const {
        return {double(l1->value[0]), lpips ? double(lpips->value[0]) : 0.0, dc ? double(dc->value[0]) : 0.0,
                double(total->value[0])};
    }
};

template <class T>
LossTerms<T> total_loss(const nn::Var<T>& pred, const nn::Tensor<T>& gt, const nn::Tensor<T>& mask,
                        const LossWeights& w, const FeatureExtractor<T>& fe) {
    w.validate();
    LossTerms<T> out;
    out.l1 = nn::l1_loss(pred, gt);
    std::vector<std::pair<nn::Var<T>, T>> terms{{out.l1, T(w.lambda_r)}};
    if (w.lambda_l > 0.0) {
        out.lpips = fe.loss(pred, gt);
        terms.emplace_back(out.lpips, T(w.lambda_l));
    }
    if (w.lambda_d > 0.0) {
        out.dc = nn::dc_loss(pred, gt, mask);
        terms.emplace_back(out.dc, T(w.lambda_d));
    }
    out.total = nn::weighted_sum(terms);
    return out;
}

/// Value-level total for single images.
inline LossBreakdown total_loss(const RealImage& pred, const RealImage& gt, const LineMask& mask, const LossWeights& w,
                                const FeatureExtractor<double>& fe) {
    LossBreakdown b;
    b.l1 = l1_loss(pred, gt);
    b.lpips = lpips_loss(pred, gt, fe);
    b.dc = dc_loss(pred, gt, mask);
    b.total = w.lambda_r * b.l1 + w.lambda_l * b.lpips + w.lambda_d * b.dc;
    return b;
}

} // namespace kmoco
