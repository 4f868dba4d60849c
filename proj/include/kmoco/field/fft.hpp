#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

#include "kmoco/field/image.hpp"

namespace kmoco {

namespace detail {

// FFTW planning is not thread-safe, execution with the new-array interface
// is. Plans are built once per (nx, ny, sign) under a lock and reused.
class FftPlanCache {
public:
    static FftPlanCache& instance() {
        static FftPlanCache cache;
        return cache;
    }

    fftw_plan plan(int nx, int ny, int sign) {
        std::lock_guard lock(mutex_);
        auto key = std::make_tuple(nx, ny, sign);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        std::vector<cplx> in(static_cast<std::size_t>(nx) * ny), out(in.size());
        fftw_plan p = fftw_plan_dft_2d(ny, nx, reinterpret_cast<fftw_complex*>(in.data()),
                                       reinterpret_cast<fftw_complex*>(out.data()), sign,
                                       FFTW_ESTIMATE | FFTW_UNALIGNED);
        require(p != nullptr, ErrorCategory::invalid_argument, "FFTW failed to plan transform");
        plans_.emplace(key, p);
        return p;
    }

    FftPlanCache(const FftPlanCache&) = delete;
    FftPlanCache& operator=(const FftPlanCache&) = delete;

    ~FftPlanCache() {
        for (auto& [key, p] : plans_) fftw_destroy_plan(p);
    }

private:
    FftPlanCache() = default;
    std::mutex mutex_;
    std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

// Circular shift of a row-major grid: out[(i + sx) % nx, (j + sy) % ny] = in[i, j].
inline void circshift(std::span<const cplx> in, std::span<cplx> out, int nx, int ny, int sx, int sy) {
    for (int y = 0; y < ny; ++y) {
        const int ty = (y + sy) % ny;
        for (int x = 0; x < nx; ++x) {
            const int tx = (x + sx) % nx;
            out[static_cast<std::size_t>(ty) * nx + tx] = in[static_cast<std::size_t>(y) * nx + x];
        }
    }
}

} // namespace detail

/// Centered, orthonormal 2D DFT on a raw row-major buffer of size nx*ny.
/// `sign` is FFTW_FORWARD or FFTW_BACKWARD. DC sits at (nx/2, ny/2) on both
/// sides of the transform.
inline void centered_dft(std::span<const cplx> in, std::span<cplx> out, int nx, int ny, int sign) {
    const std::size_t n = static_cast<std::size_t>(nx) * ny;
    require(in.size() == n && out.size() == n, ErrorCategory::shape_mismatch, "centered_dft: buffer size mismatch");
    std::vector<cplx> a(n), b(n);
    // ifftshift: moves the centre sample to index 0
    detail::circshift(in, a, nx, ny, nx - nx / 2, ny - ny / 2);
    fftw_execute_dft(detail::FftPlanCache::instance().plan(nx, ny, sign), reinterpret_cast<fftw_complex*>(a.data()),
                     reinterpret_cast<fftw_complex*>(b.data()));
    detail::circshift(b, out, nx, ny, nx / 2, ny / 2);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (auto& v : out) v *= scale;
}

inline KSpace fft2c(const ComplexImage& img) {
    img.require_finite("fft2c input");
    KSpace k(img.meta());
    centered_dft(img.data(), k.data(), img.nx(), img.ny(), FFTW_FORWARD);
    return k;
}

inline KSpace fft2c(const RealImage& img) {
    img.require_finite("fft2c input");
    return fft2c(to_complex(img));
}

/// Inverse of fft2c that keeps the complex result. Use this when the
/// k-space is not Hermitian (e.g. after line replacement).
inline ComplexImage ifft2c_complex(const KSpace& k) {
    k.require_finite("ifft2c input");
    ComplexImage img(k.meta());
    centered_dft(k.data(), img.data(), k.nx(), k.ny(), FFTW_BACKWARD);
    return img;
}

/// Largest imaginary magnitude relative to the largest real magnitude.
inline double imaginary_residue(const ComplexImage& img) {
    double re = 0.0, im = 0.0;
    for (const auto& v : img.data()) {
        re = std::max(re, std::abs(v.real()));
        im = std::max(im, std::abs(v.imag()));
    }
    return re > 0.0 ? im / re : im;
}

/// Inverse transform for real-valued images: the imaginary residue is
/// dropped. For Hermitian input it is below 1e-5 of the peak.
inline RealImage ifft2c(const KSpace& k) { return real_part(ifft2c_complex(k)); }

/// |ifft2c(k)|, the magnitude image a scanner would export.
inline RealImage magnitude_image(const KSpace& k) { return magnitude(ifft2c_complex(k)); }

/// Index of the mirror sample -k about the DC position, modulo n.
inline int mirror_index(int i, int n) { return ((2 * (n / 2) - i) % n + n) % n; }

/// Largest |s(k) - conj(s(-k))| over the grid.
inline double hermitian_defect(const KSpace& k) {
    double worst = 0.0;
    for (int y = 0; y < k.ny(); ++y)
        for (int x = 0; x < k.nx(); ++x)
            worst = std::max(worst, std::abs(k(x, y) - std::conj(k(mirror_index(x, k.nx()), mirror_index(y, k.ny())))));
    return worst;
}

} // namespace kmoco
