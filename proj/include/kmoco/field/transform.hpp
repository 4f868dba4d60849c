#pragma once

#include <cmath>
#include <numbers>

#include "kmoco/field/fft.hpp"
#include "kmoco/field/image.hpp"

namespace kmoco {

namespace detail {

// Coordinates within this distance of an integer are treated as that
// integer, so 90-degree rotations and integer shifts are exact copies.
inline constexpr double snap_tolerance = 1e-9;

inline double snap(double v) {
    const double r = std::round(v);
    return std::abs(v - r) < snap_tolerance ? r : v;
}

template <class V, class D>
V bilinear_sample(const Grid<V, D>& img, double u, double v) {
    u = snap(u);
    v = snap(v);
    const double fu = std::floor(u), fv = std::floor(v);
    const int x0 = static_cast<int>(fu), y0 = static_cast<int>(fv);
    const double ax = u - fu, ay = v - fv;
    auto at = [&](int x, int y) -> V {
        if (x < 0 || y < 0 || x >= img.nx() || y >= img.ny()) return V{};
        return img(x, y);
    };
    if (ax == 0.0 && ay == 0.0) return at(x0, y0);
    if (ay == 0.0) return (1.0 - ax) * at(x0, y0) + ax * at(x0 + 1, y0);
    if (ax == 0.0) return (1.0 - ay) * at(x0, y0) + ay * at(x0, y0 + 1);
    return (1.0 - ay) * ((1.0 - ax) * at(x0, y0) + ax * at(x0 + 1, y0)) +
           ay * ((1.0 - ax) * at(x0, y0 + 1) + ax * at(x0 + 1, y0 + 1));
}

} // namespace detail

/// Shift by (tx, ty) mm with bilinear resampling and zero fill:
/// out(x, y) = in(x - tx/spacing, y - ty/spacing).
template <class V, class D>
Grid<V, D> translate(const Grid<V, D>& img, double tx_mm, double ty_mm) {
    require(std::isfinite(tx_mm) && std::isfinite(ty_mm), ErrorCategory::invalid_argument,
            "translation must be finite");
    if (tx_mm == 0.0 && ty_mm == 0.0) return img;
    const double sx = tx_mm / img.meta().spacing_mm;
    const double sy = ty_mm / img.meta().spacing_mm;
    Grid<V, D> out(img.meta());
    for (int y = 0; y < img.ny(); ++y)
        for (int x = 0; x < img.nx(); ++x) out(x, y) = detail::bilinear_sample(img, x - sx, y - sy);
    return out;
}

/// Rotation by theta degrees about ((nx-1)/2, (ny-1)/2), positive turning
/// +x towards +y. Bilinear, zero fill.
template <class V, class D>
Grid<V, D> rotate(const Grid<V, D>& img, double theta_deg) {
    require(std::isfinite(theta_deg) && std::abs(theta_deg) <= 180.0, ErrorCategory::invalid_argument,
            "rotation must lie in [-180, 180] degrees");
    if (theta_deg == 0.0) return img;
    const double t = theta_deg * std::numbers::pi / 180.0;
    const double c = std::cos(t), s = std::sin(t);
    const double cx = 0.5 * (img.nx() - 1), cy = 0.5 * (img.ny() - 1);
    Grid<V, D> out(img.meta());
    for (int y = 0; y < img.ny(); ++y) {
        for (int x = 0; x < img.nx(); ++x) {
            const double dx = x - cx, dy = y - cy;
            // inverse map: source = R(-theta) * (p - c) + c
            const double u = cx + c * dx + s * dy;
            const double v = cy - s * dx + c * dy;
            out(x, y) = detail::bilinear_sample(img, u, v);
        }
    }
    return out;
}

/// F o R o T o F^-1 applied to k-space. The image-domain step runs on the
/// complex image so nothing is discarded for non-Hermitian input.
inline KSpace apply_rigid_k(const KSpace& k, const RigidMotion& m) {
    m.validate();
    k.require_finite("apply_rigid_k input");
    ComplexImage img = ifft2c_complex(k);
    img = rotate(translate(img, m.tx_mm, m.ty_mm), m.theta_deg);
    return fft2c(img);
}

} // namespace kmoco
