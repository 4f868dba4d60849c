#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "kmoco/field/image.hpp"
#include "kmoco/rng.hpp"

namespace kmoco {

struct Ellipse {
    double intensity;
    double a, b;    ///< semi-axes, normalised to the half field of view
    double x0, y0;  ///< centre, +y pointing up
    double phi_deg;

    bool contains(double x, double y) const {
        const double c = std::cos(phi_deg * std::numbers::pi / 180.0);
        const double s = std::sin(phi_deg * std::numbers::pi / 180.0);
        const double dx = x - x0, dy = y - y0;
        const double u = c * dx + s * dy, v = -s * dx + c * dy;
        return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
    }
};

/// Modified Shepp-Logan ellipse set (contrast-enhanced intensities).
inline std::vector<Ellipse> shepp_logan_ellipses() {
    return {
        {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
        {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
        {-0.2, 0.11, 0.31, 0.22, 0.0, -18.0},
        {-0.2, 0.16, 0.41, -0.22, 0.0, 18.0},
        {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},
        {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
        {0.1, 0.046, 0.046, 0.0, -0.1, 0.0},
        {0.1, 0.046, 0.023, -0.08, -0.605, 0.0},
        {0.1, 0.023, 0.023, 0.0, -0.606, 0.0},
        {0.1, 0.023, 0.046, 0.06, -0.605, 0.0},
    };
}

/// Field of view of generated phantoms; pixel spacing is fov / n.
inline constexpr double phantom_fov_mm = 256.0;

/// Subpixel grid per axis used to area-average ellipse edges.
inline constexpr int phantom_supersample = 8;

/// Rasterise an ellipse set onto an n x n grid covering [-1, 1]^2, each
/// pixel the mean over a supersample x supersample subgrid, clamped to [0, 1].
inline RealImage render_ellipses(const std::vector<Ellipse>& set, int n, int supersample = phantom_supersample) {
    require(n >= 2, ErrorCategory::invalid_argument, "phantom size must be at least 2");
    require(supersample >= 1, ErrorCategory::invalid_argument, "supersample factor must be positive");
    RealImage img(ImageMeta{n, n, phantom_fov_mm / n});
    const int ss = supersample;
    const double inv = 1.0 / (double(ss) * ss);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double acc = 0.0;
            for (int sy = 0; sy < ss; ++sy)
                for (int sx = 0; sx < ss; ++sx) {
                    const double px = 2.0 * (x + (sx + 0.5) / ss) / n - 1.0;
                    const double py = 1.0 - 2.0 * (y + (sy + 0.5) / ss) / n;
                    for (const auto& e : set)
                        if (e.contains(px, py)) acc += e.intensity;
                }
            img(x, y) = std::clamp(acc * inv, 0.0, 1.0);
        }
    return img;
}

inline RealImage phantom(int n) { return render_ellipses(shepp_logan_ellipses(), n); }

/// Phantom with every ellipse jittered: centres by up to 5% of the half
/// field of view, semi-axes by up to 5%, intensities by up to 10%.
inline RealImage perturbed_phantom(Rng& rng, int n) {
    auto set = shepp_logan_ellipses();
    for (auto& e : set) {
        e.x0 += rng.uniform(-0.05, 0.05);
        e.y0 += rng.uniform(-0.05, 0.05);
        e.a *= 1.0 + rng.uniform(-0.05, 0.05);
        e.b *= 1.0 + rng.uniform(-0.05, 0.05);
        e.intensity *= 1.0 + rng.uniform(-0.1, 0.1);
    }
    return render_ellipses(set, n);
}

} // namespace kmoco
