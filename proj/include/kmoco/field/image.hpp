#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "kmoco/error.hpp"

namespace kmoco {

using cplx = std::complex<double>;

/// Grid geometry. x is the frequency-encode (readout) axis, y the
/// phase-encode axis; storage is row-major with x fastest, so one
/// phase-encoding line is one row.
struct ImageMeta {
    int nx = 0;
    int ny = 0;
    double spacing_mm = 1.0;

    std::size_t size() const noexcept { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }

    void validate() const {
        require(nx >= 2 && ny >= 2, ErrorCategory::invalid_argument,
                "image dimensions must be at least 2x2, got " + std::to_string(nx) + "x" + std::to_string(ny));
        require(std::isfinite(spacing_mm) && spacing_mm > 0.0, ErrorCategory::invalid_argument,
                "pixel spacing must be positive and finite");
    }

    bool same_grid(const ImageMeta& o) const noexcept { return nx == o.nx && ny == o.ny; }
    friend bool operator==(const ImageMeta&, const ImageMeta&) = default;
};

struct ImageDomain {};
struct FrequencyDomain {};
struct ScoreDomain {};

namespace detail {
inline bool finite_value(double v) { return std::isfinite(v); }
inline bool finite_value(const cplx& v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); }
} // namespace detail

/// Dense 2D grid tagged with the domain it lives in, so image-space and
/// k-space data cannot be mixed up by accident.
template <class Value, class Domain>
class Grid {
public:
    using value_type = Value;

    Grid() = default;

    explicit Grid(const ImageMeta& meta, Value fill = Value{}) : meta_(meta) {
        meta_.validate();
        data_.assign(meta_.size(), fill);
    }

    Grid(const ImageMeta& meta, std::vector<Value> data) : meta_(meta), data_(std::move(data)) {
        meta_.validate();
        require(data_.size() == meta_.size(), ErrorCategory::shape_mismatch,
                "grid payload has " + std::to_string(data_.size()) + " values, expected " +
                    std::to_string(meta_.size()));
    }

    const ImageMeta& meta() const noexcept { return meta_; }
    int nx() const noexcept { return meta_.nx; }
    int ny() const noexcept { return meta_.ny; }
    std::size_t size() const noexcept { return data_.size(); }

    Value& operator()(int x, int y) { return data_[static_cast<std::size_t>(y) * meta_.nx + x]; }
    const Value& operator()(int x, int y) const { return data_[static_cast<std::size_t>(y) * meta_.nx + x]; }

    std::span<Value> data() noexcept { return data_; }
    std::span<const Value> data() const noexcept { return data_; }
    std::vector<Value>& storage() noexcept { return data_; }
    const std::vector<Value>& storage() const noexcept { return data_; }

    std::span<Value> line(int y) { return std::span<Value>(data_).subspan(static_cast<std::size_t>(y) * meta_.nx, meta_.nx); }
    std::span<const Value> line(int y) const {
        return std::span<const Value>(data_).subspan(static_cast<std::size_t>(y) * meta_.nx, meta_.nx);
    }

    bool all_finite() const {
        for (const auto& v : data_)
            if (!detail::finite_value(v)) return false;
        return true;
    }

    /// Throws a non_finite error naming the first offending pixel.
    void require_finite(const char* what) const {
        for (std::size_t i = 0; i < data_.size(); ++i) {
            if (!detail::finite_value(data_[i])) {
                std::ostringstream os;
                os << what << ": non-finite value at pixel (" << i % meta_.nx << ", " << i / meta_.nx << ")";
                fail(ErrorCategory::non_finite, os.str());
            }
        }
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    ImageMeta meta_;
    std::vector<Value> data_;
};

using RealImage = Grid<double, ImageDomain>;
using ComplexImage = Grid<cplx, ImageDomain>;
using KSpace = Grid<cplx, FrequencyDomain>;

/// In-plane rigid motion. Translations in mm, rotation in degrees.
struct RigidMotion {
    double tx_mm = 0.0;
    double ty_mm = 0.0;
    double theta_deg = 0.0;

    void validate() const {
        require(std::isfinite(tx_mm) && std::isfinite(ty_mm) && std::isfinite(theta_deg),
                ErrorCategory::invalid_argument, "rigid motion parameters must be finite");
        require(std::abs(theta_deg) <= 180.0, ErrorCategory::invalid_argument, "rotation must lie in [-180, 180] degrees");
    }

    bool is_identity() const noexcept { return tx_mm == 0.0 && ty_mm == 0.0 && theta_deg == 0.0; }
    friend bool operator==(const RigidMotion&, const RigidMotion&) = default;
};

inline ComplexImage to_complex(const RealImage& img) {
    ComplexImage out(img.meta());
    auto src = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = cplx(src[i], 0.0);
    return out;
}

inline RealImage real_part(const ComplexImage& img) {
    RealImage out(img.meta());
    auto src = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i].real();
    return out;
}

inline RealImage magnitude(const ComplexImage& img) {
    RealImage out(img.meta());
    auto src = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::abs(src[i]);
    return out;
}

inline double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double max_abs(std::span<const cplx> v) {
    double m = 0.0;
    for (const auto& x : v) m = std::max(m, std::abs(x));
    return m;
}

} // namespace kmoco
