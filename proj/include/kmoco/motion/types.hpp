#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "kmoco/field/image.hpp"

namespace kmoco {

/// One value per phase-encoding line, broadcast along the readout axis.
struct LineMask {
    ImageMeta meta;
    std::vector<double> line_values;

    LineMask() = default;
    explicit LineMask(const ImageMeta& m, double fill = 0.0) : meta(m), line_values(static_cast<std::size_t>(m.ny), fill) {}
    LineMask(const ImageMeta& m, std::vector<double> values) : meta(m), line_values(std::move(values)) {
        require(static_cast<int>(line_values.size()) == meta.ny, ErrorCategory::shape_mismatch,
                "line mask has " + std::to_string(line_values.size()) + " lines, expected " + std::to_string(meta.ny));
    }

    int ny() const noexcept { return meta.ny; }
    double operator[](int line) const { return line_values[static_cast<std::size_t>(line)]; }
    double& operator[](int line) { return line_values[static_cast<std::size_t>(line)]; }

    std::vector<int> set_lines(double threshold = 0.5) const {
        std::vector<int> out;
        for (int y = 0; y < ny(); ++y)
            if (line_values[static_cast<std::size_t>(y)] >= threshold) out.push_back(y);
        return out;
    }

    std::size_t count(double threshold = 0.5) const { return set_lines(threshold).size(); }

    /// Row-major nx*ny broadcast.
    std::vector<double> broadcast() const {
        std::vector<double> out(meta.size());
        for (int y = 0; y < meta.ny; ++y)
            std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(y) * meta.nx, meta.nx, line_values[static_cast<std::size_t>(y)]);
        return out;
    }

    friend bool operator==(const LineMask&, const LineMask&) = default;
};

/// Contiguous block of phase-encoding lines [start_line, start_line + width).
struct SlabSpec {
    int start_line = 0;
    int width = 0;

    int end_line() const noexcept { return start_line + width; }
    bool contains(int line) const noexcept { return line >= start_line && line < end_line(); }
    bool overlaps(int lo, int hi) const noexcept { return start_line < hi && lo < end_line(); }
    friend bool operator==(const SlabSpec&, const SlabSpec&) = default;
};

struct MotionEvent {
    RigidMotion motion;
    std::vector<SlabSpec> slabs;

    void validate(const ImageMeta& meta) const {
        motion.validate();
        require(!slabs.empty(), ErrorCategory::invalid_argument, "motion event has no slabs");
        for (const auto& s : slabs)
            require(s.width > 0 && s.start_line >= 0 && s.end_line() <= meta.ny, ErrorCategory::out_of_range,
                    "slab [" + std::to_string(s.start_line) + ", " + std::to_string(s.end_line()) +
                        ") outside phase-encoding range [0, " + std::to_string(meta.ny) + ")");
    }

    friend bool operator==(const MotionEvent&, const MotionEvent&) = default;
};

struct SeverityPreset {
    std::string name;
    int n_slabs = 5;
    int width_min = 3;
    int width_max = 7;
    double rot_max_deg = 7.0;
    double trans_max_mm = 5.0;

    static SeverityPreset minor() { return {"minor", 5}; }
    static SeverityPreset moderate() { return {"moderate", 10}; }
    static SeverityPreset heavy() { return {"heavy", 15}; }

    static SeverityPreset from_name(std::string_view name) {
        if (name == "minor") return minor();
        if (name == "moderate") return moderate();
        if (name == "heavy") return heavy();
        fail(ErrorCategory::invalid_argument, "unknown severity preset '" + std::string(name) +
                                                  "' (expected minor|moderate|heavy)");
    }

    void validate() const {
        require(n_slabs >= 1, ErrorCategory::invalid_argument, "n_slabs must be positive");
        require(width_min >= 1 && width_max >= width_min, ErrorCategory::invalid_argument,
                "slab width range must satisfy 1 <= width_min <= width_max");
        require(rot_max_deg >= 0.0 && rot_max_deg <= 180.0 && trans_max_mm >= 0.0, ErrorCategory::invalid_argument,
                "motion ranges must be non-negative (rotation at most 180 degrees)");
    }
};

inline const std::vector<SeverityPreset>& named_presets() {
    static const std::vector<SeverityPreset> presets{SeverityPreset::minor(), SeverityPreset::moderate(),
                                                     SeverityPreset::heavy()};
    return presets;
}

/// Simulator knobs that are not part of a severity preset.
struct MotionConfig {
    /// Fraction of phase-encoding lines around DC that are never corrupted.
    double center_band_frac = 0.08;
    /// Slabs sharing one rigid transform; 1 means every slab is its own event.
    int slabs_per_event = 1;

    void validate() const {
        require(center_band_frac >= 0.0 && center_band_frac < 1.0, ErrorCategory::invalid_argument,
                "center_band_frac must lie in [0, 1)");
        require(slabs_per_event >= 1, ErrorCategory::invalid_argument, "slabs_per_event must be positive");
    }
};

/// Protected band [first, last) centred on the DC line ny/2.
struct CenterBand {
    int first = 0;
    int last = 0;

    int width() const noexcept { return last - first; }
    bool contains(int line) const noexcept { return line >= first && line < last; }
};

inline CenterBand center_band(const ImageMeta& meta, double frac) {
    const int width = std::clamp(static_cast<int>(std::lround(frac * meta.ny)), 0, meta.ny);
    const int first = meta.ny / 2 - width / 2;
    return {first, first + width};
}

} // namespace kmoco
