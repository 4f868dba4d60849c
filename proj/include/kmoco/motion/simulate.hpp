#pragma once

#include <algorithm>
#include <vector>

#include "kmoco/field/fft.hpp"
#include "kmoco/field/transform.hpp"
#include "kmoco/motion/types.hpp"
#include "kmoco/rng.hpp"

namespace kmoco {

namespace detail {

inline int packable_slabs(int span, int width) { return width > 0 ? span / width : 0; }

inline MotionEvent sample_event_with(Rng& rng, const SeverityPreset& preset, const ImageMeta& meta,
                                     const CenterBand& band, int n_slabs) {
    const int lower = band.first;
    const int upper = meta.ny - band.last;
    if (packable_slabs(lower, preset.width_min) + packable_slabs(upper, preset.width_min) < n_slabs) {
        fail(ErrorCategory::infeasible_geometry,
             "cannot place " + std::to_string(n_slabs) + " disjoint slabs of width >= " +
                 std::to_string(preset.width_min) + " in " + std::to_string(meta.ny) + " lines with a " +
                 std::to_string(band.width()) + "-line protected centre band");
    }

    MotionEvent ev;
    ev.motion.theta_deg = rng.uniform(-preset.rot_max_deg, preset.rot_max_deg);
    ev.motion.tx_mm = rng.uniform(-preset.trans_max_mm, preset.trans_max_mm);
    ev.motion.ty_mm = rng.uniform(-preset.trans_max_mm, preset.trans_max_mm);

    constexpr int max_attempts = 1000;
    std::vector<int> starts;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        ev.slabs.clear();
        bool stuck = false;
        for (int s = 0; s < n_slabs && !stuck; ++s) {
            const int width = rng.uniform_int(preset.width_min, preset.width_max);
            starts.clear();
            for (int start = 0; start + width <= meta.ny; ++start) {
                const SlabSpec cand{start, width};
                if (cand.overlaps(band.first, band.last)) continue;
                const bool clash = std::any_of(ev.slabs.begin(), ev.slabs.end(), [&](const SlabSpec& o) {
                    return cand.overlaps(o.start_line, o.end_line());
                });
                if (!clash) starts.push_back(start);
            }
            if (starts.empty()) {
                stuck = true;
                break;
            }
            const int pick = starts[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(starts.size()) - 1))];
            ev.slabs.push_back({pick, width});
        }
        if (!stuck) return ev;
    }
    fail(ErrorCategory::infeasible_geometry,
         "slab placement failed after " + std::to_string(max_attempts) + " attempts for " + std::to_string(n_slabs) +
             " slabs in " + std::to_string(meta.ny) + " lines");
}

} // namespace detail

/// One motion event carrying all of the preset's slabs (disjoint, outside
/// the centre band) and a single rigid transform. Identical generator
/// state gives an identical event.
inline MotionEvent sample_event(Rng& rng, const SeverityPreset& preset, const ImageMeta& meta,
                                const MotionConfig& config = {}) {
    preset.validate();
    config.validate();
    meta.validate();
    return detail::sample_event_with(rng, preset, meta, center_band(meta, config.center_band_frac), preset.n_slabs);
}

/// The preset's slabs split over ceil(n_slabs / slabs_per_event) events,
/// each with its own transform. Slabs of different events may overlap.
inline std::vector<MotionEvent> sample_events(Rng& rng, const SeverityPreset& preset, const ImageMeta& meta,
                                              const MotionConfig& config = {}) {
    preset.validate();
    config.validate();
    meta.validate();
    const CenterBand band = center_band(meta, config.center_band_frac);
    const int n_events = (preset.n_slabs + config.slabs_per_event - 1) / config.slabs_per_event;
    std::vector<MotionEvent> events;
    events.reserve(static_cast<std::size_t>(n_events));
    int remaining = preset.n_slabs;
    for (int e = 0; e < n_events; ++e) {
        const int share = remaining / (n_events - e);
        events.push_back(detail::sample_event_with(rng, preset, meta, band, share));
        remaining -= share;
    }
    return events;
}

/// Binary union of every slab in `events`.
inline LineMask build_line_mask(const std::vector<MotionEvent>& events, const ImageMeta& meta) {
    LineMask mask(meta);
    for (const auto& ev : events) {
        ev.validate(meta);
        for (const auto& s : ev.slabs)
            for (int y = s.start_line; y < s.end_line(); ++y) mask[y] = 1.0;
    }
    return mask;
}

struct Corruption {
    KSpace k_motion;
    LineMask mask;
};

/// Sequential line replacement: for each event in order, the lines of its
/// slabs are taken from apply_rigid_k(k_gt, motion). Later events win on
/// overlap; untouched lines are copied verbatim.
inline Corruption corrupt(const KSpace& k_gt, const std::vector<MotionEvent>& events) {
    Corruption out{k_gt, build_line_mask(events, k_gt.meta())};
    for (const auto& ev : events) {
        const KSpace moved = apply_rigid_k(k_gt, ev.motion);
        for (const auto& s : ev.slabs)
            for (int y = s.start_line; y < s.end_line(); ++y) {
                auto src = moved.line(y);
                std::copy(src.begin(), src.end(), out.k_motion.line(y).begin());
            }
    }
    return out;
}

struct SeveritySample {
    SeverityPreset preset;
    std::uint64_t seed = 0;
    std::vector<MotionEvent> events;
    KSpace k_motion;
    LineMask mask;
    RealImage corrupted; ///< magnitude of ifft2c(k_motion)
};

struct SeveritySuite {
    KSpace k_gt;
    std::vector<SeveritySample> levels;
};

/// Simulate one severity level with its own generator.
inline SeveritySample simulate_severity(const KSpace& k_gt, const SeverityPreset& preset, std::uint64_t seed,
                                        const MotionConfig& config = {}) {
    Rng rng(seed);
    SeveritySample s;
    s.preset = preset;
    s.seed = seed;
    s.events = sample_events(rng, preset, k_gt.meta(), config);
    auto c = corrupt(k_gt, s.events);
    s.k_motion = std::move(c.k_motion);
    s.mask = std::move(c.mask);
    s.corrupted = magnitude_image(s.k_motion);
    return s;
}

/// Minor, moderate and heavy corruption of the same image, each from an
/// independent stream derived from one draw of `rng`.
inline SeveritySuite severity_suite(Rng& rng, const RealImage& img, const MotionConfig& config = {},
                                    const std::vector<SeverityPreset>& presets = named_presets()) {
    SeveritySuite suite{fft2c(img), {}};
    const std::uint64_t base = rng.next_u64();
    for (std::size_t i = 0; i < presets.size(); ++i)
        suite.levels.push_back(simulate_severity(suite.k_gt, presets[i], derive_seed(base, i), config));
    return suite;
}

} // namespace kmoco
