#pragma once

#include <vector>

#include "kmoco/correction/trainer.hpp"
#include "kmoco/detection/detector.hpp"
#include "kmoco/io/phantom.hpp"
#include "kmoco/motion/simulate.hpp"

namespace kmoco {

/// One synthetic slice: a perturbed phantom and its corruption.
struct SyntheticSlice {
    RealImage gt;
    KSpace k_gt;
    SeveritySample sample;
};

/// Slice `index` of the stream rooted at `seed`. The phantom depends only
/// on (seed, index), so the same index under different presets shares its
/// ground truth.
inline SyntheticSlice synthesize_slice(std::uint64_t seed, std::size_t index, int size, const SeverityPreset& preset,
                                       const MotionConfig& motion = {}) {
    Rng img_rng(derive_seed(seed, 2 * index));
    SyntheticSlice s;
    s.gt = perturbed_phantom(img_rng, size);
    s.k_gt = fft2c(s.gt);
    s.sample = simulate_severity(s.k_gt, preset, derive_seed(derive_seed(seed, 2 * index + 1), hash_label(preset.name)), motion);
    return s;
}

/// `count` slices with presets taken round-robin from `presets`.
inline std::vector<SyntheticSlice> synthesize_slices(std::uint64_t seed, std::size_t count, int size,
                                                     const std::vector<SeverityPreset>& presets,
                                                     const MotionConfig& motion = {}) {
    require(!presets.empty(), ErrorCategory::invalid_argument, "synthesize_slices: no severity presets");
    std::vector<SyntheticSlice> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(synthesize_slice(seed, i, size, presets[i % presets.size()], motion));
    return out;
}

/// Training pairs with the ground-truth mask in both mask slots.
inline std::vector<TrainingPair> to_pairs(const std::vector<SyntheticSlice>& slices) {
    std::vector<TrainingPair> out;
    out.reserve(slices.size());
    for (const auto& s : slices) out.push_back({s.sample.corrupted, s.gt, s.sample.mask, s.sample.mask});
    return out;
}

/// Replace mask_pred of every pair with the detector's binary mask.
template <class T>
void attach_predicted_masks(std::vector<TrainingPair>& pairs, const std::vector<SyntheticSlice>& slices,
                            const Detector<T>& det) {
    require(pairs.size() == slices.size(), ErrorCategory::shape_mismatch, "attach_predicted_masks: size mismatch");
    for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i].mask_pred = det.detect(slices[i].sample.k_motion).binary;
}

inline std::vector<DetectionSample> to_detection_samples(const std::vector<SyntheticSlice>& slices) {
    std::vector<DetectionSample> out;
    out.reserve(slices.size());
    for (const auto& s : slices) out.push_back({s.sample.k_motion, s.sample.mask});
    return out;
}

} // namespace kmoco
