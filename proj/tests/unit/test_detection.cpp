#include <gtest/gtest.h>

#include "kmoco/detection/detector.hpp"
#include "kmoco/detection/masks.hpp"
#include "kmoco/io/phantom.hpp"
#include "kmoco/motion/simulate.hpp"

using namespace kmoco;

namespace {

LineMask mask_of(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return LineMask(ImageMeta{2, n, 1.0}, std::move(v));
}

std::vector<DetectionSample> corrupted_samples(int count, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<DetectionSample> out;
    for (int i = 0; i < count; ++i) {
        const auto s = simulate_severity(fft2c(perturbed_phantom(rng, n)), SeverityPreset::minor(), rng.next_u64());
        out.push_back({s.k_motion, s.mask});
    }
    return out;
}

DetectorConfig tiny_config() {
    DetectorConfig c;
    c.levels = 2;
    c.base_channels = 4;
    return c;
}

} // namespace

TEST(Features, LogMagnitudeEncoding) {
    KSpace k(ImageMeta{4, 4, 1.0});
    k(2, 2) = cplx(0.0, 8.0);
    k(1, 0) = cplx(-0.008, 0.0);
    const auto t = detector_features<double>(k, DetectorFeatures::log_magnitude);
    ASSERT_EQ(t.shape(), (nn::Shape{1, 1, 4, 4}));
    EXPECT_NEAR(t.at(0, 0, 2, 2), 1.0, 1e-15);
    // |k| = s gives log(2) / log(1001).
    EXPECT_NEAR(t.at(0, 0, 0, 1), std::log(2.0) / std::log(1001.0), 1e-12);
    EXPECT_EQ(t.at(0, 0, 3, 3), 0.0);
}

TEST(Features, PhaseChannelsAreUnitVectors) {
    Rng rng(1);
    const KSpace k = fft2c(perturbed_phantom(rng, 16));
    const auto t = detector_features<double>(k, DetectorFeatures::log_magnitude_phase);
    ASSERT_EQ(t.shape().c, 3);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            const double c = t.at(0, 1, y, x), s = t.at(0, 2, y, x);
            EXPECT_NEAR(c * c + s * s, 1.0, 1e-12);
            EXPECT_GE(t.at(0, 0, y, x), 0.0);
            EXPECT_LE(t.at(0, 0, y, x), 1.0);
        }
}

TEST(Features, ZeroKspaceAndNames) {
    const auto t = detector_features<double>(KSpace(ImageMeta{4, 4, 1.0}), DetectorFeatures::log_magnitude);
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(t[i], 0.0);
    for (auto f : {DetectorFeatures::log_magnitude, DetectorFeatures::log_magnitude_phase})
        EXPECT_EQ(features_from_name(feature_name(f)), f);
    EXPECT_THROW(features_from_name("phase"), Error);
}

TEST(Masks, SpatialAverageAndThreshold) {
    ScoreMap s(ImageMeta{4, 3, 1.0});
    for (int x = 0; x < 4; ++x) {
        s(x, 0) = 0.0;
        s(x, 1) = x < 2 ? 1.0 : 0.0;
        s(x, 2) = 0.9;
    }
    const LineMask soft = spatial_average(s);
    EXPECT_DOUBLE_EQ(soft[0], 0.0);
    EXPECT_DOUBLE_EQ(soft[1], 0.5);
    EXPECT_DOUBLE_EQ(soft[2], 0.9);
    EXPECT_EQ(threshold_mask(soft, 0.5).line_values, (std::vector<double>{0, 1, 1}));
    EXPECT_EQ(threshold_mask(soft, 0.6).line_values, (std::vector<double>{0, 0, 1}));
    EXPECT_THROW(threshold_mask(soft, 1.0), Error);
}

TEST(Masks, DiceAndBceValues) {
    const auto gt = mask_of({1, 1, 0, 0});
    EXPECT_NEAR(dice_loss(gt, gt), 0.0, 1e-6);
    EXPECT_NEAR(dice_loss(mask_of({0, 0, 1, 1}), gt), 1.0, 1e-6);
    const auto half = mask_of({0.5, 0.5, 0.5, 0.5});
    EXPECT_NEAR(dice_loss(half, gt), 1.0 - (2.0 + 1e-6) / (4.0 + 1e-6), 1e-12);
    EXPECT_NEAR(bce_loss(half, gt), std::log(2.0), 1e-12);
    EXPECT_NEAR(bce_loss(half, gt, Reduction::sum), 4.0 * std::log(2.0), 1e-12);
    // Clamped probabilities keep the loss finite.
    EXPECT_NEAR(bce_loss(mask_of({0, 0, 1, 1}), gt), -std::log(1e-7), 1e-6);
    EXPECT_TRUE(std::isfinite(seg_loss(mask_of({0, 0, 1, 1}), gt)));
}

TEST(Masks, EmptyMasksHaveZeroDice) {
    const auto z = mask_of({0, 0, 0});
    EXPECT_NEAR(dice_loss(z, z), 0.0, 1e-12);
}

TEST(Masks, LineScores) {
    const auto s = score_lines(mask_of({1, 1, 0, 0, 1}), mask_of({1, 0, 1, 0, 1}));
    EXPECT_EQ(s.true_positive, 2u);
    EXPECT_EQ(s.false_positive, 1u);
    EXPECT_EQ(s.false_negative, 1u);
    EXPECT_EQ(s.true_negative, 1u);
    EXPECT_DOUBLE_EQ(s.f1(), 4.0 / 6.0);
    EXPECT_DOUBLE_EQ(score_lines(mask_of({0, 0}), mask_of({0, 0})).f1(), 1.0);
    const auto gt = mask_of({0, 1, 1});
    EXPECT_DOUBLE_EQ(score_lines(oracle_detector(gt), gt).f1(), 1.0);
}

TEST(Detector, OutputShapesAndRanges) {
    Detector<float> d(tiny_config(), 3);
    Rng rng(2);
    const KSpace k = fft2c(perturbed_phantom(rng, 16));
    const auto r = d.detect(k);
    EXPECT_EQ(r.scores.nx(), 16);
    EXPECT_EQ(r.soft.ny(), 16);
    for (double v : r.scores.data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    for (int y = 0; y < 16; ++y) {
        EXPECT_TRUE(r.binary[y] == 0.0 || r.binary[y] == 1.0);
        EXPECT_EQ(r.binary[y], r.soft[y] >= 0.5 ? 1.0 : 0.0);
    }
}

TEST(Detector, RejectsBadConfigAndGrid) {
    DetectorConfig c = tiny_config();
    c.threshold = 0.0;
    EXPECT_THROW(Detector<float>(c, 1), Error);
    Detector<float> d(DetectorConfig{}, 1);
    EXPECT_THROW(d.detect(KSpace(ImageMeta{18, 18, 1.0})), Error);
}

TEST(Detector, TrainingLowersSegmentationLoss) {
    const auto data = corrupted_samples(16, 32, 4);
    DetectorTrainConfig cfg;
    cfg.steps = 60;
    cfg.batch = 4;
    cfg.adam.lr = 2e-3;
    Detector<float> a(tiny_config(), 7), b(tiny_config(), 7);
    const auto la = train_detector(a, data, cfg, 9);
    const auto lb = train_detector(b, data, cfg, 9);
    EXPECT_EQ(la.step_loss, lb.step_loss);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 10; ++i) {
        head += la.step_loss[static_cast<std::size_t>(i)];
        tail += la.step_loss[la.step_loss.size() - 1 - static_cast<std::size_t>(i)];
    }
    EXPECT_LT(tail, 0.8 * head);
}

TEST(Detector, TrainingRejectsMixedGrids) {
    auto data = corrupted_samples(2, 32, 5);
    data.push_back(corrupted_samples(1, 16, 6).front());
    Detector<float> d(tiny_config(), 1);
    EXPECT_THROW(train_detector(d, data, DetectorTrainConfig{}, 1), Error);
}
