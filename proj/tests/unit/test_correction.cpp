#include <gtest/gtest.h>

#include <numbers>

#include "kmoco/correction/dc_project.hpp"
#include "kmoco/correction/trainer.hpp"
#include "kmoco/io/phantom.hpp"

using namespace kmoco;

namespace {

RealImage random_image(Rng& rng, int n, double lo = 0.0, double hi = 1.0) {
    RealImage img(ImageMeta{n, n, 1.0});
    for (auto& v : img.data()) v = rng.uniform(lo, hi);
    return img;
}

// One line of the centred orthonormal DFT, computed directly.
std::vector<cplx> dft_line(const RealImage& img, int ky) {
    const int nx = img.nx(), ny = img.ny();
    std::vector<cplx> out(static_cast<std::size_t>(nx));
    for (int kx = 0; kx < nx; ++kx) {
        cplx acc = 0.0;
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                const double ph = -2.0 * std::numbers::pi *
                                  (double(kx - nx / 2) * (x - nx / 2) / nx + double(ky - ny / 2) * (y - ny / 2) / ny);
                acc += img(x, y) * cplx(std::cos(ph), std::sin(ph));
            }
        out[static_cast<std::size_t>(kx)] = acc / std::sqrt(double(nx) * ny);
    }
    return out;
}

CorrectorConfig tiny_config() {
    CorrectorConfig c;
    c.levels = 2;
    c.base_channels = 4;
    return c;
}

std::vector<TrainingPair> darkened_pairs(Rng& rng, int count, int n) {
    std::vector<TrainingPair> out;
    for (int i = 0; i < count; ++i) {
        RealImage gt = perturbed_phantom(rng, n);
        RealImage in = gt;
        for (auto& v : in.data()) v *= 0.7;
        LineMask m(gt.meta());
        m[1] = m[2] = 1.0;
        out.push_back({in, gt, m, m});
    }
    return out;
}

} // namespace

TEST(Losses, L1MatchesMeanAbsoluteDifference) {
    Rng rng(1);
    const auto a = random_image(rng, 8), b = random_image(rng, 8);
    double ref = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) ref += std::abs(a.data()[i] - b.data()[i]);
    EXPECT_NEAR(l1_loss(a, b), ref / 64.0, 1e-15);
    EXPECT_NEAR(l1_loss(a, b, Reduction::sum), ref, 1e-12);
}

TEST(Losses, DcFullMaskEqualsImageEnergy) {
    Rng rng(2);
    const auto a = random_image(rng, 12), b = random_image(rng, 12);
    double energy = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) energy += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    const LineMask full(a.meta(), 1.0);
    EXPECT_NEAR(dc_loss(a, b, full, Reduction::sum), energy, 1e-10);
    EXPECT_NEAR(dc_loss(a, b, full), energy / 144.0, 1e-12);
}

TEST(Losses, DcSingleLineMatchesDirectTransform) {
    Rng rng(3);
    const auto a = random_image(rng, 8), b = random_image(rng, 8);
    LineMask m(a.meta());
    m[5] = 1.0;
    const auto la = dft_line(a, 5), lb = dft_line(b, 5);
    double ref = 0.0;
    for (std::size_t i = 0; i < la.size(); ++i) ref += std::norm(la[i] - lb[i]);
    EXPECT_NEAR(dc_loss(a, b, m, Reduction::sum), ref, 1e-12);
    EXPECT_NEAR(dc_loss(a, b, m), ref / 8.0, 1e-12);
}

TEST(Losses, DcEmptyMaskAndIdenticalImagesAreZero) {
    Rng rng(4);
    const auto a = random_image(rng, 8), b = random_image(rng, 8);
    EXPECT_EQ(dc_loss(a, b, LineMask(a.meta())), 0.0);
    EXPECT_NEAR(dc_loss(a, a, LineMask(a.meta(), 1.0)), 0.0, 1e-20);
}

TEST(Losses, GraphAndValueFormsAgree) {
    Rng rng(5);
    const auto a = random_image(rng, 16), b = random_image(rng, 16);
    LineMask m(a.meta());
    for (int y : {0, 4, 9}) m[y] = 1.0;
    FeatureExtractor<double> fe;
    const LossWeights w{};
    const auto v = total_loss(a, b, m, w, fe);
    const auto g = total_loss(nn::constant(detail::image_tensor<double>(a)), detail::image_tensor<double>(b),
                              detail::mask_tensor<double>(m), w, fe)
                       .values();
    EXPECT_NEAR(v.l1, g.l1, 1e-12);
    EXPECT_NEAR(v.lpips, g.lpips, 1e-12);
    EXPECT_NEAR(v.dc, g.dc, 1e-12);
    EXPECT_NEAR(v.total, g.total, 1e-10);
    EXPECT_NEAR(v.total, 10.0 * v.l1 + 0.5 * v.lpips + 100.0 * v.dc, 1e-10);
}

TEST(Losses, PerceptualTermIsSeededAndZeroOnIdentity) {
    Rng rng(6);
    const auto a = random_image(rng, 16), b = random_image(rng, 16);
    FeatureExtractor<double> f1(3), f2(3), f3(4);
    EXPECT_EQ(lpips_loss(a, b, f1), lpips_loss(a, b, f2));
    EXPECT_NE(lpips_loss(a, b, f1), lpips_loss(a, b, f3));
    EXPECT_EQ(lpips_loss(a, a, f1), 0.0);
    EXPECT_GT(lpips_loss(a, b, f1), 0.0);
}

TEST(Losses, RejectsNegativeWeights) {
    EXPECT_THROW((LossWeights{-1.0, 0.5, 100.0}.validate()), Error);
}

TEST(Scenario, WeightsAndNames) {
    const auto l1 = scenario_weights(LossScenario::l1);
    EXPECT_EQ(l1.lambda_l, 0.0);
    EXPECT_EQ(l1.lambda_d, 0.0);
    EXPECT_EQ(l1.lambda_r, 10.0);
    const auto dc = scenario_weights(LossScenario::l1_dc);
    EXPECT_EQ(dc.lambda_l, 0.0);
    EXPECT_EQ(dc.lambda_d, 100.0);
    const auto full = scenario_weights(LossScenario::full);
    EXPECT_EQ(full.lambda_l, 0.5);
    for (auto s : {LossScenario::l1, LossScenario::l1_dc, LossScenario::full})
        EXPECT_EQ(scenario_from_name(scenario_name(s)), s);
    EXPECT_THROW(scenario_from_name("lpips"), Error);
}

TEST(HardDc, KeepsMeasuredLinesAndTakesPredictionElsewhere) {
    Rng rng(7);
    const auto pred = random_image(rng, 16);
    const KSpace measured = fft2c(random_image(rng, 16));
    LineMask m(pred.meta());
    for (int y : {2, 3, 11}) m[y] = 1.0;
    const KSpace out = fft2c(hard_dc_project(pred, measured, m));
    const KSpace kp = fft2c(pred);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            const cplx expect = m[y] == 1.0 ? kp(x, y) : measured(x, y);
            EXPECT_LT(std::abs(out(x, y) - expect), 1e-12);
        }
}

TEST(HardDc, IdempotentAndEmptyMaskReturnsMeasurement) {
    Rng rng(8);
    const auto pred = random_image(rng, 16);
    const auto truth = random_image(rng, 16);
    const KSpace measured = fft2c(truth);
    LineMask m(pred.meta());
    m[4] = m[5] = 1.0;
    const auto once = hard_dc_project(pred, measured, m);
    const auto twice = hard_dc_project(once, measured, m);
    for (std::size_t i = 0; i < once.size(); ++i) EXPECT_LT(std::abs(once.data()[i] - twice.data()[i]), 1e-12);
    const auto none = hard_dc_project(pred, measured, LineMask(pred.meta()));
    for (std::size_t i = 0; i < none.size(); ++i) EXPECT_LT(std::abs(none.data()[i] - truth.data()[i]), 1e-12);
}

TEST(HardDc, RejectsSoftMaskAndGridMismatch) {
    const RealImage pred(ImageMeta{8, 8, 1.0});
    const KSpace k(ImageMeta{8, 8, 1.0});
    LineMask soft(pred.meta());
    soft[1] = 0.4;
    EXPECT_THROW(hard_dc_project(pred, k, soft), Error);
    EXPECT_THROW(hard_dc_project(pred, KSpace(ImageMeta{8, 16, 1.0}), LineMask(ImageMeta{8, 16, 1.0})), Error);
}

TEST(Trainer, ReducesValidationLossDeterministically) {
    Rng rng(9);
    const auto train = darkened_pairs(rng, 16, 16);
    const auto val = darkened_pairs(rng, 4, 16);
    TrainConfig cfg;
    cfg.steps = 40;
    cfg.batch = 4;
    cfg.adam.lr = 2e-3;
    Corrector<float> a(tiny_config(), 1), b(tiny_config(), 1);
    const auto la = train_corrector(a, train, val, cfg, 5);
    const auto lb = train_corrector(b, train, val, cfg, 5);
    EXPECT_EQ(la.step_loss, lb.step_loss);
    EXPECT_LT(la.final_val_l1, 0.7 * la.initial_val_l1);
    ASSERT_EQ(la.epochs.size(), 10u);
    EXPECT_EQ(la.epochs.back().last_step, 40);
}

TEST(Trainer, RejectsOffGridPairs) {
    Rng rng(10);
    auto train = darkened_pairs(rng, 3, 16);
    train[1].target = RealImage(ImageMeta{8, 8, 1.0});
    Corrector<float> m(tiny_config(), 1);
    try {
        train_corrector(m, train, {}, TrainConfig{}, 1);
        FAIL() << "expected rejection";
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::shape_mismatch);
        EXPECT_NE(std::string(e.what()).find("pair 1"), std::string::npos);
    }
}

TEST(Trainer, ReportsDivergence) {
    Rng rng(11);
    const auto train = darkened_pairs(rng, 4, 16);
    TrainConfig cfg;
    cfg.steps = 20;
    cfg.batch = 2;
    cfg.adam.lr = 1e30;
    cfg.adam.clip_norm = 0.0;
    Corrector<float> m(tiny_config(), 1);
    try {
        train_corrector(m, train, {}, cfg, 1);
        FAIL() << "expected divergence";
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::divergence);
    }
}
