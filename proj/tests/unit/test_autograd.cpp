#include <gtest/gtest.h>

#include "../common/gradcheck.hpp"
#include "kmoco/correction/corrector.hpp"
#include "kmoco/correction/losses.hpp"
#include "kmoco/nn/optim.hpp"

using namespace kmoco;
using namespace kmoco::nn;
using kmoco::testing::gradcheck;

namespace {

constexpr double tol = 1e-4;

Var<double> random_leaf(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(s);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return leaf(std::move(t), true);
}

Tensor<double> random_tensor(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(s);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Fixed random projection turns any output into a scalar with a
// non-trivial gradient everywhere.
Var<double> project(const Var<double>& y, std::uint64_t seed) {
    Rng rng(seed);
    return mse(y, constant(random_tensor(rng, y->shape())));
}

} // namespace

TEST(Gradcheck, Conv2dStrideAndPadding) {
    Rng rng(1);
    for (auto [k, stride, pad] : {std::tuple{3, 1, 1}, std::tuple{2, 2, 0}, std::tuple{1, 1, 0}, std::tuple{3, 2, 1}}) {
        auto x = random_leaf(rng, {2, 3, 6, 6});
        auto w = random_leaf(rng, {4, 3, k, k});
        auto b = random_leaf(rng, {1, 4, 1, 1});
        const auto rep = gradcheck([&] { return project(conv2d(x, w, b, stride, pad), 5); }, {{"x", x}, {"w", w}, {"b", b}});
        EXPECT_LT(rep.max_rel, tol) << rep.worst << " k=" << k << " stride=" << stride;
    }
}

TEST(Gradcheck, ElementwiseAndStructuralOps) {
    Rng rng(2);
    auto a = random_leaf(rng, {1, 2, 4, 4});
    auto b = random_leaf(rng, {1, 3, 4, 4});
    const auto rep = gradcheck(
        [&] {
            auto h = concat(silu(a), sigmoid(b));
            h = upsample2x(scale(add(h, h), 0.7));
            return project(h, 6);
        },
        {{"a", a}, {"b", b}});
    EXPECT_LT(rep.max_rel, tol) << rep.worst;
}

TEST(Gradcheck, ChannelNorm) {
    Rng rng(3);
    auto x = random_leaf(rng, {2, 4, 4, 4});
    auto g = random_leaf(rng, {1, 4, 1, 1}, 0.5, 1.5);
    auto be = random_leaf(rng, {1, 4, 1, 1});
    const auto rep = gradcheck([&] { return project(channel_norm(x, g, be), 7); }, {{"x", x}, {"gamma", g}, {"beta", be}});
    EXPECT_LT(rep.max_rel, tol) << rep.worst;
}

TEST(Gradcheck, ReductionsAndSegmentationLosses) {
    Rng rng(4);
    auto x = random_leaf(rng, {2, 1, 6, 5});
    Tensor<double> target(Shape{2, 1, 6, 1});
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = (i % 3 == 0) ? 1.0 : 0.0;
    const auto rep = gradcheck(
        [&] {
            auto p = row_mean(sigmoid(x));
            return weighted_sum<double>({{bce_loss(p, target), 1.0}, {dice_loss(p, target), 0.5}});
        },
        {{"x", x}});
    EXPECT_LT(rep.max_rel, tol) << rep.worst;
}

TEST(Gradcheck, L1AwayFromKinks) {
    Rng rng(5);
    auto x = random_leaf(rng, {1, 1, 4, 4}, 0.0, 1.0);
    Tensor<double> t(Shape{1, 1, 4, 4});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = (i % 2) ? 2.0 : -1.0;
    const auto rep = gradcheck([&] { return l1_loss(x, t); }, {{"x", x}});
    EXPECT_LT(rep.max_rel, tol) << rep.worst;
}

TEST(Gradcheck, WindowAttentionPlainAndShifted) {
    Rng rng(6);
    for (bool shift : {false, true}) {
        auto qkv = random_leaf(rng, {1, 12, 8, 8});
        const auto rep = gradcheck([&] { return project(window_attention(qkv, 2, 4, shift), 8); }, {{"qkv", qkv}});
        EXPECT_LT(rep.max_rel, tol) << rep.worst << " shift=" << shift;
    }
}

TEST(Gradcheck, ResAndSwinBlocks) {
    Rng rng(7);
    ParamSet<double> ps;
    ResBlock<double> res(ps, "res", 4, rng);
    SwinBlock<double> swin(ps, "swin", 4, 2, 4, true, rng);
    auto x = random_leaf(rng, {1, 4, 8, 8});
    std::vector<std::pair<std::string, Var<double>>> vars{{"x", x}};
    for (const auto& e : ps.entries()) vars.emplace_back(e.name, e.var);
    const auto rep = gradcheck([&] { return project(swin(res(x)), 9); }, vars);
    EXPECT_LT(rep.max_rel, tol) << rep.worst;
}

TEST(Gradcheck, DataConsistencyLoss) {
    Rng rng(8);
    auto x = random_leaf(rng, {2, 1, 8, 6});
    const auto target = random_tensor(rng, {2, 1, 8, 6});
    Tensor<double> mask(Shape{2, 1, 8, 1});
    for (int y : {1, 2, 6}) mask.at(0, 0, y, 0) = 1.0;
    for (int y : {0, 7}) mask.at(1, 0, y, 0) = 1.0;
    for (auto red : {Reduction::mean, Reduction::sum}) {
        const auto rep = gradcheck([&] { return dc_loss(x, target, mask, red); }, {{"x", x}});
        EXPECT_LT(rep.max_rel, tol) << rep.worst;
    }
}

TEST(Gradcheck, FullObjectiveThroughCorrector) {
    CorrectorConfig cfg;
    cfg.levels = 2;
    cfg.base_channels = 8;
    cfg.shifted_windows = true;
    Corrector<double> model(cfg, 11);
    // The zero-initialised head would hide every upstream gradient.
    Rng rng(9);
    for (auto& e : model.params().entries())
        if (e.name.find(".head.") != std::string::npos)
            for (std::size_t i = 0; i < e.var->value.size(); ++i) e.var->value[i] = rng.normal(0.0, 0.2);

    auto x = random_leaf(rng, {1, 1, 16, 16}, 0.0, 1.0);
    Tensor<double> gt(x->shape());
    for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = x->value[i] + (i % 2 ? 3.0 : -3.0);
    Tensor<double> mask(Shape{1, 1, 16, 1});
    for (int y : {0, 3, 4, 5, 12}) mask.at(0, 0, y, 0) = 1.0;
    FeatureExtractor<double> fe;

    std::vector<std::pair<std::string, Var<double>>> vars{{"input", x}};
    for (const auto& e : model.params().entries()) vars.emplace_back(e.name, e.var);
    const auto rep = gradcheck([&] { return total_loss(model.forward(x), gt, mask, LossWeights{}, fe).total; }, vars);
    EXPECT_EQ(rep.checked, model.params().numel() + x->value.size());
    EXPECT_LT(rep.max_rel, tol) << rep.worst;
}

TEST(Autograd, SharedNodeAccumulates) {
    auto x = leaf(Tensor<double>(Shape{1, 1, 1, 1}, 3.0), true);
    auto y = mse(add(x, x), constant(Tensor<double>(Shape{1, 1, 1, 1})));
    backward(y);
    EXPECT_DOUBLE_EQ(x->grad[0], 2.0 * 2.0 * 6.0);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
    auto x = leaf(Tensor<double>(Shape{1, 1, 2, 2}, 1.0), true);
    NoGradGuard guard;
    auto y = silu(x);
    EXPECT_FALSE(y->requires_grad);
    EXPECT_TRUE(y->inputs.empty());
}

TEST(Autograd, BackwardNeedsScalar) {
    auto x = leaf(Tensor<double>(Shape{1, 1, 2, 2}, 1.0), true);
    EXPECT_THROW(backward(silu(x)), Error);
}

TEST(Adam, MinimisesQuadratic) {
    ParamSet<double> ps;
    auto w = ps.add("w", Tensor<double>(Shape{1, 1, 1, 4}, 0.0));
    Tensor<double> target(Shape{1, 1, 1, 4});
    for (std::size_t i = 0; i < 4; ++i) target[i] = double(i) - 1.5;
    Adam<double> opt(ps, AdamConfig{0.05, 0.9, 0.999, 1e-8, 0.0});
    for (int s = 0; s < 500; ++s) {
        ps.zero_grad();
        backward(mse(w, constant(target)));
        opt.step();
    }
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w->value[i], target[i], 1e-3);
}

TEST(Corrector, UntrainedIsIdentity) {
    CorrectorConfig cfg;
    cfg.levels = 2;
    cfg.base_channels = 4;
    Corrector<float> model(cfg, 1);
    RealImage img(ImageMeta{16, 16, 1.0});
    Rng rng(1);
    for (auto& v : img.data()) v = rng.uniform(0.0, 1.0);
    const auto out = model.forward(img);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out.data()[i], img.data()[i], 1e-6);
}

TEST(Corrector, RejectsIndivisibleGrid) {
    Corrector<float> model(CorrectorConfig{}, 1);
    try {
        model.check_input(20, 16);
        FAIL() << "expected rejection";
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::shape_mismatch);
    }
}
