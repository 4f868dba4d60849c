#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "kmoco/detection/masks.hpp"
#include "kmoco/field/fft.hpp"
#include "kmoco/nn/layers.hpp"
#include "kmoco/nn/optim.hpp"
#include "kmoco/rng.hpp"

namespace kmoco {

/// Input encoding of the k-space handed to the detector network.
enum class DetectorFeatures {
    /// log(1 + |k|/s) / log(1 + max|k|/s), s = 1e-3 max|k|
    log_magnitude,
    /// log-magnitude plus cos and sin of the k-space phase
    log_magnitude_phase,
};

inline std::string_view feature_name(DetectorFeatures f) {
    return f == DetectorFeatures::log_magnitude ? "log_magnitude" : "log_magnitude_phase";
}

inline DetectorFeatures features_from_name(std::string_view s) {
    if (s == "log_magnitude") return DetectorFeatures::log_magnitude;
    if (s == "log_magnitude_phase") return DetectorFeatures::log_magnitude_phase;
    fail(ErrorCategory::invalid_argument, "unknown detector feature set '" + std::string(s) + "'");
}

struct DetectorConfig {
    int levels = 3;
    int base_channels = 8;
    double threshold = 0.5;
    DetectorFeatures features = DetectorFeatures::log_magnitude_phase;

    int in_channels() const { return features == DetectorFeatures::log_magnitude ? 1 : 3; }

    void validate() const {
        require(levels >= 2, ErrorCategory::invalid_argument, "detector needs at least 2 levels");
        require(base_channels >= 1, ErrorCategory::invalid_argument, "detector base_channels must be positive");
        require(threshold > 0.0 && threshold < 1.0, ErrorCategory::invalid_argument, "threshold must lie in (0, 1)");
    }

    nn::UNetConfig unet() const {
        nn::UNetConfig u;
        u.in_channels = in_channels();
        u.out_channels = 1;
        u.levels = levels;
        u.base_channels = base_channels;
        return u;
    }
};

/// Relative floor of the log-magnitude encoding.
inline constexpr double log_feature_floor = 1e-3;

template <class T>
nn::Tensor<T> detector_features(const KSpace& k, DetectorFeatures f) {
    k.require_finite("detector input");
    const int C = f == DetectorFeatures::log_magnitude ? 1 : 3;
    nn::Tensor<T> t(nn::Shape{1, C, k.ny(), k.nx()});
    const double peak = max_abs(k.data());
    const double s = peak > 0.0 ? log_feature_floor * peak : 1.0;
    const double denom = peak > 0.0 ? std::log1p(peak / s) : 1.0;
    for (std::size_t i = 0; i < k.size(); ++i) {
        const cplx v = k.data()[i];
        const double mag = std::abs(v);
        t.plane(0, 0)[i] = static_cast<T>(std::log1p(mag / s) / denom);
        if (C == 3) {
            const double ph = std::arg(v);
            t.plane(0, 1)[i] = static_cast<T>(std::cos(ph));
            t.plane(0, 2)[i] = static_cast<T>(std::sin(ph));
        }
    }
    return t;
}

struct DetectionResult {
    ScoreMap scores;  ///< per-pixel M'
    LineMask soft;    ///< readout-averaged scores
    LineMask binary;  ///< thresholded soft mask
};

/// k-space encoder-decoder with a sigmoid head, followed by the readout
/// averaging that turns pixel scores into one score per line.
template <class T>
class Detector {
public:
    explicit Detector(const DetectorConfig& cfg = {}, std::uint64_t seed = 0) : cfg_(cfg), seed_(seed) {
        cfg_.validate();
        Rng rng(seed);
        net_ = nn::UNet<T>(params_, "detector", cfg_.unet(), rng);
    }

    Detector(const Detector&) = delete;
    Detector& operator=(const Detector&) = delete;
    Detector(Detector&&) = default;
    Detector& operator=(Detector&&) = default;

    const DetectorConfig& config() const noexcept { return cfg_; }
    DetectorConfig& config() noexcept { return cfg_; }
    nn::ParamSet<T>& params() noexcept { return params_; }
    const nn::ParamSet<T>& params() const noexcept { return params_; }

    struct Output {
        nn::Var<T> scores;
        nn::Var<T> lines;
    };

    Output forward(const nn::Var<T>& features) const {
        auto scores = nn::sigmoid(net_(features));
        return {scores, nn::row_mean(scores)};
    }

    nn::Tensor<T> features(const KSpace& k) const { return detector_features<T>(k, cfg_.features); }

    DetectionResult detect(const KSpace& k) const {
        net_.config().check_input(k.ny(), k.nx());
        nn::NoGradGuard guard;
        const auto out = forward(nn::constant(features(k)));
        ScoreMap scores(k.meta());
        for (std::size_t i = 0; i < scores.size(); ++i)
            scores.data()[i] = std::clamp(static_cast<double>(out.scores->value[i]), 0.0, 1.0);
        LineMask soft = spatial_average(scores);
        LineMask binary = threshold_mask(soft, cfg_.threshold);
        return {std::move(scores), std::move(soft), std::move(binary)};
    }

private:
    DetectorConfig cfg_;
    std::uint64_t seed_;
    nn::ParamSet<T> params_;
    nn::UNet<T> net_;
};

struct DetectionSample {
    KSpace k;
    LineMask mask;
};

struct DetectorTrainConfig {
    int steps = 400;
    int batch = 8;
    nn::AdamConfig adam{};
};

struct DetectorTrainLog {
    std::vector<double> step_loss;
};

/// Minimises Dice + BCE between the readout-averaged prediction and the
/// ground-truth lines. Deterministic in `seed`.
template <class T>
DetectorTrainLog train_detector(Detector<T>& model, const std::vector<DetectionSample>& data,
                                const DetectorTrainConfig& cfg, std::uint64_t seed) {
    require(!data.empty(), ErrorCategory::invalid_argument, "train_detector: empty dataset");
    require(cfg.batch >= 1 && cfg.steps >= 0, ErrorCategory::invalid_argument, "train_detector: bad step/batch counts");
    const int H = data.front().k.ny(), W = data.front().k.nx();
    std::vector<nn::Tensor<T>> feats;
    feats.reserve(data.size());
    for (const auto& d : data) {
        require(d.k.ny() == H && d.k.nx() == W && d.mask.ny() == H, ErrorCategory::shape_mismatch,
                "train_detector: all samples must share one grid");
        feats.push_back(model.features(d.k));
    }
    const int C = feats.front().shape().c;

    Rng rng(seed);
    nn::Adam<T> opt(model.params(), cfg.adam);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    DetectorTrainLog log;
    for (int step = 0; step < cfg.steps; ++step) {
        const int B = std::min<int>(cfg.batch, static_cast<int>(data.size()));
        nn::Tensor<T> x(nn::Shape{B, C, H, W});
        nn::Tensor<T> y(nn::Shape{B, 1, H, 1});
        for (int b = 0; b < B; ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng.engine());
                cursor = 0;
            }
            const std::size_t idx = order[cursor++];
            std::copy_n(feats[idx].data(), feats[idx].size(), x.sample(b));
            for (int l = 0; l < H; ++l) y.at(b, 0, l, 0) = static_cast<T>(data[idx].mask[l]);
        }
        model.params().zero_grad();
        const auto out = model.forward(nn::constant(std::move(x)));
        const auto loss = nn::weighted_sum<T>({{nn::dice_loss(out.lines, y), T(1)}, {nn::bce_loss(out.lines, y), T(1)}});
        const double value = static_cast<double>(loss->value[0]);
        if (!std::isfinite(value))
            fail(ErrorCategory::divergence, "detector training diverged: non-finite loss at step " + std::to_string(step));
        nn::backward(loss);
        opt.step();
        log.step_loss.push_back(value);
    }
    return log;
}

} // namespace kmoco
