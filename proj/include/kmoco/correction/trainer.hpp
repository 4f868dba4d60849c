#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "kmoco/correction/corrector.hpp"
#include "kmoco/correction/losses.hpp"
#include "kmoco/nn/optim.hpp"

namespace kmoco {

/// Loss configurations compared in the ablation.
enum class LossScenario { l1, l1_dc, full };

inline std::string_view scenario_name(LossScenario s) {
    switch (s) {
    case LossScenario::l1: return "l1";
    case LossScenario::l1_dc: return "l1_dc";
    case LossScenario::full: return "full";
    }
    return "?";
}

inline LossScenario scenario_from_name(std::string_view s) {
    if (s == "l1") return LossScenario::l1;
    if (s == "l1_dc") return LossScenario::l1_dc;
    if (s == "full") return LossScenario::full;
    fail(ErrorCategory::invalid_argument, "unknown loss scenario '" + std::string(s) + "' (expected l1, l1_dc, full)");
}

/// Weights of `base` with the terms a scenario leaves out set to zero.
inline LossWeights scenario_weights(LossScenario s, const LossWeights& base = {}) {
    LossWeights w = base;
    if (s == LossScenario::l1) w.lambda_l = w.lambda_d = 0.0;
    if (s == LossScenario::l1_dc) w.lambda_l = 0.0;
    return w;
}

struct TrainingPair {
    RealImage input;   ///< corrupted magnitude image
    RealImage target;  ///< motion-free image
    LineMask mask_pred;
    LineMask mask_gt;
};

struct TrainConfig {
    int steps = 200;
    int batch = 8;
    nn::AdamConfig adam{};
    LossWeights weights{};
    LossScenario scenario = LossScenario::full;
    /// Feed the ground-truth mask to the DC term instead of the predicted one.
    bool dc_teacher_forcing = false;
    /// Seed of the frozen perceptual feature extractor.
    std::uint64_t feature_seed = FeatureExtractor<float>::default_seed;
};

struct EpochLog {
    int epoch = 0;
    int last_step = 0;
    double train_loss = 0.0;  ///< mean total loss over the epoch's steps
    double val_loss = 0.0;    ///< total loss on the validation set
    double val_l1 = 0.0;
};

struct TrainLog {
    std::vector<double> step_loss;
    std::vector<EpochLog> epochs;
    double initial_val_l1 = 0.0;
    double final_val_l1 = 0.0;
};

namespace detail {

template <class T>
struct PairBatch {
    nn::Tensor<T> input, target, mask;
};

template <class T>
PairBatch<T> gather(const std::vector<TrainingPair>& data, const std::vector<std::size_t>& idx, bool teacher) {
    const int B = static_cast<int>(idx.size());
    const int H = data[idx[0]].input.ny(), W = data[idx[0]].input.nx();
    PairBatch<T> b{nn::Tensor<T>(nn::Shape{B, 1, H, W}), nn::Tensor<T>(nn::Shape{B, 1, H, W}),
                   nn::Tensor<T>(nn::Shape{B, 1, H, 1})};
    for (int n = 0; n < B; ++n) {
        const auto& p = data[idx[static_cast<std::size_t>(n)]];
        const LineMask& m = teacher ? p.mask_gt : p.mask_pred;
        for (std::size_t i = 0; i < p.input.size(); ++i) {
            b.input.sample(n)[i] = static_cast<T>(p.input.data()[i]);
            b.target.sample(n)[i] = static_cast<T>(p.target.data()[i]);
        }
        for (int y = 0; y < H; ++y) b.mask.at(n, 0, y, 0) = static_cast<T>(m[y]);
    }
    return b;
}

inline void check_pairs(const std::vector<TrainingPair>& data, const char* what) {
    require(!data.empty(), ErrorCategory::invalid_argument, std::string(what) + ": empty dataset");
    const ImageMeta& g = data.front().input.meta();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& p = data[i];
        require(p.input.meta().same_grid(g) && p.target.meta().same_grid(g) && p.mask_pred.ny() == g.ny &&
                    p.mask_gt.ny() == g.ny,
                ErrorCategory::shape_mismatch, std::string(what) + ": pair " + std::to_string(i) + " is off-grid");
    }
}

} // namespace detail

/// Mean loss terms of `model` over `data`, evaluated in chunks of `batch`.
template <class T>
LossBreakdown evaluate_pairs(const Corrector<T>& model, const std::vector<TrainingPair>& data, const LossWeights& w,
                             const FeatureExtractor<T>& fe, bool teacher = false, int batch = 8) {
    detail::check_pairs(data, "evaluate_pairs");
    nn::NoGradGuard guard;
    LossBreakdown acc;
    for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch)) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(data.size(), start + static_cast<std::size_t>(batch)); ++i)
            idx.push_back(i);
        const auto b = detail::gather<T>(data, idx, teacher);
        const auto pred = model.forward(nn::constant(b.input));
        const auto terms = total_loss(pred, b.target, b.mask, w, fe).values();
        const double n = double(idx.size());
        acc.l1 += terms.l1 * n;
        acc.lpips += terms.lpips * n;
        acc.dc += terms.dc * n;
        acc.total += terms.total * n;
    }
    const double n = double(data.size());
    return {acc.l1 / n, acc.lpips / n, acc.dc / n, acc.total / n};
}

/// Adam on the scenario's weighted loss. An epoch is one pass over the
/// shuffled training set; validation runs at the end of every epoch and
/// after the last step. Deterministic in `seed`.
template <class T>
TrainLog train_corrector(Corrector<T>& model, const std::vector<TrainingPair>& train,
                         const std::vector<TrainingPair>& val, const TrainConfig& cfg, std::uint64_t seed) {
    detail::check_pairs(train, "train_corrector");
    if (!val.empty()) detail::check_pairs(val, "train_corrector validation");
    require(cfg.steps >= 0 && cfg.batch >= 1, ErrorCategory::invalid_argument, "train_corrector: bad step/batch counts");
    const auto& g = train.front().input.meta();
    model.check_input(g.ny, g.nx);

    const LossWeights w = scenario_weights(cfg.scenario, cfg.weights);
    w.validate();
    FeatureExtractor<T> fe(cfg.feature_seed);
    nn::Adam<T> opt(model.params(), cfg.adam);
    Rng rng(seed);

    TrainLog log;
    auto validate = [&] {
        return val.empty() ? LossBreakdown{} : evaluate_pairs(model, val, w, fe, cfg.dc_teacher_forcing, cfg.batch);
    };
    log.initial_val_l1 = log.final_val_l1 = validate().l1;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    const int B = std::min<int>(cfg.batch, static_cast<int>(train.size()));
    const int steps_per_epoch = std::max(1, static_cast<int>(train.size()) / B);
    std::size_t cursor = order.size();
    double epoch_acc = 0.0;
    int epoch_steps = 0;
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<std::size_t> idx;
        while (static_cast<int>(idx.size()) < B) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng.engine());
                cursor = 0;
            }
            idx.push_back(order[cursor++]);
        }
        const auto b = detail::gather<T>(train, idx, cfg.dc_teacher_forcing);
        model.params().zero_grad();
        const auto pred = model.forward(nn::constant(b.input));
        const auto terms = total_loss(pred, b.target, b.mask, w, fe);
        const double value = double(terms.total->value[0]);
        if (!std::isfinite(value))
            fail(ErrorCategory::divergence, "training diverged: non-finite loss at step " + std::to_string(step));
        nn::backward(terms.total);
        opt.step();
        log.step_loss.push_back(value);
        epoch_acc += value;
        ++epoch_steps;

        const bool last = step + 1 == cfg.steps;
        if ((step + 1) % steps_per_epoch == 0 || last) {
            const auto v = validate();
            log.epochs.push_back({static_cast<int>(log.epochs.size()) + 1, step + 1, epoch_acc / epoch_steps, v.total, v.l1});
            log.final_val_l1 = v.l1;
            epoch_acc = 0.0;
            epoch_steps = 0;
        }
    }
    return log;
}

} // namespace kmoco
