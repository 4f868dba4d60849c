#pragma once

#include <cmath>
#include <vector>

#include "kmoco/nn/autograd.hpp"

namespace kmoco::nn {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Global gradient-norm clip; <= 0 disables.
    double clip_norm = 1.0;
};

/// Adam over the trainable entries of a ParamSet. Moment buffers are kept
/// in double regardless of the parameter type.
template <class T>
class Adam {
public:
    Adam(ParamSet<T>& params, const AdamConfig& cfg) : params_(params), cfg_(cfg) {
        for (const auto& e : params_.entries()) {
            m_.emplace_back(e.var->value.size(), 0.0);
            v_.emplace_back(e.var->value.size(), 0.0);
        }
    }

    /// Global L2 norm of the current gradients.
    double grad_norm() const {
        double sq = 0.0;
        for (const auto& e : params_.entries()) {
            if (!e.trainable || !e.var->has_grad()) continue;
            for (std::size_t i = 0; i < e.var->grad.size(); ++i) sq += double(e.var->grad[i]) * double(e.var->grad[i]);
        }
        return std::sqrt(sq);
    }

    /// Applies one update and returns the pre-clip gradient norm.
    double step() {
        ++t_;
        const double norm = grad_norm();
        const double factor = (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        auto& entries = params_.entries();
        for (std::size_t k = 0; k < entries.size(); ++k) {
            auto& e = entries[k];
            if (!e.trainable || !e.var->has_grad()) continue;
            auto& w = e.var->value;
            const auto& g = e.var->grad;
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = double(g[i]) * factor;
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
                w[i] -= static_cast<T>(cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps));
            }
        }
        return norm;
    }

    long steps_taken() const noexcept { return t_; }

private:
    ParamSet<T>& params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

} // namespace kmoco::nn
