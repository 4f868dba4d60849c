#pragma once

#include <vector>

#include "kmoco/field/image.hpp"
#include "kmoco/nn/layers.hpp"
#include "kmoco/rng.hpp"

namespace kmoco {

struct CorrectorConfig {
    int levels = 3;
    int base_channels = 16;
    int window_size = 4;
    int heads = 2;
    /// Levels carrying window-attention blocks; empty selects the two deepest.
    std::vector<int> attn_levels;
    bool shifted_windows = false;

    std::vector<int> resolved_attn_levels() const {
        if (!attn_levels.empty()) return attn_levels;
        std::vector<int> out;
        for (int l = std::max(0, levels - 2); l < levels; ++l) out.push_back(l);
        return out;
    }

    nn::UNetConfig unet() const {
        nn::UNetConfig u;
        u.in_channels = 1;
        u.out_channels = 1;
        u.levels = levels;
        u.base_channels = base_channels;
        u.window_size = window_size;
        u.heads = heads;
        u.attn_levels = resolved_attn_levels();
        u.shifted_windows = shifted_windows;
        u.zero_init_head = true;
        return u;
    }
};

/// Image-domain corrector: U-net with window attention predicting a
/// correction that is added to its input. The output projection starts at
/// zero, so an untrained model is the identity.
template <class T>
class Corrector {
public:
    explicit Corrector(const CorrectorConfig& cfg = {}, std::uint64_t seed = 0) : cfg_(cfg), seed_(seed) {
        Rng rng(seed);
        net_ = nn::UNet<T>(params_, "corrector", cfg_.unet(), rng);
    }

    Corrector(const Corrector&) = delete;
    Corrector& operator=(const Corrector&) = delete;
    Corrector(Corrector&&) = default;
    Corrector& operator=(Corrector&&) = default;

    const CorrectorConfig& config() const noexcept { return cfg_; }
    std::uint64_t seed() const noexcept { return seed_; }
    nn::ParamSet<T>& params() noexcept { return params_; }
    const nn::ParamSet<T>& params() const noexcept { return params_; }

    /// Shape check only; throws before any compute.
    void check_input(int height, int width) const { net_.config().check_input(height, width); }

    nn::Var<T> forward(const nn::Var<T>& x, nn::AttentionProbe<T>* probe = nullptr) const {
        return nn::add(x, net_(x, probe));
    }

    /// Inference on one image already scaled to [0, 1].
    RealImage forward(const RealImage& img) const {
        check_input(img.ny(), img.nx());
        img.require_finite("corrector input");
        nn::NoGradGuard guard;
        nn::Tensor<T> t(nn::Shape{1, 1, img.ny(), img.nx()});
        for (std::size_t i = 0; i < img.size(); ++i) t[i] = static_cast<T>(img.data()[i]);
        const auto y = forward(nn::constant(std::move(t)));
        RealImage out(img.meta());
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = static_cast<double>(y->value[i]);
        return out;
    }

private:
    CorrectorConfig cfg_;
    std::uint64_t seed_;
    nn::ParamSet<T> params_;
    nn::UNet<T> net_;
};

} // namespace kmoco
