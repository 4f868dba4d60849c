#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "kmoco/nn/attention.hpp"
#include "kmoco/nn/ops.hpp"
#include "kmoco/rng.hpp"

namespace kmoco::nn {

enum class Init { he, zero };

template <class T>
struct Conv2d {
    Var<T> weight;
    Var<T> bias;
    int stride = 1;
    int pad = 0;

    Conv2d() = default;
    Conv2d(ParamSet<T>& ps, const std::string& name, int cin, int cout, int kernel, int stride_, int pad_, Rng& rng,
           Init init = Init::he, bool trainable = true)
        : stride(stride_), pad(pad_) {
        Tensor<T> w(Shape{cout, cin, kernel, kernel});
        if (init == Init::he) {
            const double std = std::sqrt(2.0 / (cin * kernel * kernel));
            for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.normal(0.0, std));
        }
        weight = ps.add(name + ".weight", std::move(w), trainable);
        bias = ps.add(name + ".bias", Tensor<T>(Shape{1, cout, 1, 1}), trainable);
    }

    Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight, bias, stride, pad); }
};

template <class T>
struct ChannelNorm {
    Var<T> gamma;
    Var<T> beta;

    ChannelNorm() = default;
    ChannelNorm(ParamSet<T>& ps, const std::string& name, int channels) {
        gamma = ps.add(name + ".gamma", Tensor<T>(Shape{1, channels, 1, 1}, T(1)));
        beta = ps.add(name + ".beta", Tensor<T>(Shape{1, channels, 1, 1}));
    }

    Var<T> operator()(const Var<T>& x) const { return channel_norm(x, gamma, beta); }
};

/// x + conv(silu(norm(conv(silu(norm(x))))))
template <class T>
struct ResBlock {
    ChannelNorm<T> norm1, norm2;
    Conv2d<T> conv1, conv2;

    ResBlock() = default;
    ResBlock(ParamSet<T>& ps, const std::string& name, int channels, Rng& rng)
        : norm1(ps, name + ".norm1", channels),
          norm2(ps, name + ".norm2", channels),
          conv1(ps, name + ".conv1", channels, channels, 3, 1, 1, rng),
          conv2(ps, name + ".conv2", channels, channels, 3, 1, 1, rng) {}

    Var<T> operator()(const Var<T>& x) const { return add(x, conv2(silu(norm2(conv1(silu(norm1(x))))))); }
};

/// Transformer block on windows: pre-norm attention and pre-norm MLP, both
/// residual. No relative position bias.
template <class T>
struct SwinBlock {
    ChannelNorm<T> norm1, norm2;
    Conv2d<T> qkv, proj, fc1, fc2;
    int heads = 2;
    int window = 4;
    bool shifted = false;

    SwinBlock() = default;
    SwinBlock(ParamSet<T>& ps, const std::string& name, int channels, int heads_, int window_, bool shifted_, Rng& rng)
        : norm1(ps, name + ".norm1", channels),
          norm2(ps, name + ".norm2", channels),
          qkv(ps, name + ".qkv", channels, 3 * channels, 1, 1, 0, rng),
          proj(ps, name + ".proj", channels, channels, 1, 1, 0, rng),
          fc1(ps, name + ".fc1", channels, 2 * channels, 1, 1, 0, rng),
          fc2(ps, name + ".fc2", 2 * channels, channels, 1, 1, 0, rng),
          heads(heads_),
          window(window_),
          shifted(shifted_) {}

    Var<T> operator()(const Var<T>& x, AttentionProbe<T>* probe = nullptr) const {
        auto h = add(x, proj(window_attention(qkv(norm1(x)), heads, window, shifted, probe)));
        return add(h, fc2(silu(fc1(norm2(h)))));
    }
};

struct UNetConfig {
    int in_channels = 1;
    int out_channels = 1;
    int levels = 3;
    int base_channels = 16;
    int window_size = 4;
    int heads = 2;
    std::vector<int> attn_levels;
    bool shifted_windows = false;
    /// Zero weights on the output projection.
    bool zero_init_head = false;

    int channels(int level) const { return base_channels << level; }
    bool has_attention(int level) const {
        for (int l : attn_levels)
            if (l == level) return true;
        return false;
    }

    void validate() const {
        require(levels >= 2, ErrorCategory::invalid_argument, "U-net needs at least 2 levels");
        require(in_channels >= 1 && out_channels >= 1 && base_channels >= 1, ErrorCategory::invalid_argument,
                "channel counts must be positive");
        for (int l : attn_levels) {
            require(l >= 0 && l < levels, ErrorCategory::invalid_argument, "attention level out of range");
            require(window_size >= 1 && heads >= 1 && channels(l) % heads == 0, ErrorCategory::invalid_argument,
                    "attention heads must divide the channel count at level " + std::to_string(l));
        }
    }

    /// Rejects grids the network cannot process, before any compute.
    void check_input(int height, int width) const {
        const int f = 1 << (levels - 1);
        require(height % f == 0 && width % f == 0, ErrorCategory::shape_mismatch,
                "input " + std::to_string(height) + "x" + std::to_string(width) + " not divisible by " +
                    std::to_string(f) + " for a " + std::to_string(levels) + "-level network");
        for (int l : attn_levels) {
            const int h = height >> l, w = width >> l;
            require(h % window_size == 0 && w % window_size == 0, ErrorCategory::shape_mismatch,
                    "level " + std::to_string(l) + " grid " + std::to_string(h) + "x" + std::to_string(w) +
                        " not divisible by window " + std::to_string(window_size));
        }
    }
};

/// Encoder-decoder with skip connections. Each level carries a residual
/// block (plus a window-attention block where configured); downsampling is
/// a stride-2 2x2 convolution, upsampling is nearest-neighbour + 3x3 conv.
template <class T>
class UNet {
public:
    UNet() = default;
    UNet(ParamSet<T>& ps, const std::string& name, const UNetConfig& cfg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        const int L = cfg_.levels;
        stem_ = Conv2d<T>(ps, name + ".stem", cfg_.in_channels, cfg_.channels(0), 3, 1, 1, rng);
        for (int l = 0; l < L - 1; ++l) {
            const std::string p = name + ".enc" + std::to_string(l);
            enc_res_.emplace_back(ps, p + ".res", cfg_.channels(l), rng);
            enc_attn_.push_back(make_attn(ps, p + ".attn", l, rng));
            down_.emplace_back(ps, p + ".down", cfg_.channels(l), cfg_.channels(l + 1), 2, 2, 0, rng);
        }
        mid_res_ = ResBlock<T>(ps, name + ".mid.res", cfg_.channels(L - 1), rng);
        mid_attn_ = make_attn(ps, name + ".mid.attn", L - 1, rng);
        for (int l = L - 2; l >= 0; --l) {
            const std::string p = name + ".dec" + std::to_string(l);
            up_.emplace_back(ps, p + ".up", cfg_.channels(l + 1), cfg_.channels(l), 3, 1, 1, rng);
            fuse_.emplace_back(ps, p + ".fuse", 2 * cfg_.channels(l), cfg_.channels(l), 1, 1, 0, rng);
            dec_res_.emplace_back(ps, p + ".res", cfg_.channels(l), rng);
            dec_attn_.push_back(make_attn(ps, p + ".attn", l, rng));
        }
        head_norm_ = ChannelNorm<T>(ps, name + ".head_norm", cfg_.channels(0));
        head_ = Conv2d<T>(ps, name + ".head", cfg_.channels(0), cfg_.out_channels, 3, 1, 1, rng,
                          cfg_.zero_init_head ? Init::zero : Init::he);
    }

    const UNetConfig& config() const noexcept { return cfg_; }

    Var<T> operator()(const Var<T>& x, AttentionProbe<T>* probe = nullptr) const {
        const Shape s = x->shape();
        require(s.c == cfg_.in_channels, ErrorCategory::shape_mismatch,
                "network expects " + std::to_string(cfg_.in_channels) + " input channels, got " + std::to_string(s.c));
        cfg_.check_input(s.h, s.w);
        const int L = cfg_.levels;
        std::vector<Var<T>> skips;
        auto h = stem_(x);
        for (int l = 0; l < L - 1; ++l) {
            h = enc_res_[static_cast<std::size_t>(l)](h);
            if (const auto& a = enc_attn_[static_cast<std::size_t>(l)]) h = (*a)(h, probe);
            skips.push_back(h);
            h = down_[static_cast<std::size_t>(l)](h);
        }
        h = mid_res_(h);
        if (mid_attn_) h = (*mid_attn_)(h, probe);
        for (int i = 0; i < L - 1; ++i) {
            const int l = L - 2 - i;
            const auto ui = static_cast<std::size_t>(i);
            h = up_[ui](upsample2x(h));
            h = fuse_[ui](concat(h, skips[static_cast<std::size_t>(l)]));
            h = dec_res_[ui](h);
            if (const auto& a = dec_attn_[ui]) h = (*a)(h, probe);
        }
        return head_(silu(head_norm_(h)));
    }

private:
    std::optional<SwinBlock<T>> make_attn(ParamSet<T>& ps, const std::string& name, int level, Rng& rng) const {
        if (!cfg_.has_attention(level)) return std::nullopt;
        return SwinBlock<T>(ps, name, cfg_.channels(level), cfg_.heads, cfg_.window_size, cfg_.shifted_windows, rng);
    }

    UNetConfig cfg_;
    Conv2d<T> stem_;
    std::vector<ResBlock<T>> enc_res_;
    std::vector<std::optional<SwinBlock<T>>> enc_attn_;
    std::vector<Conv2d<T>> down_;
    ResBlock<T> mid_res_;
    std::optional<SwinBlock<T>> mid_attn_;
    std::vector<Conv2d<T>> up_;
    std::vector<Conv2d<T>> fuse_;
    std::vector<ResBlock<T>> dec_res_;
    std::vector<std::optional<SwinBlock<T>>> dec_attn_;
    ChannelNorm<T> head_norm_;
    Conv2d<T> head_;
};

} // namespace kmoco::nn
