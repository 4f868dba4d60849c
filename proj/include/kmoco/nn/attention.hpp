#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "kmoco/nn/autograd.hpp"
#include "kmoco/nn/ops.hpp"

namespace kmoco::nn {

/// Scaled dot-product attention over one token set. `allowed(i, j)` masks
/// pairs out; masked rows always keep their diagonal. Returns O = P V and
/// writes the row-stochastic P (tokens x tokens).
template <class T, class Allowed>
MatR<T> attend(const MatR<T>& q, const MatR<T>& k, const MatR<T>& v, MatR<T>& probs, Allowed allowed) {
    const Eigen::Index n = q.rows();
    const T scale = T(1) / std::sqrt(T(q.cols()));
    probs.noalias() = (q * k.transpose()) * scale;
    for (Eigen::Index i = 0; i < n; ++i) {
        T mx = -std::numeric_limits<T>::infinity();
        for (Eigen::Index j = 0; j < n; ++j)
            if (allowed(i, j)) mx = std::max(mx, probs(i, j));
        T sum = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const T e = allowed(i, j) ? std::exp(probs(i, j) - mx) : T(0);
            probs(i, j) = e;
            sum += e;
        }
        probs.row(i) /= sum;
    }
    return probs * v;
}

template <class T>
MatR<T> attend(const MatR<T>& q, const MatR<T>& k, const MatR<T>& v, MatR<T>& probs) {
    return attend(q, k, v, probs, [](Eigen::Index, Eigen::Index) { return true; });
}

/// Collects the softmax matrices of a forward pass for inspection.
template <class T>
struct AttentionProbe {
    std::vector<MatR<T>> probabilities;
};

/// Multi-head self-attention inside non-overlapping ws x ws windows.
/// Input packs [Q | K | V] along channels: (N, 3C, H, W) -> (N, C, H, W).
/// With `shift`, windows are offset by ws/2 via a cyclic roll and tokens
/// that wrapped around only attend within their own region.
template <class T>
Var<T> window_attention(const Var<T>& qkv, int heads, int ws, bool shift, AttentionProbe<T>* probe = nullptr) {
    const Shape s = qkv->shape();
    require(s.c % 3 == 0, ErrorCategory::shape_mismatch, "window_attention: channels must pack Q, K and V");
    const int C = s.c / 3;
    require(heads >= 1 && C % heads == 0, ErrorCategory::shape_mismatch, "window_attention: channels not divisible by heads");
    require(ws >= 1 && s.h % ws == 0 && s.w % ws == 0, ErrorCategory::shape_mismatch,
            "window_attention: " + s.str() + " not divisible by window " + std::to_string(ws));
    const int d = C / heads;
    const int T_ = ws * ws;
    const int offset = shift ? ws / 2 : 0;
    const int wy_count = s.h / ws, wx_count = s.w / ws;
    const int H = s.h, W = s.w;

    // Token t of window (wy, wx) sits at shifted coords (Y, X); its pixel is
    // ((Y + offset) % H, (X + offset) % W).
    auto pixel = [=](int wy, int wx, int t) {
        const int Y = wy * ws + t / ws, X = wx * ws + t % ws;
        return static_cast<std::size_t>((Y + offset) % H) * W + static_cast<std::size_t>((X + offset) % W);
    };
    auto region = [=](int wy, int wx, int t) {
        if (offset == 0) return 0;
        const int Y = wy * ws + t / ws, X = wx * ws + t % ws;
        const int ry = Y < H - ws ? 0 : (Y < H - offset ? 1 : 2);
        const int rx = X < W - ws ? 0 : (X < W - offset ? 1 : 2);
        return ry * 3 + rx;
    };

    const std::size_t HW = s.plane();
    const std::size_t n_mats = static_cast<std::size_t>(s.n) * wy_count * wx_count * heads;
    auto saved = std::make_shared<std::vector<MatR<T>>>(n_mats);
    Tensor<T> out(Shape{s.n, C, H, W});
    MatR<T> q(T_, d), k(T_, d), v(T_, d);
    std::vector<int> reg(static_cast<std::size_t>(T_));
    std::vector<std::size_t> pix(static_cast<std::size_t>(T_));
    std::size_t m = 0;
    for (int n = 0; n < s.n; ++n) {
        const T* base = qkv->value.sample(n);
        T* obase = out.sample(n);
        for (int wy = 0; wy < wy_count; ++wy)
            for (int wx = 0; wx < wx_count; ++wx) {
                for (int t = 0; t < T_; ++t) {
                    pix[static_cast<std::size_t>(t)] = pixel(wy, wx, t);
                    reg[static_cast<std::size_t>(t)] = region(wy, wx, t);
                }
                auto allowed = [&](Eigen::Index i, Eigen::Index j) {
                    return reg[static_cast<std::size_t>(i)] == reg[static_cast<std::size_t>(j)];
                };
                for (int h = 0; h < heads; ++h, ++m) {
                    for (int t = 0; t < T_; ++t)
                        for (int j = 0; j < d; ++j) {
                            const std::size_t p = pix[static_cast<std::size_t>(t)];
                            const int ch = h * d + j;
                            q(t, j) = base[static_cast<std::size_t>(ch) * HW + p];
                            k(t, j) = base[static_cast<std::size_t>(C + ch) * HW + p];
                            v(t, j) = base[static_cast<std::size_t>(2 * C + ch) * HW + p];
                        }
                    MatR<T>& P = (*saved)[m];
                    P.resize(T_, T_);
                    const MatR<T> o = attend(q, k, v, P, allowed);
                    for (int t = 0; t < T_; ++t)
                        for (int j = 0; j < d; ++j)
                            obase[static_cast<std::size_t>(h * d + j) * HW + pix[static_cast<std::size_t>(t)]] = o(t, j);
                    if (probe) probe->probabilities.push_back(P);
                }
            }
    }

    return make_result<T>(std::move(out), {qkv}, [=](Node<T>& self) {
        auto& X = self.input(0);
        auto& g = X.grad_ref();
        const T scale = T(1) / std::sqrt(T(d));
        MatR<T> q(T_, d), k(T_, d), v(T_, d), dO(T_, d), dP(T_, T_), dS(T_, T_);
        std::vector<std::size_t> pix(static_cast<std::size_t>(T_));
        std::size_t m = 0;
        for (int n = 0; n < s.n; ++n) {
            const T* base = X.value.sample(n);
            const T* gout = self.grad.sample(n);
            T* gbase = g.sample(n);
            for (int wy = 0; wy < wy_count; ++wy)
                for (int wx = 0; wx < wx_count; ++wx) {
                    for (int t = 0; t < T_; ++t) pix[static_cast<std::size_t>(t)] = pixel(wy, wx, t);
                    for (int h = 0; h < heads; ++h, ++m) {
                        for (int t = 0; t < T_; ++t)
                            for (int j = 0; j < d; ++j) {
                                const std::size_t p = pix[static_cast<std::size_t>(t)];
                                const int ch = h * d + j;
                                q(t, j) = base[static_cast<std::size_t>(ch) * HW + p];
                                k(t, j) = base[static_cast<std::size_t>(C + ch) * HW + p];
                                v(t, j) = base[static_cast<std::size_t>(2 * C + ch) * HW + p];
                                dO(t, j) = gout[static_cast<std::size_t>(ch) * HW + p];
                            }
                        const MatR<T>& P = (*saved)[m];
                        const MatR<T> dV = P.transpose() * dO;
                        dP.noalias() = dO * v.transpose();
                        for (int i = 0; i < T_; ++i) {
                            const T rs = (dP.row(i).array() * P.row(i).array()).sum();
                            dS.row(i) = P.row(i).array() * (dP.row(i).array() - rs);
                        }
                        const MatR<T> dQ = (dS * k) * scale;
                        const MatR<T> dK = (dS.transpose() * q) * scale;
                        for (int t = 0; t < T_; ++t)
                            for (int j = 0; j < d; ++j) {
                                const std::size_t p = pix[static_cast<std::size_t>(t)];
                                const int ch = h * d + j;
                                gbase[static_cast<std::size_t>(ch) * HW + p] += dQ(t, j);
                                gbase[static_cast<std::size_t>(C + ch) * HW + p] += dK(t, j);
                                gbase[static_cast<std::size_t>(2 * C + ch) * HW + p] += dV(t, j);
                            }
                    }
                }
        }
    });
}

} // namespace kmoco::nn
