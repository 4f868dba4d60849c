#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "kmoco/nn/autograd.hpp"

namespace kmoco::nn {

namespace detail {

template <class T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, T* col) {
    const std::size_t P = static_cast<std::size_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        const T* xp = x + static_cast<std::size_t>(c) * H * W;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                T* row = col + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * P;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    T* dst = row + static_cast<std::size_t>(oy) * Wo;
                    if (iy < 0 || iy >= H) {
                        std::fill_n(dst, Wo, T(0));
                        continue;
                    }
                    const T* src = xp + static_cast<std::size_t>(iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <class T>
void col2im_add(const T* col, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, T* dx) {
    const std::size_t P = static_cast<std::size_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        T* xp = dx + static_cast<std::size_t>(c) * H * W;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const T* row = col + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * P;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= H) continue;
                    const T* src = row + static_cast<std::size_t>(oy) * Wo;
                    T* dst = xp + static_cast<std::size_t>(iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        if (ix >= 0 && ix < W) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

template <class T>
T sigmoid(T x) {
    return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

template <class T>
Tensor<T> scalar_tensor(T v) {
    Tensor<T> t(Shape{1, 1, 1, 1});
    t[0] = v;
    return t;
}

} // namespace detail

/// 2D cross-correlation. `w` is (Cout, Cin, k, k); `b` is (1, Cout, 1, 1) or null.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
    const Shape xs = x->shape(), ws = w->shape();
    require(ws.c == xs.c && ws.h == ws.w, ErrorCategory::shape_mismatch,
            "conv2d: weight " + ws.str() + " incompatible with input " + xs.str());
    const int k = ws.h, Cout = ws.n, Cin = xs.c;
    const int Ho = (xs.h + 2 * pad - k) / stride + 1;
    const int Wo = (xs.w + 2 * pad - k) / stride + 1;
    require(Ho > 0 && Wo > 0, ErrorCategory::shape_mismatch, "conv2d: input " + xs.str() + " too small for kernel");
    const int K = Cin * k * k;
    const int P = Ho * Wo;
    const bool pointwise = (k == 1 && stride == 1 && pad == 0);

    Tensor<T> out(Shape{xs.n, Cout, Ho, Wo});
    Eigen::Map<const MatR<T>> Wm(w->value.data(), Cout, K);
    MatR<T> col(pointwise ? 0 : K, pointwise ? 0 : P);
    for (int n = 0; n < xs.n; ++n) {
        Eigen::Map<MatR<T>> Y(out.sample(n), Cout, P);
        if (pointwise) {
            Y.noalias() = Wm * Eigen::Map<const MatR<T>>(x->value.sample(n), K, P);
        } else {
            detail::im2col(x->value.sample(n), Cin, xs.h, xs.w, k, stride, pad, Ho, Wo, col.data());
            Y.noalias() = Wm * col;
        }
        if (b)
            for (int o = 0; o < Cout; ++o) Y.row(o).array() += b->value[static_cast<std::size_t>(o)];
    }

    return make_result<T>(std::move(out), {x, w, b}, [=](Node<T>& self) {
        auto& X = self.input(0);
        auto& Wn = self.input(1);
        Node<T>* B = self.inputs[2] ? self.inputs[2].get() : nullptr;
        Eigen::Map<const MatR<T>> Wv(Wn.value.data(), Cout, K);
        MatR<T> c(pointwise ? 0 : K, pointwise ? 0 : P), dcol(K, P);
        for (int n = 0; n < xs.n; ++n) {
            Eigen::Map<const MatR<T>> dY(self.grad.sample(n), Cout, P);
            const T* colp = nullptr;
            if (pointwise) {
                colp = X.value.sample(n);
            } else if (Wn.requires_grad) {
                detail::im2col(X.value.sample(n), Cin, xs.h, xs.w, k, stride, pad, Ho, Wo, c.data());
                colp = c.data();
            }
            if (Wn.requires_grad) {
                Eigen::Map<MatR<T>> dW(Wn.grad_ref().data(), Cout, K);
                dW.noalias() += dY * Eigen::Map<const MatR<T>>(colp, K, P).transpose();
            }
            if (B && B->requires_grad) {
                auto& db = B->grad_ref();
                for (int o = 0; o < Cout; ++o) db[static_cast<std::size_t>(o)] += dY.row(o).sum();
            }
            if (X.requires_grad) {
                if (pointwise) {
                    Eigen::Map<MatR<T>> dX(X.grad_ref().sample(n), K, P);
                    dX.noalias() += Wv.transpose() * dY;
                } else {
                    dcol.noalias() = Wv.transpose() * dY;
                    detail::col2im_add(dcol.data(), Cin, xs.h, xs.w, k, stride, pad, Ho, Wo, X.grad_ref().sample(n));
                }
            }
        }
    });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require(a->shape() == b->shape(), ErrorCategory::shape_mismatch,
            "add: " + a->shape().str() + " vs " + b->shape().str());
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
    return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
        for (int k = 0; k < 2; ++k) {
            auto& in = self.input(static_cast<std::size_t>(k));
            if (!in.requires_grad) continue;
            auto& g = in.grad_ref();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return make_result<T>(std::move(out), {a}, [s](Node<T>& self) {
        auto& g = self.input(0).grad_ref();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
    });
}

/// Concatenate along channels.
template <class T>
Var<T> concat(const Var<T>& a, const Var<T>& b) {
    const Shape sa = a->shape(), sb = b->shape();
    require(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w, ErrorCategory::shape_mismatch,
            "concat: " + sa.str() + " vs " + sb.str());
    Tensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
    const std::size_t la = static_cast<std::size_t>(sa.c) * sa.plane(), lb = static_cast<std::size_t>(sb.c) * sb.plane();
    for (int n = 0; n < sa.n; ++n) {
        std::copy_n(a->value.sample(n), la, out.sample(n));
        std::copy_n(b->value.sample(n), lb, out.sample(n) + la);
    }
    return make_result<T>(std::move(out), {a, b}, [=](Node<T>& self) {
        auto& A = self.input(0);
        auto& Bn = self.input(1);
        for (int n = 0; n < sa.n; ++n) {
            const T* g = self.grad.sample(n);
            if (A.requires_grad) {
                T* d = A.grad_ref().sample(n);
                for (std::size_t i = 0; i < la; ++i) d[i] += g[i];
            }
            if (Bn.requires_grad) {
                T* d = Bn.grad_ref().sample(n);
                for (std::size_t i = 0; i < lb; ++i) d[i] += g[la + i];
            }
        }
    });
}

template <class T>
Var<T> upsample2x(const Var<T>& x) {
    const Shape s = x->shape();
    Tensor<T> out(Shape{s.n, s.c, 2 * s.h, 2 * s.w});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const T* src = x->value.plane(n, c);
            T* dst = out.plane(n, c);
            for (int y = 0; y < 2 * s.h; ++y)
                for (int xx = 0; xx < 2 * s.w; ++xx)
                    dst[static_cast<std::size_t>(y) * 2 * s.w + xx] = src[static_cast<std::size_t>(y / 2) * s.w + xx / 2];
        }
    return make_result<T>(std::move(out), {x}, [s](Node<T>& self) {
        auto& g = self.input(0).grad_ref();
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) {
                const T* src = self.grad.plane(n, c);
                T* dst = g.plane(n, c);
                for (int y = 0; y < 2 * s.h; ++y)
                    for (int xx = 0; xx < 2 * s.w; ++xx)
                        dst[static_cast<std::size_t>(y / 2) * s.w + xx / 2] += src[static_cast<std::size_t>(y) * 2 * s.w + xx];
            }
    });
}

/// x * sigmoid(x)
template <class T>
Var<T> silu(const Var<T>& x) {
    Tensor<T> out(x->shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] * detail::sigmoid(x->value[i]);
    return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
        auto& X = self.input(0);
        auto& g = X.grad_ref();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T v = X.value[i];
            const T s = detail::sigmoid(v);
            g[i] += self.grad[i] * s * (T(1) + v * (T(1) - s));
        }
    });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
    Tensor<T> out(x->shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::sigmoid(x->value[i]);
    return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
        auto& g = self.input(0).grad_ref();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T s = self.value[i];
            g[i] += self.grad[i] * s * (T(1) - s);
        }
    });
}

/// Per-pixel normalisation across channels with learned per-channel affine
/// (layer norm in the channel dimension).
template <class T>
Var<T> channel_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
    const Shape s = x->shape();
    require(gamma->value.size() == static_cast<std::size_t>(s.c) && beta->value.size() == static_cast<std::size_t>(s.c),
            ErrorCategory::shape_mismatch, "channel_norm: affine size mismatch for input " + s.str());
    const std::size_t HW = s.plane();
    auto xhat = std::make_shared<Tensor<T>>(s);
    auto inv = std::make_shared<Tensor<T>>(Shape{s.n, 1, s.h, s.w});
    Tensor<T> out(s);
    std::vector<T> mean(HW), var(HW);
    for (int n = 0; n < s.n; ++n) {
        std::fill(mean.begin(), mean.end(), T(0));
        std::fill(var.begin(), var.end(), T(0));
        for (int c = 0; c < s.c; ++c) {
            const T* p = x->value.plane(n, c);
            for (std::size_t i = 0; i < HW; ++i) mean[i] += p[i];
        }
        for (auto& m : mean) m /= T(s.c);
        for (int c = 0; c < s.c; ++c) {
            const T* p = x->value.plane(n, c);
            for (std::size_t i = 0; i < HW; ++i) {
                const T d = p[i] - mean[i];
                var[i] += d * d;
            }
        }
        T* iv = inv->plane(n, 0);
        for (std::size_t i = 0; i < HW; ++i) iv[i] = T(1) / std::sqrt(var[i] / T(s.c) + eps);
        for (int c = 0; c < s.c; ++c) {
            const T* p = x->value.plane(n, c);
            T* xh = xhat->plane(n, c);
            T* o = out.plane(n, c);
            const T g = gamma->value[static_cast<std::size_t>(c)], bb = beta->value[static_cast<std::size_t>(c)];
            for (std::size_t i = 0; i < HW; ++i) {
                xh[i] = (p[i] - mean[i]) * iv[i];
                o[i] = g * xh[i] + bb;
            }
        }
    }
    return make_result<T>(std::move(out), {x, gamma, beta}, [=](Node<T>& self) {
        auto& X = self.input(0);
        auto& G = self.input(1);
        auto& Bt = self.input(2);
        std::vector<T> mg(HW), mgx(HW);
        for (int n = 0; n < s.n; ++n) {
            std::fill(mg.begin(), mg.end(), T(0));
            std::fill(mgx.begin(), mgx.end(), T(0));
            for (int c = 0; c < s.c; ++c) {
                const T* dy = self.grad.plane(n, c);
                const T* xh = xhat->plane(n, c);
                const T g = G.value[static_cast<std::size_t>(c)];
                T dg = 0, db = 0;
                for (std::size_t i = 0; i < HW; ++i) {
                    mg[i] += dy[i] * g;
                    mgx[i] += dy[i] * g * xh[i];
                    dg += dy[i] * xh[i];
                    db += dy[i];
                }
                if (G.requires_grad) G.grad_ref()[static_cast<std::size_t>(c)] += dg;
                if (Bt.requires_grad) Bt.grad_ref()[static_cast<std::size_t>(c)] += db;
            }
            if (!X.requires_grad) continue;
            const T* iv = inv->plane(n, 0);
            for (int c = 0; c < s.c; ++c) {
                const T* dy = self.grad.plane(n, c);
                const T* xh = xhat->plane(n, c);
                T* dx = X.grad_ref().plane(n, c);
                const T g = G.value[static_cast<std::size_t>(c)];
                for (std::size_t i = 0; i < HW; ++i)
                    dx[i] += iv[i] * (dy[i] * g - mg[i] / T(s.c) - xh[i] * mgx[i] / T(s.c));
            }
        }
    });
}

/// Mean over the last (readout) axis: (N, C, H, W) -> (N, C, H, 1).
template <class T>
Var<T> row_mean(const Var<T>& x) {
    const Shape s = x->shape();
    Tensor<T> out(Shape{s.n, s.c, s.h, 1});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y) {
                T acc = 0;
                const T* row = x->value.plane(n, c) + static_cast<std::size_t>(y) * s.w;
                for (int i = 0; i < s.w; ++i) acc += row[i];
                out.at(n, c, y, 0) = acc / T(s.w);
            }
    return make_result<T>(std::move(out), {x}, [s](Node<T>& self) {
        auto& g = self.input(0).grad_ref();
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c)
                for (int y = 0; y < s.h; ++y) {
                    const T d = self.grad.at(n, c, y, 0) / T(s.w);
                    T* row = g.plane(n, c) + static_cast<std::size_t>(y) * s.w;
                    for (int i = 0; i < s.w; ++i) row[i] += d;
                }
    });
}

/// Weighted sum of scalar nodes.
template <class T>
Var<T> weighted_sum(const std::vector<std::pair<Var<T>, T>>& terms) {
    T total = 0;
    std::vector<Var<T>> inputs;
    std::vector<T> weights;
    for (const auto& [v, w] : terms) {
        require(v->value.size() == 1, ErrorCategory::shape_mismatch, "weighted_sum: terms must be scalars");
        total += w * v->value[0];
        inputs.push_back(v);
        weights.push_back(w);
    }
    return make_result<T>(detail::scalar_tensor(total), inputs, [weights](Node<T>& self) {
        for (std::size_t k = 0; k < weights.size(); ++k) {
            auto& in = self.input(k);
            if (in.requires_grad) in.grad_ref()[0] += weights[k] * self.grad[0];
        }
    });
}

/// mean |x - target|
template <class T>
Var<T> l1_loss(const Var<T>& x, const Tensor<T>& target) {
    require_shape(target, x->shape(), "l1_loss target");
    T acc = 0;
    for (std::size_t i = 0; i < target.size(); ++i) acc += std::abs(x->value[i] - target[i]);
    const T inv = T(1) / T(target.size());
    return make_result<T>(detail::scalar_tensor(acc * inv), {x}, [target, inv](Node<T>& self) {
        auto& X = self.input(0);
        auto& g = X.grad_ref();
        const T up = self.grad[0] * inv;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T d = X.value[i] - target[i];
            g[i] += d > 0 ? up : (d < 0 ? -up : T(0));
        }
    });
}

/// mean (a - b)^2; gradients flow to both sides.
template <class T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
    require(a->shape() == b->shape(), ErrorCategory::shape_mismatch, "mse: " + a->shape().str() + " vs " + b->shape().str());
    T acc = 0;
    for (std::size_t i = 0; i < a->value.size(); ++i) {
        const T d = a->value[i] - b->value[i];
        acc += d * d;
    }
    const T inv = T(1) / T(a->value.size());
    return make_result<T>(detail::scalar_tensor(acc * inv), {a, b}, [inv](Node<T>& self) {
        auto& A = self.input(0);
        auto& B = self.input(1);
        const T up = T(2) * inv * self.grad[0];
        for (std::size_t i = 0; i < A.value.size(); ++i) {
            const T d = up * (A.value[i] - B.value[i]);
            if (A.requires_grad) A.grad_ref()[i] += d;
            if (B.requires_grad) B.grad_ref()[i] -= d;
        }
    });
}

inline constexpr double probability_clamp = 1e-7;

/// Binary cross-entropy averaged over elements. Probabilities are clamped
/// to [1e-7, 1 - 1e-7]; the clamp has zero gradient outside that range.
template <class T>
Var<T> bce_loss(const Var<T>& p, const Tensor<T>& target) {
    require_shape(target, p->shape(), "bce_loss target");
    const T lo = T(probability_clamp), hi = T(1) - T(probability_clamp);
    T acc = 0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const T q = std::clamp(p->value[i], lo, hi);
        acc -= target[i] * std::log(q) + (T(1) - target[i]) * std::log(T(1) - q);
    }
    const T inv = T(1) / T(target.size());
    return make_result<T>(detail::scalar_tensor(acc * inv), {p}, [target, inv, lo, hi](Node<T>& self) {
        auto& P = self.input(0);
        auto& g = P.grad_ref();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T v = P.value[i];
            if (v < lo || v > hi) continue;
            g[i] += self.grad[0] * inv * (-target[i] / v + (T(1) - target[i]) / (T(1) - v));
        }
    });
}

inline constexpr double dice_epsilon = 1e-6;

/// Soft Dice loss computed per sample and averaged over the batch.
template <class T>
Var<T> dice_loss(const Var<T>& p, const Tensor<T>& target) {
    require_shape(target, p->shape(), "dice_loss target");
    const Shape s = p->shape();
    const std::size_t per = s.numel() / static_cast<std::size_t>(s.n);
    const T eps = T(dice_epsilon);
    std::vector<T> inter(static_cast<std::size_t>(s.n)), denom(static_cast<std::size_t>(s.n));
    T total = 0;
    for (int n = 0; n < s.n; ++n) {
        T ip = 0, sp = 0, sg = 0;
        for (std::size_t i = 0; i < per; ++i) {
            const std::size_t j = static_cast<std::size_t>(n) * per + i;
            ip += p->value[j] * target[j];
            sp += p->value[j];
            sg += target[j];
        }
        inter[static_cast<std::size_t>(n)] = T(2) * ip + eps;
        denom[static_cast<std::size_t>(n)] = sp + sg + eps;
        total += T(1) - inter[static_cast<std::size_t>(n)] / denom[static_cast<std::size_t>(n)];
    }
    const T invn = T(1) / T(s.n);
    return make_result<T>(detail::scalar_tensor(total * invn), {p}, [=](Node<T>& self) {
        auto& g = self.input(0).grad_ref();
        for (int n = 0; n < s.n; ++n) {
            const T a = inter[static_cast<std::size_t>(n)], d = denom[static_cast<std::size_t>(n)];
            for (std::size_t i = 0; i < per; ++i) {
                const std::size_t j = static_cast<std::size_t>(n) * per + i;
                // d/dp [1 - a/d] = -(2 g d - a) / d^2
                g[j] += self.grad[0] * invn * (-(T(2) * target[j] * d - a) / (d * d));
            }
        }
    });
}

} // namespace kmoco::nn
