#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "kmoco/error.hpp"

namespace kmoco::nn {

/// NCHW extents.
struct Shape {
    int n = 1;
    int c = 1;
    int h = 1;
    int w = 1;

    std::size_t numel() const noexcept {
        return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
               static_cast<std::size_t>(w);
    }
    std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
    }

    friend bool operator==(const Shape&, const Shape&) = default;
};

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense NCHW buffer. Storage is aligned so Eigen kernels take the same
/// code path on every call.
template <class T>
class Tensor {
public:
    using Storage = std::vector<T, Eigen::aligned_allocator<T>>;

    Tensor() = default;
    explicit Tensor(const Shape& s, T fill = T(0)) : shape_(s), data_(s.numel(), fill) {}

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T* plane(int n, int c) { return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane(); }
    const T* plane(int n, int c) const {
        return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane();
    }
    T* sample(int n) { return plane(n, 0); }
    const T* sample(int n) const { return plane(n, 0); }

    T& at(int n, int c, int y, int x) { return plane(n, c)[static_cast<std::size_t>(y) * shape_.w + x]; }
    const T& at(int n, int c, int y, int x) const { return plane(n, c)[static_cast<std::size_t>(y) * shape_.w + x]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    Storage& storage() noexcept { return data_; }
    const Storage& storage() const noexcept { return data_; }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

private:
    Shape shape_;
    Storage data_;
};

template <class T>
void require_shape(const Tensor<T>& t, const Shape& s, const char* what) {
    require(t.shape() == s, ErrorCategory::shape_mismatch,
            std::string(what) + ": expected shape " + s.str() + ", got " + t.shape().str());
}

} // namespace kmoco::nn
