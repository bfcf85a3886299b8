#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "motra/common.hpp"

namespace motra {

// Dense row-major tensor over float (training) or double (gradient checks).
// Shapes are small vectors; the library uses (C,H,W) for feature maps, (N)
// for latent vectors and (O,I,Kh,Kw) for conv weights.
template <typename T>
class TensorT {
  public:
    TensorT() = default;
    explicit TensorT(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(count(shape_), T(0));
    }
    TensorT(std::vector<int> shape, T fill) : shape_(std::move(shape)) {
        data_.assign(count(shape_), fill);
    }
    TensorT(std::vector<int> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<std::size_t>(count(shape_)) != data_.size())
            throw ShapeError("tensor data size does not match shape");
    }

    static TensorT zeros(std::vector<int> shape) { return TensorT(std::move(shape)); }
    static TensorT full(std::vector<int> shape, T v) { return TensorT(std::move(shape), v); }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int size() const { return static_cast<int>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T& operator[](int i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](int i) const { return data_[static_cast<std::size_t>(i)]; }

    // (C,H,W) accessor.
    T& at(int c, int y, int x) {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    const T& at(int c, int y, int x) const {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(T(0)); }

    TensorT reshaped(std::vector<int> shape) const {
        if (count(shape) != size()) throw ShapeError("reshape element count mismatch");
        TensorT out;
        out.shape_ = std::move(shape);
        out.data_ = data_;
        return out;
    }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    T min() const { return *std::min_element(data_.begin(), data_.end()); }
    T max() const { return *std::max_element(data_.begin(), data_.end()); }

    template <typename U>
    TensorT<U> cast() const {
        std::vector<U> d(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<U>(data_[i]);
        return TensorT<U>(shape_, std::move(d));
    }

    static int count(const std::vector<int>& shape) {
        int n = 1;
        for (int d : shape) {
            if (d < 0) throw ShapeError("negative tensor dimension");
            n *= d;
        }
        return n;
    }

    static std::string shape_str(const std::vector<int>& shape) {
        std::ostringstream os;
        os << "(";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) os << ",";
            os << shape[i];
        }
        os << ")";
        return os.str();
    }

  private:
    std::vector<int> shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <typename T>
TensorT<T> random_uniform(Rng& rng, std::vector<int> shape, T lo, T hi) {
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    TensorT<T> out(std::move(shape));
    for (int i = 0; i < out.size(); ++i) out[i] = static_cast<T>(dist(rng));
    return out;
}

template <typename T>
TensorT<T> random_normal(Rng& rng, std::vector<int> shape, T mean, T stddev) {
    std::normal_distribution<double> dist(static_cast<double>(mean), static_cast<double>(stddev));
    TensorT<T> out(std::move(shape));
    for (int i = 0; i < out.size(); ++i) out[i] = static_cast<T>(dist(rng));
    return out;
}

}  // namespace motra
