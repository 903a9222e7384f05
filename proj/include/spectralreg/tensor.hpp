#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "spectralreg/errors.hpp"

namespace spectralreg {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << " x ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major array of doubles. Rank-2 tensors are the common case:
/// rows index the batch, columns index features.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_size(shape_)) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
    static Tensor ones(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}, 1.0); }
    static Tensor full(std::size_t rows, std::size_t cols, double v) { return Tensor({rows, cols}, v); }
    static Tensor scalar(double v) { return Tensor({1, 1}, v); }

    static Tensor eye(std::size_t n) {
        Tensor t = zeros(n, n);
        for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.begin()->size() : 0;
        Tensor t = zeros(r, c);
        std::size_t i = 0;
        for (const auto& row : rows) {
            if (row.size() != c) throw DimensionError("ragged rows in Tensor::from_rows");
            std::copy(row.begin(), row.end(), t.row(i++).begin());
        }
        return t;
    }

    static Tensor row_vector(std::vector<double> values) {
        const std::size_t n = values.size();
        return Tensor({1, n}, std::move(values));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::size_t rows() const {
        require_rank2();
        return shape_[0];
    }
    std::size_t cols() const {
        require_rank2();
        return shape_[1];
    }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

    double squared_norm() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return s;
    }
    double norm() const { return std::sqrt(squared_norm()); }

    Tensor& operator+=(const Tensor& o) {
        require_same(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        require_same(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(Tensor a, double s) { return a *= s; }
    friend Tensor operator*(double s, Tensor a) { return a *= s; }
    friend Tensor operator-(Tensor a) { return a *= -1.0; }

    bool operator==(const Tensor& o) const = default;

    void require_same(const Tensor& o, const char* what) const {
        if (shape_ != o.shape_) {
            throw DimensionError(std::string("shape mismatch in ") + what + ": " + shape_str(shape_) +
                                 " vs " + shape_str(o.shape_));
        }
    }

private:
    void require_rank2() const {
        if (shape_.size() != 2) throw DimensionError("expected rank-2 tensor, got " + shape_str(shape_));
    }

    Shape shape_;
    std::vector<double> data_;
};

namespace tensor_ops {

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline RowMajorMap view(const Tensor& t) {
    return RowMajorMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                       static_cast<Eigen::Index>(t.cols()));
}

/// op(a) * op(b) where op transposes when the matching flag is set.
inline Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false, bool transpose_b = false) {
    const std::size_t m = transpose_a ? a.cols() : a.rows();
    const std::size_t ka = transpose_a ? a.rows() : a.cols();
    const std::size_t kb = transpose_b ? b.cols() : b.rows();
    const std::size_t n = transpose_b ? b.rows() : b.cols();
    if (ka != kb) {
        throw DimensionError("matmul inner dimensions differ: " + shape_str(a.shape()) +
                             (transpose_a ? "^T" : "") + " * " + shape_str(b.shape()) + (transpose_b ? "^T" : ""));
    }
    Tensor out = Tensor::zeros(m, n);
    if (m == 0 || n == 0 || ka == 0) return out;
    RowMajorMutMap c(out.values().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    const auto av = view(a);
    const auto bv = view(b);
    if (!transpose_a && !transpose_b) c.noalias() = av * bv;
    else if (!transpose_a && transpose_b) c.noalias() = av * bv.transpose();
    else if (transpose_a && !transpose_b) c.noalias() = av.transpose() * bv;
    else c.noalias() = av.transpose() * bv.transpose();
    return out;
}

inline Tensor transpose(const Tensor& a) {
    Tensor out = Tensor::zeros(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
    a.require_same(b, "hadamard");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

/// Per-row dot product of two [b x d] tensors.
inline std::vector<double> row_dots(const Tensor& a, const Tensor& b) {
    a.require_same(b, "row_dots");
    std::vector<double> out(a.rows(), 0.0);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const auto x = a.row(r);
        const auto y = b.row(r);
        out[r] = std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
    }
    return out;
}

inline std::vector<double> row_norms(const Tensor& a) {
    auto sq = row_dots(a, a);
    for (double& v : sq) v = std::sqrt(v);
    return sq;
}

inline double dot(const Tensor& a, const Tensor& b) {
    a.require_same(b, "dot");
    return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

/// Scales row r of a by s[r].
inline Tensor scale_rows(Tensor a, std::span<const double> s) {
    if (s.size() != a.rows()) throw DimensionError("scale_rows: factor count does not match rows");
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (double& v : a.row(r)) v *= s[r];
    return a;
}

inline Tensor map(Tensor a, const std::function<double(double)>& fn) {
    for (double& v : a.values()) v = fn(v);
    return a;
}

}  // namespace tensor_ops
}  // namespace spectralreg
