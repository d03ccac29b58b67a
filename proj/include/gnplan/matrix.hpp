#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gnplan/errors.hpp"

namespace gnplan {

/// Dense row-major matrix of 64-bit floats. The one value carrier of the
/// library: features, weights and gradients are all Matrix instances.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
        if (rows == 0 || cols == 0) {
            throw DomainError("Matrix: dimensions must be positive, got " + shape_string(rows, cols));
        }
    }

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (rows == 0 || cols == 0) {
            throw DomainError("Matrix: dimensions must be positive, got " + shape_string(rows, cols));
        }
        if (data_.size() != rows * cols) {
            throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(rows, cols));
        }
    }

    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        if (rows_ == 0 || cols_ == 0) {
            throw DomainError("Matrix: empty initializer");
        }
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) {
                throw ShapeError("Matrix: ragged initializer rows");
            }
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<const double> values() const { return {data_.data(), data_.size()}; }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    std::string shape_string() const { return shape_string(rows_, cols_); }

    static std::string shape_string(std::size_t r, std::size_t c) {
        return std::to_string(r) + "x" + std::to_string(c);
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Matrix product with a fixed left-to-right summation order over the inner
/// dimension, so results are bit-identical across runs and thread counts.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ, lhs " + a.shape_string() +
                         " vs rhs " + b.shape_string());
    }
    Matrix out(a.rows(), b.cols());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    // i-k-j order: each out(i,j) accumulates in ascending k, contiguous in j.
#pragma omp parallel for schedule(static) if (m * k * n > (1u << 16))
    for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* out_row = out.data() + i * n;
        const double* a_row = a.data() + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = a_row[kk];
            const double* b_row = b.data() + kk * n;
            for (std::size_t j = 0; j < n; ++j) {
                out_row[j] += aik * b_row[j];
            }
        }
    }
    return out;
}

inline Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            out(c, r) = m(r, c);
        }
    }
    return out;
}

/// out = d_y * W^T without materializing the transpose.
inline Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_transposed: column counts differ, lhs " + a.shape_string() +
                         " vs rhs " + b.shape_string());
    }
    Matrix out(a.rows(), b.rows());
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
#pragma omp parallel for schedule(static) if (m * k * n > (1u << 16))
    for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const double* a_row = a.data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* b_row = b.data() + j * k;
            double acc = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) {
                acc += a_row[kk] * b_row[kk];
            }
            out(i, j) = acc;
        }
    }
    return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("hadamard: shapes differ, " + a.shape_string() + " vs " + b.shape_string());
    }
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.data()[i] = a.data()[i] * b.data()[i];
    }
    return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("max_abs_diff: shapes differ, " + a.shape_string() + " vs " + b.shape_string());
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    }
    return m;
}

} // namespace gnplan
