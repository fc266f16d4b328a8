// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "purifynet/errors.hpp"

namespace purifynet {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

inline std::string shape_of(const Matrix& m) {
    return detail::concat("(", m.rows(), "x", m.cols(), ")");
}

/// Row-major float64 matrix: rows are instances, columns are features.
///
/// A tensor with zero rows is allowed so that empty data splits can be
/// represented; every other operation expects at least one row.
class DenseTensor {
public:
    DenseTensor() = default;
    DenseTensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : data_(Matrix::Constant(static_cast<Eigen::Index>(rows),
                                 static_cast<Eigen::Index>(cols), fill)) {}
    explicit DenseTensor(Matrix m) : data_(std::move(m)) {}

    static DenseTensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r == 0 ? 0 : rows.begin()->size();
        DenseTensor out(r, c);
        std::size_t i = 0;
        for (const auto& row : rows) {
            if (row.size() != c) {
                throw ShapeError(detail::concat("ragged row ", i, ": expected ", c,
                                                " columns, got ", row.size()));
            }
            std::size_t j = 0;
            for (double v : row) out(i, j++) = v;
            ++i;
        }
        return out;
    }

    static DenseTensor from_vector(std::size_t rows, std::size_t cols, std::span<const double> values) {
        if (values.size() != rows * cols) {
            throw ShapeError(detail::concat("cannot view ", values.size(), " values as (", rows,
                                            "x", cols, ")"));
        }
        DenseTensor out(rows, cols);
        std::copy(values.begin(), values.end(), out.data_.data());
        return out;
    }

    std::size_t rows() const noexcept { return static_cast<std::size_t>(data_.rows()); }
    std::size_t cols() const noexcept { return static_cast<std::size_t>(data_.cols()); }
    std::size_t size() const noexcept { return static_cast<std::size_t>(data_.size()); }
    bool empty() const noexcept { return data_.rows() == 0; }

    double& operator()(std::size_t r, std::size_t c) {
        return data_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
    double operator()(std::size_t r, std::size_t c) const {
        return data_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }
    std::span<const double> values() const { return {data_.data(), size()}; }
    std::span<double> values() { return {data_.data(), size()}; }

    const Matrix& matrix() const noexcept { return data_; }
    Matrix& matrix() noexcept { return data_; }

    std::string shape() const { return shape_of(data_); }

    bool all_finite() const { return data_.allFinite(); }

    DenseTensor select_rows(std::span<const std::size_t> idx) const {
        DenseTensor out(idx.size(), cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] >= rows()) {
                throw RangeError(detail::concat("row index ", idx[i], " out of range for ", shape()));
            }
            out.data_.row(static_cast<Eigen::Index>(i)) = data_.row(static_cast<Eigen::Index>(idx[i]));
        }
        return out;
    }

    void clamp(double lo, double hi) { data_ = data_.cwiseMax(lo).cwiseMin(hi); }

    friend bool operator==(const DenseTensor& a, const DenseTensor& b) {
        return a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() &&
               std::equal(a.data_.data(), a.data_.data() + a.data_.size(), b.data_.data());
    }

private:
    Matrix data_;
};

inline void require_same_shape(const DenseTensor& a, const DenseTensor& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(detail::concat(what, ": shape mismatch ", a.shape(), " vs ", b.shape()));
    }
}

/// Mean of squared differences over every element.
inline double mean_squared_difference(const DenseTensor& a, const DenseTensor& b) {
    require_same_shape(a, b, "mean_squared_difference");
    if (a.size() == 0) return 0.0;
    return (a.matrix() - b.matrix()).squaredNorm() / static_cast<double>(a.size());
}

inline DenseTensor vstack(const DenseTensor& a, const DenseTensor& b) {
    if (a.rows() == 0) return b;
    if (b.rows() == 0) return a;
    if (a.cols() != b.cols()) {
        throw ShapeError(detail::concat("vstack: ", a.shape(), " vs ", b.shape()));
    }
    Matrix m(a.matrix().rows() + b.matrix().rows(), a.matrix().cols());
    m << a.matrix(), b.matrix();
    return DenseTensor(std::move(m));
}

}  // namespace purifynet
