// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "purifynet/errors.hpp"
#include "purifynet/tensor.hpp"

namespace purifynet {

/// One row of a training loss curve.
struct LossLogEntry {
    std::size_t epoch;
    double loss;
};

struct LossResult {
    double value = 0.0;
    DenseTensor grad;  // dLoss/dPrediction
};

/// Mean over all elements of (pred - target)^2.
inline LossResult mse_loss(const DenseTensor& pred, const DenseTensor& target) {
    require_same_shape(pred, target, "mse_loss");
    if (pred.size() == 0) throw ShapeError("mse_loss: empty input");
    const double n = static_cast<double>(pred.size());
    Matrix diff = pred.matrix() - target.matrix();
    LossResult out;
    out.value = diff.squaredNorm() / n;
    out.grad = DenseTensor(Matrix(diff * (2.0 / n)));
    return out;
}

/// Row-wise softmax with max subtraction.
inline DenseTensor softmax(const DenseTensor& logits) {
    Matrix p = logits.matrix();
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const double m = p.row(r).maxCoeff();
        p.row(r) = (p.row(r).array() - m).exp().matrix();
        p.row(r) /= p.row(r).sum();
    }
    return DenseTensor(std::move(p));
}

/// Softmax cross-entropy, averaged over rows.
inline LossResult cross_entropy_loss(const DenseTensor& logits, std::span<const int> labels) {
    if (labels.size() != logits.rows()) {
        throw ShapeError(detail::concat("cross_entropy_loss: ", labels.size(), " labels for logits ",
                                        logits.shape()));
    }
    if (logits.rows() == 0) throw ShapeError("cross_entropy_loss: empty input");
    const auto classes = static_cast<int>(logits.cols());
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] < 0 || labels[r] >= classes) {
            throw RangeError(detail::concat("cross_entropy_loss: label ", labels[r], " at row ", r,
                                            " outside [0, ", classes, ")"));
        }
    }
    const double n = static_cast<double>(logits.rows());
    LossResult out;
    out.grad = softmax(logits);
    double total = 0.0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        const auto row = logits.row(r);
        double m = row[0];
        for (double v : row) m = std::max(m, v);
        double s = 0.0;
        for (double v : row) s += std::exp(v - m);
        total += (m + std::log(s)) - row[static_cast<std::size_t>(labels[r])];
        out.grad(r, static_cast<std::size_t>(labels[r])) -= 1.0;
    }
    out.value = total / n;
    out.grad.matrix() /= n;
    return out;
}

}  // namespace purifynet
