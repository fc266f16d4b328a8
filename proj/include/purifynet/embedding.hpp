// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "purifynet/errors.hpp"
#include "purifynet/tensor.hpp"

namespace purifynet {

/// Sinusoidal timestep embedding.
///
/// Element 2i is sin(t / 10000^(2i/dim)) and element 2i+1 is the matching
/// cosine, so t = 0 yields 0, 1, 0, 1, ...
inline std::vector<double> sinusoidal_embedding(double t, std::size_t dim) {
    if (dim == 0 || dim % 2 != 0) {
        throw RangeError(detail::concat("sinusoidal_embedding: dim must be even and positive, got ", dim));
    }
    if (t < 0.0) {
        throw RangeError(detail::concat("sinusoidal_embedding: t must be >= 0, got ", t));
    }
    std::vector<double> out(dim);
    for (std::size_t i = 0; i < dim / 2; ++i) {
        const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
        out[2 * i] = std::sin(t / freq);
        out[2 * i + 1] = std::cos(t / freq);
    }
    return out;
}

/// Embeddings for steps 0..max_step stacked as rows; row k is the embedding of step k.
inline Matrix embedding_table(std::size_t max_step, std::size_t dim) {
    Matrix table(static_cast<Eigen::Index>(max_step + 1), static_cast<Eigen::Index>(dim));
    for (std::size_t k = 0; k <= max_step; ++k) {
        const auto e = sinusoidal_embedding(static_cast<double>(k), dim);
        for (std::size_t j = 0; j < dim; ++j) table(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = e[j];
    }
    return table;
}

}  // namespace purifynet
