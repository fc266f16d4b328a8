// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "purifynet/errors.hpp"
#include "purifynet/mlp.hpp"

namespace purifynet {

enum class OptimizerKind { adam, adamw };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "adamw"; }

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // AdamW only
};

/// Adam / AdamW moment accumulators mirroring a ParameterSet.
struct OptimizerState {
    OptimizerConfig config;
    ParameterSet first_moment;
    ParameterSet second_moment;
    std::uint64_t step_count = 0;

    static OptimizerState create(const OptimizerConfig& cfg, const ParameterSet& like) {
        OptimizerState s;
        s.config = cfg;
        s.first_moment = like.zeros_like();
        s.second_moment = like.zeros_like();
        return s;
    }
};

/// One bias-corrected Adam step. AdamW additionally shrinks weight arrays
/// (not biases) by lr * weight_decay before the adaptive update.
inline void optimizer_step(ParameterSet& params, const ParameterSet& grads, OptimizerState& state) {
    const auto& cfg = state.config;
    if (!(cfg.learning_rate > 0.0)) {
        throw RangeError(detail::concat("optimizer_step: learning_rate must be > 0, got ", cfg.learning_rate));
    }
    if (!params.same_layout(grads) || !params.same_layout(state.first_moment) ||
        !params.same_layout(state.second_moment)) {
        throw ShapeError("optimizer_step: parameter, gradient and moment layouts differ");
    }
    grads.for_each([](const Matrix& g, const ParameterInfo& info) {
        if (!g.allFinite()) throw NumericError("optimizer_step: non-finite gradient in " + info.name);
    });

    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    const bool decoupled = cfg.kind == OptimizerKind::adamw && cfg.weight_decay != 0.0;

    auto update = [&](std::vector<Matrix>& p, const std::vector<Matrix>& g, std::vector<Matrix>& m,
                      std::vector<Matrix>& v, bool is_weight) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i].cwiseProduct(g[i]);
            if (decoupled && is_weight) p[i] *= (1.0 - cfg.learning_rate * cfg.weight_decay);
            p[i].array() -= cfg.learning_rate * (m[i].array() / bc1) / ((v[i].array() / bc2).sqrt() + cfg.eps);
        }
    };
    update(params.weights, grads.weights, state.first_moment.weights, state.second_moment.weights, true);
    update(params.biases, grads.biases, state.first_moment.biases, state.second_moment.biases, false);
    update(params.projections, grads.projections, state.first_moment.projections, state.second_moment.projections,
           true);
}

}  // namespace purifynet
