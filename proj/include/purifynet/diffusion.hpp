// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "purifynet/checkpoint.hpp"
#include "purifynet/embedding.hpp"
#include "purifynet/errors.hpp"
#include "purifynet/loss.hpp"
#include "purifynet/mlp.hpp"
#include "purifynet/optimizer.hpp"
#include "purifynet/rng.hpp"
#include "purifynet/tensor.hpp"

namespace purifynet {

/// Linear variance schedule and its derived sequences. Steps are 1-based:
/// beta(t) for t in [1, T]; alpha_bar(0) = 1 by convention.
class VarianceSchedule {
public:
    VarianceSchedule() = default;

    /// T evenly spaced betas from beta1 to betaT; beta1 == betaT gives a constant schedule.
    static VarianceSchedule linear(std::size_t T, double beta1, double betaT) {
        if (T < 1) throw RangeError("linear_schedule: T must be >= 1");
        if (!(beta1 > 0.0) || !(beta1 <= betaT) || !(betaT < 1.0)) {
            throw RangeError(detail::concat("linear_schedule: need 0 < beta1 <= betaT < 1, got beta1=", beta1,
                                            " betaT=", betaT));
        }
        VarianceSchedule s;
        s.T_ = T;
        s.beta1_ = beta1;
        s.betaT_ = betaT;
        s.beta_.resize(T);
        s.alpha_.resize(T);
        s.alpha_bar_.resize(T);
        s.sigma2_.resize(T);
        double running = 1.0;
        for (std::size_t i = 0; i < T; ++i) {
            s.beta_[i] = T == 1 ? beta1
                                : beta1 + static_cast<double>(i) * (betaT - beta1) / static_cast<double>(T - 1);
            s.alpha_[i] = 1.0 - s.beta_[i];
            running *= s.alpha_[i];
            s.alpha_bar_[i] = running;
            s.sigma2_[i] = 1.0 - running;
        }
        return s;
    }

    std::size_t T() const noexcept { return T_; }
    double beta1() const noexcept { return beta1_; }
    double betaT() const noexcept { return betaT_; }
    bool is_constant() const noexcept { return beta1_ == betaT_; }

    double beta(std::size_t t) const { return beta_[index(t)]; }
    double alpha(std::size_t t) const { return alpha_[index(t)]; }
    double alpha_bar(std::size_t t) const { return t == 0 ? 1.0 : alpha_bar_[index(t)]; }

    /// Composed variance 1 - alpha_bar(t) of the noise applied to x0 after t steps.
    double composed_variance(std::size_t t) const { return sigma2_[index(t)]; }

    /// beta(t) * (1 - alpha_bar(t-1)) / (1 - alpha_bar(t)).
    double posterior_variance(std::size_t t) const {
        return beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
    }

    const std::vector<double>& betas() const noexcept { return beta_; }
    const std::vector<double>& alphas() const noexcept { return alpha_; }
    const std::vector<double>& alpha_bars() const noexcept { return alpha_bar_; }
    const std::vector<double>& sigma2s() const noexcept { return sigma2_; }

    void check_step(std::size_t t, std::size_t lo = 1) const {
        if (t < lo || t > T_) {
            throw RangeError(detail::concat("diffusion step ", t, " outside [", lo, ", ", T_, "]"));
        }
    }

    /// Only the generating parameters are stored; betas are regenerated on load.
    Json to_json() const {
        return Json{{"kind", is_constant() ? "constant" : "linear"}, {"T", T_}, {"beta1", beta1_}, {"betaT", betaT_}};
    }
    static VarianceSchedule from_json(const Json& j) {
        const auto kind = j.at("kind").get<std::string>();
        if (kind != "linear" && kind != "constant") throw DataError("unknown schedule kind '" + kind + "'");
        return linear(j.at("T").get<std::size_t>(), j.at("beta1").get<double>(), j.at("betaT").get<double>());
    }

private:
    std::size_t index(std::size_t t) const {
        check_step(t);
        return t - 1;
    }

    std::size_t T_ = 0;
    double beta1_ = 0.0;
    double betaT_ = 0.0;
    std::vector<double> beta_, alpha_, alpha_bar_, sigma2_;
};

inline VarianceSchedule linear_schedule(std::size_t T, double beta1, double betaT) {
    return VarianceSchedule::linear(T, beta1, betaT);
}

inline double composed_variance(const VarianceSchedule& s, std::size_t t) { return s.composed_variance(t); }

/// Row-major standard normal tensor.
inline DenseTensor gaussian_like(std::size_t rows, std::size_t cols, Rng& rng) {
    DenseTensor out(rows, cols);
    for (double& v : out.values()) v = rng.normal();
    return out;
}

/// Closed-form marginal x_t = sqrt(alpha_bar) x0 + sqrt(1 - alpha_bar) noise. t = 0 returns x0.
inline DenseTensor forward_sample(const DenseTensor& x0, std::size_t t, const VarianceSchedule& s,
                                  const DenseTensor& noise) {
    s.check_step(t, 0);
    require_same_shape(x0, noise, "forward_sample");
    if (t == 0) return x0;
    const double ab = s.alpha_bar(t);
    return DenseTensor(Matrix(std::sqrt(ab) * x0.matrix() + std::sqrt(1.0 - ab) * noise.matrix()));
}

inline DenseTensor forward_sample(const DenseTensor& x0, std::size_t t, const VarianceSchedule& s, Rng& rng) {
    s.check_step(t, 0);
    if (t == 0) return x0;
    return forward_sample(x0, t, s, gaussian_like(x0.rows(), x0.cols(), rng));
}

/// t single-step transitions x_i = sqrt(1 - beta_i) x_{i-1} + sqrt(beta_i) z.
inline DenseTensor forward_chain(const DenseTensor& x0, std::size_t t, const VarianceSchedule& s, Rng& rng) {
    s.check_step(t, 0);
    DenseTensor x = x0;
    for (std::size_t i = 1; i <= t; ++i) {
        const DenseTensor z = gaussian_like(x.rows(), x.cols(), rng);
        x.matrix() = std::sqrt(1.0 - s.beta(i)) * x.matrix() + std::sqrt(s.beta(i)) * z.matrix();
    }
    return x;
}

enum class ReverseVariance { posterior, beta };

struct DiffusionTrainConfig {
    std::size_t epochs = 5000;
    double learning_rate = 1e-4;
    double weight_decay = 0.01;
    std::size_t batch_size = 0;  // 0 = full dataset per step
    std::uint64_t seed = 0;
    std::size_t hidden_layers = 4;
    std::size_t hidden_width = 128;
    std::size_t embed_dim = 128;
    std::size_t log_interval = 100;

    /// Desk-scale preset: short minibatch training at a higher rate.
    static DiffusionTrainConfig desk() {
        DiffusionTrainConfig c;
        c.epochs = 1000;
        c.learning_rate = 1e-3;
        c.batch_size = 256;
        return c;
    }

    Json to_json() const {
        return Json{{"epochs", epochs},           {"learning_rate", learning_rate},
                    {"optimizer", "adamw"},       {"weight_decay", weight_decay},
                    {"batch_size", batch_size},   {"seed", seed},
                    {"hidden_layers", hidden_layers}, {"hidden_width", hidden_width},
                    {"embed_dim", embed_dim},     {"log_interval", log_interval}};
    }
};

/// Noise predictor plus the schedule it was trained for.
struct DiffusionModel {
    VarianceSchedule schedule;
    MlpNetwork noise_net;
    ReverseVariance variance = ReverseVariance::posterior;

    std::size_t feature_count() const { return noise_net.input_width(); }

    /// Predicted noise for every row of x_t, all at step t.
    DenseTensor predict_noise(const DenseTensor& x_t, std::size_t t) const {
        schedule.check_step(t);
        return infer(noise_net, x_t, Conditioning::broadcast(sinusoidal_embedding(static_cast<double>(t),
                                                                                  noise_net.embed_dim)));
    }
};

struct DiffusionTrainResult {
    DiffusionModel model;
    std::vector<LossLogEntry> loss_log;
};

inline DiffusionModel make_diffusion_model(std::size_t features, const VarianceSchedule& schedule,
                                           const DiffusionTrainConfig& cfg, Rng& rng) {
    if (cfg.embed_dim == 0 || cfg.embed_dim % 2 != 0) throw RangeError("diffusion: embed_dim must be even");
    std::vector<std::size_t> sizes{features};
    for (std::size_t i = 0; i < cfg.hidden_layers; ++i) sizes.push_back(cfg.hidden_width);
    sizes.push_back(features);
    DiffusionModel m;
    m.schedule = schedule;
    m.noise_net = MlpNetwork::glorot(sizes, rng, cfg.embed_dim);
    // Output layer starts at zero.
    m.noise_net.params.weights.back().setZero();
    return m;
}

/// Noise-prediction training: every epoch draws, per instance, a step
/// t ~ U{1..T} and noise e ~ N(0, I), then minimizes MSE(net(x_t, t), e).
/// Each mini-batch (full data by default) is one AdamW step.
inline DiffusionTrainResult train_diffusion(const DenseTensor& train, const VarianceSchedule& schedule,
                                            const DiffusionTrainConfig& cfg) {
    if (train.rows() == 0) throw DataError("train_diffusion: empty dataset");
    if (cfg.epochs < 1) throw RangeError("train_diffusion: epochs must be >= 1");
    if (cfg.log_interval < 1) throw RangeError("train_diffusion: log_interval must be >= 1");
    Rng rng(cfg.seed);
    Rng init_rng = rng.derive(1);
    Rng data_rng = rng.derive(2);

    DiffusionTrainResult result;
    result.model = make_diffusion_model(train.cols(), schedule, cfg, init_rng);
    auto& net = result.model.noise_net;
    OptimizerState opt = OptimizerState::create(
        OptimizerConfig{OptimizerKind::adamw, cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay}, net.params);

    const std::size_t n = train.rows();
    const std::size_t batch = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
    const std::size_t T = schedule.T();
    const Matrix table = embedding_table(T, cfg.embed_dim);
    std::vector<double> sqrt_ab(T + 1), sqrt_1mab(T + 1);
    for (std::size_t t = 1; t <= T; ++t) {
        sqrt_ab[t] = std::sqrt(schedule.alpha_bar(t));
        sqrt_1mab[t] = std::sqrt(1.0 - schedule.alpha_bar(t));
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::vector<std::size_t> slot_of(T + 1);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (batch < n) {
            for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[data_rng.uniform_int(0, i)]);
        }
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t m = std::min(batch, n - start);
            DenseTensor noise(m, train.cols());
            DenseTensor x_t(m, train.cols());
            Conditioning cond;
            cond.index.resize(m);
            std::vector<std::size_t> steps;
            std::fill(slot_of.begin(), slot_of.end(), SIZE_MAX);
            for (std::size_t r = 0; r < m; ++r) {
                const std::size_t t = static_cast<std::size_t>(data_rng.uniform_int(1, T));
                if (slot_of[t] == SIZE_MAX) {
                    slot_of[t] = steps.size();
                    steps.push_back(t);
                }
                cond.index[r] = slot_of[t];
                const auto src = train.row(order[start + r]);
                auto dst = x_t.row(r);
                auto eps = noise.row(r);
                for (std::size_t c = 0; c < train.cols(); ++c) {
                    eps[c] = data_rng.normal();
                    dst[c] = sqrt_ab[t] * src[c] + sqrt_1mab[t] * eps[c];
                }
            }
            cond.table.resize(static_cast<Eigen::Index>(steps.size()), table.cols());
            for (std::size_t k = 0; k < steps.size(); ++k) {
                cond.table.row(static_cast<Eigen::Index>(k)) = table.row(static_cast<Eigen::Index>(steps[k]));
            }
            const Activations act = forward(net, x_t, cond);
            const LossResult loss = mse_loss(act.output(), noise);
            const Gradients grads = backward(net, act, loss.grad);
            optimizer_step(net.params, grads.params, opt);
            epoch_loss += loss.value;
            ++batches;
        }
        if ((epoch + 1) % cfg.log_interval == 0) {
            result.loss_log.push_back({epoch + 1, epoch_loss / static_cast<double>(batches)});
        }
    }
    return result;
}

/// Posterior mean of x_{t-1} given x_t and a noise estimate.
inline DenseTensor reverse_mean(const VarianceSchedule& s, const DenseTensor& x_t, std::size_t t,
                                const DenseTensor& eps_hat) {
    s.check_step(t);
    require_same_shape(x_t, eps_hat, "reverse_mean");
    const double coef = s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t));
    return DenseTensor(Matrix((x_t.matrix() - coef * eps_hat.matrix()) / std::sqrt(s.alpha(t))));
}

inline double reverse_variance(const DiffusionModel& model, std::size_t t) {
    return model.variance == ReverseVariance::posterior ? model.schedule.posterior_variance(t)
                                                        : model.schedule.beta(t);
}

/// One ancestral step x_t -> x_{t-1}; z is drawn from rng for t > 1 and is zero at t = 1.
inline DenseTensor reverse_step(const DiffusionModel& model, const DenseTensor& x_t, std::size_t t, Rng& rng) {
    model.schedule.check_step(t);
    DenseTensor x = reverse_mean(model.schedule, x_t, t, model.predict_noise(x_t, t));
    if (t > 1) {
        const double sd = std::sqrt(reverse_variance(model, t));
        for (double& v : x.values()) v += sd * rng.normal();
    }
    return x;
}

/// Forward-noise x for t steps in one shot, then walk t reverse steps back
/// and clamp to the [0, 1] data domain. t = 0 is the identity.
inline DenseTensor purify(const DiffusionModel& model, const DenseTensor& x, std::size_t t, Rng& rng) {
    model.schedule.check_step(t, 0);
    if (t == 0) return x;
    if (x.cols() != model.feature_count()) {
        throw ShapeError(detail::concat("purify: input ", x.shape(), " vs model feature count ",
                                        model.feature_count()));
    }
    DenseTensor cur = forward_sample(x, t, model.schedule, rng);
    for (std::size_t s = t; s >= 1; --s) cur = reverse_step(model, cur, s, rng);
    cur.clamp(0.0, 1.0);
    return cur;
}

inline Json diffusion_checkpoint(const DiffusionModel& model, const DiffusionTrainConfig& cfg) {
    Json extra;
    extra["schedule"] = model.schedule.to_json();
    extra["reverse_variance"] = model.variance == ReverseVariance::posterior ? "posterior" : "beta";
    return make_checkpoint("diffusion", model.noise_net, cfg.to_json(), extra);
}

inline DiffusionModel diffusion_from_checkpoint(const Json& j) {
    check_checkpoint_header(j, "diffusion");
    DiffusionModel m;
    m.schedule = VarianceSchedule::from_json(j.at("schedule"));
    m.noise_net = network_from_json(j.at("network"));
    m.variance = j.value("reverse_variance", "posterior") == "beta" ? ReverseVariance::beta
                                                                    : ReverseVariance::posterior;
    if (!m.noise_net.embed_injection || m.noise_net.input_width() != m.noise_net.output_width()) {
        throw DataError("diffusion checkpoint: noise network must be conditioned with equal in/out widths");
    }
    return m;
}

}  // namespace purifynet
