// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "purifynet/checkpoint.hpp"
#include "purifynet/datasets.hpp"
#include "purifynet/errors.hpp"
#include "purifynet/loss.hpp"
#include "purifynet/mlp.hpp"
#include "purifynet/optimizer.hpp"
#include "purifynet/rng.hpp"

namespace purifynet {

inline const std::vector<std::size_t>& full_classifier_widths() {
    static const std::vector<std::size_t> w{256, 512, 1024, 512, 256};
    return w;
}

inline const std::vector<std::size_t>& desk_classifier_widths() {
    static const std::vector<std::size_t> w{64, 128, 256, 128, 64};
    return w;
}

struct ClassifierTrainConfig {
    std::size_t epochs = 10000;
    double learning_rate = 1e-5;
    std::size_t batch_size = 1024;  // 0 = full dataset per step
    std::uint64_t seed = 0;
    std::vector<std::size_t> hidden_widths = full_classifier_widths();

    /// Small network and short schedule for quick local runs.
    static ClassifierTrainConfig desk() {
        ClassifierTrainConfig c;
        c.epochs = 500;
        c.learning_rate = 1e-3;
        c.hidden_widths = desk_classifier_widths();
        return c;
    }

    void validate() const {
        if (epochs < 1) throw RangeError("classifier: epochs must be >= 1");
        if (!(learning_rate > 0.0)) throw RangeError("classifier: learning_rate must be > 0");
        for (std::size_t w : hidden_widths) {
            if (w == 0) throw RangeError("classifier: hidden widths must be positive");
        }
    }

    Json to_json() const {
        return Json{{"epochs", epochs},         {"learning_rate", learning_rate}, {"optimizer", "adam"},
                    {"batch_size", batch_size}, {"seed", seed},                   {"hidden_widths", hidden_widths}};
    }
};

/// Binary intrusion detector: ReLU MLP with two output logits (0 benign, 1 malicious).
struct IdsModel {
    MlpNetwork net;

    std::size_t input_width() const { return net.input_width(); }

    std::vector<std::size_t> hidden_widths() const {
        return {net.layer_sizes.begin() + 1, net.layer_sizes.end() - 1};
    }
};

inline IdsModel make_ids_model(std::size_t features, const std::vector<std::size_t>& hidden, Rng& rng) {
    std::vector<std::size_t> sizes{features};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2);
    return IdsModel{MlpNetwork::glorot(sizes, rng)};
}

struct ClassifierTrainResult {
    IdsModel model;
    std::vector<LossLogEntry> loss_log;  // one entry per epoch, mean mini-batch loss
};

/// Adam on mean cross-entropy with per-epoch shuffled mini-batches.
inline ClassifierTrainResult train_classifier(const Dataset& train, const ClassifierTrainConfig& cfg) {
    cfg.validate();
    train.validate();
    if (train.size() == 0) throw DataError("train_classifier: empty training set");
    const auto counts = train.class_counts();
    if (counts[0] == 0 || counts[1] == 0) throw DataError("train_classifier: training set has a single class");

    Rng rng(cfg.seed);
    Rng init_rng = rng.derive(1);
    Rng order_rng = rng.derive(2);
    ClassifierTrainResult result;
    result.model = make_ids_model(train.feature_count(), cfg.hidden_widths, init_rng);
    auto& net = result.model.net;
    OptimizerState opt = OptimizerState::create(OptimizerConfig{OptimizerKind::adam, cfg.learning_rate}, net.params);

    const std::size_t n = train.size();
    const std::size_t batch = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<int> labels;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (batch < n) detail::shuffle(order, order_rng);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t m = std::min(batch, n - start);
            const std::span<const std::size_t> idx(order.data() + start, m);
            const DenseTensor x = batch == n ? train.features : train.features.select_rows(idx);
            labels.resize(m);
            for (std::size_t r = 0; r < m; ++r) labels[r] = train.labels[idx[r]];
            const Activations act = forward(net, x);
            const LossResult loss = cross_entropy_loss(act.output(), labels);
            if (!std::isfinite(loss.value)) {
                throw NumericError(detail::concat("train_classifier: non-finite loss at epoch ", epoch + 1));
            }
            optimizer_step(net.params, backward(net, act, loss.grad).params, opt);
            total += loss.value;
            ++batches;
        }
        result.loss_log.push_back({epoch + 1, total / static_cast<double>(batches)});
    }
    return result;
}

struct Prediction {
    std::vector<int> labels;
    DenseTensor probabilities;  // rows x 2
};

inline Prediction predict(const IdsModel& model, const DenseTensor& x) {
    Prediction p;
    p.probabilities = softmax(infer(model.net, x));
    p.labels.resize(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) p.labels[r] = p.probabilities(r, 1) > p.probabilities(r, 0) ? 1 : 0;
    return p;
}

/// Argmax labels straight from the logits.
inline std::vector<int> predict_labels(const IdsModel& model, const DenseTensor& x) {
    const DenseTensor z = infer(model.net, x);
    std::vector<int> out(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) out[r] = z(r, 1) > z(r, 0) ? 1 : 0;
    return out;
}

inline double accuracy(const IdsModel& model, const DenseTensor& x, std::span<const int> labels) {
    if (labels.size() != x.rows()) {
        throw ShapeError(detail::concat("accuracy: ", x.rows(), " rows vs ", labels.size(), " labels"));
    }
    if (labels.empty()) return 0.0;
    const auto pred = predict_labels(model, x);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < labels.size(); ++r) hits += pred[r] == labels[r] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

inline double accuracy(const IdsModel& model, const Dataset& d) { return accuracy(model, d.features, d.labels); }

enum class LossKind {
    cross_entropy,  // mean cross-entropy against the given labels
    target_logit    // mean of the logit for the given labels
};

/// Gradient of the mean loss over rows with respect to every input element.
inline DenseTensor input_gradient(const IdsModel& model, const DenseTensor& x, std::span<const int> labels,
                                  LossKind kind = LossKind::cross_entropy) {
    if (labels.size() != x.rows()) {
        throw ShapeError(detail::concat("input_gradient: ", x.rows(), " rows vs ", labels.size(), " labels"));
    }
    const Activations act = forward(model.net, x);
    DenseTensor seed;
    if (kind == LossKind::cross_entropy) {
        seed = cross_entropy_loss(act.output(), labels).grad;
    } else {
        seed = DenseTensor(x.rows(), 2);
        const double w = x.rows() == 0 ? 0.0 : 1.0 / static_cast<double>(x.rows());
        for (std::size_t r = 0; r < x.rows(); ++r) {
            if (labels[r] != 0 && labels[r] != 1) throw RangeError(detail::concat("input_gradient: label ", labels[r]));
            seed(r, static_cast<std::size_t>(labels[r])) = w;
        }
    }
    return backward(model.net, act, seed).input;
}

/// Per-row gradient of (logit 1 - logit 0) with the logits themselves.
struct MarginGradient {
    std::vector<double> margin;
    DenseTensor gradient;
};

inline MarginGradient margin_gradient(const IdsModel& model, const DenseTensor& x) {
    const Activations act = forward(model.net, x);
    const DenseTensor z = act.output();
    DenseTensor seed(x.rows(), 2);
    MarginGradient out;
    out.margin.resize(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        seed(r, 0) = -1.0;
        seed(r, 1) = 1.0;
        out.margin[r] = z(r, 1) - z(r, 0);
    }
    out.gradient = backward(model.net, act, seed).input;
    return out;
}

inline Json classifier_checkpoint(const IdsModel& model, const ClassifierTrainConfig& cfg) {
    Json extra;
    extra["hidden_widths"] = model.hidden_widths();
    extra["full_architecture"] = model.hidden_widths() == full_classifier_widths();
    return make_checkpoint("classifier", model.net, cfg.to_json(), extra);
}

inline IdsModel classifier_from_checkpoint(const Json& j) {
    check_checkpoint_header(j, "classifier");
    IdsModel m{network_from_json(j.at("network"))};
    if (m.net.embed_injection || m.net.output_width() != 2) {
        throw DataError("classifier checkpoint: expected an unconditioned network with 2 outputs");
    }
    return m;
}

}  // namespace purifynet
