// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "purifynet/checkpoint.hpp"
#include "purifynet/classifier.hpp"
#include "purifynet/errors.hpp"
#include "purifynet/tensor.hpp"

namespace purifynet {

enum class AttackMethod { fgsm, bim, deepfool, jsma, cw_l2 };

inline std::string to_string(AttackMethod m) {
    switch (m) {
        case AttackMethod::fgsm: return "FGSM";
        case AttackMethod::bim: return "BIM";
        case AttackMethod::deepfool: return "DeepFool";
        case AttackMethod::jsma: return "JSMA";
        case AttackMethod::cw_l2: return "CW-L2";
    }
    return "?";
}

inline AttackMethod attack_method_from_string(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return c == '-' || c == '_'; }), s.end());
    if (s == "fgsm") return AttackMethod::fgsm;
    if (s == "bim") return AttackMethod::bim;
    if (s == "deepfool") return AttackMethod::deepfool;
    if (s == "jsma") return AttackMethod::jsma;
    if (s == "cwl2" || s == "cw") return AttackMethod::cw_l2;
    throw RangeError("unknown attack method '" + s + "'");
}

struct AttackConfig {
    AttackMethod method = AttackMethod::fgsm;
    double epsilon = 0.03;
    std::optional<std::size_t> iterations;  // unset: BIM 100, DeepFool 50, CW 1000
    std::optional<double> step_size;        // unset: epsilon / 10
    double overshoot = 0.02;
    double theta = 0.1;
    double max_feature_fraction = 0.3;
    double cw_confidence = 0.0;
    double cw_initial_c = 1.0;
    std::size_t cw_binary_search_steps = 5;
    double cw_learning_rate = 0.01;
    bool targeted = true;
    std::optional<int> target_label;  // unset: opposite of the true label
    std::uint64_t seed = 0;
    std::vector<std::size_t> frozen_features;  // never perturbed; empty by default

    std::size_t resolved_iterations() const {
        if (iterations) return *iterations;
        switch (method) {
            case AttackMethod::bim: return 100;
            case AttackMethod::deepfool: return 50;
            case AttackMethod::cw_l2: return 1000;
            default: return 1;
        }
    }

    double resolved_step_size() const { return step_size ? *step_size : epsilon / 10.0; }

    void validate() const {
        if (!(epsilon >= 0.0)) throw RangeError("attack: epsilon must be >= 0");
        if (method == AttackMethod::bim) {
            if (resolved_iterations() < 1) throw RangeError("attack: BIM iterations must be >= 1");
            if (resolved_step_size() > epsilon || resolved_step_size() < 0.0) {
                throw RangeError("attack: BIM step_size must lie in [0, epsilon]");
            }
        }
        if (method == AttackMethod::cw_l2) {
            if (resolved_iterations() < 1) throw RangeError("attack: CW iterations must be >= 1");
            if (cw_binary_search_steps < 1) throw RangeError("attack: CW binary_search_steps must be >= 1");
            if (!(cw_learning_rate > 0.0)) throw RangeError("attack: CW learning_rate must be > 0");
        }
        if (method == AttackMethod::jsma) {
            if (theta == 0.0) throw RangeError("attack: JSMA theta must be nonzero");
            if (max_feature_fraction < 0.0 || max_feature_fraction > 1.0) {
                throw RangeError("attack: JSMA max_feature_fraction must lie in [0, 1]");
            }
        }
        if (overshoot < 0.0) throw RangeError("attack: overshoot must be >= 0");
        if (target_label && *target_label != 0 && *target_label != 1) throw RangeError("attack: target_label must be 0 or 1");
    }

    /// Every hyperparameter with defaults filled in.
    Json to_json() const {
        Json j;
        j["method"] = to_string(method);
        j["epsilon"] = epsilon;
        j["iterations"] = resolved_iterations();
        j["step_size"] = resolved_step_size();
        j["overshoot"] = overshoot;
        j["theta"] = theta;
        j["max_feature_fraction"] = max_feature_fraction;
        j["cw"] = Json{{"confidence", cw_confidence},
                       {"initial_c", cw_initial_c},
                       {"binary_search_steps", cw_binary_search_steps},
                       {"learning_rate", cw_learning_rate}};
        j["targeted"] = targeted;
        j["target_label"] = target_label ? Json(*target_label) : Json("opposite");
        j["seed"] = seed;
        j["frozen_features"] = frozen_features;
        return j;
    }

    static AttackConfig from_json(const Json& j) {
        AttackConfig c;
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& k = it.key();
            const Json& v = it.value();
            if (k == "method") c.method = attack_method_from_string(v.get<std::string>());
            else if (k == "epsilon") c.epsilon = v.get<double>();
            else if (k == "iterations") c.iterations = v.get<std::size_t>();
            else if (k == "step_size") c.step_size = v.get<double>();
            else if (k == "overshoot") c.overshoot = v.get<double>();
            else if (k == "theta") c.theta = v.get<double>();
            else if (k == "max_feature_fraction") c.max_feature_fraction = v.get<double>();
            else if (k == "cw") {
                for (auto cw = v.begin(); cw != v.end(); ++cw) {
                    if (cw.key() == "confidence") c.cw_confidence = cw->get<double>();
                    else if (cw.key() == "initial_c") c.cw_initial_c = cw->get<double>();
                    else if (cw.key() == "binary_search_steps") c.cw_binary_search_steps = cw->get<std::size_t>();
                    else if (cw.key() == "learning_rate") c.cw_learning_rate = cw->get<double>();
                    else throw DataError("attack.cw: unknown key '" + cw.key() + "'");
                }
            } else if (k == "targeted") c.targeted = v.get<bool>();
            else if (k == "target_label") {
                if (v.is_string()) {
                    if (v.get<std::string>() != "opposite") throw DataError("attack.target_label: expected 0, 1 or \"opposite\"");
                    c.target_label.reset();
                } else {
                    c.target_label = v.get<int>();
                }
            } else if (k == "seed") c.seed = v.get<std::uint64_t>();
            else if (k == "frozen_features") c.frozen_features = v.get<std::vector<std::size_t>>();
            else throw DataError("attack: unknown key '" + k + "'");
        }
        c.validate();
        return c;
    }
};

struct AdversarialBatch {
    DenseTensor adversarial;
    DenseTensor originals;
    std::vector<int> true_labels;
    std::vector<int> target_labels;
    AttackConfig config;
    std::vector<bool> success_mask;  // model misclassifies the adversarial row
    std::string model_checksum;

    std::size_t size() const { return true_labels.size(); }

    double success_rate() const {
        if (success_mask.empty()) return 0.0;
        return static_cast<double>(std::count(success_mask.begin(), success_mask.end(), true)) /
               static_cast<double>(success_mask.size());
    }

    void validate() const {
        require_same_shape(adversarial, originals, "adversarial batch");
        if (true_labels.size() != adversarial.rows() || target_labels.size() != adversarial.rows() ||
            success_mask.size() != adversarial.rows()) {
            throw ShapeError("adversarial batch: label / mask lengths do not match row count");
        }
    }
};

inline std::vector<int> opposite_labels(std::span<const int> labels) {
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = 1 - labels[i];
    return out;
}

namespace detail {

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline std::vector<int> resolve_targets(const AttackConfig& cfg, std::span<const int> true_labels) {
    if (cfg.target_label) return std::vector<int>(true_labels.size(), *cfg.target_label);
    return opposite_labels(true_labels);
}

inline void zero_frozen(DenseTensor& g, const std::vector<std::size_t>& frozen) {
    for (std::size_t c : frozen) {
        if (c >= g.cols()) throw RangeError(concat("attack: frozen feature ", c, " out of range"));
        for (std::size_t r = 0; r < g.rows(); ++r) g(r, c) = 0.0;
    }
}

inline AdversarialBatch finish_batch(const IdsModel& model, const DenseTensor& x, DenseTensor adv,
                                     std::span<const int> true_labels, std::vector<int> targets,
                                     const AttackConfig& cfg) {
    AdversarialBatch b;
    const auto pred = predict_labels(model, adv);
    b.success_mask.resize(pred.size());
    for (std::size_t r = 0; r < pred.size(); ++r) b.success_mask[r] = pred[r] != true_labels[r];
    b.adversarial = std::move(adv);
    b.originals = x;
    b.true_labels.assign(true_labels.begin(), true_labels.end());
    b.target_labels = std::move(targets);
    b.config = cfg;
    b.model_checksum = network_checksum(model.net);
    return b;
}

inline void check_attack_inputs(const IdsModel& model, const DenseTensor& x, std::span<const int> labels) {
    if (x.cols() != model.input_width()) {
        throw ShapeError(concat("attack: input ", x.shape(), " vs model input width ", model.input_width()));
    }
    if (labels.size() != x.rows()) throw ShapeError(concat("attack: ", x.rows(), " rows vs ", labels.size(), " labels"));
}

/// One signed-gradient step; targeted steps descend the target loss, untargeted ascend the true-label loss.
inline DenseTensor signed_step(const IdsModel& model, const DenseTensor& x, std::span<const int> targets,
                               std::span<const int> true_labels, const AttackConfig& cfg, double step) {
    DenseTensor g = cfg.targeted ? input_gradient(model, x, targets) : input_gradient(model, x, true_labels);
    zero_frozen(g, cfg.frozen_features);
    const double dir = cfg.targeted ? -1.0 : 1.0;
    DenseTensor out = x;
    auto v = out.values();
    const auto gv = g.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::clamp(v[i] + dir * step * sign(gv[i]), 0.0, 1.0);
    return out;
}

}  // namespace detail

/// x_adv = clip(x - eps * sign(dL(x, target)/dx), 0, 1).
inline AdversarialBatch fgsm_targeted(const IdsModel& model, const DenseTensor& x, std::span<const int> true_labels,
                                      std::span<const int> target_labels, double epsilon, AttackConfig cfg = {}) {
    detail::check_attack_inputs(model, x, true_labels);
    cfg.method = AttackMethod::fgsm;
    cfg.epsilon = epsilon;
    cfg.validate();
    DenseTensor adv = detail::signed_step(model, x, target_labels, true_labels, cfg, epsilon);
    return detail::finish_batch(model, x, std::move(adv), true_labels,
                                {target_labels.begin(), target_labels.end()}, cfg);
}

/// Iterated signed-gradient steps, each projected back onto the eps-ball around x and the unit box.
inline AdversarialBatch bim(const IdsModel& model, const DenseTensor& x, std::span<const int> true_labels,
                            std::span<const int> target_labels, double epsilon, std::size_t iterations,
                            double step_size, AttackConfig cfg = {}) {
    detail::check_attack_inputs(model, x, true_labels);
    cfg.method = AttackMethod::bim;
    cfg.epsilon = epsilon;
    cfg.iterations = iterations;
    cfg.step_size = step_size;
    cfg.validate();
    DenseTensor adv = x;
    const auto x0 = x.values();
    for (std::size_t it = 0; it < iterations; ++it) {
        adv = detail::signed_step(model, adv, target_labels, true_labels, cfg, step_size);
        auto v = adv.values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = std::clamp(std::clamp(v[i], x0[i] - epsilon, x0[i] + epsilon), 0.0, 1.0);
        }
    }
    return detail::finish_batch(model, x, std::move(adv), true_labels,
                                {target_labels.begin(), target_labels.end()}, cfg);
}

/// Untargeted binary DeepFool on f = logit1 - logit0. Each iteration moves
/// to the linearized boundary; the accumulated step is scaled by
/// (1 + overshoot). Rows that never flip are returned unmodified.
inline AdversarialBatch deepfool(const IdsModel& model, const DenseTensor& x, std::span<const int> true_labels,
                                 std::size_t max_iterations, double overshoot, AttackConfig cfg = {}) {
    detail::check_attack_inputs(model, x, true_labels);
    cfg.method = AttackMethod::deepfool;
    cfg.iterations = max_iterations;
    cfg.overshoot = overshoot;
    cfg.validate();
    const std::size_t n = x.rows(), d = x.cols();
    DenseTensor adv = x;
    DenseTensor r_tot(n, d);
    std::vector<bool> done(n, false), flipped(n, false);
    {
        const auto pred = predict_labels(model, x);
        for (std::size_t r = 0; r < n; ++r) {
            if (pred[r] != true_labels[r]) done[r] = true;
        }
    }
    for (std::size_t it = 0; it < max_iterations; ++it) {
        std::vector<std::size_t> active;
        for (std::size_t r = 0; r < n; ++r) {
            if (!done[r]) active.push_back(r);
        }
        if (active.empty()) break;
        const DenseTensor cur = adv.select_rows(active);
        MarginGradient mg = margin_gradient(model, cur);
        detail::zero_frozen(mg.gradient, cfg.frozen_features);
        for (std::size_t k = 0; k < active.size(); ++k) {
            const std::size_t r = active[k];
            const auto w = mg.gradient.row(k);
            double norm2 = 0.0;
            for (double v : w) norm2 += v * v;
            if (!(norm2 > 0.0)) {
                done[r] = true;
                continue;
            }
            const double scale = -mg.margin[k] / norm2;
            auto acc = r_tot.row(r);
            auto out = adv.row(r);
            const auto x0 = x.row(r);
            for (std::size_t c = 0; c < d; ++c) {
                acc[c] += scale * w[c];
                out[c] = std::clamp(x0[c] + (1.0 + overshoot) * acc[c], 0.0, 1.0);
            }
        }
        const auto pred = predict_labels(model, adv.select_rows(active));
        for (std::size_t k = 0; k < active.size(); ++k) {
            if (pred[k] != true_labels[active[k]]) {
                done[active[k]] = true;
                flipped[active[k]] = true;
            }
        }
    }
    {
        const auto pred = predict_labels(model, adv);
        for (std::size_t r = 0; r < n; ++r) {
            if (!flipped[r] || pred[r] == true_labels[r]) {
                for (std::size_t c = 0; c < d; ++c) adv(r, c) = x(r, c);
            }
        }
    }
    return detail::finish_batch(model, x, std::move(adv), true_labels, opposite_labels(true_labels), cfg);
}

/// Targeted JSMA over feature pairs using logit Jacobians. Each iteration
/// shifts the most salient eligible pair by theta; modified or saturated
/// features leave the search domain. At most floor(fraction * d / 2) pairs.
inline AdversarialBatch jsma(const IdsModel& model, const DenseTensor& x, std::span<const int> true_labels,
                             std::span<const int> target_labels, double theta, double max_feature_fraction,
                             AttackConfig cfg = {}) {
    detail::check_attack_inputs(model, x, true_labels);
    cfg.method = AttackMethod::jsma;
    cfg.theta = theta;
    cfg.max_feature_fraction = max_feature_fraction;
    cfg.validate();
    const std::size_t n = x.rows(), d = x.cols();
    const auto max_pairs = static_cast<std::size_t>(std::floor(max_feature_fraction * static_cast<double>(d) / 2.0));
    DenseTensor adv = x;
    std::vector<std::vector<char>> domain(n, std::vector<char>(d, 1));
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            const double v = x(r, c);
            if ((theta > 0.0 && v >= 1.0) || (theta < 0.0 && v <= 0.0)) domain[r][c] = 0;
        }
        for (std::size_t c : cfg.frozen_features) {
            if (c >= d) throw RangeError(detail::concat("attack: frozen feature ", c, " out of range"));
            domain[r][c] = 0;
        }
    }
    std::vector<bool> done(n, false);
    for (std::size_t it = 0; it < max_pairs; ++it) {
        std::vector<std::size_t> active;
        {
            const auto pred = predict_labels(model, adv);
            for (std::size_t r = 0; r < n; ++r) {
                if (pred[r] == target_labels[r]) done[r] = true;
                if (!done[r]) active.push_back(r);
            }
        }
        if (active.empty()) break;
        const DenseTensor cur = adv.select_rows(active);
        std::vector<int> tgt(active.size()), other(active.size());
        for (std::size_t k = 0; k < active.size(); ++k) {
            tgt[k] = target_labels[active[k]];
            other[k] = 1 - tgt[k];
        }
        // Per-row Jacobian rows; the 1/n mean scaling is common to both and irrelevant to the argmax.
        const DenseTensor jt = input_gradient(model, cur, tgt, LossKind::target_logit);
        const DenseTensor jo = input_gradient(model, cur, other, LossKind::target_logit);
        for (std::size_t k = 0; k < active.size(); ++k) {
            const std::size_t r = active[k];
            const auto& dom = domain[r];
            double best = 0.0;
            std::size_t bp = d, bq = d;
            for (std::size_t p = 0; p < d; ++p) {
                if (!dom[p]) continue;
                for (std::size_t q = p + 1; q < d; ++q) {
                    if (!dom[q]) continue;
                    double alpha = jt(k, p) + jt(k, q);
                    double beta = jo(k, p) + jo(k, q);
                    if (theta < 0.0) {
                        alpha = -alpha;
                        beta = -beta;
                    }
                    if (alpha > 0.0 && beta < 0.0 && alpha * -beta > best) {
                        best = alpha * -beta;
                        bp = p;
                        bq = q;
                    }
                }
            }
            if (bp == d) {
                done[r] = true;
                continue;
            }
            for (std::size_t c : {bp, bq}) {
                adv(r, c) = std::clamp(adv(r, c) + theta, 0.0, 1.0);
                domain[r][c] = 0;
            }
        }
    }
    return detail::finish_batch(model, x, std::move(adv), true_labels,
                                {target_labels.begin(), target_labels.end()}, cfg);
}

/// Targeted CW-L2 in tanh space with per-row binary search over c and
/// Adam on w. Returns the lowest-L2 example that reached the target
/// (with margin kappa), or the original row when every search step fails.
inline AdversarialBatch carlini_wagner_l2(const IdsModel& model, const DenseTensor& x, std::span<const int> true_labels,
                                          std::span<const int> target_labels, AttackConfig cfg) {
    detail::check_attack_inputs(model, x, true_labels);
    cfg.method = AttackMethod::cw_l2;
    cfg.validate();
    const std::size_t n = x.rows(), d = x.cols();
    const std::size_t iterations = cfg.resolved_iterations();
    const double kappa = cfg.cw_confidence;
    const double lr = cfg.cw_learning_rate;
    constexpr double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;

    std::vector<char> frozen(d, 0);
    for (std::size_t c : cfg.frozen_features) {
        if (c >= d) throw RangeError(detail::concat("attack: frozen feature ", c, " out of range"));
        frozen[c] = 1;
    }
    Matrix w0(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            w0(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = std::atanh((2.0 * x(r, c) - 1.0) * 0.999999);
        }
    }
    std::vector<double> c_cur(n, cfg.cw_initial_c), lower(n, 0.0), upper(n, 1e10);
    std::vector<double> best_l2(n, std::numeric_limits<double>::infinity());
    DenseTensor best = x;
    DenseTensor seed(n, 2);

    for (std::size_t bs = 0; bs < cfg.cw_binary_search_steps; ++bs) {
        Matrix w = w0;
        Matrix m1 = Matrix::Zero(w.rows(), w.cols()), m2 = Matrix::Zero(w.rows(), w.cols());
        std::vector<bool> succeeded(n, false);
        double prev = std::numeric_limits<double>::infinity();
        const std::size_t check_every = std::max<std::size_t>(1, iterations / 10);
        for (std::size_t it = 0; it <= iterations; ++it) {
            DenseTensor xa(Matrix((w.array().tanh() + 1.0) * 0.5));
            const Activations act = forward(model.net, xa);
            const Matrix& z = act.outputs.back();
            double total = 0.0;
            for (std::size_t r = 0; r < n; ++r) {
                const auto ri = static_cast<Eigen::Index>(r);
                const auto t = static_cast<Eigen::Index>(target_labels[r]);
                const double gap = z(ri, 1 - t) - z(ri, t);
                double l2 = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double diff = xa(r, c) - x(r, c);
                    l2 += diff * diff;
                }
                total += l2 + c_cur[r] * std::max(gap, -kappa);
                if (gap <= -kappa) {
                    succeeded[r] = true;
                    if (l2 < best_l2[r]) {
                        best_l2[r] = l2;
                        for (std::size_t c = 0; c < d; ++c) best(r, c) = xa(r, c);
                    }
                }
                seed(r, 0) = seed(r, 1) = 0.0;
                if (gap > -kappa) {
                    seed(r, static_cast<std::size_t>(1 - t)) = c_cur[r];
                    seed(r, static_cast<std::size_t>(t)) = -c_cur[r];
                }
            }
            if (it == iterations) break;
            if (it % check_every == 0) {
                if (total > prev * 0.9999) break;
                prev = total;
            }
            const DenseTensor gx = backward(model.net, act, seed).input;
            const double step = static_cast<double>(it + 1);
            const double c1 = 1.0 - std::pow(b1, step), c2 = 1.0 - std::pow(b2, step);
            for (Eigen::Index r = 0; r < w.rows(); ++r) {
                for (Eigen::Index c = 0; c < w.cols(); ++c) {
                    if (frozen[static_cast<std::size_t>(c)]) continue;
                    const auto rr = static_cast<std::size_t>(r), cc = static_cast<std::size_t>(c);
                    const double th = std::tanh(w(r, c));
                    const double gl = 2.0 * (xa(rr, cc) - x(rr, cc)) + gx(rr, cc);
                    const double g = gl * 0.5 * (1.0 - th * th);
                    m1(r, c) = b1 * m1(r, c) + (1.0 - b1) * g;
                    m2(r, c) = b2 * m2(r, c) + (1.0 - b2) * g * g;
                    w(r, c) -= lr * (m1(r, c) / c1) / (std::sqrt(m2(r, c) / c2) + adam_eps);
                }
            }
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (succeeded[r]) {
                upper[r] = std::min(upper[r], c_cur[r]);
                c_cur[r] = (lower[r] + upper[r]) / 2.0;
            } else {
                lower[r] = std::max(lower[r], c_cur[r]);
                c_cur[r] = upper[r] < 1e9 ? (lower[r] + upper[r]) / 2.0 : c_cur[r] * 10.0;
            }
        }
    }
    return detail::finish_batch(model, x, std::move(best), true_labels,
                                {target_labels.begin(), target_labels.end()}, cfg);
}

/// Dispatches on cfg.method with defaults filled in; targets come from cfg.
inline AdversarialBatch run_attack(const IdsModel& model, const DenseTensor& x, std::span<const int> true_labels,
                                   const AttackConfig& cfg) {
    cfg.validate();
    const std::vector<int> targets = detail::resolve_targets(cfg, true_labels);
    switch (cfg.method) {
        case AttackMethod::fgsm: return fgsm_targeted(model, x, true_labels, targets, cfg.epsilon, cfg);
        case AttackMethod::bim:
            return bim(model, x, true_labels, targets, cfg.epsilon, cfg.resolved_iterations(),
                       cfg.resolved_step_size(), cfg);
        case AttackMethod::deepfool: return deepfool(model, x, true_labels, cfg.resolved_iterations(), cfg.overshoot, cfg);
        case AttackMethod::jsma: return jsma(model, x, true_labels, targets, cfg.theta, cfg.max_feature_fraction, cfg);
        case AttackMethod::cw_l2: return carlini_wagner_l2(model, x, true_labels, targets, cfg);
    }
    throw RangeError("run_attack: unknown method");
}

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline void write_matrix_csv(const std::filesystem::path& path, const DenseTensor& m) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? "," : "") << 'f' << c;
    out << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
        out << '\n';
    }
    if (!out) throw DataError("write failed: " + path.string());
}

inline std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 || line.empty()) continue;
        std::vector<double> row;
        for (const auto& cell : split_csv_line(line)) {
            double v;
            if (!parse_double(cell, v)) throw DataError(concat(path.string(), ":", line_no, ": bad number '", cell, "'"));
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline DenseTensor to_tensor(const std::vector<std::vector<double>>& rows, std::size_t cols,
                             const std::filesystem::path& path) {
    DenseTensor t(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cols) throw DataError(concat(path.string(), ": row ", r + 1, " has wrong width"));
        for (std::size_t c = 0; c < cols; ++c) t(r, c) = rows[r][c];
    }
    return t;
}

}  // namespace detail

/// Writes originals.csv, adversarial.csv, labels.csv and metadata.json into dir.
inline void write_adversarial_batch(const AdversarialBatch& b, const std::filesystem::path& dir) {
    b.validate();
    std::filesystem::create_directories(dir);
    detail::write_matrix_csv(dir / "originals.csv", b.originals);
    detail::write_matrix_csv(dir / "adversarial.csv", b.adversarial);
    {
        std::ofstream out(dir / "labels.csv");
        if (!out) throw DataError("cannot open " + (dir / "labels.csv").string() + " for writing");
        out << "true_label,target_label,success\n";
        for (std::size_t r = 0; r < b.size(); ++r) {
            out << b.true_labels[r] << ',' << b.target_labels[r] << ',' << (b.success_mask[r] ? 1 : 0) << '\n';
        }
    }
    Json meta;
    meta["format"] = "purifynet-adversarial-batch";
    meta["format_version"] = 1;
    meta["rows"] = b.adversarial.rows();
    meta["cols"] = b.adversarial.cols();
    meta["attack"] = b.config.to_json();
    meta["model_checksum"] = b.model_checksum;
    meta["success_rate"] = b.success_rate();
    write_json_file(dir / "metadata.json", meta);
}

inline AdversarialBatch read_adversarial_batch(const std::filesystem::path& dir) {
    const Json meta = read_json_file(dir / "metadata.json");
    if (meta.value("format", "") != "purifynet-adversarial-batch") {
        throw DataError(dir.string() + ": not an adversarial batch directory");
    }
    AdversarialBatch b;
    const auto cols = meta.at("cols").get<std::size_t>();
    b.originals = detail::to_tensor(detail::read_numeric_csv(dir / "originals.csv"), cols, dir / "originals.csv");
    b.adversarial = detail::to_tensor(detail::read_numeric_csv(dir / "adversarial.csv"), cols, dir / "adversarial.csv");
    for (const auto& row : detail::read_numeric_csv(dir / "labels.csv")) {
        if (row.size() != 3) throw DataError((dir / "labels.csv").string() + ": expected 3 columns");
        b.true_labels.push_back(static_cast<int>(row[0]));
        b.target_labels.push_back(static_cast<int>(row[1]));
        b.success_mask.push_back(row[2] != 0.0);
    }
    Json attack = meta.at("attack");
    b.config = AttackConfig::from_json(attack);
    b.model_checksum = meta.at("model_checksum").get<std::string>();
    b.validate();
    return b;
}

}  // namespace purifynet
