// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "purifynet/errors.hpp"
#include "purifynet/rng.hpp"
#include "purifynet/tensor.hpp"

namespace purifynet {

struct ParameterInfo {
    std::string name;
    std::size_t layer;
    bool is_weight;  // false for biases; decides AdamW decay
};

/// Every trainable array of an MLP. Gradients and optimizer moments reuse the layout.
struct ParameterSet {
    std::vector<Matrix> weights;      // layer l: (in_width, out_width)
    std::vector<Matrix> biases;       // layer l: (1, out_width)
    std::vector<Matrix> projections;  // hidden layer l: (embed_dim, width); empty without injection

    /// Visits weights, then biases, then projections, layer by layer.
    template <typename Self, typename F>
    static void visit(Self& self, F&& f) {
        for (std::size_t l = 0; l < self.weights.size(); ++l) {
            f(self.weights[l], ParameterInfo{detail::concat("layer", l, ".weight"), l, true});
            f(self.biases[l], ParameterInfo{detail::concat("layer", l, ".bias"), l, false});
        }
        for (std::size_t l = 0; l < self.projections.size(); ++l) {
            f(self.projections[l], ParameterInfo{detail::concat("layer", l, ".embed_proj"), l, true});
        }
    }
    template <typename F> void for_each(F&& f) { visit(*this, std::forward<F>(f)); }
    template <typename F> void for_each(F&& f) const { visit(*this, std::forward<F>(f)); }

    ParameterSet zeros_like() const {
        ParameterSet out;
        for (const auto& w : weights) out.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
        for (const auto& b : biases) out.biases.push_back(Matrix::Zero(b.rows(), b.cols()));
        for (const auto& p : projections) out.projections.push_back(Matrix::Zero(p.rows(), p.cols()));
        return out;
    }

    std::size_t count() const {
        std::size_t n = 0;
        for_each([&](const Matrix& m, const ParameterInfo&) { n += static_cast<std::size_t>(m.size()); });
        return n;
    }

    bool same_layout(const ParameterSet& o) const {
        auto eq = [](const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
            if (a.size() != b.size()) return false;
            for (std::size_t i = 0; i < a.size(); ++i) {
                if (a[i].rows() != b[i].rows() || a[i].cols() != b[i].cols()) return false;
            }
            return true;
        };
        return eq(weights, o.weights) && eq(biases, o.biases) && eq(projections, o.projections);
    }

    friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
        if (!a.same_layout(b)) return false;
        auto eq = [](const std::vector<Matrix>& x, const std::vector<Matrix>& y) {
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (!std::equal(x[i].data(), x[i].data() + x[i].size(), y[i].data())) return false;
            }
            return true;
        };
        return eq(a.weights, b.weights) && eq(a.biases, b.biases) && eq(a.projections, b.projections);
    }
};

/// Fully connected network: ReLU on hidden layers, identity output.
///
/// With embed_injection set, hidden layer l adds `embedding * projections[l]`
/// to its pre-activation, so every hidden layer sees the conditioning signal.
struct MlpNetwork {
    std::vector<std::size_t> layer_sizes;
    bool embed_injection = false;
    std::size_t embed_dim = 0;
    ParameterSet params;

    std::size_t layer_count() const { return layer_sizes.size() - 1; }
    std::size_t hidden_count() const { return layer_sizes.size() - 2; }
    std::size_t input_width() const { return layer_sizes.front(); }
    std::size_t output_width() const { return layer_sizes.back(); }

    /// Throws ShapeError unless sizes and parameter arrays agree.
    void validate() const {
        if (layer_sizes.size() < 2) throw ShapeError("MlpNetwork needs at least input and output widths");
        for (std::size_t w : layer_sizes) {
            if (w == 0) throw ShapeError("MlpNetwork layer width must be positive");
        }
        const std::size_t L = layer_count();
        if (params.weights.size() != L || params.biases.size() != L) {
            throw ShapeError(detail::concat("MlpNetwork: expected ", L, " weight/bias arrays, got ",
                                            params.weights.size(), "/", params.biases.size()));
        }
        for (std::size_t l = 0; l < L; ++l) {
            const auto in = static_cast<Eigen::Index>(layer_sizes[l]);
            const auto out = static_cast<Eigen::Index>(layer_sizes[l + 1]);
            if (params.weights[l].rows() != in || params.weights[l].cols() != out) {
                throw ShapeError(detail::concat("layer ", l, " weight ", shape_of(params.weights[l]),
                                                ", expected (", in, "x", out, ")"));
            }
            if (params.biases[l].rows() != 1 || params.biases[l].cols() != out) {
                throw ShapeError(detail::concat("layer ", l, " bias ", shape_of(params.biases[l]),
                                                ", expected (1x", out, ")"));
            }
        }
        const std::size_t expected_proj = embed_injection ? hidden_count() : 0;
        if (params.projections.size() != expected_proj) {
            throw ShapeError(detail::concat("MlpNetwork: expected ", expected_proj, " embedding projections, got ",
                                            params.projections.size()));
        }
        for (std::size_t l = 0; l < params.projections.size(); ++l) {
            if (params.projections[l].rows() != static_cast<Eigen::Index>(embed_dim) ||
                params.projections[l].cols() != static_cast<Eigen::Index>(layer_sizes[l + 1])) {
                throw ShapeError(detail::concat("layer ", l, " embed_proj ", shape_of(params.projections[l]),
                                                ", expected (", embed_dim, "x", layer_sizes[l + 1], ")"));
            }
        }
    }

    static MlpNetwork zeros(std::vector<std::size_t> sizes, std::size_t embed_dim = 0) {
        MlpNetwork net;
        net.layer_sizes = std::move(sizes);
        net.embed_injection = embed_dim > 0;
        net.embed_dim = embed_dim;
        if (net.layer_sizes.size() < 2) throw ShapeError("MlpNetwork needs at least input and output widths");
        for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
            const auto in = static_cast<Eigen::Index>(net.layer_sizes[l]);
            const auto out = static_cast<Eigen::Index>(net.layer_sizes[l + 1]);
            net.params.weights.push_back(Matrix::Zero(in, out));
            net.params.biases.push_back(Matrix::Zero(1, out));
            if (net.embed_injection && l + 2 < net.layer_sizes.size()) {
                net.params.projections.push_back(Matrix::Zero(static_cast<Eigen::Index>(embed_dim), out));
            }
        }
        net.validate();
        return net;
    }

    /// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
    static MlpNetwork glorot(std::vector<std::size_t> sizes, Rng& rng, std::size_t embed_dim = 0) {
        MlpNetwork net = zeros(std::move(sizes), embed_dim);
        auto fill = [&rng](Matrix& m) {
            const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
        };
        for (auto& w : net.params.weights) fill(w);
        for (auto& p : net.params.projections) fill(p);
        return net;
    }
};

/// Timestep conditioning for a batch: input row r uses embedding `table.row(index[r])`.
/// An empty index broadcasts table row 0 to every input row.
struct Conditioning {
    Matrix table;
    std::vector<std::size_t> index;

    static Conditioning broadcast(const std::vector<double>& embedding) {
        Conditioning c;
        c.table = Matrix(1, static_cast<Eigen::Index>(embedding.size()));
        for (std::size_t j = 0; j < embedding.size(); ++j) c.table(0, static_cast<Eigen::Index>(j)) = embedding[j];
        return c;
    }

    std::size_t row_of(std::size_t r) const { return index.empty() ? 0 : index[r]; }
};

/// All layer outputs of one forward pass. outputs[0] is the input,
/// outputs[l + 1] the post-activation of layer l.
struct Activations {
    std::vector<Matrix> outputs;
    std::vector<std::size_t> layer_sizes;
    bool conditioned = false;
    Conditioning conditioning;

    DenseTensor output() const { return DenseTensor(outputs.back()); }
    std::size_t rows() const { return static_cast<std::size_t>(outputs.front().rows()); }
};

struct Gradients {
    ParameterSet params;
    DenseTensor input;
};

namespace detail {

inline void check_forward_inputs(const MlpNetwork& net, const DenseTensor& x, const Conditioning* cond) {
    if (x.cols() != net.input_width()) {
        throw ShapeError(concat("forward: input ", x.shape(), " does not match network input width ",
                                net.input_width()));
    }
    if (net.embed_injection && cond == nullptr) {
        throw ShapeError("forward: network expects a timestep embedding but none was given");
    }
    if (!net.embed_injection && cond != nullptr) {
        throw ShapeError("forward: embedding given to a network without embedding injection");
    }
    if (cond != nullptr) {
        if (cond->table.cols() != static_cast<Eigen::Index>(net.embed_dim)) {
            throw ShapeError(concat("forward: embedding width ", cond->table.cols(), " does not match ",
                                    net.embed_dim));
        }
        if (!cond->index.empty() && cond->index.size() != x.rows()) {
            throw ShapeError(concat("forward: conditioning index has ", cond->index.size(), " rows, input ",
                                    x.shape()));
        }
        for (std::size_t k : cond->index) {
            if (k >= static_cast<std::size_t>(cond->table.rows())) {
                throw RangeError(concat("forward: conditioning index ", k, " outside table of ",
                                        cond->table.rows(), " rows"));
            }
        }
    }
}

inline void add_projection(Matrix& pre, const Matrix& projected, const Conditioning& cond) {
    if (cond.index.empty()) {
        pre.rowwise() += projected.row(0);
    } else {
        for (Eigen::Index r = 0; r < pre.rows(); ++r) {
            pre.row(r) += projected.row(static_cast<Eigen::Index>(cond.index[static_cast<std::size_t>(r)]));
        }
    }
}

inline Activations forward_impl(const MlpNetwork& net, const DenseTensor& x, const Conditioning* cond) {
    check_forward_inputs(net, x, cond);
    Activations act;
    act.layer_sizes = net.layer_sizes;
    act.conditioned = cond != nullptr;
    if (cond) act.conditioning = *cond;
    act.outputs.reserve(net.layer_count() + 1);
    act.outputs.push_back(x.matrix());
    const std::size_t L = net.layer_count();
    for (std::size_t l = 0; l < L; ++l) {
        Matrix pre = act.outputs.back() * net.params.weights[l];
        pre.rowwise() += net.params.biases[l].row(0);
        if (l + 1 < L) {
            if (cond) {
                const Matrix projected = cond->table * net.params.projections[l];
                add_projection(pre, projected, *cond);
            }
            pre = pre.cwiseMax(0.0);
        }
        act.outputs.push_back(std::move(pre));
    }
    return act;
}

}  // namespace detail

/// Forward pass of an unconditioned network.
inline Activations forward(const MlpNetwork& net, const DenseTensor& x) {
    return detail::forward_impl(net, x, nullptr);
}

/// Forward pass with timestep conditioning; the network must have embed_injection set.
inline Activations forward(const MlpNetwork& net, const DenseTensor& x, const Conditioning& cond) {
    return detail::forward_impl(net, x, &cond);
}

/// Reverse-mode pass. Returns parameter gradients and dLoss/dInput.
inline Gradients backward(const MlpNetwork& net, const Activations& act, const DenseTensor& output_grad) {
    const std::size_t L = net.layer_count();
    if (act.layer_sizes != net.layer_sizes || act.outputs.size() != L + 1) {
        throw ShapeError("backward: activations were not produced by this network architecture");
    }
    if (act.conditioned != net.embed_injection) {
        throw ShapeError("backward: activation conditioning does not match the network");
    }
    const Matrix& last = act.outputs.back();
    if (static_cast<Eigen::Index>(output_grad.rows()) != last.rows() ||
        static_cast<Eigen::Index>(output_grad.cols()) != last.cols()) {
        throw ShapeError(detail::concat("backward: output_grad ", output_grad.shape(), " vs final activation ",
                                        shape_of(last)));
    }

    Gradients grads;
    grads.params = net.params.zeros_like();
    Matrix g = output_grad.matrix();
    for (std::size_t l = L; l-- > 0;) {
        if (l + 1 < L) {
            // ReLU mask from the post-activation of layer l.
            g = g.cwiseProduct((act.outputs[l + 1].array() > 0.0).cast<double>().matrix());
            if (net.embed_injection) {
                const auto& cond = act.conditioning;
                Matrix summed = Matrix::Zero(cond.table.rows(), g.cols());
                for (Eigen::Index r = 0; r < g.rows(); ++r) {
                    summed.row(static_cast<Eigen::Index>(cond.row_of(static_cast<std::size_t>(r)))) += g.row(r);
                }
                grads.params.projections[l].noalias() = cond.table.transpose() * summed;
            }
        }
        grads.params.weights[l].noalias() = act.outputs[l].transpose() * g;
        grads.params.biases[l] = g.colwise().sum();
        Matrix next = g * net.params.weights[l].transpose();
        g = std::move(next);
    }
    grads.input = DenseTensor(std::move(g));
    return grads;
}

/// Final-layer output only.
inline DenseTensor infer(const MlpNetwork& net, const DenseTensor& x) { return forward(net, x).output(); }
inline DenseTensor infer(const MlpNetwork& net, const DenseTensor& x, const Conditioning& cond) {
    return forward(net, x, cond).output();
}

}  // namespace purifynet
