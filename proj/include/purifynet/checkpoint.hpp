// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "purifynet/errors.hpp"
#include "purifynet/mlp.hpp"

namespace purifynet {

using Json = nlohmann::ordered_json;

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline std::vector<double> flatten(const Matrix& m) { return {m.data(), m.data() + m.size()}; }

inline Matrix unflatten(const Json& arr, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
    if (!arr.is_array() || static_cast<Eigen::Index>(arr.size()) != rows * cols) {
        throw DataError(concat("checkpoint: ", what, " expects ", rows * cols, " values"));
    }
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows * cols; ++i) m.data()[i] = arr[static_cast<std::size_t>(i)].get<double>();
    return m;
}

}  // namespace detail

/// Self-describing JSON form of a network. Parameters are flat row-major
/// arrays in layer order: all weights and biases per layer, then embedding
/// projections.
inline Json network_to_json(const MlpNetwork& net) {
    net.validate();
    Json j;
    j["layer_sizes"] = net.layer_sizes;
    std::vector<std::string> acts(net.layer_count(), "relu");
    acts.back() = "identity";
    j["activations"] = acts;
    j["embed_injection"] = net.embed_injection;
    j["embed_dim"] = net.embed_dim;
    Json params = Json::array();
    net.params.for_each([&](const Matrix& m, const ParameterInfo& info) {
        params.push_back(Json{{"name", info.name},
                              {"shape", {m.rows(), m.cols()}},
                              {"values", detail::flatten(m)}});
    });
    j["parameters"] = std::move(params);
    return j;
}

inline MlpNetwork network_from_json(const Json& j) {
    try {
        auto sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
        const bool inject = j.at("embed_injection").get<bool>();
        const auto embed_dim = inject ? j.at("embed_dim").get<std::size_t>() : std::size_t{0};
        MlpNetwork net = MlpNetwork::zeros(sizes, embed_dim);
        const auto acts = j.at("activations").get<std::vector<std::string>>();
        if (acts.size() != net.layer_count()) throw DataError("checkpoint: activation list length mismatch");
        for (std::size_t l = 0; l < acts.size(); ++l) {
            const std::string expected = l + 1 == acts.size() ? "identity" : "relu";
            if (acts[l] != expected) {
                throw DataError(detail::concat("checkpoint: unsupported activation '", acts[l], "' at layer ", l));
            }
        }
        const Json& params = j.at("parameters");
        std::size_t k = 0;
        net.params.for_each([&](Matrix& m, const ParameterInfo& info) {
            if (k >= params.size()) throw DataError("checkpoint: missing parameter " + info.name);
            const Json& p = params[k++];
            if (p.at("name").get<std::string>() != info.name) {
                throw DataError("checkpoint: expected parameter " + info.name + ", found " +
                                p.at("name").get<std::string>());
            }
            m = detail::unflatten(p.at("values"), m.rows(), m.cols(), info.name);
        });
        if (k != params.size()) throw DataError("checkpoint: unexpected extra parameters");
        net.validate();
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: malformed network document: ") + e.what());
    }
}

/// FNV-1a over the exact parameter bytes; identifies a model in report metadata.
inline std::string network_checksum(const MlpNetwork& net) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (std::size_t w : net.layer_sizes) feed(&w, sizeof w);
    net.params.for_each([&](const Matrix& m, const ParameterInfo&) {
        feed(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    });
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << j.dump(1) << '\n';
    if (!out) throw DataError("write failed: " + path.string());
}

inline Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

/// Checkpoint document: format tag, version, network and the training config used.
inline Json make_checkpoint(const std::string& kind, const MlpNetwork& net, const Json& training_config,
                            const Json& extra = Json::object()) {
    Json j;
    j["format"] = "purifynet-checkpoint";
    j["format_version"] = kCheckpointVersion;
    j["kind"] = kind;
    j["network"] = network_to_json(net);
    j["training_config"] = training_config;
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    return j;
}

inline void check_checkpoint_header(const Json& j, const std::string& kind) {
    if (!j.is_object() || j.value("format", "") != "purifynet-checkpoint") {
        throw DataError("not a purifynet checkpoint");
    }
    if (!j.contains("format_version") || j["format_version"].get<int>() != kCheckpointVersion) {
        throw DataError("unsupported checkpoint format_version");
    }
    if (j.value("kind", "") != kind) {
        throw DataError("checkpoint kind is '" + j.value("kind", "") + "', expected '" + kind + "'");
    }
}

}  // namespace purifynet
