// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "purifynet/attacks.hpp"
#include "purifynet/checkpoint.hpp"
#include "purifynet/classifier.hpp"
#include "purifynet/datasets.hpp"
#include "purifynet/diffusion.hpp"
#include "purifynet/errors.hpp"
#include "purifynet/harness.hpp"

namespace purifynet {

inline constexpr int kConfigSchemaVersion = 1;

struct DatasetConfig {
    std::string kind = "synthetic";  // synthetic | nslkdd | unswnb15
    std::string train_path;
    std::string test_path;
    std::string schema_path;         // optional custom schema for CSV kinds
    std::size_t subsample_n = 0;     // stratified subsample of the training split; 0 keeps all
    std::size_t test_subsample_n = 0;
    double train_fraction = 0.8;     // synthetic only
    std::uint64_t seed = 0;
    SyntheticConfig synthetic;
};

struct ScheduleConfig {
    std::size_t T = 1000;
    double beta1 = 1e-4;
    double betaT = 0.02;

    VarianceSchedule build() const { return linear_schedule(T, beta1, betaT); }
    VarianceSchedule build(std::size_t other_T) const { return linear_schedule(other_T, beta1, betaT); }
};

struct SweepConfig {
    Json t_grid = "default";  // "default", list of steps, or "a:b:stride,c,..."
    std::vector<std::uint64_t> seeds{0};
    std::size_t train_eval_rows = 1000;  // stratified subsample of train used for acc_train; 0 = all
    std::vector<std::size_t> alignment_T;
    std::vector<double> epsilons;
};

struct ExperimentConfig {
    int schema_version = kConfigSchemaVersion;
    std::string preset;
    DatasetConfig dataset;
    ClassifierTrainConfig classifier;
    DiffusionTrainConfig diffusion;
    ScheduleConfig schedule;
    ReverseVariance reverse_variance = ReverseVariance::posterior;
    std::vector<AttackConfig> attacks;
    SweepConfig sweep;
    std::string output_dir = "runs";
    std::string run_name;
    std::size_t threads = 1;
    Json document;  // fully resolved configuration, echoed into reports

    /// Every T that needs a trained diffusion model, main schedule first.
    std::vector<std::size_t> diffusion_T_values() const {
        std::vector<std::size_t> out{schedule.T};
        for (std::size_t t : sweep.alignment_T) {
            if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
        }
        return out;
    }
};

/// Parses "0:60:2,70,80" (inclusive ranges) or a JSON list; "default" gives the dense default grid.
inline std::vector<std::size_t> parse_t_grid(const Json& spec, std::size_t T) {
    std::vector<std::size_t> g;
    if (spec.is_string() && spec.get<std::string>() == "default") return default_t_grid(T);
    if (spec.is_array()) {
        for (const auto& v : spec) g.push_back(v.get<std::size_t>());
    } else if (spec.is_string()) {
        const std::string s = spec.get<std::string>();
        std::size_t start = 0;
        while (start <= s.size()) {
            std::size_t end = s.find(',', start);
            if (end == std::string::npos) end = s.size();
            const std::string item = detail::trim(std::string_view(s).substr(start, end - start));
            start = end + 1;
            if (item.empty()) continue;
            std::vector<std::size_t> parts;
            std::size_t p = 0;
            while (p <= item.size()) {
                std::size_t q = item.find(':', p);
                if (q == std::string::npos) q = item.size();
                const std::string num = item.substr(p, q - p);
                std::size_t v = 0;
                const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
                if (ec != std::errc() || ptr != num.data() + num.size() || num.empty()) {
                    throw ConfigError("sweep.t_grid: bad entry '" + item + "'");
                }
                parts.push_back(v);
                p = q + 1;
            }
            if (parts.size() == 1) {
                g.push_back(parts[0]);
            } else if (parts.size() == 3 && parts[2] > 0 && parts[0] <= parts[1]) {
                for (std::size_t t = parts[0]; t <= parts[1]; t += parts[2]) g.push_back(t);
            } else {
                throw ConfigError("sweep.t_grid: bad range '" + item + "'");
            }
        }
    } else {
        throw ConfigError("sweep.t_grid: expected \"default\", a list or a range string");
    }
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    std::erase_if(g, [T](std::size_t t) { return t > T; });
    if (g.empty()) throw ConfigError("sweep.t_grid: no steps within [0, T]");
    return g;
}

namespace detail {

inline Json default_attacks_json(double epsilon) {
    Json a = Json::array();
    for (const char* m : {"FGSM", "BIM", "DeepFool", "JSMA", "CW-L2"}) a.push_back(Json{{"method", m}, {"epsilon", epsilon}});
    return a;
}

inline Json base_document() {
    const ClassifierTrainConfig cls = ClassifierTrainConfig::desk();
    const DiffusionTrainConfig dif = DiffusionTrainConfig::desk();
    const SyntheticConfig syn;
    Json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["preset"] = "desk";
    j["dataset"] = Json{{"kind", "synthetic"},
                        {"train_path", ""},
                        {"test_path", ""},
                        {"schema_path", ""},
                        {"subsample_n", 0},
                        {"test_subsample_n", 0},
                        {"train_fraction", 0.8},
                        {"seed", 0},
                        {"synthetic", syn.to_json()}};
    j["dataset"]["synthetic"].erase("seed");
    j["classifier"] = Json{{"epochs", cls.epochs},
                           {"learning_rate", cls.learning_rate},
                           {"batch_size", cls.batch_size},
                           {"seed", 0},
                           {"hidden_widths", cls.hidden_widths}};
    j["diffusion"] = Json{{"epochs", dif.epochs},
                          {"learning_rate", dif.learning_rate},
                          {"weight_decay", dif.weight_decay},
                          {"batch_size", dif.batch_size},
                          {"seed", 0},
                          {"hidden_layers", dif.hidden_layers},
                          {"hidden_width", dif.hidden_width},
                          {"embed_dim", dif.embed_dim},
                          {"log_interval", dif.log_interval},
                          {"reverse_variance", "posterior"},
                          {"schedule", Json{{"T", 1000}, {"beta1", 1e-4}, {"betaT", 0.02}}}};
    j["attacks"] = default_attacks_json(0.03);
    j["sweep"] = Json{{"t_grid", "0:60:2,70:100:10,120,150,200,300,600"},
                      {"seeds", {0}},
                      {"train_eval_rows", 1000},
                      {"alignment_T", {100}},
                      {"epsilons", {0.01, 0.03, 0.05}}};
    j["output_dir"] = "runs";
    j["run_name"] = "";
    j["threads"] = 1;
    return j;
}

}  // namespace detail

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"desk", "full-standard", "full-constant"};
    return names;
}

/// Full configuration document for a named preset.
inline Json preset_document(const std::string& name) {
    Json j = detail::base_document();
    if (name == "desk") return j;
    if (name != "full-standard" && name != "full-constant") throw ConfigError("unknown preset '" + name + "'");
    j["preset"] = name;
    j["dataset"]["kind"] = "unswnb15";
    const ClassifierTrainConfig full;
    j["classifier"]["epochs"] = full.epochs;
    j["classifier"]["learning_rate"] = full.learning_rate;
    j["classifier"]["hidden_widths"] = full.hidden_widths;
    j["diffusion"]["epochs"] = 200000;
    j["diffusion"]["learning_rate"] = 1e-4;
    j["diffusion"]["batch_size"] = 0;
    j["diffusion"]["hidden_layers"] = 10;
    j["diffusion"]["hidden_width"] = 960;
    j["diffusion"]["log_interval"] = 1000;
    if (name == "full-constant") j["diffusion"]["schedule"]["betaT"] = 1e-4;
    j["sweep"]["t_grid"] = "default";
    j["sweep"]["seeds"] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    j["sweep"]["train_eval_rows"] = 0;
    return j;
}

namespace detail {

inline bool attack_item_path(const std::string& path) { return path.rfind("attacks.", 0) == 0; }

inline bool same_kind(const Json& a, const Json& b) {
    if (a.is_number() && b.is_number()) return true;
    return a.type() == b.type();
}

/// Recursively overlays `user` onto `base`, rejecting keys that base does not define.
inline void merge_strict(Json& base, const Json& user, const std::string& path) {
    if (!user.is_object()) throw ConfigError("config: '" + (path.empty() ? "<root>" : path) + "' must be an object");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string key_path = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("config: unknown key '" + key_path + "'");
        Json& target = base[it.key()];
        if (target.is_object() && it.value().is_object()) {
            merge_strict(target, it.value(), key_path);
            continue;
        }
        if (key_path != "sweep.t_grid" && !same_kind(target, it.value())) {
            throw ConfigError("config: '" + key_path + "' expects a " + std::string(target.type_name()));
        }
        target = it.value();
    }
}

inline Json parse_override_value(const std::string& text) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::exception&) {
        return Json(text);
    }
}

}  // namespace detail

/// Applies "a.b.c=value" to the document. Existing keys only, except inside attack entries.
inline void apply_override(Json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const std::string path = assignment.substr(0, eq);
    const Json value = detail::parse_override_value(assignment.substr(eq + 1));
    Json* node = &doc;
    std::size_t start = 0;
    std::string walked;
    while (true) {
        const std::size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        walked += (walked.empty() ? "" : ".") + key;
        const bool last = dot == std::string::npos;
        if (node->is_array()) {
            std::size_t idx = 0;
            const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), idx);
            if (ec != std::errc() || ptr != key.data() + key.size() || idx >= node->size()) {
                throw ConfigError("--set: bad index in '" + walked + "'");
            }
            node = &(*node)[idx];
        } else if (node->is_object()) {
            if (!node->contains(key)) {
                if (!(last && detail::attack_item_path(walked))) throw ConfigError("--set: unknown key '" + walked + "'");
            }
            node = &(*node)[key];
        } else {
            throw ConfigError("--set: '" + walked + "' is not inside an object");
        }
        if (last) break;
        start = dot + 1;
    }
    if (node->is_string() && !value.is_string() && walked != "sweep.t_grid") {
        *node = assignment.substr(eq + 1);
        return;
    }
    if (!node->is_null() && walked != "sweep.t_grid" && !detail::same_kind(*node, value)) {
        throw ConfigError("--set: '" + walked + "' expects a " + std::string(node->type_name()));
    }
    *node = value;
}

/// Typed view of a fully resolved configuration document.
inline ExperimentConfig config_from_document(const Json& doc, bool check_paths = true) {
    ExperimentConfig c;
    try {
        c.document = doc;
        c.schema_version = doc.at("schema_version").get<int>();
        if (c.schema_version != kConfigSchemaVersion) {
            throw ConfigError(detail::concat("config: unsupported schema_version ", c.schema_version));
        }
        c.preset = doc.at("preset").get<std::string>();
        const Json& d = doc.at("dataset");
        c.dataset.kind = d.at("kind").get<std::string>();
        c.dataset.train_path = d.at("train_path").get<std::string>();
        c.dataset.test_path = d.at("test_path").get<std::string>();
        c.dataset.schema_path = d.at("schema_path").get<std::string>();
        c.dataset.subsample_n = d.at("subsample_n").get<std::size_t>();
        c.dataset.test_subsample_n = d.at("test_subsample_n").get<std::size_t>();
        c.dataset.train_fraction = d.at("train_fraction").get<double>();
        c.dataset.seed = d.at("seed").get<std::uint64_t>();
        const Json& s = d.at("synthetic");
        c.dataset.synthetic.rows = s.at("rows").get<std::size_t>();
        c.dataset.synthetic.features = s.at("features").get<std::size_t>();
        c.dataset.synthetic.loud_features = s.at("loud_features").get<std::size_t>();
        c.dataset.synthetic.loud_separation = s.at("loud_separation").get<double>();
        c.dataset.synthetic.loud_std = s.at("loud_std").get<double>();
        c.dataset.synthetic.quiet_separation = s.at("quiet_separation").get<double>();
        c.dataset.synthetic.quiet_std = s.at("quiet_std").get<double>();
        c.dataset.synthetic.malicious_fraction = s.at("malicious_fraction").get<double>();
        c.dataset.synthetic.seed = c.dataset.seed;
        if (c.dataset.kind != "synthetic" && c.dataset.kind != "nslkdd" && c.dataset.kind != "unswnb15") {
            throw ConfigError("dataset.kind must be synthetic, nslkdd or unswnb15");
        }
        if (c.dataset.train_fraction <= 0.0 || c.dataset.train_fraction >= 1.0) {
            throw ConfigError("dataset.train_fraction must lie in (0, 1)");
        }

        const Json& k = doc.at("classifier");
        c.classifier.epochs = k.at("epochs").get<std::size_t>();
        c.classifier.learning_rate = k.at("learning_rate").get<double>();
        c.classifier.batch_size = k.at("batch_size").get<std::size_t>();
        c.classifier.seed = k.at("seed").get<std::uint64_t>();
        c.classifier.hidden_widths = k.at("hidden_widths").get<std::vector<std::size_t>>();
        c.classifier.validate();

        const Json& f = doc.at("diffusion");
        c.diffusion.epochs = f.at("epochs").get<std::size_t>();
        c.diffusion.learning_rate = f.at("learning_rate").get<double>();
        c.diffusion.weight_decay = f.at("weight_decay").get<double>();
        c.diffusion.batch_size = f.at("batch_size").get<std::size_t>();
        c.diffusion.seed = f.at("seed").get<std::uint64_t>();
        c.diffusion.hidden_layers = f.at("hidden_layers").get<std::size_t>();
        c.diffusion.hidden_width = f.at("hidden_width").get<std::size_t>();
        c.diffusion.embed_dim = f.at("embed_dim").get<std::size_t>();
        c.diffusion.log_interval = f.at("log_interval").get<std::size_t>();
        const auto rv = f.at("reverse_variance").get<std::string>();
        if (rv != "posterior" && rv != "beta") throw ConfigError("diffusion.reverse_variance must be posterior or beta");
        c.reverse_variance = rv == "beta" ? ReverseVariance::beta : ReverseVariance::posterior;
        c.schedule.T = f.at("schedule").at("T").get<std::size_t>();
        c.schedule.beta1 = f.at("schedule").at("beta1").get<double>();
        c.schedule.betaT = f.at("schedule").at("betaT").get<double>();
        if (c.diffusion.epochs < 1) throw ConfigError("diffusion.epochs must be >= 1");
        (void)c.schedule.build();

        for (const auto& a : doc.at("attacks")) c.attacks.push_back(AttackConfig::from_json(a));

        const Json& w = doc.at("sweep");
        c.sweep.t_grid = w.at("t_grid");
        (void)parse_t_grid(c.sweep.t_grid, c.schedule.T);
        c.sweep.seeds = w.at("seeds").get<std::vector<std::uint64_t>>();
        if (c.sweep.seeds.empty()) throw ConfigError("sweep.seeds must be nonempty");
        c.sweep.train_eval_rows = w.at("train_eval_rows").get<std::size_t>();
        c.sweep.alignment_T = w.at("alignment_T").get<std::vector<std::size_t>>();
        for (std::size_t t : c.sweep.alignment_T) (void)c.schedule.build(t);
        c.sweep.epsilons = w.at("epsilons").get<std::vector<double>>();
        for (double e : c.sweep.epsilons) {
            if (!(e >= 0.0)) throw ConfigError("sweep.epsilons must be >= 0");
        }

        c.output_dir = doc.at("output_dir").get<std::string>();
        c.run_name = doc.at("run_name").get<std::string>();
        c.threads = doc.at("threads").get<std::size_t>();
        if (c.threads < 1) throw ConfigError("threads must be >= 1");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const RangeError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const DataError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (check_paths && c.dataset.kind != "synthetic") {
        for (const auto* p : {&c.dataset.train_path, &c.dataset.test_path}) {
            if (p->empty()) throw ConfigError("dataset." + std::string(p == &c.dataset.train_path ? "train_path" : "test_path") + " is required for kind " + c.dataset.kind);
            if (!std::filesystem::exists(*p)) throw ConfigError("dataset path does not exist: " + *p);
        }
        if (!c.dataset.schema_path.empty() && !std::filesystem::exists(c.dataset.schema_path)) {
            throw ConfigError("dataset schema path does not exist: " + c.dataset.schema_path);
        }
    }
    return c;
}

/// Preset (from the user document's "preset", default "desk"), user document, then overrides.
inline ExperimentConfig resolve_config(const Json& user, const std::vector<std::string>& overrides = {},
                                       bool check_paths = true) {
    std::string preset = "desk";
    if (user.is_object() && user.contains("preset")) {
        if (!user["preset"].is_string()) throw ConfigError("config: preset must be a string");
        preset = user["preset"].get<std::string>();
    }
    Json doc = preset_document(preset);
    detail::merge_strict(doc, user, "");
    for (const auto& o : overrides) {
        if (o.rfind("preset=", 0) == 0) throw ConfigError("--set: preset cannot be overridden; set it in the config file");
        apply_override(doc, o);
    }
    if (const char* env = std::getenv("PURIFYNET_OUTPUT_DIR"); env != nullptr && *env != '\0') doc["output_dir"] = env;
    return config_from_document(doc, check_paths);
}

inline ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {},
                                    bool check_paths = true) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    Json user;
    try {
        user = read_json_file(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    return resolve_config(user, overrides, check_paths);
}

}  // namespace purifynet
