// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "purifynet/checkpoint.hpp"
#include "purifynet/errors.hpp"
#include "purifynet/rng.hpp"
#include "purifynet/tensor.hpp"

namespace purifynet {

enum class ColumnKind { numeric, categorical, label, ignore };

inline std::string to_string(ColumnKind k) {
    switch (k) {
        case ColumnKind::numeric: return "numeric";
        case ColumnKind::categorical: return "categorical";
        case ColumnKind::label: return "label";
        case ColumnKind::ignore: return "ignore";
    }
    return "?";
}

inline ColumnKind column_kind_from_string(const std::string& s) {
    if (s == "numeric") return ColumnKind::numeric;
    if (s == "categorical") return ColumnKind::categorical;
    if (s == "label") return ColumnKind::label;
    if (s == "ignore") return ColumnKind::ignore;
    throw DataError("unknown column kind '" + s + "'");
}

struct ColumnSpec {
    std::string name;
    ColumnKind kind;
};

enum class LabelMode {
    benign_set,  // labels in benign_labels map to 0, everything else to 1
    binary       // label column already holds 0 / 1
};

enum class HeaderMode { detect, present, absent };

struct FeatureSchema {
    std::vector<ColumnSpec> columns;
    LabelMode label_mode = LabelMode::benign_set;
    std::set<std::string> benign_labels{"normal"};
    /// When nonempty, benign_set labels outside benign_labels and this set are rejected.
    std::set<std::string> malicious_labels;
    HeaderMode header = HeaderMode::detect;

    std::size_t label_column() const {
        std::size_t found = columns.size();
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (columns[i].kind == ColumnKind::label) found = i;
        }
        return found;
    }

    void validate() const {
        std::size_t labels = 0, features = 0;
        for (const auto& c : columns) {
            if (c.kind == ColumnKind::label) ++labels;
            if (c.kind == ColumnKind::numeric || c.kind == ColumnKind::categorical) ++features;
        }
        if (labels != 1) throw DataError(detail::concat("schema must have exactly one label column, found ", labels));
        if (features == 0) throw DataError("schema has no feature columns");
    }

    /// Schema file: JSON list of {name, kind}.
    static FeatureSchema from_json(const Json& j) {
        FeatureSchema s;
        const Json& cols = j.is_array() ? j : j.at("columns");
        for (const auto& c : cols) {
            s.columns.push_back({c.at("name").get<std::string>(), column_kind_from_string(c.at("kind").get<std::string>())});
        }
        if (j.is_object()) {
            if (j.contains("label_mode")) {
                s.label_mode = j["label_mode"].get<std::string>() == "binary" ? LabelMode::binary : LabelMode::benign_set;
            }
            if (j.contains("benign_labels")) s.benign_labels = j["benign_labels"].get<std::set<std::string>>();
            if (j.contains("malicious_labels")) s.malicious_labels = j["malicious_labels"].get<std::set<std::string>>();
        }
        s.validate();
        return s;
    }

    Json to_json() const {
        Json cols = Json::array();
        for (const auto& c : columns) cols.push_back(Json{{"name", c.name}, {"kind", to_string(c.kind)}});
        return cols;
    }
};

/// Built-in schema for the NSL-KDD KDDTrain+/KDDTest+ files (no header).
inline FeatureSchema nslkdd_schema() {
    static const char* numeric[] = {
        "duration", "src_bytes", "dst_bytes", "land", "wrong_fragment", "urgent", "hot", "num_failed_logins",
        "logged_in", "num_compromised", "root_shell", "su_attempted", "num_root", "num_file_creations",
        "num_shells", "num_access_files", "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
        "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate", "srv_rerror_rate", "same_srv_rate",
        "diff_srv_rate", "srv_diff_host_rate", "dst_host_count", "dst_host_srv_count", "dst_host_same_srv_rate",
        "dst_host_diff_srv_rate", "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate",
        "dst_host_serror_rate", "dst_host_srv_serror_rate", "dst_host_rerror_rate", "dst_host_srv_rerror_rate"};
    FeatureSchema s;
    s.columns.push_back({"duration", ColumnKind::numeric});
    s.columns.push_back({"protocol_type", ColumnKind::categorical});
    s.columns.push_back({"service", ColumnKind::categorical});
    s.columns.push_back({"flag", ColumnKind::categorical});
    for (std::size_t i = 1; i < std::size(numeric); ++i) s.columns.push_back({numeric[i], ColumnKind::numeric});
    s.columns.push_back({"attack", ColumnKind::label});
    s.columns.push_back({"difficulty", ColumnKind::ignore});
    s.label_mode = LabelMode::benign_set;
    s.benign_labels = {"normal"};
    s.header = HeaderMode::absent;
    return s;
}

/// Built-in schema for the official UNSW-NB15 training/testing set files (with header).
inline FeatureSchema unswnb15_schema() {
    static const char* numeric[] = {
        "dur", "spkts", "dpkts", "sbytes", "dbytes", "rate", "sttl", "dttl", "sload", "dload", "sloss", "dloss",
        "sinpkt", "dinpkt", "sjit", "djit", "swin", "stcpb", "dtcpb", "dwin", "tcprtt", "synack", "ackdat",
        "smean", "dmean", "trans_depth", "response_body_len", "ct_srv_src", "ct_state_ttl", "ct_dst_ltm",
        "ct_src_dport_ltm", "ct_dst_sport_ltm", "ct_dst_src_ltm", "is_ftp_login", "ct_ftp_cmd",
        "ct_flw_http_mthd", "ct_src_ltm", "ct_srv_dst", "is_sm_ips_ports"};
    FeatureSchema s;
    s.columns.push_back({"id", ColumnKind::ignore});
    s.columns.push_back({"dur", ColumnKind::numeric});
    s.columns.push_back({"proto", ColumnKind::categorical});
    s.columns.push_back({"service", ColumnKind::categorical});
    s.columns.push_back({"state", ColumnKind::categorical});
    for (std::size_t i = 1; i < std::size(numeric); ++i) s.columns.push_back({numeric[i], ColumnKind::numeric});
    s.columns.push_back({"attack_cat", ColumnKind::ignore});
    s.columns.push_back({"label", ColumnKind::label});
    s.label_mode = LabelMode::binary;
    s.header = HeaderMode::present;
    return s;
}

/// Parsed CSV rows split into typed column groups, in schema order.
struct RecordTable {
    std::vector<std::string> numeric_names;
    std::vector<std::string> categorical_names;
    std::vector<std::vector<double>> numeric;            // rows x numeric columns
    std::vector<std::vector<std::string>> categorical;   // rows x categorical columns
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '"')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '"')) --e;
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    bool quoted = false;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i < line.size() && line[i] == '"') quoted = !quoted;
        if (i == line.size() || (line[i] == ',' && !quoted)) {
            out.push_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (*b == '+') ++b;
    auto [ptr, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && ptr == e && std::isfinite(out);
}

}  // namespace detail

/// Parses CSV text. `source` names the input in error messages.
inline RecordTable parse_csv(std::istream& in, const FeatureSchema& schema, const std::string& source = "<csv>") {
    schema.validate();
    RecordTable table;
    for (const auto& c : schema.columns) {
        if (c.kind == ColumnKind::numeric) table.numeric_names.push_back(c.name);
        if (c.kind == ColumnKind::categorical) table.categorical_names.push_back(c.name);
    }
    std::string line;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first && line_no == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) {
            line.erase(0, 3);  // UTF-8 BOM
        }
        auto cells = detail::split_csv_line(line);
        if (cells.size() != schema.columns.size()) {
            throw DataError(detail::concat(source, ":", line_no, ": expected ", schema.columns.size(),
                                           " columns, found ", cells.size()));
        }
        if (first) {
            first = false;
            bool header = schema.header == HeaderMode::present;
            if (schema.header == HeaderMode::detect) {
                for (std::size_t i = 0; i < cells.size(); ++i) {
                    double v;
                    if (schema.columns[i].kind == ColumnKind::numeric && !detail::parse_double(cells[i], v)) {
                        header = cells[i] == schema.columns[i].name;
                        break;
                    }
                }
            }
            if (header) continue;
        }
        std::vector<double> nums;
        std::vector<std::string> cats;
        nums.reserve(table.numeric_names.size());
        int label = -1;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const auto& spec = schema.columns[i];
            switch (spec.kind) {
                case ColumnKind::numeric: {
                    double v;
                    if (!detail::parse_double(cells[i], v)) {
                        throw DataError(detail::concat(source, ":", line_no, ": column '", spec.name,
                                                       "' is not a finite number: '", cells[i], "'"));
                    }
                    nums.push_back(v);
                    break;
                }
                case ColumnKind::categorical: cats.push_back(cells[i]); break;
                case ColumnKind::label: {
                    const std::string& v = cells[i];
                    if (schema.label_mode == LabelMode::binary) {
                        if (v == "0") label = 0;
                        else if (v == "1") label = 1;
                        else throw DataError(detail::concat(source, ":", line_no, ": unknown label '", v, "'"));
                    } else {
                        if (v.empty()) throw DataError(detail::concat(source, ":", line_no, ": empty label"));
                        if (schema.benign_labels.count(v)) {
                            label = 0;
                        } else if (schema.malicious_labels.empty() || schema.malicious_labels.count(v)) {
                            label = 1;
                        } else {
                            throw DataError(detail::concat(source, ":", line_no, ": unknown label '", v, "'"));
                        }
                    }
                    break;
                }
                case ColumnKind::ignore: break;
            }
        }
        table.numeric.push_back(std::move(nums));
        table.categorical.push_back(std::move(cats));
        table.labels.push_back(label);
    }
    return table;
}

inline RecordTable load_csv(const std::filesystem::path& path, const FeatureSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return parse_csv(in, schema, path.string());
}

/// Encoding learned from training records only.
struct EncoderState {
    std::vector<std::string> numeric_names;
    std::vector<std::pair<double, double>> numeric_range;  // (min, max); constant columns get (min, min + 1)
    std::vector<std::string> categorical_names;
    std::vector<std::vector<std::string>> vocabularies;    // first-appearance order

    std::size_t feature_count() const {
        std::size_t n = numeric_range.size();
        for (const auto& v : vocabularies) n += v.size();
        return n;
    }

    friend bool operator==(const EncoderState&, const EncoderState&) = default;

    Json to_json() const {
        Json j;
        j["numeric_names"] = numeric_names;
        Json ranges = Json::array();
        for (auto [lo, hi] : numeric_range) ranges.push_back({lo, hi});
        j["numeric_range"] = ranges;
        j["categorical_names"] = categorical_names;
        j["vocabularies"] = vocabularies;
        return j;
    }
    static EncoderState from_json(const Json& j) {
        EncoderState e;
        e.numeric_names = j.at("numeric_names").get<std::vector<std::string>>();
        for (const auto& r : j.at("numeric_range")) e.numeric_range.emplace_back(r.at(0).get<double>(), r.at(1).get<double>());
        e.categorical_names = j.at("categorical_names").get<std::vector<std::string>>();
        e.vocabularies = j.at("vocabularies").get<std::vector<std::vector<std::string>>>();
        return e;
    }
};

inline EncoderState fit_encoder(const RecordTable& train) {
    if (train.size() == 0) throw DataError("fit_encoder: empty training set");
    EncoderState e;
    e.numeric_names = train.numeric_names;
    e.categorical_names = train.categorical_names;
    const std::size_t nn = train.numeric_names.size();
    for (std::size_t c = 0; c < nn; ++c) {
        double lo = train.numeric[0][c], hi = lo;
        for (const auto& row : train.numeric) {
            lo = std::min(lo, row[c]);
            hi = std::max(hi, row[c]);
        }
        if (hi == lo) hi = lo + 1.0;
        e.numeric_range.emplace_back(lo, hi);
    }
    e.vocabularies.resize(train.categorical_names.size());
    for (std::size_t c = 0; c < train.categorical_names.size(); ++c) {
        std::set<std::string> seen;
        for (const auto& row : train.categorical) {
            if (seen.insert(row[c]).second) e.vocabularies[c].push_back(row[c]);
        }
    }
    return e;
}

/// Binary-labelled feature matrix with every value in [0, 1].
struct Dataset {
    DenseTensor features;
    std::vector<int> labels;  // 0 benign, 1 malicious
    std::vector<std::string> feature_names;

    std::size_t size() const { return labels.size(); }
    std::size_t feature_count() const { return features.cols(); }

    void validate() const {
        if (features.rows() != labels.size()) {
            throw ShapeError(detail::concat("dataset: ", features.rows(), " feature rows vs ", labels.size(), " labels"));
        }
        if (!feature_names.empty() && feature_names.size() != features.cols()) {
            throw ShapeError("dataset: feature_names length does not match feature count");
        }
        for (int y : labels) {
            if (y != 0 && y != 1) throw DataError(detail::concat("dataset: label ", y, " is not binary"));
        }
    }

    Dataset select(std::span<const std::size_t> idx) const {
        Dataset out;
        out.features = features.select_rows(idx);
        out.feature_names = feature_names;
        out.labels.reserve(idx.size());
        for (std::size_t i : idx) out.labels.push_back(labels[i]);
        if (idx.empty()) out.features = DenseTensor(0, features.cols());
        return out;
    }

    std::array<std::size_t, 2> class_counts() const {
        std::array<std::size_t, 2> c{0, 0};
        for (int y : labels) ++c[static_cast<std::size_t>(y)];
        return c;
    }
};

/// Numeric columns min-max scaled and clamped to [0, 1]; categoricals one-hot,
/// with unseen categories encoded as an all-zero block.
inline Dataset transform(const RecordTable& records, const EncoderState& enc) {
    if (records.numeric_names != enc.numeric_names || records.categorical_names != enc.categorical_names) {
        throw DataError("transform: record columns do not match the fitted encoder");
    }
    Dataset out;
    for (const auto& n : enc.numeric_names) out.feature_names.push_back(n);
    for (std::size_t c = 0; c < enc.vocabularies.size(); ++c) {
        for (const auto& v : enc.vocabularies[c]) out.feature_names.push_back(enc.categorical_names[c] + "=" + v);
    }
    const std::size_t width = enc.feature_count();
    out.features = DenseTensor(records.size(), width);
    for (std::size_t r = 0; r < records.size(); ++r) {
        auto row = out.features.row(r);
        std::size_t col = 0;
        for (std::size_t c = 0; c < enc.numeric_range.size(); ++c) {
            const auto [lo, hi] = enc.numeric_range[c];
            row[col++] = std::clamp((records.numeric[r][c] - lo) / (hi - lo), 0.0, 1.0);
        }
        for (std::size_t c = 0; c < enc.vocabularies.size(); ++c) {
            const auto& vocab = enc.vocabularies[c];
            const auto it = std::find(vocab.begin(), vocab.end(), records.categorical[r][c]);
            if (it != vocab.end()) row[col + static_cast<std::size_t>(it - vocab.begin())] = 1.0;
            col += vocab.size();
        }
    }
    out.labels = records.labels;
    out.validate();
    return out;
}

namespace detail {

inline void shuffle(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_int(0, i - 1)]);
}

}  // namespace detail

/// Random disjoint (train, test) split; train gets round(train_fraction * n) rows.
inline std::pair<Dataset, Dataset> split(const Dataset& d, double train_fraction, double test_fraction, Rng& rng) {
    if (train_fraction < 0.0 || test_fraction < 0.0 || std::abs(train_fraction + test_fraction - 1.0) > 1e-9) {
        throw RangeError(detail::concat("split: fractions must be non-negative and sum to 1, got ", train_fraction,
                                        " + ", test_fraction));
    }
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    detail::shuffle(idx, rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(d.size())));
    std::vector<std::size_t> a(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> b(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return {d.select(a), d.select(b)};
}

/// n rows without replacement; stratified keeps each class within one row of its share.
inline Dataset subsample(const Dataset& d, std::size_t n, bool stratified, Rng& rng) {
    if (n > d.size()) throw RangeError(detail::concat("subsample: n=", n, " exceeds ", d.size(), " rows"));
    std::vector<std::size_t> picked;
    if (!stratified) {
        std::vector<std::size_t> idx(d.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        detail::shuffle(idx, rng);
        picked.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
    } else {
        std::array<std::vector<std::size_t>, 2> by_class;
        for (std::size_t i = 0; i < d.size(); ++i) by_class[static_cast<std::size_t>(d.labels[i])].push_back(i);
        const double share = d.size() == 0 ? 0.0 : static_cast<double>(by_class[0].size()) / static_cast<double>(d.size());
        auto n0 = static_cast<std::size_t>(std::llround(share * static_cast<double>(n)));
        n0 = std::min(n0, by_class[0].size());
        std::size_t n1 = n - n0;
        if (n1 > by_class[1].size()) {
            n1 = by_class[1].size();
            n0 = n - n1;
        }
        for (std::size_t c = 0; c < 2; ++c) {
            detail::shuffle(by_class[c], rng);
            const std::size_t take = c == 0 ? n0 : n1;
            picked.insert(picked.end(), by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(take));
        }
    }
    std::sort(picked.begin(), picked.end());
    return d.select(picked);
}

/// Two-class Gaussian blobs in [0, 1]^d.
///
/// The first `loud_features` columns separate the classes by `loud_separation`
/// with wide spread; the remaining "quiet" columns carry a small class offset
/// `quiet_separation` (alternating sign) under a narrow spread. Both blobs
/// are centred on 0.5 and clamped to the unit box.
struct SyntheticConfig {
    std::size_t rows = 5000;
    std::size_t features = 20;
    std::size_t loud_features = 2;
    double loud_separation = 0.74;
    double loud_std = 0.3;
    double quiet_separation = 0.03;
    double quiet_std = 0.01;
    double malicious_fraction = 0.5;
    std::uint64_t seed = 0;

    Json to_json() const {
        return Json{{"rows", rows},
                    {"features", features},
                    {"loud_features", loud_features},
                    {"loud_separation", loud_separation},
                    {"loud_std", loud_std},
                    {"quiet_separation", quiet_separation},
                    {"quiet_std", quiet_std},
                    {"malicious_fraction", malicious_fraction},
                    {"seed", seed}};
    }
};

inline Dataset make_synthetic(const SyntheticConfig& cfg) {
    if (cfg.features == 0 || cfg.loud_features > cfg.features) {
        throw RangeError("make_synthetic: need 0 <= loud_features <= features and features > 0");
    }
    if (cfg.malicious_fraction < 0.0 || cfg.malicious_fraction > 1.0) {
        throw RangeError("make_synthetic: malicious_fraction outside [0, 1]");
    }
    Rng rng(cfg.seed);
    Dataset d;
    d.features = DenseTensor(cfg.rows, cfg.features);
    d.labels.resize(cfg.rows);
    for (std::size_t j = 0; j < cfg.features; ++j) {
        d.feature_names.push_back(j < cfg.loud_features ? detail::concat("loud", j) : detail::concat("quiet", j));
    }
    for (std::size_t r = 0; r < cfg.rows; ++r) {
        const int y = rng.uniform() < cfg.malicious_fraction ? 1 : 0;
        d.labels[r] = y;
        const double side = y == 1 ? 0.5 : -0.5;
        auto row = d.features.row(r);
        for (std::size_t j = 0; j < cfg.features; ++j) {
            double mean, sd;
            if (j < cfg.loud_features) {
                mean = 0.5 + side * cfg.loud_separation;
                sd = cfg.loud_std;
            } else {
                const double sign = (j - cfg.loud_features) % 2 == 0 ? 1.0 : -1.0;
                mean = 0.5 + side * sign * cfg.quiet_separation;
                sd = cfg.quiet_std;
            }
            row[j] = std::clamp(rng.normal(mean, sd), 0.0, 1.0);
        }
    }
    return d;
}

inline Json dataset_to_json(const Dataset& d) {
    Json j;
    j["rows"] = d.features.rows();
    j["cols"] = d.features.cols();
    j["feature_names"] = d.feature_names;
    j["labels"] = d.labels;
    j["features"] = std::vector<double>(d.features.values().begin(), d.features.values().end());
    return j;
}

inline Dataset dataset_from_json(const Json& j) {
    Dataset d;
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    const auto values = j.at("features").get<std::vector<double>>();
    d.features = DenseTensor::from_vector(rows, cols, values);
    d.labels = j.at("labels").get<std::vector<int>>();
    d.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    d.validate();
    return d;
}

}  // namespace purifynet
