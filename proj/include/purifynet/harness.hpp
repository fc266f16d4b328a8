// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "purifynet/attacks.hpp"
#include "purifynet/checkpoint.hpp"
#include "purifynet/classifier.hpp"
#include "purifynet/diffusion.hpp"
#include "purifynet/errors.hpp"

namespace purifynet {

inline constexpr int kReportSchemaVersion = 1;

/// Metric columns of a sweep row, in report order.
inline const std::vector<std::string>& sweep_metric_names() {
    static const std::vector<std::string> names{"beta_t",          "sigma2_t",       "acc_train",
                                                "acc_test",        "acc_adv",        "recon_mse_train",
                                                "recon_mse_test",  "recon_mse_adv",  "recon_mse_adv_vs_clean"};
    return names;
}

inline constexpr std::size_t kSweepMetricCount = 9;
inline constexpr std::size_t kCsvMetricCount = 8;  // recon_mse_adv_vs_clean is JSON-only

struct SweepRow {
    std::size_t t = 0;
    double beta_t = 0.0;
    double sigma2_t = 0.0;
    double acc_train = 0.0;
    double acc_test = 0.0;
    double acc_adv = 0.0;
    double recon_mse_train = 0.0;
    double recon_mse_test = 0.0;
    double recon_mse_adv = 0.0;
    double recon_mse_adv_vs_clean = 0.0;

    std::array<double, kSweepMetricCount> metrics() const {
        return {beta_t, sigma2_t, acc_train, acc_test, acc_adv, recon_mse_train, recon_mse_test, recon_mse_adv,
                recon_mse_adv_vs_clean};
    }

    static SweepRow from_metrics(std::size_t t, const std::array<double, kSweepMetricCount>& m) {
        return SweepRow{t, m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8]};
    }

    friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    Json metadata = Json::object();  // schedule, T, attack config, seeds, checksums

    void validate() const {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (i > 0 && rows[i].t <= rows[i - 1].t) throw DataError("sweep: t rows must be strictly increasing");
            for (double v : rows[i].metrics()) {
                if (!std::isfinite(v)) throw NumericError(detail::concat("sweep: non-finite metric at t=", rows[i].t));
            }
        }
    }

    const SweepRow& at_t(std::size_t t) const {
        for (const auto& r : rows) {
            if (r.t == t) return r;
        }
        throw RangeError(detail::concat("sweep: no row for t=", t));
    }

    friend bool operator==(const SweepResult& a, const SweepResult& b) {
        return a.rows == b.rows && a.metadata == b.metadata;
    }
};

struct OptimalStep {
    std::size_t t_star = 0;
    double acc_adv_at_t_star = 0.0;
    double acc_test_at_t_star = 0.0;
    double sigma2_at_t_star = 0.0;
    double beta_at_t_star = 0.0;

    Json to_json() const {
        return Json{{"t_star", t_star},
                    {"acc_adv_at_t_star", acc_adv_at_t_star},
                    {"acc_test_at_t_star", acc_test_at_t_star},
                    {"sigma2_at_t_star", sigma2_at_t_star},
                    {"beta_at_t_star", beta_at_t_star}};
    }
};

/// Per-t mean and population standard deviation of every metric across seeds.
struct RunAggregate {
    std::vector<std::size_t> t;
    std::vector<std::array<double, kSweepMetricCount>> mean;
    std::vector<std::array<double, kSweepMetricCount>> std;
    std::size_t runs = 0;
    Json metadata = Json::object();
};

/// Default grid: every step up to 100, stride 10 to 600, stride 50 to T.
inline std::vector<std::size_t> default_t_grid(std::size_t T) {
    std::vector<std::size_t> g;
    for (std::size_t t = 0; t <= std::min<std::size_t>(T, 100); ++t) g.push_back(t);
    for (std::size_t t = 110; t <= std::min<std::size_t>(T, 600); t += 10) g.push_back(t);
    for (std::size_t t = 650; t <= T; t += 50) g.push_back(t);
    if (g.back() != T) g.push_back(T);
    return g;
}

namespace detail {

/// Runs f(i) for i in [0, n) on up to `threads` workers; rethrows the first failure.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

inline double schedule_beta(const VarianceSchedule& s, std::size_t t) { return t == 0 ? 0.0 : s.beta(t); }
inline double schedule_sigma2(const VarianceSchedule& s, std::size_t t) { return t == 0 ? 0.0 : s.composed_variance(t); }

}  // namespace detail

/// Accuracy and reconstruction loss of one split across the grid.
struct SplitCurve {
    std::vector<double> accuracy;
    std::vector<double> recon_mse;            // against the purifier input
    std::vector<double> recon_mse_reference;  // against `reference` when given
};

struct SweepOptions {
    std::size_t threads = 1;
};

/// Purifies x at every grid step with noise stream derive(t) of Rng(noise_seed).
inline SplitCurve evaluate_split(const DiffusionModel& diffusion, const IdsModel& ids, const DenseTensor& x,
                                 std::span<const int> labels, const std::vector<std::size_t>& t_grid,
                                 std::uint64_t noise_seed, const SweepOptions& opt = {},
                                 const DenseTensor* reference = nullptr) {
    if (x.cols() != diffusion.feature_count() || x.cols() != ids.input_width()) {
        throw ShapeError(detail::concat("sweep: data width ", x.cols(), ", diffusion width ", diffusion.feature_count(),
                                        ", classifier width ", ids.input_width()));
    }
    if (reference) require_same_shape(x, *reference, "sweep reference");
    SplitCurve curve;
    curve.accuracy.resize(t_grid.size());
    curve.recon_mse.resize(t_grid.size());
    curve.recon_mse_reference.resize(t_grid.size());
    const Rng base(noise_seed);
    detail::parallel_for(t_grid.size(), opt.threads, [&](std::size_t i) {
        const std::size_t t = t_grid[i];
        Rng rng = base.derive(t);
        const DenseTensor p = purify(diffusion, x, t, rng);
        curve.accuracy[i] = accuracy(ids, p, labels);
        curve.recon_mse[i] = x.rows() == 0 ? 0.0 : mean_squared_difference(p, x);
        curve.recon_mse_reference[i] = reference && x.rows() != 0 ? mean_squared_difference(p, *reference) : 0.0;
    });
    return curve;
}

inline void check_t_grid(const std::vector<std::size_t>& t_grid, const VarianceSchedule& s) {
    if (t_grid.empty()) throw RangeError("sweep: empty t grid");
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        if (t_grid[i] > s.T()) throw RangeError(detail::concat("sweep: t=", t_grid[i], " exceeds T=", s.T()));
        if (i > 0 && t_grid[i] <= t_grid[i - 1]) throw RangeError("sweep: t grid must be strictly increasing");
    }
}

inline SweepResult assemble_sweep(const VarianceSchedule& s, const std::vector<std::size_t>& t_grid,
                                  const SplitCurve& train, const SplitCurve& test, const SplitCurve& adv) {
    SweepResult out;
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        const std::size_t t = t_grid[i];
        SweepRow r;
        r.t = t;
        r.beta_t = detail::schedule_beta(s, t);
        r.sigma2_t = detail::schedule_sigma2(s, t);
        r.acc_train = train.accuracy[i];
        r.acc_test = test.accuracy[i];
        r.acc_adv = adv.accuracy[i];
        r.recon_mse_train = train.recon_mse[i];
        r.recon_mse_test = test.recon_mse[i];
        r.recon_mse_adv = adv.recon_mse[i];
        r.recon_mse_adv_vs_clean = adv.recon_mse_reference[i];
        out.rows.push_back(r);
    }
    out.metadata["schedule"] = s.to_json();
    out.metadata["T"] = s.T();
    return out;
}

/// Purifies the three splits at every grid step, sharing one noise seed
/// per t across splits, and records accuracy and reconstruction MSE.
inline SweepResult purification_sweep(const DiffusionModel& diffusion, const IdsModel& ids, const Dataset& clean_train,
                                      const Dataset& clean_test, const AdversarialBatch& adv,
                                      const std::vector<std::size_t>& t_grid, Rng& rng, const SweepOptions& opt = {}) {
    check_t_grid(t_grid, diffusion.schedule);
    adv.validate();
    const std::uint64_t seed = rng.next_u64();
    const SplitCurve tr = evaluate_split(diffusion, ids, clean_train.features, clean_train.labels, t_grid, seed, opt);
    const SplitCurve te = evaluate_split(diffusion, ids, clean_test.features, clean_test.labels, t_grid, seed, opt);
    const SplitCurve ad =
        evaluate_split(diffusion, ids, adv.adversarial, adv.true_labels, t_grid, seed, opt, &adv.originals);
    SweepResult out = assemble_sweep(diffusion.schedule, t_grid, tr, te, ad);
    out.metadata["attack"] = adv.config.to_json();
    out.metadata["noise_seed"] = seed;
    out.metadata["classifier_checksum"] = network_checksum(ids.net);
    out.metadata["diffusion_checksum"] = network_checksum(diffusion.noise_net);
    out.metadata["adversarial_model_checksum"] = adv.model_checksum;
    return out;
}

/// argmax of acc_adv over rows with t >= 1; ties go to the smallest t.
inline OptimalStep find_optimal_step(const SweepResult& sweep) {
    const SweepRow* best = nullptr;
    for (const auto& r : sweep.rows) {
        if (r.t < 1) continue;
        if (best == nullptr || r.acc_adv > best->acc_adv || (r.acc_adv == best->acc_adv && r.t < best->t)) best = &r;
    }
    if (best == nullptr) throw DataError("find_optimal_step: sweep has no rows with t >= 1");
    return OptimalStep{best->t, best->acc_adv, best->acc_test, best->sigma2_t, best->beta_t};
}

struct AlignmentRow {
    std::size_t T;
    OptimalStep optimum;
};

struct AlignmentRatio {
    std::size_t T_a;
    std::size_t T_b;
    double ratio;  // sigma2_star(T_a) / sigma2_star(T_b)
};

struct AlignmentTable {
    std::vector<AlignmentRow> rows;
    std::vector<AlignmentRatio> ratios;
};

/// Optimum of each sweep re-expressed on the composed-variance axis, with pairwise ratios.
inline AlignmentTable sigma_alignment(const std::vector<SweepResult>& sweeps) {
    if (sweeps.size() < 2) throw DataError("sigma_alignment: need at least two sweeps");
    const Json attack0 = sweeps[0].metadata.value("attack", Json());
    AlignmentTable table;
    for (const auto& s : sweeps) {
        if (s.metadata.value("attack", Json()) != attack0) throw DataError("sigma_alignment: attack configs differ");
        table.rows.push_back({s.metadata.at("T").get<std::size_t>(), find_optimal_step(s)});
    }
    for (std::size_t a = 0; a < table.rows.size(); ++a) {
        for (std::size_t b = a + 1; b < table.rows.size(); ++b) {
            table.ratios.push_back({table.rows[a].T, table.rows[b].T,
                                    table.rows[a].optimum.sigma2_at_t_star / table.rows[b].optimum.sigma2_at_t_star});
        }
    }
    return table;
}

/// Frozen models and evaluation data shared by the multi-sweep studies.
struct StudyInputs {
    const DiffusionModel* diffusion = nullptr;
    const IdsModel* ids = nullptr;
    const Dataset* train = nullptr;  // usually a subsample of the training split
    const Dataset* test = nullptr;
};

struct StudyRow {
    std::string label;  // method name or epsilon
    double epsilon = 0.0;
    double acc_adv_at_0 = 0.0;
    double attack_success_rate = 0.0;
    OptimalStep optimum;
    SweepResult sweep;
};

namespace detail {

inline std::vector<StudyRow> sweep_batches(const StudyInputs& in, const std::vector<AdversarialBatch>& batches,
                                           const std::vector<std::size_t>& t_grid, Rng& rng, const SweepOptions& opt) {
    if (!in.diffusion || !in.ids || !in.train || !in.test) throw DataError("study: missing models or data");
    check_t_grid(t_grid, in.diffusion->schedule);
    const std::uint64_t seed = rng.next_u64();
    const SplitCurve tr = evaluate_split(*in.diffusion, *in.ids, in.train->features, in.train->labels, t_grid, seed, opt);
    const SplitCurve te = evaluate_split(*in.diffusion, *in.ids, in.test->features, in.test->labels, t_grid, seed, opt);
    std::vector<StudyRow> out;
    for (const auto& adv : batches) {
        const SplitCurve ad = evaluate_split(*in.diffusion, *in.ids, adv.adversarial, adv.true_labels, t_grid, seed,
                                             opt, &adv.originals);
        StudyRow row;
        row.label = to_string(adv.config.method);
        row.epsilon = adv.config.epsilon;
        row.attack_success_rate = adv.success_rate();
        row.sweep = assemble_sweep(in.diffusion->schedule, t_grid, tr, te, ad);
        row.sweep.metadata["attack"] = adv.config.to_json();
        row.sweep.metadata["noise_seed"] = seed;
        row.acc_adv_at_0 = accuracy(*in.ids, adv.adversarial, adv.true_labels);
        row.optimum = find_optimal_step(row.sweep);
        out.push_back(std::move(row));
    }
    return out;
}

inline std::vector<AdversarialBatch> make_batches(const StudyInputs& in, const std::vector<AttackConfig>& attacks) {
    if (!in.ids || !in.test) throw DataError("study: missing models or data");
    std::vector<AdversarialBatch> out;
    for (const auto& cfg : attacks) out.push_back(run_attack(*in.ids, in.test->features, in.test->labels, cfg));
    return out;
}

}  // namespace detail

/// FGSM at each epsilon followed by a sweep; clean curves computed once.
inline std::vector<StudyRow> epsilon_study(const StudyInputs& in, const std::vector<double>& eps_grid,
                                           const std::vector<std::size_t>& t_grid, Rng& rng,
                                           const AttackConfig& base = {}, const SweepOptions& opt = {}) {
    if (eps_grid.empty()) throw DataError("epsilon_study: empty epsilon grid");
    std::vector<AttackConfig> attacks;
    for (double e : eps_grid) {
        AttackConfig c = base;
        c.method = AttackMethod::fgsm;
        c.epsilon = e;
        attacks.push_back(c);
    }
    auto rows = detail::sweep_batches(in, detail::make_batches(in, attacks), t_grid, rng, opt);
    for (auto& r : rows) r.label = detail::format_double(r.epsilon);
    return rows;
}

/// One sweep per attack configuration; clean curves computed once.
inline std::vector<StudyRow> attack_benchmark(const StudyInputs& in, const std::vector<AttackConfig>& attacks,
                                              const std::vector<std::size_t>& t_grid, Rng& rng,
                                              const SweepOptions& opt = {}) {
    if (attacks.empty()) throw DataError("attack_benchmark: no attacks configured");
    return detail::sweep_batches(in, detail::make_batches(in, attacks), t_grid, rng, opt);
}

/// As above, over batches that were generated earlier against the same classifier on the test split.
inline std::vector<StudyRow> attack_benchmark(const StudyInputs& in, const std::vector<AdversarialBatch>& batches,
                                              const std::vector<std::size_t>& t_grid, Rng& rng,
                                              const SweepOptions& opt = {}) {
    if (batches.empty()) throw DataError("attack_benchmark: no attacks configured");
    return detail::sweep_batches(in, batches, t_grid, rng, opt);
}

inline RunAggregate aggregate_runs(const std::vector<SweepResult>& sweeps) {
    if (sweeps.empty()) throw DataError("aggregate_runs: no sweeps");
    RunAggregate agg;
    agg.runs = sweeps.size();
    for (const auto& r : sweeps[0].rows) agg.t.push_back(r.t);
    for (const auto& s : sweeps) {
        if (s.rows.size() != agg.t.size()) throw DataError("aggregate_runs: t grids differ");
        for (std::size_t i = 0; i < agg.t.size(); ++i) {
            if (s.rows[i].t != agg.t[i]) throw DataError("aggregate_runs: t grids differ");
        }
    }
    const double n = static_cast<double>(sweeps.size());
    for (std::size_t i = 0; i < agg.t.size(); ++i) {
        std::array<double, kSweepMetricCount> mean{}, var{};
        for (const auto& s : sweeps) {
            const auto m = s.rows[i].metrics();
            for (std::size_t k = 0; k < kSweepMetricCount; ++k) mean[k] += m[k];
        }
        for (double& v : mean) v /= n;
        for (const auto& s : sweeps) {
            const auto m = s.rows[i].metrics();
            for (std::size_t k = 0; k < kSweepMetricCount; ++k) var[k] += (m[k] - mean[k]) * (m[k] - mean[k]);
        }
        for (double& v : var) v = std::sqrt(v / n);
        agg.mean.push_back(mean);
        agg.std.push_back(var);
    }
    agg.metadata["runs"] = agg.runs;
    agg.metadata["std"] = "population";
    return agg;
}

/// Warnings when mean adversarial reconstruction loss falls below the test one at some t.
inline std::vector<std::string> recon_soft_check(const RunAggregate& agg) {
    std::vector<std::string> warnings;
    if (agg.runs < 3) return warnings;
    for (std::size_t i = 0; i < agg.t.size(); ++i) {
        if (agg.t[i] == 0) continue;
        const double test = agg.mean[i][6], adv = agg.mean[i][7];
        if (adv < test) {
            warnings.push_back(detail::concat("t=", agg.t[i], ": mean recon_mse_adv ", adv, " < recon_mse_test ", test));
        }
    }
    return warnings;
}

// ---- reports ---------------------------------------------------------------

enum class ReportFormat { csv, json };

inline ReportFormat report_format_from_path(const std::filesystem::path& p) {
    return p.extension() == ".json" ? ReportFormat::json : ReportFormat::csv;
}

inline std::string sweep_csv_header() {
    return "t,beta_t,sigma2_t,acc_train,acc_test,acc_adv,recon_mse_train,recon_mse_test,recon_mse_adv";
}

inline std::string sweep_to_csv(const SweepResult& s) {
    std::string out = sweep_csv_header() + "\n";
    for (const auto& r : s.rows) {
        out += std::to_string(r.t);
        const auto m = r.metrics();
        for (std::size_t k = 0; k < kCsvMetricCount; ++k) out += "," + detail::format_double(m[k]);
        out += "\n";
    }
    return out;
}

inline Json sweep_to_json(const SweepResult& s) {
    Json j;
    j["format"] = "purifynet-sweep";
    j["schema_version"] = kReportSchemaVersion;
    j["metadata"] = s.metadata;
    Json rows = Json::array();
    const auto& names = sweep_metric_names();
    for (const auto& r : s.rows) {
        Json row;
        row["t"] = r.t;
        const auto m = r.metrics();
        for (std::size_t k = 0; k < kSweepMetricCount; ++k) row[names[k]] = m[k];
        rows.push_back(std::move(row));
    }
    j["rows"] = std::move(rows);
    return j;
}

inline SweepResult sweep_from_json(const Json& j) {
    if (j.value("format", "") != "purifynet-sweep") throw DataError("not a sweep report");
    if (j.value("schema_version", 0) != kReportSchemaVersion) throw DataError("unsupported sweep schema_version");
    SweepResult s;
    s.metadata = j.at("metadata");
    const auto& names = sweep_metric_names();
    for (const auto& row : j.at("rows")) {
        std::array<double, kSweepMetricCount> m{};
        for (std::size_t k = 0; k < kSweepMetricCount; ++k) m[k] = row.at(names[k]).get<double>();
        s.rows.push_back(SweepRow::from_metrics(row.at("t").get<std::size_t>(), m));
    }
    s.validate();
    return s;
}

inline std::string aggregate_to_csv(const RunAggregate& a) {
    const auto& names = sweep_metric_names();
    std::string out = "t";
    for (std::size_t k = 0; k < kSweepMetricCount; ++k) out += ",mean_" + names[k] + ",std_" + names[k];
    out += "\n";
    for (std::size_t i = 0; i < a.t.size(); ++i) {
        out += std::to_string(a.t[i]);
        for (std::size_t k = 0; k < kSweepMetricCount; ++k) {
            out += "," + detail::format_double(a.mean[i][k]) + "," + detail::format_double(a.std[i][k]);
        }
        out += "\n";
    }
    return out;
}

inline Json aggregate_to_json(const RunAggregate& a) {
    Json j;
    j["format"] = "purifynet-aggregate";
    j["schema_version"] = kReportSchemaVersion;
    j["metadata"] = a.metadata;
    const auto& names = sweep_metric_names();
    Json rows = Json::array();
    for (std::size_t i = 0; i < a.t.size(); ++i) {
        Json row;
        row["t"] = a.t[i];
        for (std::size_t k = 0; k < kSweepMetricCount; ++k) {
            row["mean_" + names[k]] = a.mean[i][k];
            row["std_" + names[k]] = a.std[i][k];
        }
        rows.push_back(std::move(row));
    }
    j["rows"] = std::move(rows);
    return j;
}

/// Flat table for the study summaries: columns plus rows of scalars.
struct ReportTable {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<Json>> rows;
    Json metadata = Json::object();

    std::string to_csv() const {
        std::string out;
        for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
        out += "\n";
        for (const auto& row : rows) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                if (c) out += ",";
                const Json& v = row[c];
                if (v.is_string()) out += v.get<std::string>();
                else if (v.is_number_float()) out += detail::format_double(v.get<double>());
                else out += v.dump();
            }
            out += "\n";
        }
        return out;
    }

    Json to_json() const {
        Json j;
        j["format"] = "purifynet-table";
        j["schema_version"] = kReportSchemaVersion;
        j["name"] = name;
        j["metadata"] = metadata;
        Json rs = Json::array();
        for (const auto& row : rows) {
            Json r;
            for (std::size_t c = 0; c < columns.size(); ++c) r[columns[c]] = row[c];
            rs.push_back(std::move(r));
        }
        j["rows"] = std::move(rs);
        return j;
    }
};

inline ReportTable alignment_table(const AlignmentTable& a) {
    ReportTable t;
    t.name = "sigma_alignment";
    t.columns = {"T", "t_star", "beta_star", "sigma2_star", "acc_adv_star", "acc_test_star"};
    for (const auto& r : a.rows) {
        t.rows.push_back({r.T, r.optimum.t_star, r.optimum.beta_at_t_star, r.optimum.sigma2_at_t_star,
                          r.optimum.acc_adv_at_t_star, r.optimum.acc_test_at_t_star});
    }
    Json ratios = Json::array();
    for (const auto& r : a.ratios) ratios.push_back(Json{{"T_a", r.T_a}, {"T_b", r.T_b}, {"ratio", r.ratio}});
    t.metadata["ratios"] = ratios;
    return t;
}

inline ReportTable study_table(const std::string& name, const std::vector<StudyRow>& rows) {
    ReportTable t;
    t.name = name;
    t.columns = {"attack", "epsilon", "success_rate", "acc_adv_0", "t_star", "sigma2_star", "acc_adv_star",
                 "acc_test_star"};
    for (const auto& r : rows) {
        t.rows.push_back({r.label, r.epsilon, r.attack_success_rate, r.acc_adv_at_0, r.optimum.t_star,
                          r.optimum.sigma2_at_t_star, r.optimum.acc_adv_at_t_star, r.optimum.acc_test_at_t_star});
    }
    return t;
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace detail

inline void emit_report(const SweepResult& s, const std::filesystem::path& path, ReportFormat format) {
    if (s.rows.empty()) throw DataError("emit_report: empty sweep");
    s.validate();
    if (format == ReportFormat::csv) detail::write_text_file(path, sweep_to_csv(s));
    else write_json_file(path, sweep_to_json(s));
}

inline void emit_report(const RunAggregate& a, const std::filesystem::path& path, ReportFormat format) {
    if (a.t.empty()) throw DataError("emit_report: empty aggregate");
    if (format == ReportFormat::csv) detail::write_text_file(path, aggregate_to_csv(a));
    else write_json_file(path, aggregate_to_json(a));
}

inline void emit_report(const ReportTable& t, const std::filesystem::path& path, ReportFormat format) {
    if (t.rows.empty()) throw DataError("emit_report: empty table " + t.name);
    if (format == ReportFormat::csv) detail::write_text_file(path, t.to_csv());
    else write_json_file(path, t.to_json());
}

}  // namespace purifynet
