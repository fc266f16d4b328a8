// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "purifynet/attacks.hpp"
#include "purifynet/checkpoint.hpp"
#include "purifynet/classifier.hpp"
#include "purifynet/config.hpp"
#include "purifynet/datasets.hpp"
#include "purifynet/diffusion.hpp"
#include "purifynet/errors.hpp"
#include "purifynet/harness.hpp"

namespace purifynet {

namespace fs = std::filesystem;

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_runtime = 2 };

/// Artifacts that a command needs but cannot find; the message lists all of them.
class MissingArtifacts : public std::runtime_error {
public:
    explicit MissingArtifacts(const std::vector<fs::path>& paths) : std::runtime_error(format(paths)) {}

private:
    static std::string format(const std::vector<fs::path>& paths) {
        std::string s = "missing artifacts:";
        for (const auto& p : paths) s += "\n  " + p.string();
        return s;
    }
};

/// Per-invocation state: resolved config, run directory and a log sink.
struct RunContext {
    ExperimentConfig config;
    fs::path run_dir;
    std::ostream* log = &std::cout;
    std::vector<fs::path> written;  // relative to run_dir

    void note(const fs::path& p) { written.push_back(fs::relative(p, run_dir)); }
};

namespace paths {
inline fs::path train_cache(const fs::path& run) { return run / "data" / "train.json"; }
inline fs::path test_cache(const fs::path& run) { return run / "data" / "test.json"; }
inline fs::path classifier(const fs::path& run) { return run / "models" / "classifier.json"; }
inline fs::path classifier_loss(const fs::path& run) { return run / "models" / "classifier_loss.csv"; }
inline fs::path classifier_eval(const fs::path& run) { return run / "models" / "classifier_eval.json"; }
inline fs::path diffusion(const fs::path& run, std::size_t T) {
    return run / "models" / ("diffusion-T" + std::to_string(T) + ".json");
}
inline fs::path diffusion_loss(const fs::path& run, std::size_t T) {
    return run / "models" / ("diffusion-T" + std::to_string(T) + "_loss.csv");
}
inline fs::path attack_dir(const fs::path& run, std::size_t i, const AttackConfig& a) {
    std::string name = to_string(a.method);
    for (char& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return run / "attacks" / (std::to_string(i) + "-" + name);
}
inline fs::path sweep_dir(const fs::path& run, std::size_t i, const AttackConfig& a) {
    return run / "sweeps" / attack_dir(run, i, a).filename();
}
inline fs::path reports(const fs::path& run) { return run / "reports"; }
}  // namespace paths

namespace detail {

inline std::string utc_stamp(const char* fmt) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, fmt);
    return os.str();
}

inline std::string file_checksum(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
        h ^= static_cast<unsigned char>(*it);
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

inline void write_loss_csv(const fs::path& p, const std::vector<LossLogEntry>& log) {
    std::string text = "epoch,loss\n";
    for (const auto& e : log) text += std::to_string(e.epoch) + "," + format_double(e.loss) + "\n";
    write_text_file(p, text);
}

inline void require_all(const std::vector<fs::path>& needed) {
    std::vector<fs::path> missing;
    for (const auto& p : needed) {
        if (!fs::exists(p)) missing.push_back(p);
    }
    if (!missing.empty()) throw MissingArtifacts(missing);
}

inline Json dataset_cache(const Dataset& d, const std::string& split, const Json& encoder, const Json& source) {
    Json j;
    j["format"] = "purifynet-dataset";
    j["format_version"] = 1;
    j["split"] = split;
    j["source"] = source;
    j["encoder"] = encoder;
    j["dataset"] = dataset_to_json(d);
    return j;
}

inline Dataset read_dataset_cache(const fs::path& p) {
    const Json j = read_json_file(p);
    if (j.value("format", "") != "purifynet-dataset") throw DataError(p.string() + ": not a dataset cache");
    return dataset_from_json(j.at("dataset"));
}

}  // namespace detail

/// Resolves the run directory. A fresh timestamped directory is created when
/// `fresh` is set and no run_name is configured; otherwise the configured
/// run_name or the one recorded in <output_dir>/LATEST is used.
inline fs::path resolve_run_dir(const ExperimentConfig& cfg, bool fresh) {
    const fs::path root(cfg.output_dir);
    const fs::path latest = root / "LATEST";
    std::string name = cfg.run_name;
    if (name.empty() && fresh) {
        name = "run-" + detail::utc_stamp("%Y%m%dT%H%M%SZ");
    } else if (name.empty()) {
        std::ifstream in(latest);
        if (!in || !std::getline(in, name) || name.empty()) {
            throw MissingArtifacts({latest});
        }
    }
    const fs::path dir = root / name;
    fs::create_directories(dir);
    detail::write_text_file(latest, name + "\n");
    return dir;
}

/// Merges this command's artifacts into manifest.json with their checksums.
inline void update_manifest(const RunContext& ctx, const std::string& command) {
    const fs::path p = ctx.run_dir / "manifest.json";
    Json m = fs::exists(p) ? read_json_file(p) : Json::object();
    m["format"] = "purifynet-manifest";
    m["schema_version"] = kConfigSchemaVersion;
    m["config"] = ctx.config.document;
    if (!m.contains("artifacts")) m["artifacts"] = Json::object();
    for (const auto& rel : ctx.written) {
        m["artifacts"][rel.generic_string()] = Json{{"checksum", detail::file_checksum(ctx.run_dir / rel)},
                                                    {"bytes", fs::file_size(ctx.run_dir / rel)},
                                                    {"command", command}};
    }
    m["last_command"] = Json{{"name", command}, {"finished_utc", detail::utc_stamp("%Y-%m-%dT%H:%M:%SZ")}};
    write_json_file(p, m);
}

// ---- preprocess ---------------------------------------------------------------

struct PreparedData {
    Dataset train;
    Dataset test;
    Json encoder;  // null for synthetic data
};

inline PreparedData prepare_data(const DatasetConfig& cfg) {
    PreparedData out;
    const Rng root(cfg.seed);
    if (cfg.kind == "synthetic") {
        SyntheticConfig syn = cfg.synthetic;
        syn.seed = cfg.seed;
        const Dataset all = make_synthetic(syn);
        Rng split_rng = root.derive(10);
        auto [tr, te] = split(all, cfg.train_fraction, 1.0 - cfg.train_fraction, split_rng);
        out.train = std::move(tr);
        out.test = std::move(te);
    } else {
        FeatureSchema schema = cfg.kind == "nslkdd" ? nslkdd_schema() : unswnb15_schema();
        if (!cfg.schema_path.empty()) schema = FeatureSchema::from_json(read_json_file(cfg.schema_path));
        const RecordTable train_rec = load_csv(cfg.train_path, schema);
        const RecordTable test_rec = load_csv(cfg.test_path, schema);
        const EncoderState enc = fit_encoder(train_rec);
        out.train = transform(train_rec, enc);
        out.test = transform(test_rec, enc);
        out.encoder = enc.to_json();
    }
    if (cfg.subsample_n > 0 && cfg.subsample_n < out.train.size()) {
        Rng r = root.derive(11);
        out.train = subsample(out.train, cfg.subsample_n, true, r);
    }
    if (cfg.test_subsample_n > 0 && cfg.test_subsample_n < out.test.size()) {
        Rng r = root.derive(12);
        out.test = subsample(out.test, cfg.test_subsample_n, true, r);
    }
    return out;
}

inline void cmd_preprocess(RunContext& ctx) {
    const auto& cfg = ctx.config;
    const PreparedData data = prepare_data(cfg.dataset);
    const Json source = cfg.document.at("dataset");
    write_json_file(paths::train_cache(ctx.run_dir), detail::dataset_cache(data.train, "train", data.encoder, source));
    write_json_file(paths::test_cache(ctx.run_dir), detail::dataset_cache(data.test, "test", data.encoder, source));
    ctx.note(paths::train_cache(ctx.run_dir));
    ctx.note(paths::test_cache(ctx.run_dir));
    *ctx.log << "preprocess: train " << data.train.size() << " rows, test " << data.test.size() << " rows, "
             << data.train.feature_count() << " features\n";
}

// ---- train ------------------------------------------------------------------

inline void cmd_train(RunContext& ctx, const std::string& which) {
    if (which != "classifier" && which != "diffusion" && which != "all") {
        throw ConfigError("train: model must be classifier, diffusion or all");
    }
    const auto& cfg = ctx.config;
    detail::require_all({paths::train_cache(ctx.run_dir), paths::test_cache(ctx.run_dir)});
    const Dataset train = detail::read_dataset_cache(paths::train_cache(ctx.run_dir));
    if (which != "diffusion") {
        const Dataset test = detail::read_dataset_cache(paths::test_cache(ctx.run_dir));
        const ClassifierTrainResult r = train_classifier(train, cfg.classifier);
        write_json_file(paths::classifier(ctx.run_dir), classifier_checkpoint(r.model, cfg.classifier));
        detail::write_loss_csv(paths::classifier_loss(ctx.run_dir), r.loss_log);
        Json eval = Json::array();
        for (const auto* d : {&train, &test}) {
            eval.push_back(Json{{"split", d == &train ? "train" : "test"}, {"accuracy", accuracy(r.model, *d)},
                                {"n", d->size()}});
            *ctx.log << "classifier: " << eval.back()["split"].get<std::string>() << " accuracy "
                     << eval.back()["accuracy"].get<double>() << "\n";
        }
        write_json_file(paths::classifier_eval(ctx.run_dir), eval);
        for (const auto& p : {paths::classifier(ctx.run_dir), paths::classifier_loss(ctx.run_dir),
                              paths::classifier_eval(ctx.run_dir)}) {
            ctx.note(p);
        }
    }
    if (which != "classifier") {
        for (std::size_t T : cfg.diffusion_T_values()) {
            const DiffusionTrainResult r = train_diffusion(train.features, cfg.schedule.build(T), cfg.diffusion);
            DiffusionModel model = r.model;
            model.variance = cfg.reverse_variance;
            write_json_file(paths::diffusion(ctx.run_dir, T), diffusion_checkpoint(model, cfg.diffusion));
            detail::write_loss_csv(paths::diffusion_loss(ctx.run_dir, T), r.loss_log);
            ctx.note(paths::diffusion(ctx.run_dir, T));
            ctx.note(paths::diffusion_loss(ctx.run_dir, T));
            *ctx.log << "diffusion T=" << T << ": final loss "
                     << (r.loss_log.empty() ? 0.0 : r.loss_log.back().loss) << "\n";
        }
    }
}

// ---- attack -----------------------------------------------------------------

inline void cmd_attack(RunContext& ctx) {
    const auto& cfg = ctx.config;
    if (cfg.attacks.empty()) throw ConfigError("attack: no attacks configured");
    detail::require_all({paths::test_cache(ctx.run_dir), paths::classifier(ctx.run_dir)});
    const Dataset test = detail::read_dataset_cache(paths::test_cache(ctx.run_dir));
    const IdsModel ids = classifier_from_checkpoint(read_json_file(paths::classifier(ctx.run_dir)));
    for (std::size_t i = 0; i < cfg.attacks.size(); ++i) {
        const AdversarialBatch b = run_attack(ids, test.features, test.labels, cfg.attacks[i]);
        const fs::path dir = paths::attack_dir(ctx.run_dir, i, cfg.attacks[i]);
        write_adversarial_batch(b, dir);
        for (const char* f : {"originals.csv", "adversarial.csv", "labels.csv", "metadata.json"}) ctx.note(dir / f);
        *ctx.log << "attack " << to_string(cfg.attacks[i].method) << ": success rate " << b.success_rate()
                 << ", adversarial accuracy " << accuracy(ids, b.adversarial, b.true_labels) << "\n";
    }
}

// ---- sweep / report ---------------------------------------------------------

namespace detail {

inline Dataset train_eval_subset(const ExperimentConfig& cfg, const Dataset& train) {
    if (cfg.sweep.train_eval_rows == 0 || cfg.sweep.train_eval_rows >= train.size()) return train;
    Rng r = Rng(cfg.dataset.seed).derive(20);
    return subsample(train, cfg.sweep.train_eval_rows, true, r);
}

inline void emit_both(RunContext& ctx, const fs::path& stem, const auto& report) {
    fs::path csv = stem, json = stem;
    csv += ".csv";
    json += ".json";
    emit_report(report, csv, ReportFormat::csv);
    emit_report(report, json, ReportFormat::json);
    ctx.note(csv);
    ctx.note(json);
}

}  // namespace detail

/// One sweep per (attack batch, seed) plus a per-attack aggregate. Returns the soft-check warnings.
inline std::vector<std::string> cmd_sweep(RunContext& ctx) {
    const auto& cfg = ctx.config;
    std::vector<fs::path> needed{paths::train_cache(ctx.run_dir), paths::test_cache(ctx.run_dir),
                                 paths::classifier(ctx.run_dir), paths::diffusion(ctx.run_dir, cfg.schedule.T)};
    for (std::size_t i = 0; i < cfg.attacks.size(); ++i) {
        needed.push_back(paths::attack_dir(ctx.run_dir, i, cfg.attacks[i]) / "metadata.json");
    }
    detail::require_all(needed);
    const Dataset train = detail::train_eval_subset(cfg, detail::read_dataset_cache(paths::train_cache(ctx.run_dir)));
    const Dataset test = detail::read_dataset_cache(paths::test_cache(ctx.run_dir));
    const IdsModel ids = classifier_from_checkpoint(read_json_file(paths::classifier(ctx.run_dir)));
    const DiffusionModel dif = diffusion_from_checkpoint(read_json_file(paths::diffusion(ctx.run_dir, cfg.schedule.T)));
    const auto grid = parse_t_grid(cfg.sweep.t_grid, dif.schedule.T());
    const SweepOptions opt{cfg.threads};
    std::vector<std::string> warnings;
    for (std::size_t i = 0; i < cfg.attacks.size(); ++i) {
        const AdversarialBatch adv = read_adversarial_batch(paths::attack_dir(ctx.run_dir, i, cfg.attacks[i]));
        if (adv.model_checksum != network_checksum(ids.net)) {
            throw DataError("sweep: adversarial batch " + std::to_string(i) + " was generated against another classifier");
        }
        const fs::path dir = paths::sweep_dir(ctx.run_dir, i, cfg.attacks[i]);
        std::vector<SweepResult> runs;
        for (std::uint64_t seed : cfg.sweep.seeds) {
            Rng rng(seed);
            SweepResult s = purification_sweep(dif, ids, train, test, adv, grid, rng, opt);
            s.metadata["seed"] = seed;
            s.metadata["config"] = cfg.document;
            detail::emit_both(ctx, dir / ("seed-" + std::to_string(seed)), s);
            const OptimalStep o = find_optimal_step(s);
            *ctx.log << "sweep " << to_string(adv.config.method) << " seed " << seed << ": t*=" << o.t_star
                     << " acc_adv=" << o.acc_adv_at_t_star << " acc_test=" << o.acc_test_at_t_star
                     << " sigma2*=" << o.sigma2_at_t_star << "\n";
            runs.push_back(std::move(s));
        }
        RunAggregate agg = aggregate_runs(runs);
        agg.metadata["attack"] = adv.config.to_json();
        agg.metadata["seeds"] = cfg.sweep.seeds;
        agg.metadata["config"] = cfg.document;
        detail::emit_both(ctx, dir / "aggregate", agg);
        for (auto& w : recon_soft_check(agg)) warnings.push_back(to_string(adv.config.method) + ": " + w);
    }
    for (const auto& w : warnings) *ctx.log << "warning: " << w << "\n";
    return warnings;
}

/// Merged study tables: composed-variance alignment across T, epsilon study and attack benchmark.
inline void cmd_report(RunContext& ctx) {
    const auto& cfg = ctx.config;
    std::vector<fs::path> needed{paths::train_cache(ctx.run_dir), paths::test_cache(ctx.run_dir),
                                 paths::classifier(ctx.run_dir)};
    for (std::size_t T : cfg.diffusion_T_values()) needed.push_back(paths::diffusion(ctx.run_dir, T));
    for (std::size_t i = 0; i < cfg.attacks.size(); ++i) {
        needed.push_back(paths::attack_dir(ctx.run_dir, i, cfg.attacks[i]) / "metadata.json");
    }
    detail::require_all(needed);
    const Dataset train = detail::train_eval_subset(cfg, detail::read_dataset_cache(paths::train_cache(ctx.run_dir)));
    const Dataset test = detail::read_dataset_cache(paths::test_cache(ctx.run_dir));
    const IdsModel ids = classifier_from_checkpoint(read_json_file(paths::classifier(ctx.run_dir)));
    const SweepOptions opt{cfg.threads};
    const std::uint64_t seed = cfg.sweep.seeds.front();
    const fs::path out = paths::reports(ctx.run_dir);

    std::vector<AdversarialBatch> batches;
    for (std::size_t i = 0; i < cfg.attacks.size(); ++i) {
        batches.push_back(read_adversarial_batch(paths::attack_dir(ctx.run_dir, i, cfg.attacks[i])));
    }
    const DiffusionModel main = diffusion_from_checkpoint(read_json_file(paths::diffusion(ctx.run_dir, cfg.schedule.T)));
    const StudyInputs in{&main, &ids, &train, &test};

    if (!batches.empty()) {
        Rng rng(seed);
        const auto rows = attack_benchmark(in, batches, parse_t_grid(cfg.sweep.t_grid, cfg.schedule.T), rng, opt);
        ReportTable t = study_table("attack_benchmark", rows);
        t.metadata["config"] = cfg.document;
        detail::emit_both(ctx, out / "attack_benchmark", t);
        for (const auto& r : rows) {
            *ctx.log << "benchmark " << r.label << ": acc_adv(0)=" << r.acc_adv_at_0 << " t*=" << r.optimum.t_star
                     << " acc_adv(t*)=" << r.optimum.acc_adv_at_t_star << "\n";
        }
    }
    if (!cfg.sweep.epsilons.empty()) {
        Rng rng(seed);
        AttackConfig base;
        for (const auto& a : cfg.attacks) {
            if (a.method == AttackMethod::fgsm) {
                base = a;
                break;
            }
        }
        const auto rows = epsilon_study(in, cfg.sweep.epsilons, parse_t_grid(cfg.sweep.t_grid, cfg.schedule.T), rng,
                                        base, opt);
        ReportTable t = study_table("epsilon_study", rows);
        t.metadata["config"] = cfg.document;
        detail::emit_both(ctx, out / "epsilon_study", t);
        for (const auto& r : rows) {
            *ctx.log << "epsilon " << r.label << ": t*=" << r.optimum.t_star
                     << " acc_adv(t*)=" << r.optimum.acc_adv_at_t_star << "\n";
        }
    }
    const auto Ts = cfg.diffusion_T_values();
    if (Ts.size() >= 2) {
        const AdversarialBatch* fgsm = nullptr;
        for (const auto& b : batches) {
            if (b.config.method == AttackMethod::fgsm) {
                fgsm = &b;
                break;
            }
        }
        AdversarialBatch generated;
        if (fgsm == nullptr) {
            AttackConfig a;
            generated = run_attack(ids, test.features, test.labels, a);
            fgsm = &generated;
        }
        std::vector<SweepResult> sweeps;
        for (std::size_t T : Ts) {
            const DiffusionModel m = T == cfg.schedule.T ? main
                                                         : diffusion_from_checkpoint(read_json_file(paths::diffusion(ctx.run_dir, T)));
            Rng rng(seed);
            sweeps.push_back(purification_sweep(m, ids, train, test, *fgsm, parse_t_grid(cfg.sweep.t_grid, T), rng, opt));
        }
        ReportTable t = alignment_table(sigma_alignment(sweeps));
        t.metadata["config"] = cfg.document;
        detail::emit_both(ctx, out / "sigma_alignment", t);
        for (const auto& row : t.rows) {
            *ctx.log << "alignment T=" << row[0].dump() << ": t*=" << row[1].dump() << " sigma2*=" << row[3].dump() << "\n";
        }
    }
}

}  // namespace purifynet
