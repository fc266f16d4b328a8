// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Usage: acceptance [criterion numbers...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "purifynet/purifynet.hpp"

using namespace purifynet;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        notes.push_back((ok ? "" : "!") + what);
    }
};

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void log(const std::string& s) {
    std::fprintf(stderr, "  %s\n", s.c_str());
    std::fflush(stderr);
}

// ---- shared desk pipeline ----------------------------------------------------

/// Desk preset data and models, built on first use and shared by criteria 4-7 and 9.
class Desk {
public:
    Desk() : cfg_(resolve_config(Json::object())) {}

    const ExperimentConfig& config() const { return cfg_; }

    const PreparedData& data() {
        if (!data_) {
            data_ = prepare_data(cfg_.dataset);
            log(fmt("desk data: train %zu, test %zu, %zu features", data_->train.size(), data_->test.size(),
                    data_->train.feature_count()));
        }
        return *data_;
    }

    const Dataset& train_eval() {
        if (!train_eval_) train_eval_ = detail::train_eval_subset(cfg_, data().train);
        return *train_eval_;
    }

    const IdsModel& classifier() {
        if (!ids_) {
            const auto t0 = Clock::now();
            ids_ = train_classifier(data().train, cfg_.classifier).model;
            log(fmt("classifier trained in %.1fs: train acc %.4f, test acc %.4f", seconds_since(t0),
                    accuracy(*ids_, data().train), accuracy(*ids_, data().test)));
        }
        return *ids_;
    }

    const DiffusionModel& diffusion(std::size_t T) {
        auto it = diffusion_.find(T);
        if (it == diffusion_.end()) {
            const auto t0 = Clock::now();
            DiffusionTrainResult r = train_diffusion(data().train.features, cfg_.schedule.build(T), cfg_.diffusion);
            r.model.variance = cfg_.reverse_variance;
            log(fmt("diffusion T=%zu trained in %.1fs: final loss %.4f", T, seconds_since(t0),
                    r.loss_log.empty() ? 0.0 : r.loss_log.back().loss));
            it = diffusion_.emplace(T, std::move(r.model)).first;
        }
        return it->second;
    }

    std::vector<std::size_t> grid(std::size_t T) const { return parse_t_grid(cfg_.sweep.t_grid, T); }

    const AdversarialBatch& fgsm() {
        if (!fgsm_) {
            AttackConfig a;
            a.method = AttackMethod::fgsm;
            a.epsilon = 0.03;
            fgsm_ = run_attack(classifier(), data().test.features, data().test.labels, a);
        }
        return *fgsm_;
    }

    SweepResult sweep(const AdversarialBatch& adv, std::size_t T, std::uint64_t seed) {
        Rng rng(seed);
        return purification_sweep(diffusion(T), classifier(), train_eval(), data().test, adv, grid(T), rng,
                                  SweepOptions{cfg_.threads});
    }

    /// FGSM eps = 0.03 sweep on the main schedule, first configured seed.
    const SweepResult& main_sweep() {
        if (!main_sweep_) main_sweep_ = sweep(fgsm(), cfg_.schedule.T, cfg_.sweep.seeds.front());
        return *main_sweep_;
    }

    StudyInputs study_inputs() {
        return StudyInputs{&diffusion(cfg_.schedule.T), &classifier(), &train_eval(), &data().test};
    }

private:
    ExperimentConfig cfg_;
    std::optional<PreparedData> data_;
    std::optional<Dataset> train_eval_;
    std::optional<IdsModel> ids_;
    std::map<std::size_t, DiffusionModel> diffusion_;
    std::optional<AdversarialBatch> fgsm_;
    std::optional<SweepResult> main_sweep_;
};

void log_sweep(const SweepResult& s, std::size_t T) {
    log(fmt("sweep T=%zu (t: acc_test / acc_adv / recon_test)", T));
    for (const auto& r : s.rows) {
        log(fmt("  t=%4zu sigma2=%.5f  %.4f / %.4f / %.6f", r.t, r.sigma2_t, r.acc_test, r.acc_adv, r.recon_mse_test));
    }
}

// ---- criteria ----------------------------------------------------------------

Outcome gradients() {
    Outcome o;
    Rng rng(2024);
    double worst = 0.0;
    std::size_t checked = 0;
    const std::size_t networks = 24;
    for (std::size_t i = 0; i < networks; ++i) {
        const auto rep = gradcheck::check(gradcheck::random_problem(rng, i % 2 == 1));
        worst = std::max(worst, rep.max_rel_error);
        checked += rep.checked;
    }
    o.require(worst < 1e-4, fmt("%zu networks, %zu gradient entries, max rel error %.2e < 1e-4", networks, checked, worst));
    return o;
}

struct Moments {
    double mean = 0.0;
    double var = 0.0;
};

Moments moments(const DenseTensor& x) {
    Moments m;
    const double n = static_cast<double>(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) m.mean += x(r, 0);
    m.mean /= n;
    for (std::size_t r = 0; r < x.rows(); ++r) m.var += (x(r, 0) - m.mean) * (x(r, 0) - m.mean);
    m.var /= n;
    return m;
}

Outcome diffusion_math() {
    Outcome o;
    std::size_t exact = 0, total = 0;
    for (const auto& s : {linear_schedule(1000, 1e-4, 0.02), linear_schedule(100, 1e-4, 0.02),
                          linear_schedule(60, 0.05, 0.05)}) {
        for (std::size_t t = 1; t <= s.T(); ++t, ++total) exact += s.alpha_bar(t) + s.composed_variance(t) == 1.0;
    }
    o.require(exact == total, fmt("alpha_bar + sigma2 == 1 exactly at %zu/%zu steps", exact, total));

    const auto s = linear_schedule(60, 0.05, 0.05);
    const std::size_t n = 10000;
    const DenseTensor x0(n, 1, 0.8);
    for (std::size_t t : {1u, 10u, 50u}) {
        Rng rc(100 + t), rs(200 + t);
        const Moments chain = moments(forward_chain(x0, t, s, rc));
        const Moments closed = moments(forward_sample(x0, t, s, rs));
        const double v = s.composed_variance(t);
        const double se_mean = std::sqrt(2.0 * v / static_cast<double>(n));
        const double se_var = v * std::sqrt(4.0 / static_cast<double>(n));
        const double zm = std::abs(chain.mean - closed.mean) / se_mean;
        const double zv = std::abs(chain.var - closed.var) / se_var;
        o.require(zm < 3.0 && zv < 3.0, fmt("t=%zu chain vs closed form: mean %.2f SE, variance %.2f SE", t, zm, zv));
    }

    DiffusionTrainConfig small;
    small.hidden_layers = 2;
    small.hidden_width = 16;
    small.embed_dim = 8;
    Rng init(3);
    const DiffusionModel m = make_diffusion_model(5, linear_schedule(1000, 1e-4, 0.02), small, init);
    Rng src(4);
    DenseTensor x(200, 5);
    for (double& v : x.values()) v = src.uniform();
    Rng r0(5);
    const DenseTensor p = purify(m, x, 0, r0);
    o.require(std::memcmp(p.values().data(), x.values().data(), x.size() * sizeof(double)) == 0,
              "purify(x, 0) is bit-identical to x");
    return o;
}

IdsModel linear_model(const std::vector<double>& w, double b) {
    MlpNetwork net = MlpNetwork::zeros({w.size(), 2});
    for (std::size_t i = 0; i < w.size(); ++i) net.params.weights[0](static_cast<Eigen::Index>(i), 1) = w[i];
    net.params.biases[0](0, 1) = b;
    return IdsModel{net};
}

double row_norm(const DenseTensor& a, const DenseTensor& b, std::size_t r, bool linf) {
    double m = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
        const double d = std::abs(a(r, c) - b(r, c));
        m = linf ? std::max(m, d) : m + d * d;
    }
    return linf ? m : std::sqrt(m);
}

Outcome attack_suite() {
    Outcome o;
    SyntheticConfig sc;
    sc.rows = 400;
    sc.features = 6;
    sc.loud_features = 6;
    sc.loud_separation = 0.06;
    sc.loud_std = 0.02;
    sc.seed = 21;
    const Dataset d = make_synthetic(sc);
    ClassifierTrainConfig cc = ClassifierTrainConfig::desk();
    cc.epochs = 150;
    cc.hidden_widths = {16, 16};
    cc.batch_size = 64;
    const IdsModel model = train_classifier(d, cc).model;
    std::vector<std::size_t> idx(100);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const Dataset sub = d.select(idx);

    for (auto m : {AttackMethod::fgsm, AttackMethod::bim, AttackMethod::deepfool, AttackMethod::jsma,
                   AttackMethod::cw_l2}) {
        for (double eps : {0.01, 0.03, 0.1}) {
            AttackConfig c;
            c.method = m;
            c.epsilon = eps;
            const AdversarialBatch b = run_attack(model, sub.features, sub.labels, c);
            bool box = true, ball = true;
            for (double v : b.adversarial.values()) box = box && v >= 0.0 && v <= 1.0;
            if (m == AttackMethod::fgsm || m == AttackMethod::bim) {
                for (std::size_t r = 0; r < sub.size(); ++r) {
                    ball = ball && row_norm(b.adversarial, b.originals, r, true) <= eps + 1e-9;
                }
            }
            if (!box || !ball) {
                o.require(false, fmt("%s eps=%.2f: box %d, L-inf ball %d", to_string(m).c_str(), eps, box, ball));
            }
            if (m != AttackMethod::fgsm && m != AttackMethod::bim) break;  // epsilon does not apply
        }
    }
    if (o.pass) o.require(true, "unit box on all five methods, L-inf ball on FGSM and BIM at eps 0.01/0.03/0.1");

    bool neutral = true;
    for (auto m : {AttackMethod::fgsm, AttackMethod::bim}) {
        AttackConfig c;
        c.method = m;
        c.epsilon = 0.0;
        neutral = neutral && run_attack(model, sub.features, sub.labels, c).adversarial == sub.features;
    }
    AttackConfig j;
    j.method = AttackMethod::jsma;
    j.max_feature_fraction = 0.0;
    neutral = neutral && run_attack(model, sub.features, sub.labels, j).adversarial == sub.features;
    o.require(neutral, "zero budget returns the originals (FGSM, BIM, JSMA)");

    const std::vector<double> w{0.8, -1.3, 0.4, 2.0};
    const double bias = -0.6;
    const IdsModel lin = linear_model(w, bias);
    Rng rng(5);
    DenseTensor x(50, 4);
    for (double& v : x.values()) v = rng.uniform(0.3, 0.7);
    const auto truth = predict_labels(lin, x);
    const AdversarialBatch df = deepfool(lin, x, truth, 50, 0.02);
    double wn = 0.0;
    for (double v : w) wn += v * v;
    wn = std::sqrt(wn);
    double worst = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double f = bias;
        for (std::size_t c = 0; c < w.size(); ++c) f += w[c] * x(r, c);
        const double expected = 1.02 * std::abs(f) / wn;
        worst = std::max(worst, std::abs(row_norm(df.adversarial, df.originals, r, false) - expected) / expected);
    }
    o.require(worst <= 1e-6, fmt("DeepFool vs linear closed form: max rel error %.2e <= 1e-6", worst));

    const auto pred = predict_labels(model, sub.features);
    AttackConfig cw;
    cw.method = AttackMethod::cw_l2;
    const AdversarialBatch cb = carlini_wagner_l2(model, sub.features, sub.labels, pred, cw);
    double max_l2 = 0.0;
    for (std::size_t r = 0; r < sub.size(); ++r) max_l2 = std::max(max_l2, row_norm(cb.adversarial, cb.originals, r, false));
    o.require(max_l2 <= 1e-3, fmt("CW on already-target inputs: max L2 %.2e <= 1e-3", max_l2));
    return o;
}

Outcome collapse_and_recover(Desk& desk) {
    Outcome o;
    const SweepResult& s = desk.main_sweep();
    log_sweep(s, desk.config().schedule.T);
    const double adv0 = s.at_t(0).acc_adv;
    o.require(adv0 <= 0.10, fmt("acc_adv(0) = %.4f <= 0.10", adv0));
    const OptimalStep opt = find_optimal_step(s);
    const double gain = opt.acc_adv_at_t_star - adv0;
    const double gap = opt.acc_test_at_t_star - opt.acc_adv_at_t_star;
    o.require(gain >= 0.40, fmt("t* = %zu: acc_adv(t*) = %.4f, gain %.4f >= 0.40", opt.t_star, opt.acc_adv_at_t_star, gain));
    o.require(gap <= 0.10, fmt("acc_test(t*) - acc_adv(t*) = %.4f - %.4f = %.4f <= 0.10", opt.acc_test_at_t_star,
                               opt.acc_adv_at_t_star, gap));
    double worst = 0.0;
    std::size_t late = 0;
    for (const auto& r : s.rows) {
        if (r.t >= 3 * opt.t_star) {
            worst = std::max(worst, std::abs(r.acc_test - r.acc_adv));
            ++late;
        }
    }
    o.require(late > 0 && worst <= 0.05, fmt("t >= 3t* (%zu grid points): max |acc_test - acc_adv| = %.4f <= 0.05", late, worst));
    return o;
}

Outcome sigma_alignment_criterion(Desk& desk) {
    Outcome o;
    const std::uint64_t seed = desk.config().sweep.seeds.front();
    std::vector<SweepResult> sweeps{desk.main_sweep()};
    for (std::size_t T : desk.config().sweep.alignment_T) {
        sweeps.push_back(desk.sweep(desk.fgsm(), T, seed));
        log_sweep(sweeps.back(), T);
    }
    const AlignmentTable table = sigma_alignment(sweeps);
    bool have_100 = false, have_1000 = false;
    for (const auto& row : table.rows) {
        have_100 = have_100 || row.T == 100;
        have_1000 = have_1000 || row.T == 1000;
        const double s2 = row.optimum.sigma2_at_t_star;
        const double eps = 0.03;
        o.require(s2 >= eps / 4 && s2 <= 4 * eps,
                  fmt("T=%zu: t* = %zu, sigma2* = %.5f in [%.4f, %.4f]", row.T, row.optimum.t_star, s2, eps / 4, 4 * eps));
    }
    o.require(have_100 && have_1000, "sweeps at T = 100 and T = 1000");
    for (const auto& r : table.ratios) {
        o.require(r.ratio >= 0.25 && r.ratio <= 4.0, fmt("sigma2*(T=%zu) / sigma2*(T=%zu) = %.4f in [1/4, 4]", r.T_a, r.T_b, r.ratio));
    }
    return o;
}

Outcome epsilon_monotonicity(Desk& desk) {
    Outcome o;
    const auto grid = desk.grid(desk.config().schedule.T);
    const double span = static_cast<double>(grid.back() - grid.front());
    Rng rng(desk.config().sweep.seeds.front());
    const auto rows = epsilon_study(desk.study_inputs(), {0.01, 0.03, 0.05}, grid, rng, AttackConfig{},
                                    SweepOptions{desk.config().threads});
    for (const auto& r : rows) {
        log(fmt("eps %s: acc_adv(0) %.4f, t* %zu, acc_adv(t*) %.4f, acc_test(t*) %.4f", r.label.c_str(), r.acc_adv_at_0,
                r.optimum.t_star, r.optimum.acc_adv_at_t_star, r.optimum.acc_test_at_t_star));
    }
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& a = rows[i - 1].optimum;
        const auto& b = rows[i].optimum;
        o.require(b.acc_adv_at_t_star <= a.acc_adv_at_t_star + 0.03,
                  fmt("acc_adv(t*): eps %s -> %s: %.4f -> %.4f (slack 0.03)", rows[i - 1].label.c_str(),
                      rows[i].label.c_str(), a.acc_adv_at_t_star, b.acc_adv_at_t_star));
        o.require(static_cast<double>(b.t_star) >= static_cast<double>(a.t_star) - 0.2 * span,
                  fmt("t*: eps %s -> %s: %zu -> %zu (slack %.0f)", rows[i - 1].label.c_str(), rows[i].label.c_str(),
                      a.t_star, b.t_star, 0.2 * span));
    }
    return o;
}

Outcome five_attacks(Desk& desk) {
    Outcome o;
    std::vector<AttackConfig> attacks;
    for (auto m : {AttackMethod::fgsm, AttackMethod::bim, AttackMethod::deepfool, AttackMethod::jsma,
                   AttackMethod::cw_l2}) {
        AttackConfig c;
        c.method = m;
        attacks.push_back(c);
    }
    Rng rng(desk.config().sweep.seeds.front());
    const auto rows =
        attack_benchmark(desk.study_inputs(), attacks, desk.grid(desk.config().schedule.T), rng, SweepOptions{desk.config().threads});
    for (const auto& r : rows) {
        const double gain = r.optimum.acc_adv_at_t_star - r.acc_adv_at_0;
        o.require(gain >= 0.30, fmt("%s: acc_adv %.4f -> %.4f at t* = %zu, gain %.4f >= 0.30", r.label.c_str(),
                                    r.acc_adv_at_0, r.optimum.acc_adv_at_t_star, r.optimum.t_star, gain));
    }
    return o;
}

/// Desk preset scaled down so two complete command-level runs fit in the budget.
Json reduced_desk(const fs::path& out) {
    Json j = Json::parse(R"({
      "dataset": {"synthetic": {"rows": 1000}},
      "classifier": {"epochs": 60},
      "diffusion": {"epochs": 150, "log_interval": 50, "schedule": {"T": 200}},
      "sweep": {"t_grid": "0:40:4,60,100,200", "seeds": [0, 1], "train_eval_rows": 200, "alignment_T": [50]},
      "run_name": "repro"
    })");
    j["output_dir"] = out.string();
    return j;
}

std::map<std::string, std::string> run_reduced_pipeline(const fs::path& root) {
    fs::remove_all(root);
    RunContext ctx;
    std::ostringstream sink;
    ctx.log = &sink;
    ctx.config = resolve_config(reduced_desk(root));
    ctx.run_dir = resolve_run_dir(ctx.config, true);
    cmd_preprocess(ctx);
    cmd_train(ctx, "all");
    cmd_attack(ctx);
    cmd_sweep(ctx);
    cmd_report(ctx);
    std::map<std::string, std::string> files;
    for (const auto& sub : {"sweeps", "reports"}) {
        for (const auto& e : fs::recursive_directory_iterator(ctx.run_dir / sub)) {
            if (!e.is_regular_file()) continue;
            std::ifstream in(e.path(), std::ios::binary);
            std::stringstream s;
            s << in.rdbuf();
            files[fs::relative(e.path(), ctx.run_dir).generic_string()] = s.str();
        }
    }
    return files;
}

Outcome reproducibility() {
    Outcome o;
    const fs::path root = fs::temp_directory_path() / "purifynet_acceptance_repro";
    const auto first = run_reduced_pipeline(root);
    const auto second = run_reduced_pipeline(root);
    fs::remove_all(root);
    std::size_t identical = 0;
    for (const auto& [name, bytes] : first) {
        const auto it = second.find(name);
        if (it != second.end() && it->second == bytes) ++identical;
        else log("differs: " + name);
    }
    o.require(!first.empty() && identical == first.size() && first.size() == second.size(),
              fmt("%zu/%zu sweep and report tables byte-identical across two pipeline runs", identical, first.size()));
    return o;
}

Outcome reconstruction_trend(Desk& desk) {
    Outcome o;
    const std::vector<std::size_t> ts{10, 100, 300, 600};
    std::vector<SweepResult> runs;
    const StudyInputs in = desk.study_inputs();
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        Rng rng(seed);
        runs.push_back(purification_sweep(*in.diffusion, *in.ids, *in.train, *in.test, desk.fgsm(), ts, rng,
                                          SweepOptions{desk.config().threads}));
    }
    const RunAggregate agg = aggregate_runs(runs);
    std::string trend;
    for (std::size_t i = 0; i < ts.size(); ++i) trend += fmt("%s%zu:%.6f", i ? " " : "", ts[i], agg.mean[i][6]);
    bool ok = true;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        for (std::size_t j = i + 1; j < ts.size(); ++j) ok = ok && agg.mean[j][6] >= 0.95 * agg.mean[i][6];
    }
    o.require(ok, "mean recon_mse_test over 3 seeds non-decreasing with 5% slack: " + trend);
    return o;
}

struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    Desk desk;
    const std::vector<Criterion> criteria{
        {1, "gradient suite", 60, gradients},
        {2, "diffusion math suite", 120, diffusion_math},
        {3, "attack suite", 180, attack_suite},
        {4, "collapse and recover", 600, [&] { return collapse_and_recover(desk); }},
        {5, "sigma2 alignment", 600, [&] { return sigma_alignment_criterion(desk); }},
        {6, "epsilon monotonicity", 600, [&] { return epsilon_monotonicity(desk); }},
        {7, "five-attack recovery", 600, [&] { return five_attacks(desk); }},
        {8, "reproducibility", 600, reproducibility},
        {9, "reconstruction-loss trend", 600, [&] { return reconstruction_trend(desk); }},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.contains(c.id)) continue;
        std::fprintf(stderr, "[AC%d running]\n", c.id);
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        const double elapsed = seconds_since(t0);
        o.require(elapsed <= c.budget_s, fmt("runtime %.1fs <= %.0fs", elapsed, c.budget_s));
        std::printf("AC%d %-26s %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL");
        for (const auto& n : o.notes) std::printf("    %s %s\n", n.front() == '!' ? "x" : "-", n.c_str() + (n.front() == '!'));
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    std::printf("%d criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
