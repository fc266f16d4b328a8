// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "purifynet/commands.hpp"

using namespace purifynet;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("purifynet_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + PURIFYNET_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

// Small enough for every command to finish in a few seconds.
Json tiny_config(const fs::path& out) {
    Json j = Json::parse(R"({
      "dataset": {"synthetic": {"rows": 200, "features": 4, "loud_features": 2}},
      "classifier": {"epochs": 5, "hidden_widths": [8], "batch_size": 64},
      "diffusion": {"epochs": 5, "hidden_layers": 1, "hidden_width": 8, "embed_dim": 4, "log_interval": 1,
                    "schedule": {"T": 20}},
      "attacks": [{"method": "FGSM", "epsilon": 0.05},
                  {"method": "BIM", "epsilon": 0.05, "iterations": 5},
                  {"method": "DeepFool", "epsilon": 0.05},
                  {"method": "JSMA", "epsilon": 0.05},
                  {"method": "CW-L2", "epsilon": 0.05, "iterations": 10, "cw": {"binary_search_steps": 2}}],
      "sweep": {"t_grid": "0:20:5", "seeds": [0, 1], "train_eval_rows": 50, "alignment_T": [10],
                "epsilons": [0.01, 0.05]},
      "run_name": "tiny"
    })");
    j["output_dir"] = out.string();
    return j;
}

}  // namespace

TEST_CASE("desk preset resolves with list-valued sweep settings") {
    const Json doc = preset_document("desk");
    CHECK(doc.at("sweep").at("seeds") == Json::array({0}));
    CHECK(doc.at("sweep").at("alignment_T") == Json::array({100}));
    const ExperimentConfig c = resolve_config(Json::object());
    CHECK(c.preset == "desk");
    CHECK(c.sweep.seeds == std::vector<std::uint64_t>{0});
    CHECK(c.schedule.T == 1000);
    CHECK(c.attacks.size() == 5);
    CHECK(c.diffusion_T_values() == std::vector<std::size_t>{1000, 100});
    CHECK(c.classifier.hidden_widths == desk_classifier_widths());
}

TEST_CASE("full-scale presets") {
    const ExperimentConfig standard = resolve_config(Json{{"preset", "full-standard"}}, {}, false);
    CHECK(standard.dataset.kind == "unswnb15");
    CHECK(standard.classifier.epochs == 10000);
    CHECK(standard.classifier.hidden_widths == full_classifier_widths());
    CHECK(standard.sweep.seeds.size() == 10);
    CHECK(parse_t_grid(standard.sweep.t_grid, standard.schedule.T) == default_t_grid(1000));
    const ExperimentConfig constant = resolve_config(Json{{"preset", "full-constant"}}, {}, false);
    CHECK(constant.schedule.build().is_constant());
    CHECK_THROWS_AS(resolve_config(Json{{"preset", "huge"}}), ConfigError);
    CHECK_THROWS_WITH(resolve_config(Json{{"preset", "full-standard"}}), ContainsSubstring("train_path"));
}

TEST_CASE("user documents are merged strictly") {
    const ExperimentConfig c = resolve_config(Json::parse(R"({"diffusion": {"schedule": {"T": 100}}, "threads": 2})"));
    CHECK(c.schedule.T == 100);
    CHECK(c.schedule.beta1 == 1e-4);
    CHECK(c.threads == 2);
    CHECK_THROWS_WITH(resolve_config(Json::parse(R"({"diffusion": {"lr": 1}})")),
                      ContainsSubstring("unknown key 'diffusion.lr'"));
    CHECK_THROWS_WITH(resolve_config(Json::parse(R"({"threads": "many"})")), ContainsSubstring("'threads' expects"));
    CHECK_THROWS_AS(resolve_config(Json::parse(R"({"threads": 0})")), ConfigError);
    CHECK_THROWS_AS(resolve_config(Json::parse(R"({"dataset": {"kind": "kdd99"}})")), ConfigError);
    CHECK_THROWS_AS(resolve_config(Json::parse(R"({"schema_version": 7})")), ConfigError);
    CHECK_THROWS_AS(resolve_config(Json::parse(R"({"attacks": [{"method": "PGD"}]})")), ConfigError);
}

TEST_CASE("dotted overrides") {
    const ExperimentConfig c = resolve_config(
        Json::object(), {"diffusion.schedule.T=100", "attacks.1.iterations=7", "sweep.t_grid=[0,5,10]", "run_name=x1"});
    CHECK(c.schedule.T == 100);
    CHECK(c.attacks[1].resolved_iterations() == 7);
    CHECK(parse_t_grid(c.sweep.t_grid, c.schedule.T) == std::vector<std::size_t>{0, 5, 10});
    CHECK(c.run_name == "x1");
    CHECK_THROWS_WITH(resolve_config(Json::object(), {"diffusion.depth=3"}), ContainsSubstring("diffusion.depth"));
    CHECK_THROWS_AS(resolve_config(Json::object(), {"attacks.9.epsilon=0.1"}), ConfigError);
    CHECK_THROWS_AS(resolve_config(Json::object(), {"threads"}), ConfigError);
    CHECK_THROWS_AS(resolve_config(Json::object(), {"preset=full-standard"}), ConfigError);
    CHECK_THROWS_AS(resolve_config(Json::object(), {"diffusion.schedule.T=0"}), ConfigError);
}

TEST_CASE("t grid specifications") {
    CHECK(parse_t_grid("0:10:5,20,3", 100) == std::vector<std::size_t>{0, 3, 5, 10, 20});
    CHECK(parse_t_grid(Json::array({4, 2, 2, 500}), 100) == std::vector<std::size_t>{2, 4});
    CHECK(parse_t_grid("default", 30) == default_t_grid(30));
    CHECK_THROWS_AS(parse_t_grid("1:x", 100), ConfigError);
    CHECK_THROWS_AS(parse_t_grid("5:1:1", 100), ConfigError);
    CHECK_THROWS_AS(parse_t_grid("200", 100), ConfigError);
    CHECK_THROWS_AS(parse_t_grid(3, 100), ConfigError);
}

TEST_CASE("output directory environment override") {
    ::setenv("PURIFYNET_OUTPUT_DIR", "/tmp/elsewhere", 1);
    const ExperimentConfig c = resolve_config(Json::object());
    ::unsetenv("PURIFYNET_OUTPUT_DIR");
    CHECK(c.output_dir == "/tmp/elsewhere");
    CHECK(resolve_config(Json::object()).output_dir == "runs");
}

TEST_CASE("run directory resolution through LATEST") {
    const fs::path root = scratch("rundir");
    ExperimentConfig c = resolve_config(Json::object());
    c.output_dir = root.string();
    CHECK_THROWS_AS(resolve_run_dir(c, false), MissingArtifacts);
    const fs::path fresh = resolve_run_dir(c, true);
    CHECK(fs::is_directory(fresh));
    CHECK(resolve_run_dir(c, false) == fresh);
    c.run_name = "named";
    CHECK(resolve_run_dir(c, false) == root / "named");
    CHECK(slurp(root / "LATEST") == "named\n");
    fs::remove_all(root);
}

TEST_CASE("cli exit codes for usage errors") {
    const fs::path dir = scratch("usage");
    const fs::path log = dir / "log.txt";
    CHECK(run_cli("", log) == 1);
    CHECK(run_cli("--help", log) == 0);
    CHECK(run_cli("sweep", log) == 1);
    CHECK(run_cli("sweep --config " + (dir / "absent.json").string(), log) == 1);
    CHECK_THAT(slurp(log), ContainsSubstring("config file not found"));
    write(dir / "bad.json", R"({"classifer": {}})");
    CHECK(run_cli("preprocess --config " + (dir / "bad.json").string(), log) == 1);
    CHECK_THAT(slurp(log), ContainsSubstring("unknown key 'classifer'"));
    write(dir / "ok.json", Json{{"output_dir", (dir / "runs").string()}}.dump());
    CHECK(run_cli("train --model both --config " + (dir / "ok.json").string(), log) == 1);
    CHECK(run_cli("preprocess --config " + (dir / "ok.json").string() + " --set nope=1", log) == 1);
    fs::remove_all(dir);
}

TEST_CASE("cli reports missing artifacts as a runtime failure") {
    const fs::path dir = scratch("missing");
    const fs::path log = dir / "log.txt";
    write(dir / "cfg.json", Json{{"output_dir", (dir / "runs").string()}, {"run_name", "r"}}.dump());
    CHECK(run_cli("sweep --config " + (dir / "cfg.json").string(), log) == 2);
    const std::string text = slurp(log);
    CHECK_THAT(text, ContainsSubstring("missing artifacts"));
    CHECK_THAT(text, ContainsSubstring("classifier.json"));
    CHECK_THAT(text, ContainsSubstring("diffusion-T1000.json"));
    fs::remove_all(dir);
}

TEST_CASE("cli runs the whole pipeline on a tiny configuration") {
    const fs::path dir = scratch("pipeline");
    const fs::path log = dir / "log.txt";
    const fs::path runs = dir / "runs";
    write(dir / "cfg.json", tiny_config(runs).dump(2));
    const std::string cfg = " --config " + (dir / "cfg.json").string();

    CHECK(run_cli("attack" + cfg, log) == 2);
    REQUIRE(run_cli("preprocess" + cfg, log) == 0);
    CHECK_THAT(slurp(log), ContainsSubstring("train 160 rows, test 40 rows"));
    REQUIRE(run_cli("train --model classifier" + cfg, log) == 0);
    CHECK(fs::exists(runs / "tiny" / "models" / "classifier.json"));
    CHECK_FALSE(fs::exists(runs / "tiny" / "models" / "diffusion-T20.json"));
    REQUIRE(run_cli("train --model diffusion" + cfg, log) == 0);
    CHECK(fs::exists(runs / "tiny" / "models" / "diffusion-T20.json"));
    CHECK(fs::exists(runs / "tiny" / "models" / "diffusion-T10.json"));
    REQUIRE(run_cli("attack" + cfg, log) == 0);
    CHECK(fs::exists(runs / "tiny" / "attacks" / "4-cw-l2" / "adversarial.csv"));
    REQUIRE(run_cli("sweep --threads 2" + cfg, log) == 0);
    REQUIRE(run_cli("report" + cfg, log) == 0);

    const fs::path run = runs / "tiny";
    CHECK(slurp(runs / "LATEST") == "tiny\n");
    const SweepResult s = sweep_from_json(read_json_file(run / "sweeps" / "0-fgsm" / "seed-1.json"));
    CHECK(s.rows.size() == 5);
    CHECK(s.metadata.at("seed") == 1);
    CHECK(slurp(run / "sweeps" / "0-fgsm" / "seed-0.csv").rfind(sweep_csv_header() + "\n", 0) == 0);
    CHECK(read_json_file(run / "sweeps" / "2-deepfool" / "aggregate.json").at("metadata").at("runs") == 2);
    for (const char* name : {"attack_benchmark", "epsilon_study", "sigma_alignment"}) {
        CHECK(fs::exists(run / "reports" / (std::string(name) + ".csv")));
    }
    CHECK(read_json_file(run / "reports" / "attack_benchmark.json").at("rows").size() == 5);
    CHECK(read_json_file(run / "reports" / "epsilon_study.json").at("rows").size() == 2);

    const Json manifest = read_json_file(run / "manifest.json");
    CHECK(manifest.at("last_command").at("name") == "report");
    CHECK(manifest.at("config").at("run_name") == "tiny");
    const Json& artifacts = manifest.at("artifacts");
    CHECK(artifacts.contains("data/train.json"));
    CHECK(artifacts.contains("models/classifier.json"));
    CHECK(artifacts.at("reports/sigma_alignment.json").at("command") == "report");
    CHECK(artifacts.at("data/test.json").at("checksum") == detail::file_checksum(run / "data" / "test.json"));

    // Rerunning a stage with identical inputs reproduces its artifacts byte for byte.
    const std::string before = slurp(run / "sweeps" / "1-bim" / "seed-0.json");
    REQUIRE(run_cli("sweep --threads 2" + cfg, log) == 0);
    CHECK(slurp(run / "sweeps" / "1-bim" / "seed-0.json") == before);

    // --seed replaces the sweep seed list.
    REQUIRE(run_cli("sweep --seed 3" + cfg, log) == 0);
    CHECK(fs::exists(run / "sweeps" / "0-fgsm" / "seed-3.json"));
    CHECK(read_json_file(run / "sweeps" / "0-fgsm" / "aggregate.json").at("metadata").at("runs") == 1);
    fs::remove_all(dir);
}

TEST_CASE("shipped config files resolve") {
    std::size_t seen = 0;
    for (const auto& entry : fs::directory_iterator(fs::path(PURIFYNET_SOURCE_DIR) / "configs")) {
        if (entry.path().extension() != ".json") continue;
        INFO(entry.path().string());
        const ExperimentConfig c = load_config(entry.path(), {}, false);
        CHECK_FALSE(c.sweep.seeds.empty());
        ++seen;
    }
    CHECK(seen >= 3);
}
