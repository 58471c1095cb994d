#include <gtest/gtest.h>

#include <cstdlib>

#include "hetmech/experiment/experiment.hpp"
#include "test_util.hpp"

using namespace hetmech;
using namespace hetmech::experiment;
using nlohmann::json;
using test_support::TempDir;

namespace {

fs::path write_fake_pool(const fs::path& dir, int n) {
    std::vector<Pattern> pats;
    std::vector<PatternMeta> metas;
    for (int i = 0; i < n; ++i) {
        auto p = test_support::random_pattern(500 + i, 0.55);
        p.source = PatternSource::cahn_hilliard;
        pats.push_back(p);
        metas.push_back({PatternSource::cahn_hilliard, std::to_string(i), 0.5, 10});
    }
    write_pattern_set(dir, pats, metas, "ch");
    return dir / "manifest.csv";
}

json small_config(const fs::path& pool, const fs::path& out) {
    return {{"name", "small"},
            {"seed", 5},
            {"replicates", {1, 2}},
            {"out", out.string()},
            {"real_pool", pool.string()},
            {"n_test_real", 6},
            {"train", {{"epochs", 2}, {"batch_size", 4}, {"lr_drop_epoch", 1}}},
            {"mixes", json::array({{{"name", "real"}, {"n_real", 10}},
                                   {{"name", "proc"}, {"n_real", 10}, {"n_synth", 6}, {"synth_source", "procedural"}}})},
            {"transfer",
             {{"pretrain", {{"n_real", 10}, {"n_synth", 6}, {"rotations_enabled", true}}},
              {"finetune_fidelity",
               {{"name", "mid"}, {"elements_per_side", 64}, {"displacement_program", {0.0, 0.001, 0.05}}}},
              {"finetune_train", {{"epochs", 3}}}}}};
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(HETMECH_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(ExperimentConfig, HashIgnoresKeyOrderAndTracksSeed) {
    TempDir tmp("exp_hash");
    const auto pool = write_fake_pool(tmp.path() / "pool", 4);
    auto j = small_config(pool, tmp.path() / "out");
    const auto a = config_from_json(j);
    // Same content, keys inserted in a different order.
    json r;
    for (auto it = j.rbegin(); it != j.rend(); ++it) r[it.key()] = it.value();
    EXPECT_EQ(config_from_json(r).hash(), a.hash());
    j["seed"] = 6;
    EXPECT_NE(config_from_json(j).hash(), a.hash());
    EXPECT_EQ(version_and_provenance(a), version_and_provenance(config_from_json(r)));
    EXPECT_NE(version_and_provenance(a).find("hetmech " + version()), std::string::npos);
}

TEST(ExperimentConfig, Errors) {
    TempDir tmp("exp_err");
    const auto pool = write_fake_pool(tmp.path() / "pool", 4);
    auto j = small_config(pool, tmp.path() / "out");
    j["colour"] = "blue";
    EXPECT_THROW(config_from_json(j), ConfigError);
    j = small_config(tmp.path() / "missing.csv", tmp.path() / "out");
    EXPECT_THROW(config_from_json(j), ConfigError);
    j = small_config(pool, tmp.path() / "out");
    j["mixes"][1]["name"] = "real";
    EXPECT_THROW(config_from_json(j), ConfigError);
    j = small_config(pool, tmp.path() / "out");
    j["train"]["arch"] = "vgg";
    EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Experiment, DryRunTouchesNothing) {
    TempDir tmp("exp_dry");
    const auto pool = write_fake_pool(tmp.path() / "pool", 16);
    const auto cfg = config_from_json(small_config(pool, tmp.path() / "out"));
    RunOptions opt;
    opt.dry_run = true;
    const auto r = run_experiment(cfg, opt);
    EXPECT_FALSE(fs::exists(tmp.path() / "out"));
    // 2 mixes x (1 dataset + 2 trainings) + transfer (2 datasets + 2 x 3 trainings)
    EXPECT_EQ(r.plan.size(), 14u);
    for (const auto& s : r.plan) EXPECT_FALSE(s.cached);
    const auto text = describe_plan(r.plan);
    EXPECT_NE(text.find("train/finetune/s1"), std::string::npos);
    EXPECT_NE(text.find("<- dataset/transfer_finetune, train/pretrain/s1"), std::string::npos);
}

TEST(Experiment, CachedRerunAndDeterminism) {
    TempDir tmp("exp_run");
    const auto pool = write_fake_pool(tmp.path() / "pool", 16);
    auto j = small_config(pool, tmp.path() / "a");
    j["cache_dir"] = (tmp.path() / "cache").string();
    const auto cfg = config_from_json(j);
    const auto first = run_experiment(cfg);
    EXPECT_EQ(first.stages_run, 14u);
    EXPECT_GT(first.simulations, 0u);
    EXPECT_GT(first.epochs, 0u);
    const auto& rep = first.report;
    ASSERT_EQ(rep["mixes"].size(), 2u);
    EXPECT_EQ(rep["mixes"][1]["n_train_rows"].get<int>(), 8 + 6);
    ASSERT_EQ(rep["transfer"]["replicates"].size(), 2u);
    EXPECT_TRUE(rep.contains("histogram"));
    EXPECT_TRUE(fs::exists(tmp.path() / "a" / "mix_summary.csv"));
    EXPECT_TRUE(fs::exists(tmp.path() / "a" / "transfer.csv"));
    EXPECT_TRUE(fs::exists(tmp.path() / "a" / "delta_psi_histogram.csv"));

    // Second run: nothing to do.
    const auto second = run_experiment(cfg);
    EXPECT_EQ(second.stages_run, 0u);
    EXPECT_EQ(second.simulations, 0u);
    EXPECT_EQ(second.epochs, 0u);
    EXPECT_EQ(second.report, first.report);

    // Fresh output root, same config: byte-identical artefacts.
    j["out"] = (tmp.path() / "b").string();
    const auto third = run_experiment(config_from_json(j));
    EXPECT_EQ(third.simulations, 0u);  // shared simulation cache
    for (const char* f : {"metrics_report.json", "mix_summary.csv", "transfer.csv", "datasets/proc/manifest.csv",
                          "datasets/transfer_finetune/sims.csv", "models/finetune/s2/best.ckpt",
                          "models/real/s1/history.csv"})
        EXPECT_EQ(read_file(tmp.path() / "a" / f), read_file(tmp.path() / "b" / f)) << f;
}

TEST(Experiment, StageErrorNamesTheStage) {
    TempDir tmp("exp_stage");
    const auto pool = write_fake_pool(tmp.path() / "pool", 12);
    auto j = small_config(pool, tmp.path() / "out");
    j.erase("transfer");
    j["mixes"] = json::array({{{"name", "big"}, {"n_real", 10}}});  // 10 + 6 test > 12
    try {
        run_experiment(config_from_json(j));
        FAIL() << "expected StageError";
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "dataset/big");
        EXPECT_EQ(e.exit_code(), ExitCode::config);
        EXPECT_NE(std::string(e.what()).find(config_from_json(j).hash()), std::string::npos);
    }
}

TEST(Cli, ExitCodes) {
    TempDir tmp("cli");
    const auto pool = write_fake_pool(tmp.path() / "pool", 16);
    const auto p = tmp.path().string();
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli("nonsense"), 2);
    EXPECT_EQ(run_cli("synth procedural --n 4 --fraction 0.5 --grid 8 --seed 1 --out " + p + "/proc"), 0);
    EXPECT_TRUE(fs::exists(tmp.path() / "proc" / "manifest.csv"));
    EXPECT_EQ(run_cli("synth procedural --n 4 --fraction 0.5 --grid 7 --out " + p + "/bad"), 2);
    EXPECT_EQ(run_cli("synth bernoulli --n 4 --out " + p + "/bern"), 2);  // needs --p or --reference
    EXPECT_EQ(run_cli("synth bernoulli --n 12 --reference " + pool.string() + " --out " + p + "/bern"), 0);
    EXPECT_EQ(run_cli("metrics frechet --set-a " + pool.string() + " --set-b " + p + "/bern/manifest.csv --boot 5"), 0);

    // A profile that cannot converge: one Newton iteration, no bisection, 40% stretch.
    write_file_atomic(tmp.path() / "stiff.json",
                      R"({"name": "broken", "displacement_program": [0, 0.4], "max_newton_iters": 1, "max_bisections": 0})");
    EXPECT_EQ(run_cli("simulate --patterns " + p + "/proc/manifest.csv --fidelity " + p + "/stiff.json --out " + p + "/sims"), 3);
    EXPECT_EQ(run_cli("simulate --patterns " + p + "/proc/manifest.csv --fidelity medium --out " + p + "/sims"), 2);

    // Config-file expansion with a flag override.
    write_file_atomic(tmp.path() / "synth.json", R"({"n": 3, "p": 0.4})");
    EXPECT_EQ(run_cli("synth bernoulli --config " + p + "/synth.json --n 2 --out " + p + "/cfg"), 0);
    EXPECT_EQ(parse_pattern_manifest(read_file(tmp.path() / "cfg" / "manifest.csv")).size(), 2u);
    write_file_atomic(tmp.path() / "bad.json", R"({"n": 3, "colour": "blue"})");
    EXPECT_EQ(run_cli("synth bernoulli --config " + p + "/bad.json --out " + p + "/cfg2"), 2);

    auto j = small_config(pool, tmp.path() / "exp");
    write_file_atomic(tmp.path() / "exp.json", j.dump());
    EXPECT_EQ(run_cli("experiment run --dry-run --config " + p + "/exp.json"), 0);
    EXPECT_FALSE(fs::exists(tmp.path() / "exp"));
    j["train"]["epochs"] = 0;
    write_file_atomic(tmp.path() / "exp_bad.json", j.dump());
    EXPECT_EQ(run_cli("experiment run --config " + p + "/exp_bad.json"), 2);
    EXPECT_EQ(run_cli("metrics report --experiment " + p + "/nowhere"), 2);
}

TEST(Cli, DatasetTrainTransferEvaluate) {
    TempDir tmp("cli_pipe");
    const auto pool = write_fake_pool(tmp.path() / "pool", 16);
    const auto p = tmp.path().string();
    ASSERT_EQ(run_cli("dataset build --real-pool " + pool.string() +
                      " --n-real 10 --n-test-real 6 --n-synth 4 --synth-source bernoulli --seed 2 --out " + p + "/ds"),
              0);
    const auto m = dataset::read_manifest(tmp.path() / "ds" / "manifest.csv");
    EXPECT_EQ(m.count(dataset::SplitTag::test), 6u);
    ASSERT_EQ(run_cli("train --manifest " + p + "/ds/manifest.csv --epochs 2 --batch-size 4 --seed 1 --out " + p + "/m"), 0);
    EXPECT_TRUE(fs::exists(tmp.path() / "m" / "best.ckpt"));
    const auto hist = parse_csv(read_file(tmp.path() / "m" / "history.csv"));
    EXPECT_EQ(hist.header, (std::vector<std::string>{"epoch", "train_mse", "val_mse", "lr"}));
    EXPECT_EQ(hist.rows.size(), 2u);
    EXPECT_NO_THROW(nn::load_checkpoint(tmp.path() / "m" / "best.ckpt"));
    ASSERT_EQ(run_cli("transfer --pretrained " + p + "/m/best.ckpt --manifest " + p +
                      "/ds/manifest.csv --epochs 2 --batch-size 4 --compare-scratch --out " + p + "/t"),
              0);
    const auto t = json::parse(read_file(tmp.path() / "t" / "transfer.json"));
    EXPECT_TRUE(t.contains("mae_reduction"));
    EXPECT_EQ(run_cli("metrics evaluate --checkpoint " + p + "/m/best.ckpt --manifest " + p + "/ds/manifest.csv"), 0);
    EXPECT_EQ(run_cli("train --manifest " + p + "/ds/manifest.csv --arch vgg --out " + p + "/m2"), 2);
}
