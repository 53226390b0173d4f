/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "patchgrade/error.hpp"
#include "patchgrade/pipeline.hpp"
#include "test_util.hpp"
#include "tiny_config.hpp"

using namespace patchgrade;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(PATCHGRADE_CLI) + " -q " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
    testutil::TempDir dir("cfg");
    RunConfig c;
    write_config(dir.path() / "c.json", c);
    const auto back = load_config(dir.path() / "c.json");
    EXPECT_EQ(back.seeds, c.seeds);
    EXPECT_EQ(back.dataset_root, dir.path() / "data/synth");
    EXPECT_EQ(load_config(dir.path() / "c.json").digest(), back.digest());

    const auto tiny = testutil::tiny_config(dir.path());
    write_config(dir.path() / "t.json", tiny);
    EXPECT_EQ(load_config(dir.path() / "t.json").digest(), tiny.digest());
}

TEST(Config, UnknownKeyNamed) {
    auto j = to_json(RunConfig{});
    j["pretrain"]["train"]["epochz"] = 3;
    const auto msg = message_of([&] { config_from_json(j); });
    EXPECT_NE(msg.find("pretrain.train.epochz"), std::string::npos) << msg;
    EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, TypeErrorNamed) {
    auto j = to_json(RunConfig{});
    j["window"] = "three";
    const auto msg = message_of([&] { config_from_json(j); });
    EXPECT_NE(msg.find("window"), std::string::npos) << msg;
    EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, InvalidValuesRejected) {
    RunConfig c;
    c.window = 0;
    EXPECT_THROW(c.validate(), Error);
    c = RunConfig{};
    c.seeds.clear();
    EXPECT_THROW(c.validate(), Error);
    c = RunConfig{};
    c.pseudo_label.scorer = "clip";
    EXPECT_THROW(c.validate(), Error);
}

TEST(Config, DigestIgnoresSeedsAndRunName) {
    RunConfig a;
    RunConfig b = a;
    b.seeds = {9};
    b.run_name = "other";
    b.run_dir = "elsewhere";
    EXPECT_EQ(a.digest(), b.digest());
    b.pretrain.train.epochs = 3;
    EXPECT_NE(a.digest(), b.digest());
}

class TinyPipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new testutil::TempDir("pipe");
        cfg_ = new RunConfig(testutil::tiny_config(dir_->path()));
        write_config(dir_->path() / "cfg.json", *cfg_);
        run_synth(*cfg_);
        out_ = new ReportOutputs(run_pipeline(*cfg_, MockTextImageScorer()));
    }
    static void TearDownTestSuite() {
        delete out_;
        delete cfg_;
        delete dir_;
    }
    static inline testutil::TempDir* dir_ = nullptr;
    static inline RunConfig* cfg_ = nullptr;
    static inline ReportOutputs* out_ = nullptr;
};

TEST_F(TinyPipeline, WritesEveryArtifact) {
    const auto l = seed_layout(*cfg_, 1);
    for (const auto m : {Model::Pretrain, Model::Retrain}) {
        EXPECT_TRUE(fs::exists(l.checkpoint(m)));
        EXPECT_TRUE(fs::exists(l.bank(m)));
        EXPECT_TRUE(fs::exists(l.test_scores(m)));
        EXPECT_TRUE(fs::exists(l.metrics(m)));
    }
    EXPECT_TRUE(fs::exists(l.candidates()));
    EXPECT_TRUE(fs::exists(l.denoise_audit()));
    EXPECT_TRUE(fs::exists(out_->metrics_json));
    EXPECT_TRUE(fs::exists(out_->table));
    for (const auto& p : out_->plots) EXPECT_GT(fs::file_size(p), 0u);
    const auto table = read_score_table(l.test_scores(Model::Pretrain));
    EXPECT_EQ(table.records.size(), 24u);
    EXPECT_EQ(table.config_digest, cfg_->digest());
}

TEST_F(TinyPipeline, MetricsJsonShape) {
    std::ifstream in(out_->metrics_json);
    const auto j = nlohmann::json::parse(in);
    EXPECT_EQ(j.at("run"), "tiny");
    EXPECT_EQ(j.at("config_digest"), cfg_->digest());
    EXPECT_EQ(j.at("reports").size(), 1u);
    EXPECT_TRUE(j.at("stages").contains("pretrain"));
    EXPECT_TRUE(j.at("stages").contains("retrain"));
}

TEST_F(TinyPipeline, BaselineColumnAdded) {
    write_text_file(dir_->path() / "base.csv", "name,srcc,auc_g4\nzero-shot,0.10,0.60\nzero-shot,0.14,0.64\n");
    ReportOptions o;
    o.baseline_csv = dir_->path() / "base.csv";
    const auto out = run_report(*cfg_, o);
    EXPECT_NE(out.table_text.find("zero-shot"), std::string::npos);
    EXPECT_NE(out.table_text.find("0.12±0.03"), std::string::npos) << out.table_text;
    EXPECT_NE(out.table_text.find("62.0±2.8"), std::string::npos) << out.table_text;
}

TEST_F(TinyPipeline, DigestMismatchRefusedUnlessForced) {
    RunConfig changed = *cfg_;
    changed.pseudo_label.cutoff_z = 3.0;
    EXPECT_THROW(run_report(changed), IncompatibleError);
    ReportOptions o;
    o.force = true;
    const auto out = run_report(changed, o);
    std::ifstream in(out.metrics_json);
    EXPECT_TRUE(nlohmann::json::parse(in).at("forced").get<bool>());
    run_report(*cfg_);
}

TEST_F(TinyPipeline, CliReportExitCodes) {
    const auto cfg_path = (dir_->path() / "cfg.json").string();
    EXPECT_EQ(run_cli("--config " + cfg_path + " report"), 0);
    auto j = to_json(*cfg_);
    j["pseudo_label"]["cutoff_z"] = 3.0;
    write_text_file(dir_->path() / "changed.json", j.dump());
    const auto changed = (dir_->path() / "changed.json").string();
    EXPECT_EQ(run_cli("--config " + changed + " report"), 4);
    EXPECT_EQ(run_cli("--config " + changed + " report --force"), 0);
    EXPECT_EQ(run_cli("--config " + cfg_path + " report"), 0);
}

TEST(Pipeline, EvaluateBeforeScoreIsOrderingError) {
    testutil::TempDir dir("order");
    const auto cfg = testutil::tiny_config(dir.path());
    run_synth(cfg);
    const auto msg = message_of([&] { run_evaluate(cfg, 1, Model::Pretrain); });
    EXPECT_NE(msg.find("score"), std::string::npos) << msg;
    EXPECT_THROW(run_evaluate(cfg, 1, Model::Pretrain), OrderingError);
    EXPECT_THROW(run_score(cfg, 1, Model::Pretrain), OrderingError);
    EXPECT_THROW(run_retrain(cfg, 1), OrderingError);

    write_config(dir.path() / "cfg.json", cfg);
    EXPECT_EQ(run_cli("--config " + (dir.path() / "cfg.json").string() + " evaluate"), 3);
}

TEST(Pipeline, EmptyPseudoSetSkipsRetrain) {
    testutil::TempDir dir("skip");
    auto cfg = testutil::tiny_config(dir.path());
    cfg.pseudo_label.threshold_multiplier = 1e6;
    run_synth(cfg);
    const auto out = run_pipeline(cfg, MockTextImageScorer());
    const SeedLayout layout{cfg.run_dir / "seed_1"};
    EXPECT_TRUE(fs::exists(layout.metrics(Model::Pretrain)));
    EXPECT_FALSE(fs::exists(layout.checkpoint(Model::Retrain)));
    EXPECT_FALSE(fs::exists(layout.metrics(Model::Retrain)));
    EXPECT_EQ(out.table_text.find("pseudo"), std::string::npos) << out.table_text;
    EXPECT_THROW(run_retrain(cfg, 1), PreconditionError);
}

TEST(Cli, ConfigInitAndValidation) {
    testutil::TempDir dir("cli");
    const auto out = (dir.path() / "c.json").string();
    EXPECT_EQ(run_cli("config init -o " + out), 0);
    EXPECT_NO_THROW(load_config(out));
    EXPECT_EQ(run_cli("config init -o " + out), 2);
    EXPECT_EQ(run_cli("config init --force -o " + out), 0);

    auto j = nlohmann::json::parse(read_text_file(out));
    j["retrain"]["bogus"] = 1;
    write_text_file(dir.path() / "bad.json", j.dump());
    EXPECT_EQ(run_cli("--config " + (dir.path() / "bad.json").string() + " synth"), 2);
    EXPECT_EQ(run_cli("--config " + (dir.path() / "missing.json").string() + " synth"), 2);
}
