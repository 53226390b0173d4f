/*
 * Copyright (C) 2026 The patchgrade Authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include <gtest/gtest.h>

#include <map>
#include <set>

#include "patchgrade/error.hpp"
#include "patchgrade/scoring.hpp"
#include "patchgrade/synthetic.hpp"
#include "patchgrade/training.hpp"
#include "test_util.hpp"

using namespace patchgrade;

namespace {

struct SmallCorpus {
    std::vector<GradedImage> normals;
    std::vector<GradedImage> grade0;
    std::vector<GradedImage> grade4;
};

/// Renders a reduced synthetic corpus in memory.
const SmallCorpus& corpus() {
    static const SmallCorpus c = [] {
        SynthSpec spec;
        spec.image_side = 128;
        spec.normal_pool = 30;
        spec.unlabeled_per_grade = {{0, 1}};
        spec.test_per_grade = {{0, 20}, {4, 20}};
        spec.normal_count = 30;
        SmallCorpus out;
        for (auto& img : render_corpus(spec, 3)) {
            GradedImage g{img.id, std::move(img.pixels), img.grade, img.confounder};
            if (img.split == "pool") out.normals.push_back(std::move(g));
            else if (img.split == "test") (img.grade == 0 ? out.grade0 : out.grade4).push_back(std::move(g));
        }
        return out;
    }();
    return c;
}

PreprocessSpec small_preprocess() {
    PreprocessSpec p;
    p.target_side = 112;
    return p;
}

}  // namespace

TEST(Pretrain, SameSeedSameCheckpoint) {
    const auto& c = corpus();
    const std::span<const GradedImage> few(c.normals.data(), 6);
    auto cfg = TrainConfig::pretrain_defaults();
    cfg.epochs = 2;
    PreprocessSpec pp;
    pp.target_side = 64;
    const auto a = pretrain(few, BackboneSpec::compact(), AugmentParams{}, cfg, pp, 3);
    const auto b = pretrain(few, BackboneSpec::compact(), AugmentParams{}, cfg, pp, 3);
    EXPECT_EQ(a.checkpoint.parameters, b.checkpoint.parameters);
    EXPECT_EQ(a.checkpoint.model_id(), b.checkpoint.model_id());
    EXPECT_EQ(a.checkpoint.epoch_losses, b.checkpoint.epoch_losses);
    cfg.seed = 2;
    const auto other = pretrain(few, BackboneSpec::compact(), AugmentParams{}, cfg, pp, 3);
    EXPECT_NE(other.checkpoint.parameters, a.checkpoint.parameters);
}

TEST(Pretrain, TraceLabelsFollowTheStrongTransform) {
    const auto& c = corpus();
    const std::span<const GradedImage> few(c.normals.data(), 5);
    auto cfg = TrainConfig::pretrain_defaults();
    cfg.epochs = 3;
    PreprocessSpec pp;
    pp.target_side = 64;
    const auto r = pretrain(few, BackboneSpec::compact(), AugmentParams{}, cfg, pp, 3);
    ASSERT_EQ(r.trace.size(), 15u);
    for (const auto& t : r.trace) {
        EXPECT_EQ(t.y, t.right_transform == "identity" ? 0 : 1) << t.right_transform;
        EXPECT_NE(t.left_id, t.right_id);
    }
}

TEST(Pretrain, FrozenBackboneKeepsItsWeights) {
    const auto& c = corpus();
    const std::span<const GradedImage> few(c.normals.data(), 4);
    auto spec = BackboneSpec::compact();
    spec.trainable = false;
    auto cfg = TrainConfig::pretrain_defaults();
    cfg.epochs = 1;
    PreprocessSpec pp;
    pp.target_side = 64;
    const auto r = pretrain(few, spec, AugmentParams{}, cfg, pp, 3);
    const auto fresh = Backbone::build(spec);
    EXPECT_TRUE(std::equal(r.checkpoint.parameters.begin(), r.checkpoint.parameters.end(), fresh.parameters().begin()));
}

TEST(Pretrain, PreconditionsEnforced) {
    const auto& c = corpus();
    const std::span<const GradedImage> one(c.normals.data(), 1);
    EXPECT_THROW((void)pretrain(one, BackboneSpec::compact(), AugmentParams{}, TrainConfig::pretrain_defaults(),
                                PreprocessSpec{}, 3),
                 PairingError);
    const std::span<const GradedImage> few(c.normals.data(), 4);
    EXPECT_THROW((void)pretrain(few, BackboneSpec::compact(), AugmentParams{}, TrainConfig::retrain_defaults(),
                                PreprocessSpec{}, 3),
                 PreconditionError);
    // A window wider than the feature map is rejected before training starts.
    PreprocessSpec pp;
    pp.target_side = 64;
    EXPECT_THROW((void)pretrain(few, BackboneSpec::compact(), AugmentParams{}, TrainConfig::pretrain_defaults(), pp, 40),
                 ParameterError);
}

// One pretraining run on 30 synthetic normals serves the loss and score checks.
class SyntheticPretrain : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        auto cfg = TrainConfig::pretrain_defaults();
        cfg.epochs = 12;
        result_ = new TrainResult(
            pretrain(corpus().normals, BackboneSpec::compact(), AugmentParams{}, cfg, small_preprocess(), 3));
    }
    static void TearDownTestSuite() {
        delete result_;
        result_ = nullptr;
    }
    static TrainResult* result_;
};
TrainResult* SyntheticPretrain::result_ = nullptr;

TEST_F(SyntheticPretrain, LossDecreases) {
    const auto& losses = result_->checkpoint.epoch_losses;
    ASSERT_EQ(losses.size(), 12u);
    EXPECT_LT(losses.back(), losses.front());
}

TEST_F(SyntheticPretrain, GradeFourScoresAboveGradeZero) {
    const auto& c = corpus();
    const auto bank = build_reference_bank(result_->checkpoint, c.normals);
    const AnomalyScorer scorer(result_->checkpoint, bank);
    double s0 = 0.0, s4 = 0.0;
    for (const auto& r : scorer.score_batch(c.grade0)) s0 += r.score / c.grade0.size();
    for (const auto& r : scorer.score_batch(c.grade4)) s4 += r.score / c.grade4.size();
    EXPECT_GT(s4, s0);
}

TEST_F(SyntheticPretrain, CheckpointRoundTrip) {
    testutil::TempDir dir("ckpt");
    auto ck = result_->checkpoint;
    ck.config_digest = "d1";
    save_checkpoint(dir.path() / "c.pgar", ck);
    const auto back = load_checkpoint(dir.path() / "c.pgar");
    EXPECT_EQ(back.parameters, ck.parameters);
    EXPECT_EQ(back.model_id(), ck.model_id());
    EXPECT_EQ(back.backbone, ck.backbone);
    EXPECT_EQ(back.train, ck.train);
    EXPECT_EQ(back.window, ck.window);
    EXPECT_EQ(back.config_digest, "d1");
    EXPECT_EQ(back.preprocess.target_side, 112);
    EXPECT_THROW((void)load_reference_bank(dir.path() / "c.pgar"), IncompatibleError);
}

TEST(Retrain, PairsComeFromNormalsOrDenoisedOnly) {
    const auto& c = corpus();
    const std::span<const GradedImage> normals(c.normals.data(), 6);
    const std::span<const GradedImage> denoised(c.grade4.data(), 4);
    const PreprocessSpec pp = small_preprocess();
    const RetrainPairs pairs(normals, denoised, pp, 0.5);
    std::set<std::string> anomalous;
    for (const auto& img : denoised) anomalous.insert(img.id);
    Rng rng(9);
    int ones = 0;
    for (int k = 0; k < 600; ++k) {
        const std::size_t anchor = k % normals.size();
        const auto p = pairs.draw(anchor, rng);
        EXPECT_EQ(p.y == 1, anomalous.count(p.provenance.right_id) == 1);
        EXPECT_EQ(p.provenance.left_id, normals[anchor].id);
        EXPECT_NE(p.provenance.right_id, p.provenance.left_id);
        EXPECT_FALSE(p.provenance.left_transform.has_value());
        EXPECT_FALSE(p.provenance.right_transform.has_value());
        ones += p.y;
    }
    EXPECT_NEAR(ones / 600.0, 0.5, 0.08);
}

TEST(Retrain, InputsAreThePreprocessedImages) {
    const auto& c = corpus();
    const std::span<const GradedImage> normals(c.normals.data(), 4);
    const std::span<const GradedImage> denoised(c.grade4.data(), 3);
    const PreprocessSpec pp = small_preprocess();
    const RetrainPairs pairs(normals, denoised, pp, 0.5);
    std::map<std::string, Tensor3> expected;
    for (const auto& img : normals) expected[img.id] = preprocess(img, pp);
    for (const auto& img : denoised) expected[img.id] = preprocess(img, pp);
    Rng rng(10);
    for (int k = 0; k < 40; ++k) {
        const auto p = pairs.draw(k % 4, rng);
        EXPECT_EQ(p.left, expected.at(p.provenance.left_id));
        EXPECT_EQ(p.right, expected.at(p.provenance.right_id));
    }
}

TEST(Retrain, TraceLabelsMatchDenoisedMembership) {
    const auto& c = corpus();
    const std::span<const GradedImage> normals(c.normals.data(), 5);
    const std::span<const GradedImage> denoised(c.grade4.data(), 3);
    auto cfg = TrainConfig::retrain_defaults();
    cfg.epochs = 2;
    PreprocessSpec pp;
    pp.target_side = 64;
    const auto r = retrain(normals, denoised, BackboneSpec::large(), cfg, pp, 3);
    std::set<std::string> anomalous;
    for (const auto& img : denoised) anomalous.insert(img.id);
    ASSERT_EQ(r.trace.size(), 10u);
    for (const auto& t : r.trace) {
        EXPECT_EQ(t.y == 1, anomalous.count(t.right_id) == 1);
        EXPECT_EQ(t.left_transform, "none");
    }
}

TEST(Retrain, EmptyDenoisedSetIsAPreconditionError) {
    const auto& c = corpus();
    const std::span<const GradedImage> normals(c.normals.data(), 5);
    EXPECT_THROW((void)retrain(normals, {}, BackboneSpec::large(), TrainConfig::retrain_defaults(), PreprocessSpec{}, 3),
                 PreconditionError);
}
