#include <gtest/gtest.h>

#include "spn/codec.hpp"
#include "spn/errors.hpp"
#include "spn/tensor_io.hpp"
#include "spn/training.hpp"
#include "test_util.hpp"

using namespace spn;
using spn::testing::TempDir;
using spn::testing::tiny_config;

namespace {

Batch fixed_batch(int64_t n = 2, int64_t size = 32) {
    std::vector<SamplePair> pairs;
    for (int64_t i = 0; i < n; ++i) pairs.push_back(make_synthetic_pair(static_cast<uint64_t>(i), size));
    return collate(pairs);
}

std::vector<torch::Tensor> snapshot(const std::vector<torch::Tensor>& params) {
    std::vector<torch::Tensor> out;
    for (const auto& p : params) out.push_back(p.detach().clone());
    return out;
}

} // namespace

TEST(LearningRate, StepSchedule) {
    TrainConfig cfg;
    cfg.total_iters = 150000;
    EXPECT_EQ(cfg.decay_start(), 112500);
    EXPECT_DOUBLE_EQ(lr_at(cfg, 0), 1e-4);
    EXPECT_DOUBLE_EQ(lr_at(cfg, 127000), 1e-5);
    EXPECT_DOUBLE_EQ(lr_at(cfg, cfg.decay_start() - 1), 1e-4);
    EXPECT_DOUBLE_EQ(lr_at(cfg, cfg.decay_start()), 1e-5);
    EXPECT_THROW(lr_at(cfg, 150000), ContractError);
    EXPECT_THROW(lr_at(cfg, -1), ContractError);
}

TEST(TrainConfig, Validation) {
    TrainConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    auto bad = cfg;
    bad.lr_final = 1e-3;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = cfg;
    bad.beta2 = 1.0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = cfg;
    bad.clip_norm = -1;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = cfg;
    bad.clip_norm = 0;
    EXPECT_NO_THROW(bad.validate());
    auto from = TrainConfig::from_config(RunConfig());
    EXPECT_DOUBLE_EQ(from.beta1, 0.0);
    EXPECT_DOUBLE_EQ(from.beta2, 0.9);
    EXPECT_EQ(from.total_iters, 150000);
}

TEST(Trainer, OverfitSmokeLossDecreases) {
    auto cfg = tiny_config();
    cfg.set("train.iters", "50");
    Trainer trainer(cfg);
    auto batch = fixed_batch(8);
    LossReport first, last;
    for (int i = 0; i < 50; ++i) {
        auto r = trainer.step(batch);
        if (i == 0) first = r;
        last = r;
    }
    EXPECT_LT(last.at("total"), first.at("total"));
    EXPECT_EQ(trainer.iteration(), 50);
}

TEST(Trainer, ReportKeysPerMode) {
    Trainer det(tiny_config());
    auto r = det.step(fixed_batch());
    for (const char* key : {"l_prior", "l_img", "l_adv", "l_adv_d", "total"}) EXPECT_TRUE(r.values.count(key)) << key;
    EXPECT_FALSE(r.values.count("l_kl"));
    Trainer prob(tiny_config("probabilistic"));
    auto p = prob.step(fixed_batch());
    for (const char* key : {"l_feature", "l_diverse", "l_kl"}) EXPECT_TRUE(p.values.count(key)) << key;
    const double expected = p.at("l_prior") + 10 * p.at("l_img") + p.at("l_adv") + 10 * p.at("l_feature") +
                            p.at("l_diverse") + 0.05 * p.at("l_kl");
    EXPECT_NEAR(p.at("total"), expected, 1e-4 * std::max(1.0, std::abs(expected)));
}

TEST(Trainer, FrozenNetworksNeverChange) {
    Trainer trainer(tiny_config("probabilistic"));
    auto pretext = snapshot(trainer.extractor().parameters());
    auto perceptual = snapshot(trainer.perceptual().parameters());
    ASSERT_FALSE(pretext.empty());
    auto batch = fixed_batch();
    trainer.step(batch);
    trainer.step(batch);
    auto pretext_after = trainer.extractor().parameters();
    auto perceptual_after = trainer.perceptual().parameters();
    for (std::size_t i = 0; i < pretext.size(); ++i) EXPECT_TRUE(torch::equal(pretext[i], pretext_after[i]));
    for (std::size_t i = 0; i < perceptual.size(); ++i) EXPECT_TRUE(torch::equal(perceptual[i], perceptual_after[i]));
}

TEST(Trainer, IdenticalSeedsGiveIdenticalTrajectories) {
    for (const char* mode : {"deterministic", "probabilistic"}) {
        Trainer a(tiny_config(mode)), b(tiny_config(mode));
        SyntheticDataset data(16, 32);
        for (int i = 0; i < 10; ++i) {
            auto ra = a.step(a.sample_batch(data));
            auto rb = b.step(b.sample_batch(data));
            EXPECT_EQ(ra.values, rb.values) << mode << " step " << i;
        }
    }
}

TEST(Trainer, CheckpointSaveLoadSaveIsByteIdentical) {
    TempDir dir;
    Trainer trainer(tiny_config());
    trainer.step(fixed_batch());
    trainer.save_checkpoint(dir / "a");
    auto loaded = Trainer::load_checkpoint(dir / "a");
    EXPECT_EQ(loaded.iteration(), 1);
    loaded.save_checkpoint(dir / "b");
    for (const char* file : {"params/prior.bin", "params/gen.bin", "params/disc.bin", "optim/gen.bin", "optim/disc.bin", "optim/rng.bin",
                             "optim/data_rng.txt", "config.txt", "meta"})
        EXPECT_EQ(read_file_bytes(dir / "a" / file), read_file_bytes(dir / "b" / file)) << file;
}

TEST(Trainer, ResumeReproducesNextStepExactly) {
    for (const char* mode : {"deterministic", "probabilistic"}) {
        TempDir dir;
        SyntheticDataset data(16, 32);
        Trainer original(tiny_config(mode));
        original.step(original.sample_batch(data));
        original.save_checkpoint(dir.path());
        auto expected = original.step(original.sample_batch(data));

        auto resumed = Trainer::load_checkpoint(dir.path());
        auto actual = resumed.step(resumed.sample_batch(data));
        EXPECT_EQ(actual.iteration, expected.iteration);
        EXPECT_EQ(actual.values, expected.values) << mode;
        auto pa = module_state(*original.model()), pb = module_state(*resumed.model());
        for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(torch::equal(pa[i].second, pb[i].second)) << pa[i].first;
    }
}

TEST(Trainer, AlteredArchitectureRaisesShapeError) {
    TempDir dir;
    Trainer trainer(tiny_config());
    trainer.save_checkpoint(dir.path());
    auto altered = tiny_config();
    altered.set("prior.channels", "8,16,48");
    EXPECT_THROW(Trainer::load_checkpoint(dir.path(), altered), ShapeError);
}

TEST(Trainer, ExportHasNoHeadsOrDiscriminator) {
    TempDir dir;
    Trainer trainer(tiny_config());
    trainer.export_inference(dir.path());
    EXPECT_FALSE(std::filesystem::exists(dir / "params/disc.bin"));
    EXPECT_FALSE(std::filesystem::exists(dir / "optim"));
    for (const auto& [name, _] : read_tensor_blob(dir / "params/prior.bin")) EXPECT_NE(name.rfind("heads.", 0), 0u) << name;
    EXPECT_THROW(Trainer::load_checkpoint(dir.path()), Error);
    EXPECT_NO_THROW(load_inference(dir.path()));
}

TEST(Trainer, NonFiniteInputRaisesDivergence) {
    Trainer trainer(tiny_config());
    auto batch = fixed_batch();
    batch.images[0][0][0][0] = std::numeric_limits<float>::quiet_NaN();
    try {
        trainer.step(batch);
        FAIL() << "expected DivergenceError";
    } catch (const DivergenceError& e) {
        EXPECT_NE(std::string(e.what()).find("l_"), std::string::npos);
    }
}
