#include <gtest/gtest.h>

#include "grad_check.hpp"
#include "loss_oracles.hpp"
#include "spn/errors.hpp"
#include "spn/losses.hpp"
#include "spn/nn_util.hpp"
#include "test_util.hpp"

using namespace spn;
using spn::testing::max_relative_gradient_error;

namespace {

torch::Tensor scalar(double v) { return torch::tensor(v, torch::kFloat64); }

torch::Tensor random_mask(int64_t b, int64_t h, int64_t w, at::Generator& gen) {
    return (torch::rand({b, 1, h, w}, gen, torch::kFloat64) > 0.5).to(torch::kFloat64);
}

} // namespace

TEST(DistillationLoss, Examples) {
    auto target = torch::tensor({1.0, 0.0, 0.0, 0.0}, torch::kFloat64).view({1, 1, 2, 2});
    auto zeros = torch::zeros({1, 1, 2, 2}, torch::kFloat64);
    auto ones = torch::ones({1, 1, 2, 2}, torch::kFloat64);
    EXPECT_DOUBLE_EQ(prior_distillation_loss({target}, {zeros}, ones, 3.0).item<double>(), 1.0);
    EXPECT_DOUBLE_EQ(prior_distillation_loss({target}, {target}, ones, 3.0).item<double>(), 0.0);
    EXPECT_DOUBLE_EQ(prior_distillation_loss({target}, {zeros}, zeros, 3.0).item<double>(), 0.25);
    EXPECT_THROW(prior_distillation_loss({target}, {zeros, zeros}, ones, 3.0), ShapeError);
    EXPECT_THROW(prior_distillation_loss({target}, {torch::zeros({1, 2, 2, 2}, torch::kFloat64)}, ones, 3.0), ShapeError);
}

TEST(DistillationLoss, MaskIsResizedPerLevel) {
    auto mask = torch::zeros({1, 1, 4, 4}, torch::kFloat64);
    mask.slice(2, 0, 2).slice(3, 0, 2).fill_(1);
    auto fine = torch::ones({1, 1, 4, 4}, torch::kFloat64);
    auto coarse = torch::ones({1, 1, 2, 2}, torch::kFloat64);
    auto zf = torch::zeros_like(fine), zc = torch::zeros_like(coarse);
    // Fine level: 4 of 16 weighted by 4 -> (12 + 16) / 16. Coarse level: one of 4 -> (3 + 4) / 4.
    EXPECT_DOUBLE_EQ(prior_distillation_loss({fine, coarse}, {zf, zc}, mask, 3.0).item<double>(), 28.0 / 16 + 7.0 / 4);
}

TEST(ReconstructionLoss, Examples) {
    auto real = torch::zeros({1, 3, 4, 4}, torch::kFloat64);
    auto fake = real + 0.1;
    auto ones = torch::ones({1, 1, 4, 4}, torch::kFloat64);
    EXPECT_NEAR(reconstruction_loss(real, fake, ones, 4.0).item<double>(), 0.5, 1e-12);
    EXPECT_NEAR(reconstruction_loss(real, fake, torch::zeros_like(ones), 4.0).item<double>(), 0.1, 1e-12);
    EXPECT_EQ(reconstruction_loss(real, real, ones, 4.0).item<double>(), 0.0);
    EXPECT_THROW(reconstruction_loss(real, torch::zeros({1, 3, 4, 5}), ones, 4.0), ShapeError);
}

TEST(AdversarialLoss, GeneratorAtHalf) {
    EXPECT_NEAR(generator_adversarial_loss(torch::full({2, 1, 4, 4}, 0.5, torch::kFloat64)).item<double>(), std::log(2.0), 1e-12);
}

TEST(AdversarialLoss, DiscriminatorDecreasesWithSeparation) {
    for (auto form : {AdversarialForm::Minimax, AdversarialForm::NonSaturating}) {
        double previous = std::numeric_limits<double>::infinity();
        for (double eps : {0.4, 0.2, 0.05}) {
            const double loss =
                discriminator_adversarial_loss(torch::full({4}, eps), torch::full({4}, 1.0 - eps), form).item<double>();
            EXPECT_LT(loss, previous);
            previous = loss;
        }
    }
    EXPECT_NEAR(discriminator_adversarial_loss(torch::full({1}, 0.2), torch::full({1}, 0.7)).item<double>(),
                std::log(0.2) + std::log(0.3), 1e-6);
    EXPECT_NEAR(discriminator_adversarial_loss(torch::full({1}, 0.2), torch::full({1}, 0.7), AdversarialForm::NonSaturating)
                    .item<double>(),
                -std::log(0.8) - std::log(0.7), 1e-6);
    EXPECT_TRUE(std::isfinite(discriminator_adversarial_loss(torch::zeros({1}), torch::ones({1})).item<double>()));
    EXPECT_THROW(parse_adversarial_form("hinge"), ConfigError);
}

TEST(AdversarialLoss, DiscriminatorTermDoesNotReachFake) {
    ScopedSeed seed(1);
    PatchDiscriminator disc(std::vector<int64_t>{4, 4, 4, 4});
    auto real = torch::rand({1, 3, 32, 32}) * 2 - 1;
    auto fake = (torch::rand({1, 3, 32, 32}) * 2 - 1).set_requires_grad(true);
    auto losses = adversarial_losses(disc, real, fake);
    auto grad_disc = torch::autograd::grad({losses.disc}, {fake}, {}, true, false, true)[0];
    EXPECT_FALSE(grad_disc.defined());
    auto grad_gen = torch::autograd::grad({losses.gen}, {fake})[0];
    EXPECT_GT(grad_gen.abs().sum().item<double>(), 0.0);
}

TEST(KlLoss, ClosedForms) {
    EXPECT_DOUBLE_EQ(kl_loss({torch::zeros({1, 4}, torch::kFloat64), torch::zeros({1, 4}, torch::kFloat64), {}}).item<double>(), 0.0);
    EXPECT_NEAR(kl_loss({torch::ones({1, 1}, torch::kFloat64), torch::zeros({1, 1}, torch::kFloat64), {}}).item<double>(), 0.5, 1e-12);
    // sigma = e -> logvar = 2.
    const double e2 = std::exp(2.0);
    EXPECT_NEAR(kl_loss({torch::zeros({1, 1}, torch::kFloat64), torch::full({1, 1}, 2.0, torch::kFloat64), {}}).item<double>(),
                0.5 * (e2 - 2 - 1), 1e-12);
    EXPECT_NEAR(0.5 * (e2 - 2 - 1), 2.1945, 1e-4);
}

TEST(FeatureMatchingLoss, Examples) {
    auto a = torch::zeros({1, 2, 3, 3}, torch::kFloat64);
    EXPECT_DOUBLE_EQ(feature_matching_perceptual_loss({a}, {a}, {a}, {a}).item<double>(), 0.0);
    EXPECT_NEAR(feature_matching_perceptual_loss({a}, {a + 0.2}, {a}, {a - 0.3}).item<double>(), 0.5, 1e-12);
    EXPECT_THROW(feature_matching_perceptual_loss({a, a}, {a}, {a}, {a}), ShapeError);
}

TEST(DiversityLoss, Examples) {
    auto f = torch::randn({1, 2, 4, 4}, torch::kFloat64);
    auto ones = torch::ones({1, 1, 8, 8}, torch::kFloat64);
    EXPECT_NEAR(perceptual_diversity_loss({f, f * 2}, {f, f * 2}, ones, 1e-5).item<double>(), 1e5, 1e-6);

    auto zero = torch::zeros({1, 1, 2, 2}, torch::kFloat64);
    auto one_hot = zero.clone();
    one_hot[0][0][0][0] = 1.0;
    EXPECT_NEAR(perceptual_diversity_loss({zero}, {one_hot}, torch::ones({1, 1, 2, 2}), 1e-5).item<double>(),
                1.0 / (1.0 + 1e-5), 1e-12);
    // Differences outside the mask do not count.
    EXPECT_NEAR(perceptual_diversity_loss({zero}, {one_hot}, torch::zeros({1, 1, 2, 2}), 1e-5).item<double>(), 1e5, 1e-6);
}

TEST(DiversityLoss, ExtractorOverloadMatchesFeatureForm) {
    auto perceptual = make_perceptual("stub", {4, 8}, {1, 1}, std::nullopt, 3);
    auto a = torch::rand({2, 3, 16, 16}) * 2 - 1;
    auto b = torch::rand({2, 3, 16, 16}) * 2 - 1;
    auto mask = (torch::rand({2, 1, 16, 16}) > 0.5).to(torch::kFloat32);
    EXPECT_NEAR(perceptual_diversity_loss(a, b, *perceptual, mask, 1e-5).item<double>(),
                perceptual_diversity_loss((*perceptual)(a), (*perceptual)(b), mask, 1e-5).item<double>(), 1e-9);
}

TEST(Totals, Arithmetic) {
    LossWeights w;
    EXPECT_DOUBLE_EQ(total_deterministic({scalar(0), scalar(0), scalar(0)}, w).item<double>(), 0.0);
    EXPECT_NEAR(total_deterministic({scalar(1), scalar(0.1), scalar(0.5)}, w).item<double>(), 2.5, 1e-12);
    EXPECT_DOUBLE_EQ(total_probabilistic({scalar(0), scalar(0), scalar(0), scalar(0)}, w).item<double>(), 0.0);
    EXPECT_NEAR(total_probabilistic({scalar(2.5), scalar(0.1), scalar(0.2), scalar(1)}, w).item<double>(), 3.75, 1e-12);
}

TEST(LossWeights, Validation) {
    LossWeights w;
    w.lambda3 = -1;
    EXPECT_THROW(w.validate(), ConfigError);
    LossWeights e;
    e.epsilon = 0;
    EXPECT_THROW(e.validate(), ConfigError);
    auto from = LossWeights::from_config(RunConfig());
    EXPECT_DOUBLE_EQ(from.alpha, 3.0);
    EXPECT_DOUBLE_EQ(from.delta, 4.0);
    EXPECT_DOUBLE_EQ(from.epsilon, 1e-5);
}

TEST(LossOracles, RandomInstancesAgree) {
    auto gen = make_generator(2024);
    for (int trial = 0; trial < 10; ++trial) {
        const int64_t b = 2, h = 8, w = 8;
        auto mask = random_mask(b, h, w, gen);
        std::vector<torch::Tensor> targets, projections;
        for (int64_t l = 0; l < 3; ++l) {
            targets.push_back(torch::randn({b, 2 + l, h >> l, w >> l}, gen, torch::kFloat64));
            projections.push_back(torch::randn({b, 2 + l, h >> l, w >> l}, gen, torch::kFloat64));
        }
        EXPECT_NEAR(prior_distillation_loss(targets, projections, mask, 3.0).item<double>(),
                    oracle::distillation(targets, projections, mask, 3.0), 1e-9);
        auto real = torch::rand({b, 3, h, w}, gen, torch::kFloat64) * 2 - 1;
        auto fake = torch::rand({b, 3, h, w}, gen, torch::kFloat64) * 2 - 1;
        EXPECT_NEAR(reconstruction_loss(real, fake, mask, 4.0).item<double>(), oracle::reconstruction(real, fake, mask, 4.0), 1e-9);
        auto mu = torch::randn({b, 5}, gen, torch::kFloat64), lv = torch::randn({b, 5}, gen, torch::kFloat64);
        EXPECT_NEAR(kl_loss({mu, lv, {}}).item<double>(), oracle::kl(mu, lv), 1e-9);
        std::vector<torch::Tensor> dr{targets[0], targets[1]}, df{projections[0], projections[1]};
        std::vector<torch::Tensor> pr{targets[2]}, pf{projections[2]};
        EXPECT_NEAR(feature_matching_perceptual_loss(dr, df, pr, pf).item<double>(), oracle::feature_matching(dr, df, pr, pf), 1e-9);
        EXPECT_NEAR(perceptual_diversity_loss(targets, projections, mask, 1e-5).item<double>(),
                    oracle::diversity(targets, projections, mask, 1e-5), 1e-9);
    }
}

TEST(LossGradients, FiniteDifferences) {
    auto gen = make_generator(7);
    auto mask = random_mask(1, 4, 4, gen);
    auto other = torch::randn({1, 2, 4, 4}, gen, torch::kFloat64);
    EXPECT_LT(max_relative_gradient_error(
                  [&](const torch::Tensor& x) { return prior_distillation_loss({other}, {x}, mask, 3.0); },
                  torch::randn({1, 2, 4, 4}, gen, torch::kFloat64)),
              1e-3);
    EXPECT_LT(max_relative_gradient_error(
                  [&](const torch::Tensor& x) { return reconstruction_loss(other, x, mask, 4.0); },
                  torch::randn({1, 2, 4, 4}, gen, torch::kFloat64)),
              1e-3);
    EXPECT_LT(max_relative_gradient_error([](const torch::Tensor& p) { return generator_adversarial_loss(p); },
                                          torch::rand({1, 1, 4, 4}, gen, torch::kFloat64) * 0.8 + 0.1),
              1e-3);
    EXPECT_LT(max_relative_gradient_error(
                  [](const torch::Tensor& mu) { return kl_loss({mu, mu * 0.5, {}}); },
                  torch::randn({2, 4}, gen, torch::kFloat64)),
              1e-3);
    EXPECT_LT(max_relative_gradient_error(
                  [&](const torch::Tensor& x) { return perceptual_diversity_loss({other}, {x}, mask, 1e-5); },
                  torch::randn({1, 2, 4, 4}, gen, torch::kFloat64)),
              1e-3);
}
