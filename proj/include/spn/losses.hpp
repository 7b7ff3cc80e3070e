#pragma once

#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "spn/adversary.hpp"
#include "spn/perceptual.hpp"
#include "spn/prior_learner.hpp"

namespace spn {

class RunConfig;

struct LossWeights {
    double alpha = 3.0;   // distillation emphasis on missing pixels
    double delta = 4.0;   // reconstruction emphasis on missing pixels
    double lambda1 = 10.0; // L_img
    double lambda2 = 1.0;  // L_adv
    double lambda3 = 10.0; // L_feature
    double lambda4 = 1.0;  // L_diverse
    double lambda5 = 0.05; // L_KL
    double epsilon = 1e-5; // diversity perturbation

    static LossWeights from_config(const RunConfig& config);
    void validate() const;
};

// sum_l mean(|target_l - projection_l| * (1 + alpha * M_l)); masks are
// nearest-resized to each level and broadcast over channels.
torch::Tensor prior_distillation_loss(const std::vector<torch::Tensor>& targets,
                                      const std::vector<torch::Tensor>& projections, const torch::Tensor& mask,
                                      double alpha);

// mean(|real - fake| * (1 + delta * M)).
torch::Tensor reconstruction_loss(const torch::Tensor& real, const torch::Tensor& fake, const torch::Tensor& mask,
                                  double delta);

enum class AdversarialForm { Minimax, NonSaturating };
AdversarialForm parse_adversarial_form(const std::string& text);

// D returns the probability that its input is FAKE. Both players minimize.
//   minimax:       gen = -mean log(1 - D(fake)),  disc = mean log D(real) + mean log(1 - D(fake))
//   nonsaturating: gen as above,                 disc = -mean log(1 - D(real)) - mean log D(fake)
// Logs are clamped at 1e-12.
torch::Tensor generator_adversarial_loss(const torch::Tensor& fake_probs);
torch::Tensor discriminator_adversarial_loss(const torch::Tensor& real_probs, const torch::Tensor& fake_probs,
                                             AdversarialForm form = AdversarialForm::Minimax);

struct AdversarialLosses {
    torch::Tensor gen;  // gradients reach `fake`
    torch::Tensor disc; // evaluated on fake.detach()
    DiscriminatorOutput real_out, fake_out;
};
AdversarialLosses adversarial_losses(PatchDiscriminator& disc, const torch::Tensor& real, const torch::Tensor& fake,
                                     AdversarialForm form = AdversarialForm::Minimax);

// KL(N(mu, sigma^2) || N(0, I)), summed over latent dims, averaged over batch.
torch::Tensor kl_loss(const LatentStats& stats);

// (1/N) sum_i mean|phi_i(real) - phi_i(fake)| + (1/K) sum_i mean|vphi_i(real) - vphi_i(fake)|.
torch::Tensor feature_matching_perceptual_loss(const std::vector<torch::Tensor>& disc_real,
                                               const std::vector<torch::Tensor>& disc_fake,
                                               const std::vector<torch::Tensor>& perc_real,
                                               const std::vector<torch::Tensor>& perc_fake);

// (1/K) sum_i 1 / (||vphi_i(f1) * M_i - vphi_i(f2) * M_i||_1 + eps) with the
// L1 norm a per-sample SUM over elements, averaged over the batch. M_i keeps
// the missing region (mask = 1).
torch::Tensor perceptual_diversity_loss(const std::vector<torch::Tensor>& perc_fake1,
                                        const std::vector<torch::Tensor>& perc_fake2, const torch::Tensor& mask,
                                        double epsilon);
torch::Tensor perceptual_diversity_loss(const torch::Tensor& fake1, const torch::Tensor& fake2,
                                        const PerceptualExtractor& perceptual, const torch::Tensor& mask,
                                        double epsilon);

struct DeterministicTerms {
    torch::Tensor prior, img, adv;
};
struct ProbabilisticTerms {
    torch::Tensor det, feature, diverse, kl;
};

// L_prior + lambda1 L_img + lambda2 L_adv.
torch::Tensor total_deterministic(const DeterministicTerms& terms, const LossWeights& weights);
// L_DET + lambda3 L_feature + lambda4 L_diverse + lambda5 L_KL.
torch::Tensor total_probabilistic(const ProbabilisticTerms& terms, const LossWeights& weights);

} // namespace spn
