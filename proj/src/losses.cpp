#include "spn/losses.hpp"

#include "spn/config.hpp"
#include "spn/data.hpp"
#include "spn/errors.hpp"
#include "spn/tensor_io.hpp"

namespace spn {

namespace {

constexpr double kLogClamp = 1e-12;

torch::Tensor safe_log(const torch::Tensor& p) { return torch::log(p.clamp_min(kLogClamp)); }

torch::Tensor as_batched(const torch::Tensor& t) { return t.dim() == 3 ? t.unsqueeze(0) : t; }

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const std::string& what) {
    if (a.sizes() != b.sizes())
        throw ShapeError(what + ": shapes " + shape_string(a) + " and " + shape_string(b) + " differ");
}

} // namespace

LossWeights LossWeights::from_config(const RunConfig& config) {
    LossWeights w;
    w.alpha = config.real("loss.alpha");
    w.delta = config.real("loss.delta");
    w.lambda1 = config.real("loss.lambda1");
    w.lambda2 = config.real("loss.lambda2");
    w.lambda3 = config.real("loss.lambda3");
    w.lambda4 = config.real("loss.lambda4");
    w.lambda5 = config.real("loss.lambda5");
    w.epsilon = config.real("loss.epsilon");
    w.validate();
    return w;
}

void LossWeights::validate() const {
    for (double v : {alpha, delta, lambda1, lambda2, lambda3, lambda4, lambda5})
        if (v < 0) throw ConfigError("loss weights must be nonnegative");
    if (epsilon <= 0) throw ConfigError("loss.epsilon must be positive");
}

torch::Tensor prior_distillation_loss(const std::vector<torch::Tensor>& targets,
                                      const std::vector<torch::Tensor>& projections, const torch::Tensor& mask,
                                      double alpha) {
    if (targets.size() != projections.size())
        throw ShapeError("distillation: " + std::to_string(targets.size()) + " targets vs " +
                         std::to_string(projections.size()) + " projections");
    auto m = as_batched(mask);
    torch::Tensor total;
    for (std::size_t l = 0; l < targets.size(); ++l) {
        auto t = as_batched(targets[l]);
        auto p = as_batched(projections[l]);
        require_same_shape(t, p, "distillation level " + std::to_string(l + 1));
        auto ml = resize_mask_to(m, t.size(2), t.size(3));
        auto term = ((t - p).abs() * (1.0 + alpha * ml)).mean();
        total = total.defined() ? total + term : term;
    }
    return total;
}

torch::Tensor reconstruction_loss(const torch::Tensor& real, const torch::Tensor& fake, const torch::Tensor& mask,
                                  double delta) {
    require_same_shape(real, fake, "reconstruction");
    return ((real - fake).abs() * (1.0 + delta * mask)).mean();
}

AdversarialForm parse_adversarial_form(const std::string& text) {
    if (text == "minimax") return AdversarialForm::Minimax;
    if (text == "nonsaturating") return AdversarialForm::NonSaturating;
    throw ConfigError("unknown adversarial loss form '" + text + "'");
}

torch::Tensor generator_adversarial_loss(const torch::Tensor& fake_probs) { return -safe_log(1.0 - fake_probs).mean(); }

torch::Tensor discriminator_adversarial_loss(const torch::Tensor& real_probs, const torch::Tensor& fake_probs,
                                             AdversarialForm form) {
    if (form == AdversarialForm::Minimax) return safe_log(real_probs).mean() + safe_log(1.0 - fake_probs).mean();
    return -safe_log(1.0 - real_probs).mean() - safe_log(fake_probs).mean();
}

AdversarialLosses adversarial_losses(PatchDiscriminator& disc, const torch::Tensor& real, const torch::Tensor& fake,
                                     AdversarialForm form) {
    AdversarialLosses out;
    out.real_out = disc->forward(real);
    out.fake_out = disc->forward(fake);
    out.gen = generator_adversarial_loss(out.fake_out.probs);
    auto detached_fake = disc->forward(fake.detach());
    out.disc = discriminator_adversarial_loss(out.real_out.probs, detached_fake.probs, form);
    return out;
}

torch::Tensor kl_loss(const LatentStats& stats) {
    auto per_dim = stats.mu.pow(2) + torch::exp(stats.logvar) - stats.logvar - 1.0;
    return 0.5 * per_dim.view({per_dim.size(0), -1}).sum(1).mean();
}

torch::Tensor feature_matching_perceptual_loss(const std::vector<torch::Tensor>& disc_real,
                                               const std::vector<torch::Tensor>& disc_fake,
                                               const std::vector<torch::Tensor>& perc_real,
                                               const std::vector<torch::Tensor>& perc_fake) {
    if (disc_real.size() != disc_fake.size() || perc_real.size() != perc_fake.size())
        throw ShapeError("feature matching: layer counts differ");
    if (disc_real.empty() || perc_real.empty()) throw ShapeError("feature matching: no layers");
    auto average = [](const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
        torch::Tensor sum;
        for (std::size_t i = 0; i < a.size(); ++i) {
            require_same_shape(a[i], b[i], "feature matching layer " + std::to_string(i + 1));
            auto term = (a[i] - b[i]).abs().mean();
            sum = sum.defined() ? sum + term : term;
        }
        return sum / static_cast<double>(a.size());
    };
    return average(disc_real, disc_fake) + average(perc_real, perc_fake);
}

torch::Tensor perceptual_diversity_loss(const std::vector<torch::Tensor>& perc_fake1,
                                        const std::vector<torch::Tensor>& perc_fake2, const torch::Tensor& mask,
                                        double epsilon) {
    if (perc_fake1.size() != perc_fake2.size() || perc_fake1.empty())
        throw ShapeError("diversity: layer counts differ");
    auto m = as_batched(mask);
    torch::Tensor sum;
    for (std::size_t i = 0; i < perc_fake1.size(); ++i) {
        const auto& a = perc_fake1[i];
        const auto& b = perc_fake2[i];
        require_same_shape(a, b, "diversity layer " + std::to_string(i + 1));
        auto mi = resize_mask_to(m, a.size(2), a.size(3));
        auto divergence = (a * mi - b * mi).abs().view({a.size(0), -1}).sum(1);
        auto term = (1.0 / (divergence + epsilon)).mean();
        sum = sum.defined() ? sum + term : term;
    }
    return sum / static_cast<double>(perc_fake1.size());
}

torch::Tensor perceptual_diversity_loss(const torch::Tensor& fake1, const torch::Tensor& fake2,
                                        const PerceptualExtractor& perceptual, const torch::Tensor& mask,
                                        double epsilon) {
    return perceptual_diversity_loss(perceptual(fake1), perceptual(fake2), mask, epsilon);
}

torch::Tensor total_deterministic(const DeterministicTerms& terms, const LossWeights& weights) {
    return terms.prior + weights.lambda1 * terms.img + weights.lambda2 * terms.adv;
}

torch::Tensor total_probabilistic(const ProbabilisticTerms& terms, const LossWeights& weights) {
    return terms.det + weights.lambda3 * terms.feature + weights.lambda4 * terms.diverse + weights.lambda5 * terms.kl;
}

} // namespace spn
