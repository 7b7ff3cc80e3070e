#include "spn/training.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "spn/errors.hpp"
#include "spn/nn_util.hpp"
#include "spn/tensor_io.hpp"

namespace spn {

namespace {

constexpr uint64_t kDiscSeedSalt = 0xD15C;
constexpr uint64_t kLatentSeedSalt = 0x1A7E;
constexpr uint64_t kDataSeedSalt = 0xDA7A;

void require_finite(const LossReport& report) {
    for (const auto& [key, value] : report.values)
        if (!std::isfinite(value))
            throw DivergenceError("non-finite loss '" + key + "' at iteration " + std::to_string(report.iteration) +
                                  "; components: " + report.to_string());
}

void set_requires_grad(torch::nn::Module& module, bool flag) {
    for (auto& p : module.parameters()) p.set_requires_grad(flag);
}

// Adam moments in parameter-group order. libtorch keys its state by tensor
// address, so torch::save emits it in a run-dependent order.
NamedTensors adam_state(torch::optim::Adam& opt) {
    NamedTensors out;
    auto& state = opt.state();
    const auto& groups = opt.param_groups();
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (std::size_t i = 0; i < groups[g].params().size(); ++i) {
            auto it = state.find(groups[g].params()[i].unsafeGetTensorImpl());
            if (it == state.end()) continue;
            const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
            const auto prefix = std::to_string(g) + "." + std::to_string(i) + ".";
            out.emplace_back(prefix + "step", torch::tensor({s.step()}, torch::kInt64));
            out.emplace_back(prefix + "exp_avg", s.exp_avg());
            out.emplace_back(prefix + "exp_avg_sq", s.exp_avg_sq());
            if (s.max_exp_avg_sq().defined()) out.emplace_back(prefix + "max_exp_avg_sq", s.max_exp_avg_sq());
        }
    return out;
}

void load_adam_state(torch::optim::Adam& opt, const NamedTensors& blob, const std::string& what) {
    auto& state = opt.state();
    state.clear();
    const auto& groups = opt.param_groups();
    for (std::size_t k = 0; k < blob.size();) {
        const auto& name = blob[k].first;
        const auto dot1 = name.find('.'), dot2 = name.find('.', dot1 + 1);
        if (dot1 == std::string::npos || dot2 == std::string::npos || name.substr(dot2 + 1) != "step")
            throw Error("malformed optimizer state in " + what + " at '" + name + "'");
        const auto g = std::stoul(name.substr(0, dot1)), i = std::stoul(name.substr(dot1 + 1, dot2 - dot1 - 1));
        if (g >= groups.size() || i >= groups[g].params().size())
            throw ShapeError(what + ": optimizer state for unknown parameter " + name.substr(0, dot2));
        const auto& param = groups[g].params()[i];
        const auto prefix = name.substr(0, dot2 + 1);
        auto s = std::make_unique<torch::optim::AdamParamState>();
        s->step(blob[k++].second.item<int64_t>());
        auto take = [&](const std::string& field) {
            if (k >= blob.size() || blob[k].first != prefix + field)
                throw Error("malformed optimizer state in " + what + ": expected " + prefix + field);
            const auto& t = blob[k++].second;
            if (t.sizes() != param.sizes())
                throw ShapeError(what + ": " + prefix + field + " has shape " + shape_string(t) + ", parameter has " +
                                 shape_string(param));
            return t.to(param.options()).clone();
        };
        s->exp_avg(take("exp_avg"));
        s->exp_avg_sq(take("exp_avg_sq"));
        if (k < blob.size() && blob[k].first == prefix + "max_exp_avg_sq") s->max_exp_avg_sq(take("max_exp_avg_sq"));
        state[param.unsafeGetTensorImpl()] = std::move(s);
    }
}

} // namespace

int64_t TrainConfig::decay_start() const {
    return static_cast<int64_t>(std::ceil(decay_fraction * static_cast<double>(total_iters) - 1e-9));
}

void TrainConfig::validate() const {
    if (total_iters <= 0) throw ConfigError("train.iters must be positive");
    if (batch_size <= 0) throw ConfigError("train.batch_size must be positive");
    if (!(lr_final > 0 && lr_final <= lr_initial)) throw ConfigError("learning rates must satisfy 0 < lr_final <= lr_initial");
    if (!(decay_fraction > 0 && decay_fraction <= 1)) throw ConfigError("train.decay_fraction must lie in (0, 1]");
    if (decay_start() >= total_iters) throw ConfigError("decay must start before the last iteration");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("Adam betas must lie in [0, 1)");
    if (clip_norm < 0) throw ConfigError("train.clip_norm must be nonnegative");
}

TrainConfig TrainConfig::from_config(const RunConfig& config) {
    TrainConfig t;
    t.mode = parse_mode(config.text("prior.mode"));
    t.total_iters = config.integer("train.iters");
    t.batch_size = config.integer("train.batch_size");
    t.lr_initial = config.real("train.lr_initial");
    t.lr_final = config.real("train.lr_final");
    t.decay_fraction = config.real("train.decay_fraction");
    t.beta1 = config.real("train.beta1");
    t.beta2 = config.real("train.beta2");
    t.clip_norm = config.real("train.clip_norm");
    t.seed = static_cast<uint64_t>(config.integer("run.seed"));
    t.validate();
    return t;
}

double lr_at(const TrainConfig& config, int64_t iteration) {
    if (iteration < 0 || iteration >= config.total_iters)
        throw ContractError("iteration " + std::to_string(iteration) + " outside [0, " +
                            std::to_string(config.total_iters) + ")");
    return iteration < config.decay_start() ? config.lr_initial : config.lr_final;
}

std::string LossReport::to_string() const {
    std::ostringstream out;
    out.precision(6);
    bool first = true;
    for (const auto& [key, value] : values) {
        out << (first ? "" : " ") << key << "=" << value;
        first = false;
    }
    return out.str();
}

Trainer::Trainer(RunConfig config)
    : config_(std::move(config)),
      train_(TrainConfig::from_config(config_)),
      weights_(LossWeights::from_config(config_)),
      adv_form_(parse_adversarial_form(config_.text("adv.loss_form"))),
      extractor_(register_extractor(config_)),
      perceptual_(make_perceptual(config_)),
      latent_rng_(make_generator(mix_seed(train_.seed ^ kLatentSeedSalt))),
      data_rng_(mix_seed(train_.seed ^ kDataSeedSalt)) {
    model_ = make_model(config_, extractor_->channel_dims());
    {
        ScopedSeed scoped(mix_seed(train_.seed ^ kDiscSeedSalt));
        disc_ = make_discriminator(config_);
    }
    auto adam = [&](std::vector<torch::Tensor> params) {
        return std::make_unique<torch::optim::Adam>(
            std::move(params),
            torch::optim::AdamOptions(train_.lr_initial).betas({train_.beta1, train_.beta2}));
    };
    gen_opt_ = adam(generator_side_parameters());
    disc_opt_ = adam(disc_->parameters());
}

std::vector<torch::Tensor> Trainer::generator_side_parameters() { return model_->parameters(); }

void Trainer::set_learning_rate(double lr) {
    for (auto* opt : {gen_opt_.get(), disc_opt_.get()})
        for (auto& group : opt->param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

Batch Trainer::sample_batch(const Dataset& data) {
    if (data.size() == 0) throw ContractError("empty training set");
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    std::vector<SamplePair> pairs;
    pairs.reserve(static_cast<std::size_t>(train_.batch_size));
    for (int64_t i = 0; i < train_.batch_size; ++i) pairs.push_back(data.get(pick(data_rng_), &data_rng_));
    return collate(pairs);
}

LossReport Trainer::step(const Batch& batch) {
    LossReport report;
    report.iteration = iteration_;
    report.lr = lr_at(train_, iteration_);
    set_learning_rate(report.lr);
    model_->train();
    disc_->train();

    const auto& images = batch.images;
    const auto& masks = batch.masks;
    const auto targets = extract_targets(*extractor_, images, model_->levels());

    std::vector<torch::Tensor> latents;
    if (train_.mode == Mode::Probabilistic) {
        const auto b = images.size(0);
        latents.push_back(torch::randn({b, model_->latent_dim()}, latent_rng_));
        latents.push_back(torch::randn({b, model_->latent_dim()}, latent_rng_));
    }
    auto fwd = model_->forward(images, masks, latents);
    const auto& fake = fwd.samples.front().image;

    // Discriminator update.
    disc_opt_->zero_grad();
    auto real_out = disc_->forward(images);
    auto fake_out = disc_->forward(fake.detach());
    auto l_adv_d = discriminator_adversarial_loss(real_out.probs, fake_out.probs, adv_form_);
    report.values["l_adv_d"] = l_adv_d.item<double>();
    require_finite(report);
    l_adv_d.backward();
    if (train_.clip_norm > 0) torch::nn::utils::clip_grad_norm_(disc_->parameters(), train_.clip_norm);
    disc_opt_->step();

    // Generator-side update through generator, prior learner and heads.
    set_requires_grad(*disc_, false);
    gen_opt_->zero_grad();
    auto l_prior = prior_distillation_loss(targets.levels, model_->prior->distill_project(fwd.samples.front().pyramid),
                                           masks, weights_.alpha);
    auto l_img = reconstruction_loss(images, fake, masks, weights_.delta);
    auto d_fake = disc_->forward(fake);
    auto l_adv = generator_adversarial_loss(d_fake.probs);
    auto total = total_deterministic({l_prior, l_img, l_adv}, weights_);
    report.values["l_prior"] = l_prior.item<double>();
    report.values["l_img"] = l_img.item<double>();
    report.values["l_adv"] = l_adv.item<double>();

    if (train_.mode == Mode::Probabilistic) {
        std::vector<torch::Tensor> disc_real, perc_real;
        {
            torch::NoGradGuard no_grad;
            disc_real = disc_->forward(images).features;
            perc_real = (*perceptual_)(images);
        }
        const auto perc_fake1 = (*perceptual_)(fake);
        const auto perc_fake2 = (*perceptual_)(fwd.samples[1].image);
        auto l_feature = feature_matching_perceptual_loss(disc_real, d_fake.features, perc_real, perc_fake1);
        auto l_diverse = perceptual_diversity_loss(perc_fake1, perc_fake2, masks, weights_.epsilon);
        auto l_kl = kl_loss(*fwd.stats);
        total = total_probabilistic({total, l_feature, l_diverse, l_kl}, weights_);
        report.values["l_feature"] = l_feature.item<double>();
        report.values["l_diverse"] = l_diverse.item<double>();
        report.values["l_kl"] = l_kl.item<double>();
    }
    report.values["total"] = total.item<double>();
    try {
        require_finite(report);
    } catch (...) {
        set_requires_grad(*disc_, true);
        throw;
    }
    total.backward();
    if (train_.clip_norm > 0) torch::nn::utils::clip_grad_norm_(generator_side_parameters(), train_.clip_norm);
    gen_opt_->step();
    set_requires_grad(*disc_, true);

    ++iteration_;
    return report;
}

void Trainer::save_checkpoint(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir / "params");
    std::filesystem::create_directories(dir / "optim");
    write_tensor_blob(dir / "params" / "prior.bin", module_state(*model_->prior));
    write_tensor_blob(dir / "params" / "gen.bin", module_state(*model_->generator));
    write_tensor_blob(dir / "params" / "disc.bin", module_state(*disc_));
    write_tensor_blob(dir / "optim" / "gen.bin", adam_state(*gen_opt_));
    write_tensor_blob(dir / "optim" / "disc.bin", adam_state(*disc_opt_));
    write_tensor_blob(dir / "optim" / "rng.bin", {{"latent_rng", latent_rng_.get_state().to(torch::kInt64)}});
    {
        std::ofstream out(dir / "optim" / "data_rng.txt");
        out << data_rng_;
        if (!out) throw Error("cannot write data RNG state");
    }
    config_.save(dir / "config.txt");
    write_meta(dir, {kCheckpointVersion, iteration_, mode_name(train_.mode), "training"});
}

Trainer Trainer::load_checkpoint(const std::filesystem::path& dir, const std::optional<RunConfig>& override_config) {
    const auto meta = read_meta(dir);
    if (meta.kind != "training") throw Error(dir.string() + " is an inference export, not a training checkpoint");
    Trainer trainer(override_config ? *override_config : RunConfig::from_file(dir / "config.txt"));
    load_module_state(*trainer.model_->prior, read_tensor_blob(dir / "params" / "prior.bin"), "params/prior.bin");
    load_module_state(*trainer.model_->generator, read_tensor_blob(dir / "params" / "gen.bin"), "params/gen.bin");
    load_module_state(*trainer.disc_, read_tensor_blob(dir / "params" / "disc.bin"), "params/disc.bin");
    load_adam_state(*trainer.gen_opt_, read_tensor_blob(dir / "optim" / "gen.bin"), "optim/gen.bin");
    load_adam_state(*trainer.disc_opt_, read_tensor_blob(dir / "optim" / "disc.bin"), "optim/disc.bin");
    const auto rng = read_tensor_blob(dir / "optim" / "rng.bin");
    if (rng.size() != 1 || rng.front().first != "latent_rng") throw Error("malformed optim/rng.bin");
    trainer.latent_rng_.set_state(rng.front().second.to(torch::kUInt8));
    {
        std::ifstream in(dir / "optim" / "data_rng.txt");
        in >> trainer.data_rng_;
        if (!in) throw Error("malformed optim/data_rng.txt");
    }
    trainer.iteration_ = meta.iteration;
    return trainer;
}

void Trainer::export_inference(const std::filesystem::path& dir) const { spn::export_inference(model_, config_, dir); }

} // namespace spn
