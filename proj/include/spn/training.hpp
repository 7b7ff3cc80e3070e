#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "spn/adversary.hpp"
#include "spn/config.hpp"
#include "spn/data.hpp"
#include "spn/losses.hpp"
#include "spn/model.hpp"
#include "spn/perceptual.hpp"
#include "spn/pretext.hpp"

namespace spn {

struct TrainConfig {
    Mode mode = Mode::Deterministic;
    int64_t total_iters = 150000;
    int64_t batch_size = 8;
    double lr_initial = 1e-4;
    double lr_final = 1e-5;
    double decay_fraction = 0.75;
    double beta1 = 0.0;
    double beta2 = 0.9;
    double clip_norm = 10.0;
    uint64_t seed = 0;

    int64_t decay_start() const;
    void validate() const;
    static TrainConfig from_config(const RunConfig& config);
};

// Step decay: lr_initial before decay_start, lr_final from it on.
double lr_at(const TrainConfig& config, int64_t iteration);

// Component losses of one iteration, keyed l_prior, l_img, l_adv, l_adv_d,
// total and, in probabilistic mode, l_feature, l_diverse, l_kl.
struct LossReport {
    int64_t iteration = 0;
    double lr = 0.0;
    std::map<std::string, double> values;

    double at(const std::string& key) const { return values.at(key); }
    std::string to_string() const;
};

// Owns every trainable component and its optimizer. One `step` is one
// discriminator update followed by one update of prior learner + generator.
class Trainer {
public:
    explicit Trainer(RunConfig config);

    LossReport step(const Batch& batch);

    // Draws batch_size pairs from `data` with the trainer's own data RNG, so
    // sampling is part of the checkpointed state.
    Batch sample_batch(const Dataset& data);

    int64_t iteration() const { return iteration_; }
    const RunConfig& config() const { return config_; }
    const TrainConfig& train_config() const { return train_; }

    SpnModel& model() { return model_; }
    PatchDiscriminator& discriminator() { return disc_; }
    const PretextExtractor& extractor() const { return *extractor_; }
    const PerceptualExtractor& perceptual() const { return *perceptual_; }

    // Directory layout: params/{prior,gen,disc}.bin, optim/{gen,disc}.bin,
    // optim/rng.bin, optim/data_rng.txt, config.txt, meta.
    void save_checkpoint(const std::filesystem::path& dir) const;

    // Rebuilds a trainer from a checkpoint. `override_config` replaces the
    // stored config (e.g. a longer schedule); architecture keys that disagree
    // with the stored parameters raise ShapeError.
    static Trainer load_checkpoint(const std::filesystem::path& dir,
                                   const std::optional<RunConfig>& override_config = std::nullopt);

    void export_inference(const std::filesystem::path& dir) const;

private:
    std::vector<torch::Tensor> generator_side_parameters();
    void set_learning_rate(double lr);

    RunConfig config_;
    TrainConfig train_;
    LossWeights weights_;
    AdversarialForm adv_form_;
    ExtractorPtr extractor_;
    PerceptualPtr perceptual_;
    SpnModel model_{nullptr};
    PatchDiscriminator disc_{nullptr};
    std::unique_ptr<torch::optim::Adam> gen_opt_;
    std::unique_ptr<torch::optim::Adam> disc_opt_;
    at::Generator latent_rng_;
    std::mt19937_64 data_rng_;
    int64_t iteration_ = 0;
};

} // namespace spn
