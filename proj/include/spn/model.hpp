#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "spn/config.hpp"
#include "spn/generator.hpp"
#include "spn/prior_learner.hpp"

namespace spn {

// One forward pass of the full network for a single latent draw.
struct SpnOutput {
    torch::Tensor image; // raw generator output, B x 3 x H x W in [-1, 1]
    PriorPyramid pyramid;
    DecoderFeatures decoder;
};

struct SpnForward {
    ContextFeatures context;
    std::optional<LatentStats> stats; // probabilistic mode only
    std::vector<SpnOutput> samples;
};

// Prior learner + generator. Inputs are the full image and mask; the model
// zeroes the missing region itself, so the ground truth never leaks through.
class SpnModelImpl : public torch::nn::Module {
public:
    SpnModelImpl(PriorLearnerOptions prior_options, GeneratorOptions generator_options);

    static torch::Tensor mask_image(const torch::Tensor& image, const torch::Tensor& mask);

    // Deterministic mode ignores `latents` and yields one sample. Probabilistic
    // mode yields one sample per latent (each B x d_z); the context and
    // posterior are computed once and shared.
    SpnForward forward(const torch::Tensor& image, const torch::Tensor& mask,
                       const std::vector<torch::Tensor>& latents = {}, bool capture_decoder = false);

    Mode mode() const { return prior->mode(); }
    int64_t levels() const { return prior->options().levels(); }
    int64_t latent_dim() const { return prior->options().latent_dim; }

    PriorLearner prior{nullptr};
    Generator generator{nullptr};
};
TORCH_MODULE(SpnModel);

// Builds an untrained model from a config. With `head_dims` the prior learner
// carries distillation heads (training); without, it is inference-only.
SpnModel make_model(const RunConfig& config, const std::vector<int64_t>& head_dims = {});

// Standard-normal latents for a batch where row i is drawn from its own
// stream seeded by seeds[i].
torch::Tensor latents_for_seeds(const std::vector<uint64_t>& seeds, int64_t latent_dim);

// Anything that fills masked regions. `images` are full images (the ground
// truth is visible to oracle implementations only). Returns raw outputs.
class Inpainter {
public:
    virtual ~Inpainter() = default;
    virtual Mode mode() const = 0;
    virtual int64_t levels() const = 0;
    virtual std::string identity() const = 0;
    virtual torch::Tensor inpaint(const torch::Tensor& images, const torch::Tensor& masks,
                                  const std::vector<uint64_t>& seeds) const = 0;
};

using InpainterPtr = std::shared_ptr<const Inpainter>;

// Read-only wrapper around a trained model; safe for concurrent calls.
class ModelInpainter final : public Inpainter {
public:
    ModelInpainter(SpnModel model, std::string identity);
    Mode mode() const override { return model_->mode(); }
    int64_t levels() const override { return model_->levels(); }
    std::string identity() const override { return identity_; }
    torch::Tensor inpaint(const torch::Tensor& images, const torch::Tensor& masks,
                          const std::vector<uint64_t>& seeds) const override;

    // Prior pyramid for a single latent (used by visualization).
    PriorPyramid pyramid(const torch::Tensor& images, const torch::Tensor& masks, uint64_t seed) const;

private:
    mutable SpnModel model_;
    std::string identity_;
};

// Debug oracle: returns the ground truth unchanged.
class IdentityInpainter final : public Inpainter {
public:
    explicit IdentityInpainter(Mode mode = Mode::Deterministic, int64_t levels = 3) : mode_(mode), levels_(levels) {}
    Mode mode() const override { return mode_; }
    int64_t levels() const override { return levels_; }
    std::string identity() const override { return "identity"; }
    torch::Tensor inpaint(const torch::Tensor& images, const torch::Tensor&,
                          const std::vector<uint64_t>&) const override {
        return images.clone();
    }

private:
    Mode mode_;
    int64_t levels_;
};

constexpr int64_t kCheckpointVersion = 1;

// Contents of the `meta` file in checkpoint and export directories.
struct CheckpointMeta {
    int64_t format_version = kCheckpointVersion;
    int64_t iteration = 0;
    std::string mode;
    std::string kind; // "training" or "inference"
};
void write_meta(const std::filesystem::path& dir, const CheckpointMeta& meta);
// Throws CheckpointVersionError when the directory was written by another format version.
CheckpointMeta read_meta(const std::filesystem::path& dir);

// A loaded inference model plus its provenance.
struct LoadedModel {
    std::shared_ptr<ModelInpainter> inpainter;
    RunConfig config;
    std::string checkpoint_hash; // sha256 over the prior and generator parameter blobs
};

// Writes params/{prior,gen}.bin (no distillation heads), config.txt and meta.
void export_inference(const SpnModel& model, const RunConfig& config, const std::filesystem::path& dir);

// Loads a training checkpoint or an inference export.
LoadedModel load_inference(const std::filesystem::path& dir);

} // namespace spn
