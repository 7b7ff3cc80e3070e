#pragma once

#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace spn {

class RunConfig;

enum class Mode { Deterministic, Probabilistic };

Mode parse_mode(const std::string& text); // accepts deterministic|det|probabilistic|prob
std::string mode_name(Mode mode);

// S_enc^1..L, finest first.
struct ContextFeatures {
    std::vector<torch::Tensor> levels;
};

// S_prior^1..L, finest first.
struct PriorPyramid {
    std::vector<torch::Tensor> levels;
};

// Gaussian posterior q_s = N(mu, diag(sigma^2)) with sigma = exp(0.5 * logvar).
struct LatentStats {
    torch::Tensor mu;
    torch::Tensor logvar;
    torch::Tensor z_hat; // undefined until sampled

    torch::Tensor sigma() const { return torch::exp(0.5 * logvar); }
};

// z_hat = z * sigma + mu.
torch::Tensor sample_latent(const LatentStats& stats, const torch::Tensor& z);

struct PriorLearnerOptions {
    std::vector<int64_t> channels{64, 128, 256};
    int64_t latent_dim = 256;
    Mode mode = Mode::Deterministic;
    bool gv_uses_context = false;
    int64_t gv_grid = 4;
    int64_t res_blocks = 2;
    int64_t rdb_layers = 4;
    int64_t rdb_growth = 32;
    // Output widths of the distillation heads f^l; empty builds an
    // inference-only learner without heads.
    std::vector<int64_t> head_dims;

    int64_t levels() const { return static_cast<int64_t>(channels.size()); }
    static PriorLearnerOptions from_config(const RunConfig& config, std::vector<int64_t> head_dims);
};

// conv3x3 -> leaky -> conv3x3, plus identity.
struct ResBlockImpl : torch::nn::Module {
    explicit ResBlockImpl(int64_t channels);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
};
TORCH_MODULE(ResBlock);

// Densely connected conv layers fused by a 1x1 conv, plus identity.
struct ResidualDenseBlockImpl : torch::nn::Module {
    ResidualDenseBlockImpl(int64_t channels, int64_t layers, int64_t growth);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::ModuleList dense;
    torch::nn::Conv2d fuse{nullptr};
};
TORCH_MODULE(ResidualDenseBlock);

// U-Net style semantic prior learner. Encodes the x2-upsampled masked image
// and mask, then decodes a prior pyramid with pixel-shuffle upsampling and
// skip connections. In probabilistic mode the coarsest prior comes from a
// variational module (E_v, G_v) instead of the residual stack.
class PriorLearnerImpl : public torch::nn::Module {
public:
    explicit PriorLearnerImpl(PriorLearnerOptions options);

    // Inputs at native resolution (B x 3 x H x W and B x 1 x H x W); both are
    // bilinearly upsampled x2 and concatenated before the encoder.
    ContextFeatures encode_context(const torch::Tensor& masked_image, const torch::Tensor& mask);

    PriorPyramid build_pyramid_deterministic(const ContextFeatures& ctx);
    LatentStats infer_latent_stats(const torch::Tensor& top_context);
    PriorPyramid build_pyramid_stochastic(const ContextFeatures& ctx, const torch::Tensor& z_hat);

    // 1x1 distillation heads; shapes match the extractor's targets.
    std::vector<torch::Tensor> distill_project(const PriorPyramid& pyramid);

    bool has_heads() const { return !options_.head_dims.empty(); }
    const PriorLearnerOptions& options() const { return options_; }
    Mode mode() const { return options_.mode; }

    torch::nn::Conv2d head{nullptr};
    torch::nn::ModuleList down;
    ResidualDenseBlock rdb{nullptr};
    torch::nn::ModuleList top_blocks;   // Multi-ResBlock (deterministic mode)
    torch::nn::ModuleList merge;        // per level l < L: 1x1 merge conv
    torch::nn::ModuleList merge_blocks; // per level l < L: ResBlock
    torch::nn::ModuleList heads;        // distillation heads f^l

    // Variational module (probabilistic mode only).
    torch::nn::Linear ev_mu{nullptr}, ev_logvar{nullptr}, gv_fc{nullptr};
    torch::nn::Conv2d gv_context{nullptr};
    torch::nn::ModuleList gv_blocks;

private:
    PriorPyramid decode_lower_levels(const ContextFeatures& ctx, torch::Tensor top);

    PriorLearnerOptions options_;
};
TORCH_MODULE(PriorLearner);

} // namespace spn
