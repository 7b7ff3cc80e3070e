#pragma once

#include <vector>

#include <torch/torch.h>

#include "spn/prior_learner.hpp"

namespace spn {

class RunConfig;

struct GeneratorOptions {
    std::vector<int64_t> channels{64, 128, 256}; // widths per level, finest first
    std::vector<int64_t> prior_channels{64, 128, 256};
    int64_t bottom_blocks = 8;
    int64_t spade_hidden = 128;

    int64_t levels() const { return static_cast<int64_t>(channels.size()); }
    static GeneratorOptions from_config(const RunConfig& config);
};

// Spatially-adaptive normalization: gamma * IN(x) + beta with gamma, beta
// predicted per pixel from the prior map.
struct SpadeImpl : torch::nn::Module {
    SpadeImpl(int64_t feature_channels, int64_t prior_channels, int64_t hidden);
    // The prior is nearest-resized to x's spatial size when they differ.
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& prior);

    // gamma and beta maps at x's resolution.
    std::pair<torch::Tensor, torch::Tensor> modulation(const torch::Tensor& prior, int64_t height, int64_t width);

    torch::nn::Conv2d shared{nullptr}, gamma{nullptr}, beta{nullptr};
    int64_t feature_channels;
};
TORCH_MODULE(Spade);

// Main branch: (SPADE -> leaky -> conv) x 2. Shortcut: SPADE -> 1x1 conv when
// the width changes, identity otherwise.
struct SpadeResBlockImpl : torch::nn::Module {
    SpadeResBlockImpl(int64_t in_channels, int64_t out_channels, int64_t prior_channels, int64_t hidden);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& prior);

    bool learned_shortcut() const { return static_cast<bool>(shortcut_conv); }

    Spade spade1{nullptr}, spade2{nullptr}, shortcut_spade{nullptr};
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, shortcut_conv{nullptr};
};
TORCH_MODULE(SpadeResBlock);

// Enc_img: 4-channel input -> coarsest-level features.
struct ImageEncoderImpl : torch::nn::Module {
    explicit ImageEncoderImpl(const std::vector<int64_t>& channels);
    torch::Tensor forward(const torch::Tensor& masked_image, const torch::Tensor& mask);

    torch::nn::ModuleList convs;
};
TORCH_MODULE(ImageEncoder);

// Decoder features F_dec^L..1 captured by `decode` when requested.
struct DecoderFeatures {
    std::vector<torch::Tensor> levels; // finest first, like the pyramid
};

class GeneratorImpl : public torch::nn::Module {
public:
    explicit GeneratorImpl(GeneratorOptions options);

    torch::Tensor encode_image(const torch::Tensor& masked_image, const torch::Tensor& mask);
    torch::Tensor decode(const torch::Tensor& encoded, const PriorPyramid& pyramid, DecoderFeatures* features = nullptr);
    torch::Tensor forward(const torch::Tensor& masked_image, const torch::Tensor& mask, const PriorPyramid& pyramid) {
        return decode(encode_image(masked_image, mask), pyramid);
    }

    const GeneratorOptions& options() const { return options_; }

    ImageEncoder encoder{nullptr};
    torch::nn::ModuleList bottom;
    torch::nn::ModuleList up_blocks; // index l for level l (l < L-1), finest first
    torch::nn::Conv2d out_conv{nullptr};

private:
    GeneratorOptions options_;
};
TORCH_MODULE(Generator);

} // namespace spn
