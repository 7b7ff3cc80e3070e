#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace spn {

class RunConfig;

// VGG-style stack: stages of 3x3 conv + ReLU separated by 2x2 max-pooling.
// The first ReLU of every stage is tapped (relu1_1, relu2_1, ...). With
// widths 64,128,256,512,512 and 2,2,4,4,4 convs per stage this is the VGG19
// feature layout, so converted VGG19 weights load directly.
struct VggFeaturesImpl : torch::nn::Module {
    VggFeaturesImpl(const std::vector<int64_t>& widths, const std::vector<int64_t>& convs_per_stage);
    std::vector<torch::Tensor> forward(torch::Tensor x);

    torch::nn::ModuleList stages; // each a ModuleList of Conv2d
};
TORCH_MODULE(VggFeatures);

// Frozen perceptual network phi with K taps. Input images are in [-1, 1] and
// are re-normalized to ImageNet statistics internally. Gradients flow to the
// input but never into the parameters.
class PerceptualExtractor {
public:
    PerceptualExtractor(VggFeatures net, std::string tag);

    std::vector<torch::Tensor> operator()(const torch::Tensor& image) const;
    int64_t taps() const { return static_cast<int64_t>(net_->stages->size()); }
    std::string tag() const { return tag_; }
    std::vector<torch::Tensor> parameters() const { return net_->parameters(); }
    void to(torch::Dtype dtype) { net_->to(dtype); }

private:
    mutable VggFeatures net_;
    std::string tag_;
};

using PerceptualPtr = std::shared_ptr<PerceptualExtractor>;

// kind "stub": seeded random init; kind "vgg19": requires weights.
PerceptualPtr make_perceptual(const std::string& kind, const std::vector<int64_t>& widths,
                              const std::vector<int64_t>& convs, const std::optional<std::filesystem::path>& weights,
                              uint64_t seed);
PerceptualPtr make_perceptual(const RunConfig& config);

} // namespace spn
