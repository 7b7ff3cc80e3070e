#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace spn {

class RunConfig;

// Multi-scale distillation targets S_target^1..L, finest first.
struct TargetPyramid {
    std::vector<torch::Tensor> levels;
    std::string source_tag;
};

// Frozen feature extractor H. `forward` receives the x2-upsampled image
// (B x 3 x 2H x 2W, values in [-1, 1]) and must return L maps, level l at
// (H / 2^(l-1), W / 2^(l-1)) of the original size. Implementations are
// read-only after construction.
class PretextExtractor {
public:
    virtual ~PretextExtractor() = default;
    virtual std::vector<torch::Tensor> forward(const torch::Tensor& upsampled) const = 0;
    virtual std::vector<int64_t> channel_dims() const = 0;
    virtual std::string tag() const = 0;
    virtual std::vector<torch::Tensor> parameters() const { return {}; }
    bool frozen() const { return true; }
};

using ExtractorPtr = std::shared_ptr<const PretextExtractor>;

// Upsamples `images` (B x 3 x H x W) bilinearly by 2, runs the extractor
// without gradient and checks the level count and scale contract.
TargetPyramid extract_targets(const PretextExtractor& extractor, const torch::Tensor& images, int64_t levels);

// ResNet-style classification backbone: a stride-1 stem followed by stages
// that each halve the resolution (strided conv + one residual block).
// Pretrained classification/detection/segmentation weights are converted to
// this layout and loaded by register_extractor.
struct StageBackboneImpl : torch::nn::Module {
    StageBackboneImpl(int64_t stem_width, const std::vector<int64_t>& stage_widths);
    std::vector<torch::Tensor> forward(torch::Tensor x);

    std::vector<int64_t> stage_widths() const { return widths_; }

    torch::nn::Conv2d stem{nullptr};
    torch::nn::ModuleList stages;

private:
    std::vector<int64_t> widths_;
};
TORCH_MODULE(StageBackbone);

// Reads the architecture (stem width, stage count and widths) from a weight blob.
StageBackbone load_backbone(const std::filesystem::path& weights);
void save_backbone(const StageBackbone& backbone, const std::filesystem::path& weights);

struct ExtractorOptions {
    int64_t levels = 3;
    uint64_t seed = 7;
    std::vector<int64_t> stub_channels{32, 64, 128};
    std::vector<int64_t> stages{0, 1, 2};
};

// kind: classification | detection | segmentation | edge | stub.
// Backbone kinds require `weights`; stub is a seeded random conv pyramid;
// edge is a parameter-free multi-scale Sobel response.
ExtractorPtr register_extractor(const std::string& kind, const std::optional<std::filesystem::path>& weights,
                                const ExtractorOptions& options = {});
ExtractorPtr register_extractor(const RunConfig& config);

} // namespace spn
