#include "spn/pretext.hpp"

#include "spn/config.hpp"
#include "spn/errors.hpp"
#include "spn/nn_util.hpp"
#include "spn/tensor_io.hpp"

#include <map>

namespace F = torch::nn::functional;

namespace spn {

namespace {

// Seeded random convolutional pyramid: one stride-2 conv per level.
struct ConvPyramidImpl : torch::nn::Module {
    explicit ConvPyramidImpl(const std::vector<int64_t>& widths) {
        int64_t in = 3;
        for (std::size_t i = 0; i < widths.size(); ++i) {
            convs->push_back(conv_down(in, widths[i]));
            in = widths[i];
        }
        register_module("convs", convs);
    }

    std::vector<torch::Tensor> forward(torch::Tensor x) {
        std::vector<torch::Tensor> out;
        for (auto& m : *convs) {
            x = leaky(m->as<torch::nn::Conv2d>()->forward(x));
            out.push_back(x);
        }
        return out;
    }

    torch::nn::ModuleList convs;
};
TORCH_MODULE(ConvPyramid);

class StubExtractor final : public PretextExtractor {
public:
    StubExtractor(const std::vector<int64_t>& widths, uint64_t seed) : widths_(widths), seed_(seed) {
        ScopedSeed scoped(seed);
        net_ = ConvPyramid(widths);
        freeze(*net_);
    }
    std::vector<torch::Tensor> forward(const torch::Tensor& upsampled) const override {
        return net_->forward(upsampled.to(torch::kFloat32));
    }
    std::vector<int64_t> channel_dims() const override { return widths_; }
    std::string tag() const override { return "stub(seed=" + std::to_string(seed_) + ")"; }
    std::vector<torch::Tensor> parameters() const override { return net_->parameters(); }

private:
    std::vector<int64_t> widths_;
    uint64_t seed_;
    mutable ConvPyramid net_{nullptr};
};

// Sobel gradients of the luminance at each level: channels (gx, gy, |g|).
class EdgeExtractor final : public PretextExtractor {
public:
    explicit EdgeExtractor(int64_t levels) : levels_(levels) {
        auto gx = torch::tensor({-1.0f, 0.0f, 1.0f, -2.0f, 0.0f, 2.0f, -1.0f, 0.0f, 1.0f}).view({1, 1, 3, 3}) / 8.0f;
        kernel_ = torch::cat({gx, gx.transpose(2, 3)}, 0);
    }
    std::vector<torch::Tensor> forward(const torch::Tensor& upsampled) const override {
        auto x = upsampled.to(torch::kFloat32);
        auto gray = (0.299f * x.select(1, 0) + 0.587f * x.select(1, 1) + 0.114f * x.select(1, 2)).unsqueeze(1);
        std::vector<torch::Tensor> out;
        for (int64_t l = 0; l < levels_; ++l) {
            gray = F::avg_pool2d(gray, F::AvgPool2dFuncOptions(2));
            auto padded = F::pad(gray, F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReplicate));
            auto g = F::conv2d(padded, kernel_);
            out.push_back(torch::cat({g, g.pow(2).sum(1, true).sqrt()}, 1));
        }
        return out;
    }
    std::vector<int64_t> channel_dims() const override { return std::vector<int64_t>(levels_, 3); }
    std::string tag() const override { return "edge"; }

private:
    int64_t levels_;
    torch::Tensor kernel_;
};

class BackboneExtractor final : public PretextExtractor {
public:
    BackboneExtractor(std::string kind, StageBackbone backbone, std::vector<int64_t> stages, std::string source)
        : kind_(std::move(kind)), backbone_(std::move(backbone)), stages_(std::move(stages)), source_(std::move(source)) {
        freeze(*backbone_);
        const auto widths = backbone_->stage_widths();
        for (auto s : stages_) {
            if (s < 0 || s >= static_cast<int64_t>(widths.size()))
                throw ConfigError("pretext.stages selects stage " + std::to_string(s) + " but the backbone has " +
                                  std::to_string(widths.size()) + " stages");
            dims_.push_back(widths[s]);
        }
        mean_ = torch::tensor({0.485f, 0.456f, 0.406f}).view({1, 3, 1, 1});
        std_ = torch::tensor({0.229f, 0.224f, 0.225f}).view({1, 3, 1, 1});
    }
    std::vector<torch::Tensor> forward(const torch::Tensor& upsampled) const override {
        auto x = ((upsampled.to(torch::kFloat32) + 1.0f) * 0.5f - mean_) / std_;
        auto all = backbone_->forward(x);
        std::vector<torch::Tensor> out;
        for (auto s : stages_) out.push_back(all[s]);
        return out;
    }
    std::vector<int64_t> channel_dims() const override { return dims_; }
    std::string tag() const override { return kind_ + "(" + source_ + ")"; }
    std::vector<torch::Tensor> parameters() const override { return backbone_->parameters(); }

private:
    std::string kind_;
    mutable StageBackbone backbone_;
    std::vector<int64_t> stages_;
    std::string source_;
    std::vector<int64_t> dims_;
    torch::Tensor mean_, std_;
};

} // namespace

StageBackboneImpl::StageBackboneImpl(int64_t stem_width, const std::vector<int64_t>& stage_widths)
    : widths_(stage_widths) {
    stem = register_module("stem", conv3x3(3, stem_width));
    int64_t in = stem_width;
    for (auto w : stage_widths) {
        auto stage = torch::nn::Sequential();
        stage->push_back("down", conv3x3(in, w, 2));
        stage->push_back("conv1", conv3x3(w, w));
        stage->push_back("conv2", conv3x3(w, w));
        stages->push_back(stage);
        in = w;
    }
    register_module("stages", stages);
}

std::vector<torch::Tensor> StageBackboneImpl::forward(torch::Tensor x) {
    x = torch::relu(stem->forward(x));
    std::vector<torch::Tensor> out;
    for (auto& m : *stages) {
        auto stage = m->as<torch::nn::Sequential>();
        auto children = stage->children();
        x = torch::relu(children[0]->as<torch::nn::Conv2d>()->forward(x));
        auto r = torch::relu(children[1]->as<torch::nn::Conv2d>()->forward(x));
        r = children[2]->as<torch::nn::Conv2d>()->forward(r);
        x = torch::relu(x + r);
        out.push_back(x);
    }
    return out;
}

StageBackbone load_backbone(const std::filesystem::path& weights) {
    if (!std::filesystem::exists(weights)) throw ConfigError("backbone weights not found: " + weights.string());
    const auto blob = read_tensor_blob(weights);
    std::map<std::string, torch::Tensor> by_name(blob.begin(), blob.end());
    auto stem = by_name.find("stem.weight");
    if (stem == by_name.end() || stem->second.dim() != 4 || stem->second.size(1) != 3)
        throw ShapeError("backbone weights lack a 3-channel 'stem.weight': " + weights.string());
    std::vector<int64_t> widths;
    for (int64_t i = 0;; ++i) {
        auto it = by_name.find("stages." + std::to_string(i) + ".down.weight");
        if (it == by_name.end()) break;
        widths.push_back(it->second.size(0));
    }
    if (widths.empty()) throw ShapeError("backbone weights contain no stages: " + weights.string());
    StageBackbone backbone(stem->second.size(0), widths);
    load_module_state(*backbone, blob, "backbone " + weights.string());
    return backbone;
}

void save_backbone(const StageBackbone& backbone, const std::filesystem::path& weights) {
    write_tensor_blob(weights, module_state(*backbone));
}

TargetPyramid extract_targets(const PretextExtractor& extractor, const torch::Tensor& images, int64_t levels) {
    torch::NoGradGuard no_grad;
    auto batch = images.dim() == 3 ? images.unsqueeze(0) : images;
    if (batch.dim() != 4 || batch.size(1) != 3) throw ShapeError("extract_targets expects B x 3 x H x W images");
    const int64_t h = batch.size(2), w = batch.size(3);
    auto maps = extractor.forward(upsample_bilinear2x(batch.to(torch::kFloat32)));
    if (static_cast<int64_t>(maps.size()) != levels)
        throw ContractError("extractor '" + extractor.tag() + "' returned " + std::to_string(maps.size()) +
                            " maps, expected " + std::to_string(levels));
    const auto dims = extractor.channel_dims();
    for (int64_t l = 0; l < levels; ++l) {
        const int64_t eh = h >> l, ew = w >> l;
        const auto& m = maps[l];
        if (m.dim() != 4 || m.size(2) != eh || m.size(3) != ew)
            throw ContractError("extractor '" + extractor.tag() + "' level " + std::to_string(l + 1) + " has size " +
                                shape_string(m) + ", expected spatial " + std::to_string(eh) + "x" +
                                std::to_string(ew));
        if (m.size(1) != dims[l]) throw ContractError("extractor channel count disagrees with channel_dims");
        maps[l] = m.detach();
    }
    return TargetPyramid{std::move(maps), extractor.tag()};
}

ExtractorPtr register_extractor(const std::string& kind, const std::optional<std::filesystem::path>& weights,
                                const ExtractorOptions& options) {
    if (kind == "stub") {
        if (static_cast<int64_t>(options.stub_channels.size()) != options.levels)
            throw ConfigError("pretext.channels needs one width per pyramid level");
        return std::make_shared<StubExtractor>(options.stub_channels, options.seed);
    }
    if (kind == "edge") return std::make_shared<EdgeExtractor>(options.levels);
    if (kind == "classification" || kind == "detection" || kind == "segmentation") {
        if (!weights || weights->empty()) throw ConfigError("pretext kind '" + kind + "' requires pretext.weights");
        if (static_cast<int64_t>(options.stages.size()) != options.levels)
            throw ConfigError("pretext.stages must select one stage per pyramid level");
        return std::make_shared<BackboneExtractor>(kind, load_backbone(*weights), options.stages,
                                                   weights->filename().string());
    }
    throw ConfigError("unknown pretext extractor kind '" + kind + "'");
}

ExtractorPtr register_extractor(const RunConfig& config) {
    ExtractorOptions options;
    options.levels = config.integer("data.levels");
    options.seed = static_cast<uint64_t>(config.integer("pretext.seed"));
    options.stub_channels = config.int_list("pretext.channels");
    options.stages = config.int_list("pretext.stages");
    std::optional<std::filesystem::path> weights;
    if (!config.text("pretext.weights").empty()) weights = config.text("pretext.weights");
    return register_extractor(config.text("pretext.kind"), weights, options);
}

} // namespace spn
