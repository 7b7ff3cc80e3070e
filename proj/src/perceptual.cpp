#include "spn/perceptual.hpp"

#include "spn/config.hpp"
#include "spn/errors.hpp"
#include "spn/nn_util.hpp"
#include "spn/tensor_io.hpp"

namespace F = torch::nn::functional;

namespace spn {

VggFeaturesImpl::VggFeaturesImpl(const std::vector<int64_t>& widths, const std::vector<int64_t>& convs_per_stage) {
    if (widths.size() != convs_per_stage.size() || widths.empty())
        throw ConfigError("perceptual network: widths and conv counts must be non-empty and equal in length");
    int64_t in = 3;
    for (std::size_t s = 0; s < widths.size(); ++s) {
        torch::nn::ModuleList stage;
        for (int64_t c = 0; c < convs_per_stage[s]; ++c) {
            stage->push_back(conv3x3(in, widths[s]));
            in = widths[s];
        }
        stages->push_back(stage);
    }
    register_module("stages", stages);
}

std::vector<torch::Tensor> VggFeaturesImpl::forward(torch::Tensor x) {
    std::vector<torch::Tensor> taps;
    for (std::size_t s = 0; s < stages->size(); ++s) {
        if (s > 0) x = F::max_pool2d(x, F::MaxPool2dFuncOptions(2));
        auto* stage = stages[s]->as<torch::nn::ModuleList>();
        for (std::size_t c = 0; c < stage->size(); ++c) {
            x = torch::relu((*stage)[c]->as<torch::nn::Conv2d>()->forward(x));
            if (c == 0) taps.push_back(x);
        }
    }
    return taps;
}

PerceptualExtractor::PerceptualExtractor(VggFeatures net, std::string tag) : net_(std::move(net)), tag_(std::move(tag)) {
    freeze(*net_);
}

std::vector<torch::Tensor> PerceptualExtractor::operator()(const torch::Tensor& image) const {
    const auto opts = torch::TensorOptions().dtype(image.scalar_type());
    auto mean = torch::tensor({0.485, 0.456, 0.406}, opts).view({1, 3, 1, 1});
    auto std = torch::tensor({0.229, 0.224, 0.225}, opts).view({1, 3, 1, 1});
    return net_->forward(((image + 1.0) * 0.5 - mean) / std);
}

PerceptualPtr make_perceptual(const std::string& kind, const std::vector<int64_t>& widths,
                              const std::vector<int64_t>& convs, const std::optional<std::filesystem::path>& weights,
                              uint64_t seed) {
    if (kind != "stub" && kind != "vgg19") throw ConfigError("unknown perceptual kind '" + kind + "'");
    VggFeatures net{nullptr};
    {
        ScopedSeed scoped(seed);
        net = VggFeatures(widths, convs);
    }
    std::string tag = kind == "stub" ? "stub(seed=" + std::to_string(seed) + ")" : "vgg19";
    if (weights && !weights->empty()) {
        load_module_state(*net, read_tensor_blob(*weights), "perceptual weights " + weights->string());
        tag = kind + "(" + weights->filename().string() + ")";
    } else if (kind == "vgg19") {
        throw ConfigError("perc.kind=vgg19 requires perc.weights");
    }
    return std::make_shared<PerceptualExtractor>(std::move(net), tag);
}

PerceptualPtr make_perceptual(const RunConfig& config) {
    std::optional<std::filesystem::path> weights;
    if (!config.text("perc.weights").empty()) weights = config.text("perc.weights");
    return make_perceptual(config.text("perc.kind"), config.int_list("perc.channels"), config.int_list("perc.convs"),
                           weights, static_cast<uint64_t>(config.integer("perc.seed")));
}

} // namespace spn
