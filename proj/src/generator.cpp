#include "spn/generator.hpp"

#include "spn/config.hpp"
#include "spn/errors.hpp"
#include "spn/nn_util.hpp"

namespace spn {

GeneratorOptions GeneratorOptions::from_config(const RunConfig& config) {
    GeneratorOptions o;
    o.channels = config.int_list("gen.channels");
    o.prior_channels = config.int_list("prior.channels");
    o.bottom_blocks = config.integer("gen.bottom_blocks");
    o.spade_hidden = config.integer("gen.spade_hidden");
    if (o.levels() != config.integer("data.levels")) throw ConfigError("gen.channels must list one width per level");
    return o;
}

SpadeImpl::SpadeImpl(int64_t feature_channels_, int64_t prior_channels, int64_t hidden)
    : feature_channels(feature_channels_) {
    shared = register_module("shared", conv3x3(prior_channels, hidden));
    gamma = register_module("gamma", conv3x3(hidden, feature_channels));
    beta = register_module("beta", conv3x3(hidden, feature_channels));
    // Start near the identity modulation gamma = 1.
    torch::NoGradGuard no_grad;
    gamma->bias.fill_(1.0);
}

std::pair<torch::Tensor, torch::Tensor> SpadeImpl::modulation(const torch::Tensor& prior, int64_t height, int64_t width) {
    auto hidden = torch::relu(shared->forward(resize_nearest(prior, height, width)));
    return {gamma->forward(hidden), beta->forward(hidden)};
}

torch::Tensor SpadeImpl::forward(const torch::Tensor& x, const torch::Tensor& prior) {
    if (x.size(1) != feature_channels)
        throw ConfigError("SPADE built for " + std::to_string(feature_channels) + " channels received " +
                          std::to_string(x.size(1)));
    auto [g, b] = modulation(prior, x.size(2), x.size(3));
    return g * instance_norm(x) + b;
}

SpadeResBlockImpl::SpadeResBlockImpl(int64_t in_channels, int64_t out_channels, int64_t prior_channels, int64_t hidden) {
    const int64_t mid = std::min(in_channels, out_channels);
    spade1 = register_module("spade1", Spade(in_channels, prior_channels, hidden));
    conv1 = register_module("conv1", conv3x3(in_channels, mid));
    spade2 = register_module("spade2", Spade(mid, prior_channels, hidden));
    conv2 = register_module("conv2", conv3x3(mid, out_channels));
    if (in_channels != out_channels) {
        shortcut_spade = register_module("shortcut_spade", Spade(in_channels, prior_channels, hidden));
        shortcut_conv = register_module("shortcut_conv", conv1x1(in_channels, out_channels, false));
    }
}

torch::Tensor SpadeResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& prior) {
    auto main = conv1->forward(leaky(spade1->forward(x, prior)));
    main = conv2->forward(leaky(spade2->forward(main, prior)));
    auto shortcut = learned_shortcut() ? shortcut_conv->forward(shortcut_spade->forward(x, prior)) : x;
    return main + shortcut;
}

ImageEncoderImpl::ImageEncoderImpl(const std::vector<int64_t>& channels) {
    // First conv keeps resolution, each further level halves it; pad with
    // stride-1 convs so there are always at least three layers.
    const int64_t levels = static_cast<int64_t>(channels.size());
    convs->push_back(conv3x3(4, channels[0]));
    for (int64_t l = 1; l < levels; ++l) convs->push_back(conv_down(channels[l - 1], channels[l]));
    for (int64_t extra = levels; extra < 3; ++extra) convs->push_back(conv3x3(channels.back(), channels.back()));
    register_module("convs", convs);
}

torch::Tensor ImageEncoderImpl::forward(const torch::Tensor& masked_image, const torch::Tensor& mask) {
    auto x = torch::cat({masked_image, mask}, 1);
    const auto n = convs->size();
    for (std::size_t i = 0; i < n; ++i) {
        x = convs[i]->as<torch::nn::Conv2d>()->forward(x);
        if (i + 1 < n) x = leaky(x);
    }
    return x;
}

GeneratorImpl::GeneratorImpl(GeneratorOptions options) : options_(std::move(options)) {
    const auto& g = options_.channels;
    const auto& p = options_.prior_channels;
    const int64_t levels = options_.levels();
    if (static_cast<int64_t>(p.size()) != levels) throw ConfigError("generator and prior level counts differ");
    encoder = register_module("encoder", ImageEncoder(g));
    for (int64_t i = 0; i < options_.bottom_blocks; ++i)
        bottom->push_back(SpadeResBlock(g[levels - 1], g[levels - 1], p[levels - 1], options_.spade_hidden));
    register_module("bottom", bottom);
    for (int64_t l = 0; l + 1 < levels; ++l)
        up_blocks->push_back(SpadeResBlock(g[l + 1], g[l], p[l], options_.spade_hidden));
    register_module("up_blocks", up_blocks);
    out_conv = register_module("out_conv", conv3x3(g[0], 3));
}

torch::Tensor GeneratorImpl::encode_image(const torch::Tensor& masked_image, const torch::Tensor& mask) {
    const int64_t step = int64_t{1} << (options_.levels() - 1);
    if (masked_image.size(2) % step != 0 || masked_image.size(3) % step != 0)
        throw ShapeError("generator input is not divisible by 2^(L-1)");
    return encoder->forward(masked_image, mask);
}

torch::Tensor GeneratorImpl::decode(const torch::Tensor& encoded, const PriorPyramid& pyramid,
                                    DecoderFeatures* features) {
    const int64_t levels = options_.levels();
    if (static_cast<int64_t>(pyramid.levels.size()) != levels)
        throw ShapeError("pyramid has " + std::to_string(pyramid.levels.size()) + " levels, generator expects " +
                         std::to_string(levels));
    const auto& top = pyramid.levels.back();
    if (top.size(2) != encoded.size(2) || top.size(3) != encoded.size(3))
        throw ShapeError("coarsest prior and encoded features differ in spatial size");
    if (features) features->levels.assign(levels, {});

    auto x = encoded;
    for (auto& m : *bottom) x = m->as<SpadeResBlock>()->forward(x, top);
    if (features) features->levels[levels - 1] = x;
    for (int64_t l = levels - 2; l >= 0; --l) {
        x = upsample_nearest2x(x);
        const auto& prior = pyramid.levels[l];
        if (prior.size(2) != x.size(2) || prior.size(3) != x.size(3))
            throw ShapeError("prior level " + std::to_string(l + 1) + " does not match decoder scale");
        x = up_blocks[l]->as<SpadeResBlock>()->forward(x, prior);
        if (features) features->levels[l] = x;
    }
    return torch::tanh(out_conv->forward(leaky(x)));
}

} // namespace spn
