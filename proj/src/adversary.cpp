#include "spn/adversary.hpp"

#include "spn/config.hpp"
#include "spn/nn_util.hpp"

namespace F = torch::nn::functional;

namespace spn {

namespace {

constexpr int64_t kWarmupIterations = 20;

torch::Tensor normalize(const torch::Tensor& x) { return x / (x.norm() + 1e-12); }

} // namespace

SpectralConv2dImpl::SpectralConv2dImpl(int64_t in, int64_t out, int64_t kernel, int64_t stride, int64_t padding,
                                       int64_t power_iterations)
    : stride_(stride), padding_(padding), power_iterations_(power_iterations) {
    torch::nn::Conv2d init(torch::nn::Conv2dOptions(in, out, kernel));
    weight = register_parameter("weight", init->weight.detach().clone());
    bias = register_parameter("bias", init->bias.detach().clone());
    u = register_buffer("u", normalize(torch::randn({out})));
    v = register_buffer("v", normalize(torch::randn({in * kernel * kernel})));
    power_iterate(kWarmupIterations);
}

void SpectralConv2dImpl::power_iterate(int64_t iterations) {
    torch::NoGradGuard no_grad;
    auto w = weight.view({weight.size(0), -1});
    for (int64_t i = 0; i < iterations; ++i) {
        v.copy_(normalize(torch::mv(w.t(), u)));
        u.copy_(normalize(torch::mv(w, v)));
    }
}

torch::Tensor SpectralConv2dImpl::normalized_weight() const {
    auto w = weight.view({weight.size(0), -1});
    // Clones keep later in-place power iterations from invalidating this graph.
    auto sigma = torch::dot(u.clone(), torch::mv(w, v.clone()));
    return weight / sigma;
}

torch::Tensor SpectralConv2dImpl::forward(const torch::Tensor& x) {
    if (is_training()) power_iterate(power_iterations_);
    return F::conv2d(x, normalized_weight(), F::Conv2dFuncOptions().bias(bias).stride(stride_).padding(padding_));
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(std::vector<int64_t> channels, int64_t power_iterations) {
    int64_t in = 3;
    channels.push_back(1);
    for (std::size_t i = 0; i < channels.size(); ++i) {
        layers.push_back(register_module("conv" + std::to_string(i),
                                         SpectralConv2d(in, channels[i], 4, 2, 1, power_iterations)));
        in = channels[i];
    }
}

DiscriminatorOutput PatchDiscriminatorImpl::forward(const torch::Tensor& image) {
    DiscriminatorOutput out;
    auto x = image;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        x = layers[i]->forward(x);
        if (i + 1 < layers.size()) {
            out.features.push_back(x);
            x = leaky(x);
        }
    }
    out.logits = x;
    out.probs = torch::sigmoid(x);
    return out;
}

PatchDiscriminator make_discriminator(const RunConfig& config) {
    return PatchDiscriminator(config.int_list("disc.channels"), config.integer("disc.power_iterations"));
}

} // namespace spn
