#pragma once

#include <vector>

#include <torch/torch.h>

namespace spn {

class RunConfig;

// Conv2d whose weight is divided by a power-iteration estimate of its top
// singular value. The estimate (u, v) advances during training forwards.
class SpectralConv2dImpl : public torch::nn::Module {
public:
    SpectralConv2dImpl(int64_t in, int64_t out, int64_t kernel, int64_t stride, int64_t padding,
                       int64_t power_iterations = 1);
    torch::Tensor forward(const torch::Tensor& x);

    // weight / sigma(u, v) for the current estimate, without advancing it.
    torch::Tensor normalized_weight() const;
    void power_iterate(int64_t iterations);

    torch::Tensor weight, bias, u, v;

private:
    int64_t stride_, padding_, power_iterations_;
};
TORCH_MODULE(SpectralConv2d);

struct DiscriminatorOutput {
    torch::Tensor probs;  // per-patch probability that the input is FAKE, in (0, 1)
    torch::Tensor logits;
    std::vector<torch::Tensor> features; // pre-activation taps, shallow to deep
};

// Five stride-2 spectral-normalized convolutions; the last emits a 1-channel
// patch map. Every layer but the last is tapped for feature matching.
class PatchDiscriminatorImpl : public torch::nn::Module {
public:
    explicit PatchDiscriminatorImpl(std::vector<int64_t> channels = {64, 128, 256, 512}, int64_t power_iterations = 1);
    DiscriminatorOutput forward(const torch::Tensor& image);

    std::vector<SpectralConv2d> layers;
};
TORCH_MODULE(PatchDiscriminator);

PatchDiscriminator make_discriminator(const RunConfig& config);

} // namespace spn
