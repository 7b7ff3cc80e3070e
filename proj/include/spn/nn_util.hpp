#pragma once

#include <cstdint>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

namespace spn {

constexpr double kLeakySlope = 0.2;
constexpr double kInstanceNormEps = 1e-5;

// Reseeds the global CPU generator for the lifetime of the guard so module
// construction is reproducible without disturbing the caller's RNG stream.
class ScopedSeed {
public:
    explicit ScopedSeed(uint64_t seed) {
        at::Generator gen = at::detail::getDefaultCPUGenerator();
        saved_ = gen.get_state();
        gen.set_current_seed(seed);
    }
    ~ScopedSeed() {
        at::Generator gen = at::detail::getDefaultCPUGenerator();
        gen.set_state(saved_);
    }
    ScopedSeed(const ScopedSeed&) = delete;
    ScopedSeed& operator=(const ScopedSeed&) = delete;

private:
    torch::Tensor saved_;
};

// Independent generator for one stochastic stream (request, sample, ...).
inline at::Generator make_generator(uint64_t seed) { return at::make_generator<at::CPUGeneratorImpl>(seed); }

// splitmix64 finalizer; used to derive per-sample seeds.
inline uint64_t mix_seed(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline uint64_t sample_seed(uint64_t seed, uint64_t sample_index) { return mix_seed(mix_seed(seed) ^ sample_index); }

inline torch::Tensor leaky(const torch::Tensor& x) { return torch::leaky_relu(x, kLeakySlope); }

// Parameter-free per-sample, per-channel normalization (biased variance).
inline torch::Tensor instance_norm(const torch::Tensor& x, double eps = kInstanceNormEps) {
    auto mean = x.mean({2, 3}, true);
    auto var = (x - mean).pow(2).mean({2, 3}, true);
    return (x - mean) / torch::sqrt(var + eps);
}

inline torch::Tensor upsample_bilinear2x(const torch::Tensor& x) {
    namespace F = torch::nn::functional;
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

inline torch::Tensor upsample_nearest2x(const torch::Tensor& x) {
    namespace F = torch::nn::functional;
    return F::interpolate(x, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
}

inline torch::Tensor resize_nearest(const torch::Tensor& x, int64_t height, int64_t width) {
    namespace F = torch::nn::functional;
    if (x.size(2) == height && x.size(3) == width) return x;
    return F::interpolate(x, F::InterpolateFuncOptions().size(std::vector<int64_t>{height, width}).mode(torch::kNearest));
}

inline torch::nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride = 1, bool bias = true) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(bias));
}

inline torch::nn::Conv2d conv1x1(int64_t in, int64_t out, bool bias = true) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1).bias(bias));
}

// 4x4 stride-2 downsampling convolution (halves H and W exactly).
inline torch::nn::Conv2d conv_down(int64_t in, int64_t out) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 4).stride(2).padding(1));
}

inline void freeze(torch::nn::Module& module) {
    for (auto& p : module.parameters()) p.set_requires_grad(false);
    module.eval();
}

} // namespace spn
