#pragma once

#include <memory>
#include <string>

#include <torch/torch.h>

namespace spn {

class RunConfig;

// Maps [-1, 1] images to the [0, 1] range every metric expects.
inline torch::Tensor to_unit(const torch::Tensor& image) { return (image + 1.0) * 0.5; }

constexpr double kPsnrCap = 100.0;

// Inputs in [0, 1], C x H x W or B x C x H x W. Computed in double precision.
double psnr(const torch::Tensor& real, const torch::Tensor& fake);
// PSNR restricted to pixels where mask = 1 (mask broadcast over channels).
double psnr_masked(const torch::Tensor& real, const torch::Tensor& fake, const torch::Tensor& mask);
// Gaussian window 11x11, sigma 1.5, K1 0.01, K2 0.03, data range 1; mean of
// the SSIM map over valid window positions and channels.
double ssim(const torch::Tensor& real, const torch::Tensor& fake);
double mae(const torch::Tensor& real, const torch::Tensor& fake);

struct FidResult {
    double value = 0.0;
    bool regularized = false; // too few samples for a full-rank covariance
};
// Frechet distance between Gaussian fits of two N x d embedding sets.
FidResult fid_detail(const torch::Tensor& a, const torch::Tensor& b);
inline double fid(const torch::Tensor& a, const torch::Tensor& b) { return fid_detail(a, b).value; }

// Frozen image embedding network for FID. The stub is a seeded conv stack
// with global pooling; it is deterministic but not a perceptual standard, so
// reports carry its tag.
class EmbeddingExtractor {
public:
    EmbeddingExtractor(int64_t dim, uint64_t seed);
    // images: B x 3 x H x W in [-1, 1] -> B x dim (float64).
    torch::Tensor embed(const torch::Tensor& images) const;
    int64_t dim() const { return dim_; }
    std::string tag() const { return tag_; }

private:
    mutable torch::nn::Sequential net_;
    int64_t dim_;
    std::string tag_;
};

std::shared_ptr<EmbeddingExtractor> make_embedding(const RunConfig& config);

} // namespace spn
