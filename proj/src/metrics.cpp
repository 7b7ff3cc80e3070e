#include "spn/metrics.hpp"

#include <cmath>

#include "spn/config.hpp"
#include "spn/errors.hpp"
#include "spn/nn_util.hpp"
#include "spn/tensor_io.hpp"

namespace F = torch::nn::functional;

namespace spn {

namespace {

constexpr int64_t kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;
constexpr double kFidRegularizer = 1e-6;
constexpr uint64_t kEmbeddingSeed = 0xF1D;

torch::Tensor batched64(const torch::Tensor& t) {
    auto x = t.to(torch::kFloat64);
    if (x.dim() == 3) x = x.unsqueeze(0);
    if (x.dim() != 4) throw ShapeError("metric input must be C x H x W or B x C x H x W, got " + shape_string(t));
    return x;
}

void require_same(const torch::Tensor& a, const torch::Tensor& b) {
    if (a.sizes() != b.sizes()) throw ShapeError("metric inputs differ: " + shape_string(a) + " vs " + shape_string(b));
}

double psnr_from_mse(double mse) {
    if (mse <= 0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

torch::Tensor gaussian_window(int64_t channels) {
    auto coords = torch::arange(kSsimWindow, torch::kFloat64) - static_cast<double>(kSsimWindow / 2);
    auto g = torch::exp(-coords.pow(2) / (2 * kSsimSigma * kSsimSigma));
    g = g / g.sum();
    auto w = torch::outer(g, g);
    return w.expand({channels, 1, kSsimWindow, kSsimWindow}).contiguous();
}

// Symmetric PSD square root via eigendecomposition.
torch::Tensor sqrt_psd(const torch::Tensor& m) {
    auto [values, vectors] = torch::linalg_eigh(0.5 * (m + m.t()));
    return vectors.matmul(torch::diag(values.clamp_min(0).sqrt())).matmul(vectors.t());
}

} // namespace

double psnr(const torch::Tensor& real, const torch::Tensor& fake) {
    require_same(real, fake);
    return psnr_from_mse((batched64(real) - batched64(fake)).pow(2).mean().item<double>());
}

double psnr_masked(const torch::Tensor& real, const torch::Tensor& fake, const torch::Tensor& mask) {
    require_same(real, fake);
    auto r = batched64(real);
    auto f = batched64(fake);
    auto m = batched64(mask).expand_as(r);
    const double count = m.sum().item<double>();
    if (count == 0) return kPsnrCap;
    return psnr_from_mse(((r - f).pow(2) * m).sum().item<double>() / count);
}

double ssim(const torch::Tensor& real, const torch::Tensor& fake) {
    require_same(real, fake);
    auto x = batched64(real);
    auto y = batched64(fake);
    if (x.size(2) < kSsimWindow || x.size(3) < kSsimWindow)
        throw ContractError("ssim needs images of at least 11x11, got " + shape_string(real));
    const auto c = x.size(1);
    const auto w = gaussian_window(c);
    auto filt = [&](const torch::Tensor& t) { return F::conv2d(t, w, F::Conv2dFuncOptions().groups(c)); };
    auto mu_x = filt(x);
    auto mu_y = filt(y);
    auto var_x = filt(x * x) - mu_x.pow(2);
    auto var_y = filt(y * y) - mu_y.pow(2);
    auto cov = filt(x * y) - mu_x * mu_y;
    auto map = ((2 * mu_x * mu_y + kSsimC1) * (2 * cov + kSsimC2)) /
               ((mu_x.pow(2) + mu_y.pow(2) + kSsimC1) * (var_x + var_y + kSsimC2));
    return map.mean().item<double>();
}

double mae(const torch::Tensor& real, const torch::Tensor& fake) {
    require_same(real, fake);
    return (batched64(real) - batched64(fake)).abs().mean().item<double>();
}

FidResult fid_detail(const torch::Tensor& a_in, const torch::Tensor& b_in) {
    if (a_in.dim() != 2 || b_in.dim() != 2 || a_in.size(1) != b_in.size(1))
        throw ShapeError("fid expects two N x d embedding sets of equal d");
    if (a_in.size(0) < 2 || b_in.size(0) < 2) throw ContractError("fid needs at least 2 samples per set");
    const auto a = a_in.to(torch::kFloat64);
    const auto b = b_in.to(torch::kFloat64);
    const auto d = a.size(1);
    FidResult result;
    result.regularized = a.size(0) < d + 1 || b.size(0) < d + 1;
    auto stats = [&](const torch::Tensor& x) {
        auto mu = x.mean(0);
        auto centered = x - mu;
        auto cov = centered.t().matmul(centered) / static_cast<double>(x.size(0) - 1);
        if (result.regularized) cov = cov + kFidRegularizer * torch::eye(d, torch::kFloat64);
        return std::make_pair(mu, cov);
    };
    auto [mu_a, cov_a] = stats(a);
    auto [mu_b, cov_b] = stats(b);
    auto root_a = sqrt_psd(cov_a);
    auto cross = sqrt_psd(root_a.matmul(cov_b).matmul(root_a));
    result.value = ((mu_a - mu_b).pow(2).sum() + torch::trace(cov_a) + torch::trace(cov_b) - 2 * torch::trace(cross))
                       .item<double>();
    return result;
}

EmbeddingExtractor::EmbeddingExtractor(int64_t dim, uint64_t seed) : dim_(dim) {
    if (dim <= 0) throw ConfigError("eval.embedding_dim must be positive");
    ScopedSeed scoped(seed);
    net_ = torch::nn::Sequential(conv3x3(3, 32, 2), torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(kLeakySlope)),
                                 conv3x3(32, 64, 2), torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(kLeakySlope)),
                                 conv3x3(64, dim, 2));
    net_->to(torch::kFloat64);
    freeze(*net_);
    tag_ = "stub-embedding(d=" + std::to_string(dim) + ",seed=" + std::to_string(seed) + ")";
}

torch::Tensor EmbeddingExtractor::embed(const torch::Tensor& images) const {
    torch::NoGradGuard no_grad;
    return net_->forward(images.to(torch::kFloat64)).mean({2, 3});
}

std::shared_ptr<EmbeddingExtractor> make_embedding(const RunConfig& config) {
    if (config.text("eval.embedding") != "stub")
        throw ConfigError("unknown eval.embedding '" + config.text("eval.embedding") + "'");
    return std::make_shared<EmbeddingExtractor>(config.integer("eval.embedding_dim"), kEmbeddingSeed);
}

} // namespace spn
