#pragma once

// Element-loop transcriptions of the training objectives. They share no code
// with the tensor implementations and exist only as test oracles.

#include <cmath>
#include <vector>

#include <torch/torch.h>

namespace spn::oracle {

// Nearest-neighbour lookup of a B x 1 x H x W mask at (y, x) of an h x w grid.
inline double mask_at(const torch::Tensor& mask, int64_t b, int64_t y, int64_t x, int64_t h, int64_t w) {
    const int64_t sy = static_cast<int64_t>(std::floor(static_cast<double>(y) * mask.size(2) / h));
    const int64_t sx = static_cast<int64_t>(std::floor(static_cast<double>(x) * mask.size(3) / w));
    return mask[b][0][sy][sx].item<double>();
}

inline double weighted_l1(const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& mask, double emphasis) {
    auto A = a.to(torch::kFloat64).contiguous(), Bt = b.to(torch::kFloat64).contiguous();
    auto ac = A.accessor<double, 4>(), bc = Bt.accessor<double, 4>();
    double sum = 0;
    for (int64_t n = 0; n < A.size(0); ++n)
        for (int64_t y = 0; y < A.size(2); ++y)
            for (int64_t x = 0; x < A.size(3); ++x) {
                const double weight = 1.0 + emphasis * mask_at(mask, n, y, x, A.size(2), A.size(3));
                for (int64_t c = 0; c < A.size(1); ++c) sum += std::abs(ac[n][c][y][x] - bc[n][c][y][x]) * weight;
            }
    return sum / static_cast<double>(A.numel());
}

inline double distillation(const std::vector<torch::Tensor>& targets, const std::vector<torch::Tensor>& projections,
                           const torch::Tensor& mask, double alpha) {
    double total = 0;
    for (std::size_t l = 0; l < targets.size(); ++l) total += weighted_l1(targets[l], projections[l], mask, alpha);
    return total;
}

inline double reconstruction(const torch::Tensor& real, const torch::Tensor& fake, const torch::Tensor& mask,
                             double delta) {
    return weighted_l1(real, fake, mask, delta);
}

inline double kl(const torch::Tensor& mu, const torch::Tensor& logvar) {
    auto m = mu.to(torch::kFloat64).contiguous(), lv = logvar.to(torch::kFloat64).contiguous();
    auto mc = m.accessor<double, 2>(), lc = lv.accessor<double, 2>();
    double total = 0;
    for (int64_t b = 0; b < m.size(0); ++b)
        for (int64_t d = 0; d < m.size(1); ++d)
            total += 0.5 * (mc[b][d] * mc[b][d] + std::exp(lc[b][d]) - lc[b][d] - 1.0);
    return total / static_cast<double>(m.size(0));
}

inline double mean_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
    auto A = a.to(torch::kFloat64).contiguous().view(-1), Bt = b.to(torch::kFloat64).contiguous().view(-1);
    auto ac = A.accessor<double, 1>(), bc = Bt.accessor<double, 1>();
    double sum = 0;
    for (int64_t i = 0; i < A.size(0); ++i) sum += std::abs(ac[i] - bc[i]);
    return sum / static_cast<double>(A.size(0));
}

inline double feature_matching(const std::vector<torch::Tensor>& dr, const std::vector<torch::Tensor>& df,
                               const std::vector<torch::Tensor>& pr, const std::vector<torch::Tensor>& pf) {
    double d = 0, p = 0;
    for (std::size_t i = 0; i < dr.size(); ++i) d += mean_abs_diff(dr[i], df[i]);
    for (std::size_t i = 0; i < pr.size(); ++i) p += mean_abs_diff(pr[i], pf[i]);
    return d / static_cast<double>(dr.size()) + p / static_cast<double>(pr.size());
}

inline double diversity(const std::vector<torch::Tensor>& f1, const std::vector<torch::Tensor>& f2,
                        const torch::Tensor& mask, double eps) {
    double total = 0;
    for (std::size_t i = 0; i < f1.size(); ++i) {
        auto A = f1[i].to(torch::kFloat64).contiguous(), Bt = f2[i].to(torch::kFloat64).contiguous();
        auto ac = A.accessor<double, 4>(), bc = Bt.accessor<double, 4>();
        double layer = 0;
        for (int64_t n = 0; n < A.size(0); ++n) {
            double divergence = 0;
            for (int64_t y = 0; y < A.size(2); ++y)
                for (int64_t x = 0; x < A.size(3); ++x) {
                    const double m = mask_at(mask, n, y, x, A.size(2), A.size(3));
                    for (int64_t c = 0; c < A.size(1); ++c)
                        divergence += std::abs(ac[n][c][y][x] * m - bc[n][c][y][x] * m);
                }
            layer += 1.0 / (divergence + eps);
        }
        total += layer / static_cast<double>(A.size(0));
    }
    return total / static_cast<double>(f1.size());
}

inline double total_det(double prior, double img, double adv, double l1 = 10, double l2 = 1) {
    return prior + l1 * img + l2 * adv;
}

inline double total_prob(double det, double feature, double diverse, double kl_term, double l3 = 10, double l4 = 1,
                         double l5 = 0.05) {
    return det + l3 * feature + l4 * diverse + l5 * kl_term;
}

} // namespace spn::oracle
