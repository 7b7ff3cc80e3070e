#include "spn/visualize.hpp"

#include <array>
#include <random>

#include "spn/errors.hpp"
#include "spn/tensor_io.hpp"

namespace spn {

namespace {

constexpr std::array<std::array<uint8_t, 3>, 16> kPalette{{
    {230, 25, 75},  {60, 180, 75},   {255, 225, 25}, {0, 130, 200},   {245, 130, 48}, {145, 30, 180},
    {70, 240, 240}, {240, 50, 230},  {210, 245, 60}, {250, 190, 212}, {0, 128, 128},  {220, 190, 255},
    {170, 110, 40}, {255, 250, 200}, {128, 0, 0},    {170, 255, 195},
}};

// Squared distance from every point to every center, N x k.
torch::Tensor squared_distances(const torch::Tensor& points, const torch::Tensor& centers) {
    auto d = points.pow(2).sum(1, true) - 2.0 * points.matmul(centers.t()) + centers.pow(2).sum(1).unsqueeze(0);
    return d.clamp_min(0);
}

} // namespace

KMeansResult kmeans(const torch::Tensor& points_in, const KMeansOptions& options) {
    if (options.k < 2) throw ConfigError("k-means needs at least 2 clusters");
    if (points_in.dim() != 2) throw ShapeError("k-means expects N x D points, got " + shape_string(points_in));
    const auto n = points_in.size(0);
    if (n < options.k)
        throw ContractError("k-means: " + std::to_string(n) + " points for " + std::to_string(options.k) + " clusters");
    const auto points = points_in.to(torch::kFloat64).contiguous();
    std::mt19937_64 rng(options.seed);

    // k-means++ seeding. When every remaining point coincides with a chosen
    // center the extra centers duplicate the first one.
    std::vector<int64_t> chosen{static_cast<int64_t>(std::uniform_int_distribution<int64_t>(0, n - 1)(rng))};
    auto nearest = squared_distances(points, points[chosen[0]].unsqueeze(0)).squeeze(1);
    while (static_cast<int64_t>(chosen.size()) < options.k) {
        const double total = nearest.sum().item<double>();
        int64_t next = chosen.front();
        if (total > 0) {
            const auto* w = nearest.data_ptr<double>();
            std::discrete_distribution<int64_t> pick(w, w + n);
            next = pick(rng);
        }
        chosen.push_back(next);
        nearest = torch::minimum(nearest, squared_distances(points, points[next].unsqueeze(0)).squeeze(1));
    }
    auto centers = points.index_select(0, torch::tensor(chosen, torch::kInt64)).clone();

    const double scale = points.var(0, false).mean().item<double>();
    const double threshold = options.tolerance * scale;
    KMeansResult result;
    torch::Tensor labels;
    for (int64_t it = 0; it < options.max_iterations; ++it) {
        labels = squared_distances(points, centers).argmin(1);
        auto sums = torch::zeros_like(centers).index_add_(0, labels, points);
        auto counts = torch::bincount(labels, {}, options.k).to(torch::kFloat64);
        auto filled = counts > 0;
        auto updated = torch::where(filled.unsqueeze(1), sums / counts.clamp_min(1).unsqueeze(1), centers);
        const double shift = (updated - centers).pow(2).sum().item<double>();
        centers = updated;
        result.iterations = it + 1;
        if (shift <= threshold) break;
    }
    result.labels = squared_distances(points, centers).argmin(1);
    result.centers = centers;
    result.effective_clusters = std::get<0>(torch::_unique(result.labels)).size(0);
    return result;
}

std::vector<LevelClusters> visualize_prior(const PriorPyramid& pyramid, const KMeansOptions& options) {
    std::vector<LevelClusters> out;
    for (const auto& level : pyramid.levels) {
        if (level.dim() != 4) throw ShapeError("prior level must be B x C x H x W, got " + shape_string(level));
        const auto h = level.size(2);
        const auto w = level.size(3);
        const auto features = level[0].detach().reshape({level.size(1), h * w}).t();
        LevelClusters lc;
        lc.clusters = kmeans(features, options);
        lc.labels = lc.clusters.labels.view({h, w});
        out.push_back(std::move(lc));
    }
    return out;
}

ImageTensor render_labels(const torch::Tensor& labels) {
    if (labels.dim() != 2) throw ShapeError("label raster must be H x W, got " + shape_string(labels));
    auto palette = torch::empty({static_cast<int64_t>(kPalette.size()), 3}, torch::kFloat32);
    for (std::size_t i = 0; i < kPalette.size(); ++i)
        for (int64_t c = 0; c < 3; ++c) palette[static_cast<int64_t>(i)][c] = kPalette[i][c] / 127.5 - 1.0;
    auto idx = labels.to(torch::kInt64).remainder(static_cast<int64_t>(kPalette.size())).flatten();
    auto rgb = palette.index_select(0, idx).view({labels.size(0), labels.size(1), 3}).permute({2, 0, 1}).contiguous();
    return ImageTensor(rgb);
}

} // namespace spn
