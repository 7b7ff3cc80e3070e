#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/torch.h>

#include "spn/data.hpp"
#include "spn/prior_learner.hpp"

namespace spn {

struct KMeansOptions {
    int64_t k = 8;
    uint64_t seed = 0;
    int64_t max_iterations = 300;
    double tolerance = 1e-4; // on total squared center shift, relative to the mean feature variance
};

struct KMeansResult {
    torch::Tensor labels;  // N, int64
    torch::Tensor centers; // k x D, float64
    int64_t effective_clusters = 0; // distinct labels actually assigned
    int64_t iterations = 0;
    bool degenerate() const { return effective_clusters < centers.size(0); }
};

// Lloyd's algorithm with k-means++ seeding on N x D points. Inputs with fewer
// distinct points than k yield a degenerate result instead of an error.
KMeansResult kmeans(const torch::Tensor& points, const KMeansOptions& options);

struct LevelClusters {
    KMeansResult clusters;
    torch::Tensor labels; // H x W, int64
};

// Clusters the per-pixel feature vectors of every pyramid level (first batch
// element). Throws when a level has fewer pixels than clusters.
std::vector<LevelClusters> visualize_prior(const PriorPyramid& pyramid, const KMeansOptions& options);

// Color-indexed RGB raster, one fixed palette color per label.
ImageTensor render_labels(const torch::Tensor& labels);

} // namespace spn
