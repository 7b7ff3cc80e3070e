#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spn/data.hpp"
#include "spn/metrics.hpp"
#include "spn/model.hpp"

namespace spn {

struct EvalOptions {
    int64_t k = 0;          // samples per pair; 0 picks 1 (deterministic) or 5 (probabilistic)
    bool composited = true; // copy valid pixels from the input before scoring
    uint64_t seed = 0;
    int64_t batch_size = 16;
    const EmbeddingExtractor* embedding = nullptr; // FID is skipped without one
};

struct PairResult {
    std::string id;
    std::string bucket;
    std::vector<uint64_t> seeds;
    std::vector<double> sample_psnr; // one per sample, same scoring as the selection
    std::size_t best = 0;
    double psnr = 0, psnr_masked = 0, ssim = 0, mae = 0;
};

struct MetricRow {
    std::string label;
    int64_t count = 0;
    double ssim = 0, psnr = 0, psnr_masked = 0, mae = 0;
    std::optional<double> fid; // needs at least two pairs and an embedding
};

// Rows: the six base buckets, the 0-20% / 20-40% / 40-60% aggregates, then All.
struct MetricReport {
    int64_t k = 1;
    bool composited = true;
    uint64_t seed = 0;
    std::string model;
    std::string embedding;
    std::vector<std::string> warnings;
    std::vector<MetricRow> rows;
    std::vector<PairResult> pairs;

    const MetricRow& row(const std::string& label) const;
    std::string to_table() const;       // tab-separated, one row per bucket
    std::string to_key_values() const;  // key = value lines
    void write(const std::filesystem::path& dir) const; // report.tsv + report.txt
};

// Seed of sample j for pair i.
uint64_t eval_sample_seed(uint64_t seed, std::size_t pair_index, std::size_t sample_index);

// For every pair draws k outputs, composites when requested, keeps the
// best-PSNR output and accumulates metrics per mask bucket.
MetricReport evaluate(const Inpainter& model, const std::vector<SamplePair>& pairs, const EvalOptions& options);

} // namespace spn
