#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include <torch/torch.h>

#include "spn/config.hpp"

namespace spn::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "spn") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// 64-bit LCG shared with tests/oracles/metrics_oracle.py.
class Lcg {
public:
    explicit Lcg(uint64_t seed) : state_(seed) {}
    double next() {
        state_ = state_ * 6364136223846793005ULL + 1442695040888963407ULL;
        return static_cast<double>(state_ >> 11) / static_cast<double>(uint64_t{1} << 53);
    }
    torch::Tensor tensor(std::vector<int64_t> shape) {
        auto t = torch::empty(shape, torch::kFloat64);
        auto* p = t.data_ptr<double>();
        for (int64_t i = 0; i < t.numel(); ++i) p[i] = next();
        return t;
    }

private:
    uint64_t state_;
};

// Smallest architecture that still exercises every component; keeps unit
// tests to a few milliseconds per forward.
inline RunConfig tiny_config(const std::string& mode = "deterministic") {
    RunConfig cfg;
    cfg.set("data.size", "32");
    cfg.set("data.synthetic", "16");
    cfg.set("pretext.channels", "4,8,8");
    cfg.set("prior.mode", mode);
    cfg.set("prior.channels", "8,16,32");
    cfg.set("prior.latent_dim", "16");
    cfg.set("prior.res_blocks", "1");
    cfg.set("prior.rdb_layers", "2");
    cfg.set("prior.rdb_growth", "8");
    cfg.set("gen.channels", "8,16,32");
    cfg.set("gen.bottom_blocks", "2");
    cfg.set("gen.spade_hidden", "8");
    cfg.set("disc.channels", "8,16,16,16");
    cfg.set("perc.channels", "4,8,8,8,8");
    cfg.set("perc.convs", "1,1,1,1,1");
    cfg.set("train.iters", "20");
    cfg.set("train.batch_size", "2");
    cfg.set("train.ckpt_every", "10");
    cfg.set("train.log_every", "5");
    cfg.set("eval.embedding_dim", "8");
    return cfg;
}

inline double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
    return (a.to(torch::kFloat64) - b.to(torch::kFloat64)).abs().max().item<double>();
}

} // namespace spn::testing
