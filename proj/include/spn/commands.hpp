#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spn/config.hpp"
#include "spn/data.hpp"
#include "spn/evaluation.hpp"
#include "spn/training.hpp"

namespace spn {

// Base seed of the held-out synthetic pairs; training uses seeds from 0.
constexpr uint64_t kHeldOutSeedBase = 1'000'000;

// Training set selected by data.synthetic / data.manifest + data.masks.
std::unique_ptr<Dataset> training_dataset(const RunConfig& config);
// Held-out pairs with a fixed, seeded image-mask pairing.
std::vector<SamplePair> evaluation_pairs(const RunConfig& config);

struct TrainOutcome {
    int64_t iteration = 0;
    std::vector<LossReport> reports; // every iteration run in this call
    std::filesystem::path last_checkpoint;
};

// Runs (or resumes) training to train.iters. Writes out/losses.tsv,
// out/checkpoints/iter_<n>/ every train.ckpt_every iterations and at the end,
// and out/inference/.
TrainOutcome train_command(const RunConfig& config, const std::filesystem::path& out,
                           const std::optional<std::filesystem::path>& resume, std::ostream& log);

// Entry point of the `spn` executable. Returns the process exit code:
// 0 success, 2 usage or configuration error, 1 any other failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace spn
