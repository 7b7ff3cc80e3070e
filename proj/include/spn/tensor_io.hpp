#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace spn {

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

// Binary blob of named tensors:
//   "SPNTENS1" | u32 count | { u32 name_len, name, u8 dtype, u32 rank, i64 dims[rank], raw data }*
// Little-endian, written in the given order so identical inputs give identical bytes.
void write_tensor_blob(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors read_tensor_blob(const std::filesystem::path& path);

// Parameters followed by buffers, in registration order. Names whose prefix is
// listed in `exclude_prefixes` are skipped.
NamedTensors module_state(const torch::nn::Module& module, const std::vector<std::string>& exclude_prefixes = {});

// Copies a blob into a module. Every module entry must be present with the
// same shape and the blob must contain nothing else; violations raise
// ShapeError naming `what` and the offending entry. Entries under
// `exclude_prefixes` are ignored on both sides.
void load_module_state(torch::nn::Module& module, const NamedTensors& blob, const std::string& what,
                       const std::vector<std::string>& exclude_prefixes = {});

std::string shape_string(const torch::Tensor& t);

} // namespace spn
