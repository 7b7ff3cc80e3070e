#include "spn/tensor_io.hpp"

#include "spn/errors.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>

namespace spn {

namespace {

constexpr char kMagic[8] = {'S', 'P', 'N', 'T', 'E', 'N', 'S', '1'};

uint8_t dtype_code(torch::Dtype dtype) {
    switch (dtype) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    default: throw Error("tensor blob: unsupported dtype");
    }
}

torch::Dtype dtype_from_code(uint8_t code) {
    switch (code) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    default: throw Error("tensor blob: unknown dtype code " + std::to_string(code));
    }
}

template <typename T>
void put(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw Error("tensor blob truncated: " + path.string());
    return value;
}

bool excluded(const std::string& name, const std::vector<std::string>& prefixes) {
    return std::any_of(prefixes.begin(), prefixes.end(),
                       [&](const std::string& p) { return name.rfind(p, 0) == 0; });
}

} // namespace

std::string shape_string(const torch::Tensor& t) {
    std::string s = "[";
    for (int64_t i = 0; i < t.dim(); ++i) s += (i ? "," : "") + std::to_string(t.size(i));
    return s + "]";
}

void write_tensor_blob(const std::filesystem::path& path, const NamedTensors& tensors) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        auto t = tensor.detach().cpu().contiguous();
        put<uint32_t>(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<uint8_t>(out, dtype_code(t.scalar_type()));
        put<uint32_t>(out, static_cast<uint32_t>(t.dim()));
        for (int64_t d = 0; d < t.dim(); ++d) put<int64_t>(out, t.size(d));
        out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
    }
    if (!out) throw Error("failed writing " + path.string());
}

NamedTensors read_tensor_blob(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw Error("not a tensor blob: " + path.string());
    const auto count = get<uint32_t>(in, path);
    NamedTensors out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const auto name_len = get<uint32_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto dtype = dtype_from_code(get<uint8_t>(in, path));
        const auto rank = get<uint32_t>(in, path);
        std::vector<int64_t> dims(rank);
        for (auto& d : dims) d = get<int64_t>(in, path);
        auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
        in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
        if (!in) throw Error("tensor blob truncated: " + path.string());
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

NamedTensors module_state(const torch::nn::Module& module, const std::vector<std::string>& exclude_prefixes) {
    NamedTensors out;
    for (const auto& item : module.named_parameters(true))
        if (!excluded(item.key(), exclude_prefixes)) out.emplace_back(item.key(), item.value());
    for (const auto& item : module.named_buffers(true))
        if (!excluded(item.key(), exclude_prefixes)) out.emplace_back(item.key(), item.value());
    return out;
}

void load_module_state(torch::nn::Module& module, const NamedTensors& blob, const std::string& what,
                       const std::vector<std::string>& exclude_prefixes) {
    std::map<std::string, torch::Tensor> by_name;
    for (const auto& [name, t] : blob)
        if (!excluded(name, exclude_prefixes)) by_name.emplace(name, t);
    auto expected = module_state(module, exclude_prefixes);
    for (const auto& [name, target] : expected) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ShapeError("shape manifest mismatch in " + what + ": missing entry '" + name + "'");
        if (it->second.sizes() != target.sizes())
            throw ShapeError("shape manifest mismatch in " + what + ": '" + name + "' expected " +
                             shape_string(target) + ", found " + shape_string(it->second));
    }
    if (by_name.size() != expected.size()) {
        for (const auto& [name, t] : by_name) {
            (void)t;
            bool known = std::any_of(expected.begin(), expected.end(), [&](const auto& e) { return e.first == name; });
            if (!known) throw ShapeError("shape manifest mismatch in " + what + ": unexpected entry '" + name + "'");
        }
    }
    torch::NoGradGuard no_grad;
    for (auto& [name, target] : expected) target.copy_(by_name.at(name));
}

} // namespace spn
