#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace spn {

std::string base64_encode(const std::vector<uint8_t>& bytes);
// Accepts standard base64 with optional padding and surrounding whitespace;
// anything else raises DecodeError.
std::vector<uint8_t> base64_decode(const std::string& text);

std::string sha256_hex(const std::vector<uint8_t>& bytes);

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes);

} // namespace spn
