#pragma once

// Shared framing for .pkpt checkpoints and .pkds dataset splits:
//   [0, 8)   magic (4 ASCII bytes + "\r\n\x1a\n")
//   [8, 12)  format version, uint32 little-endian
//   [12, 20) header length in bytes, uint64 little-endian
//   [20, 20 + header length)  UTF-8 JSON header
//   remainder: payload blobs (little-endian), layout described by the header
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace prunekit::detail {

struct Container {
  nlohmann::json header;
  std::vector<unsigned char> payload;
};

void write_container(const std::filesystem::path& path, std::string_view tag,
                     std::uint32_t version, const nlohmann::json& header,
                     std::span<const unsigned char> payload);
Container read_container(const std::filesystem::path& path, std::string_view tag,
                         std::uint32_t version);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);

void append_f32_le(std::vector<unsigned char>& out, std::span<const float> values);
void append_i32_le(std::vector<unsigned char>& out, std::span<const int> values);
void read_f32_le(const unsigned char* src, std::size_t count, float* dst);
void read_i32_le(const unsigned char* src, std::size_t count, int* dst);

}  // namespace prunekit::detail
