#include "container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "prunekit/errors.hpp"

namespace prunekit::detail {
namespace {

constexpr std::size_t kPreamble = 20;

std::string magic_bytes(std::string_view tag) {
  std::string m(tag);
  m += "\r\n\x1a\n";
  return m;
}

template <typename T>
void put_le(std::vector<unsigned char>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

void write_container(const std::filesystem::path& path, std::string_view tag,
                     std::uint32_t version, const nlohmann::json& header,
                     std::span<const unsigned char> payload) {
  const std::string text = header.dump();
  std::vector<unsigned char> pre;
  const std::string magic = magic_bytes(tag);
  pre.insert(pre.end(), magic.begin(), magic.end());
  put_le<std::uint32_t>(pre, version);
  put_le<std::uint64_t>(pre, text.size());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(pre.data()), static_cast<std::streamsize>(pre.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw FormatError("short write to '" + path.string() + "'");
}

Container read_container(const std::filesystem::path& path, std::string_view tag,
                         std::uint32_t version) {
  std::vector<unsigned char> bytes = read_file_bytes(path);
  const std::string where = "'" + path.string() + "'";
  const std::string magic = magic_bytes(tag);
  if (bytes.size() < kPreamble) throw FormatError(where + ": truncated preamble");
  if (std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
    throw FormatError(where + ": bad magic, not a " + std::string(tag) + " file");
  }
  const auto got_version = get_le<std::uint32_t>(bytes.data() + 8);
  if (got_version != version) {
    throw FormatError(where + ": unsupported version " + std::to_string(got_version) +
                      " (expected " + std::to_string(version) + ")");
  }
  const auto header_len = get_le<std::uint64_t>(bytes.data() + 12);
  if (header_len > bytes.size() - kPreamble) throw FormatError(where + ": truncated header");
  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.begin() + kPreamble,
                                     bytes.begin() + kPreamble + static_cast<long>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": malformed header: " + e.what());
  }
  c.payload.assign(bytes.begin() + kPreamble + static_cast<long>(header_len), bytes.end());
  return c;
}

void append_f32_le(std::vector<unsigned char>& out, std::span<const float> values) {
  out.reserve(out.size() + values.size() * 4);
  for (float v : values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
}

void append_i32_le(std::vector<unsigned char>& out, std::span<const int> values) {
  out.reserve(out.size() + values.size() * 4);
  for (int v : values) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
}

void read_f32_le(const unsigned char* src, std::size_t count, float* dst) {
  for (std::size_t i = 0; i < count; ++i) {
    dst[i] = std::bit_cast<float>(get_le<std::uint32_t>(src + 4 * i));
  }
}

void read_i32_le(const unsigned char* src, std::size_t count, int* dst) {
  for (std::size_t i = 0; i < count; ++i) {
    dst[i] = static_cast<int>(get_le<std::uint32_t>(src + 4 * i));
  }
}

}  // namespace prunekit::detail
