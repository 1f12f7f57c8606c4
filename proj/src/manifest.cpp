#include "prunekit/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <ctime>
#include <fstream>
#include <memory>

#include "prunekit/errors.hpp"

#ifndef PRUNEKIT_VERSION
#define PRUNEKIT_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;

namespace prunekit {

std::string_view tool_version() { return PRUNEKIT_VERSION; }

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read '" + path.string() + "'");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 initialisation failed");
  }
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void RunManifest::add_input(const fs::path& path) {
  inputs.push_back({path.string(), static_cast<std::uint64_t>(fs::file_size(path)), sha256_file(path)});
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json in = nlohmann::json::array();
  for (const auto& d : inputs) in.push_back({{"path", d.path}, {"bytes", d.bytes}, {"sha256", d.sha256}});
  return {{"command", command},
          {"argv", argv},
          {"tool_version", std::string(tool_version())},
          {"config", config},
          {"seeds", seeds},
          {"inputs", in},
          {"outputs", outputs},
          {"timings", timings},
          {"started_utc", started_utc},
          {"finished_utc", finished_utc}};
}

void RunManifest::write(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << to_json().dump(2) << '\n';
}

RunManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read '" + path.string() + "'");
  nlohmann::json j = nlohmann::json::parse(in);
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.argv = j.at("argv").get<std::vector<std::string>>();
  m.config = j.at("config");
  m.seeds = j.at("seeds");
  for (const auto& d : j.at("inputs")) {
    m.inputs.push_back({d.at("path").get<std::string>(), d.at("bytes").get<std::uint64_t>(),
                        d.at("sha256").get<std::string>()});
  }
  m.outputs = j.at("outputs").get<std::vector<std::string>>();
  m.timings = j.at("timings");
  m.started_utc = j.at("started_utc").get<std::string>();
  m.finished_utc = j.at("finished_utc").get<std::string>();
  return m;
}

}  // namespace prunekit
