#pragma once

// Run manifests: which files went in, which came out, and their SHA-256.
// Requires OpenSSL's libcrypto at link time.

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pfdm/error.hpp"

namespace pfdm {

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot hash '" + path.string() + "': not readable");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256: digest init failed");
  std::array<char, 1 << 16> buf;
  while (is) {
    is.read(buf.data(), buf.size());
    if (is.gcount() > 0 && EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(is.gcount())) != 1)
      throw Error("sha256: digest update failed");
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), md, &len) != 1) throw Error("sha256: digest final failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

class Manifest {
 public:
  Manifest(std::string subcommand, std::filesystem::path run_dir)
      : subcommand_(std::move(subcommand)), run_dir_(std::move(run_dir)), start_(std::chrono::steady_clock::now()) {}

  void input(const std::filesystem::path& p) { inputs_.push_back(p); }
  void output(const std::filesystem::path& p) { outputs_.push_back(p); }
  const std::vector<std::filesystem::path>& outputs() const { return outputs_; }
  nlohmann::json& extra() { return extra_; }

  // Paths are recorded relative to the run directory when they lie inside it.
  std::string label(const std::filesystem::path& p) const {
    const auto rel = std::filesystem::path(p).lexically_relative(run_dir_);
    if (!rel.empty() && rel.native().rfind("..", 0) != 0) return rel.generic_string();
    return p.generic_string();
  }

  nlohmann::json to_json(const nlohmann::json& config, std::uint64_t seed, std::size_t workers) const {
    using nlohmann::json;
    json j;
    j["subcommand"] = subcommand_;
    j["seed"] = seed;
    j["workers"] = workers;
    j["config"] = config;
    j["inputs"] = json::array();
    for (const auto& p : inputs_) j["inputs"].push_back({{"path", label(p)}, {"sha256", sha256_file(p)}});
    j["outputs"] = json::array();
    for (const auto& p : outputs_)
      j["outputs"].push_back(
          {{"path", label(p)}, {"sha256", sha256_file(p)}, {"bytes", std::filesystem::file_size(p)}});
    if (!extra_.is_null()) j["results"] = extra_;
    j["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return j;
  }

 private:
  std::string subcommand_;
  std::filesystem::path run_dir_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::filesystem::path> inputs_, outputs_;
  nlohmann::json extra_;
};

}  // namespace pfdm
