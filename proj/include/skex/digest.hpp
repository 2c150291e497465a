#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>

#include <openssl/evp.h>

#include "skex/error.hpp"
#include "skex/seqmodel.hpp"

namespace skex {

using Sha256 = std::array<unsigned char, 32>;

inline Sha256 sha256(std::string_view bytes) {
  Sha256 out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 failed");
  return out;
}

inline std::string hex(const Sha256& d) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (unsigned char b : d) {
    s += digits[b >> 4];
    s += digits[b & 15];
  }
  return s;
}

inline std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return hex(sha256(bytes));
}

// Canonical identity of a sequence: the hash of its binary token form.
inline std::string token_digest(const TokenMatrix& m) {
  std::ostringstream os(std::ios::binary);
  write_tokens(os, m);
  return hex(sha256(os.str()));
}

// First eight digest bytes as an integer (for seeding and bucketing).
inline std::uint64_t digest_prefix(std::string_view bytes) {
  const Sha256 d = sha256(bytes);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d[static_cast<std::size_t>(i)];
  return v;
}

}  // namespace skex
