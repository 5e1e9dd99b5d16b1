// SPDX-License-Identifier: Apache-2.0
#include "trajforge/hash.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "trajforge/errors.hpp"

namespace trajforge {

namespace {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t hash64(std::uint64_t seed, std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV offset basis
  constexpr std::uint64_t kPrime = 0x100000001b3ULL;
  for (int i = 0; i < 8; ++i) {
    h = (h ^ ((seed >> (8 * i)) & 0xffu)) * kPrime;
  }
  for (unsigned char c : bytes) {
    h = (h ^ c) * kPrime;
  }
  return splitmix64(h);
}

std::uint64_t sub_seed(std::uint64_t seed, std::string_view purpose) noexcept {
  return hash64(seed, purpose);
}

struct Sha256::Impl {
  EVP_MD_CTX* ctx = nullptr;
};

Sha256::Sha256() : impl_(std::make_unique<Impl>()) {
  impl_->ctx = EVP_MD_CTX_new();
  if (!impl_->ctx || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::IoFailure, "failed to initialize SHA-256 digest");
  }
}

Sha256::~Sha256() {
  if (impl_ && impl_->ctx) EVP_MD_CTX_free(impl_->ctx);
}

void Sha256::update(const void* data, std::size_t len) {
  if (EVP_DigestUpdate(impl_->ctx, data, len) != 1) {
    throw Error(Errc::IoFailure, "SHA-256 update failed");
  }
}

std::string Sha256::hex_digest() {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int md_len = 0;
  if (EVP_DigestFinal_ex(impl_->ctx, md, &md_len) != 1) {
    throw Error(Errc::IoFailure, "SHA-256 finalize failed");
  }
  std::string hex;
  hex.reserve(2 * md_len);
  static const char* kDigits = "0123456789abcdef";
  for (unsigned int i = 0; i < md_len; ++i) {
    hex.push_back(kDigits[md[i] >> 4]);
    hex.push_back(kDigits[md[i] & 0xf]);
  }
  return hex;
}

std::string sha256_hex(std::string_view data) {
  Sha256 h;
  h.update(data);
  return h.hex_digest();
}

std::string sha256_hex_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(Errc::IoFailure, "cannot open file for hashing: " + path.string());
  }
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    std::streamsize got = in.gcount();
    if (got > 0) h.update(buf.data(), static_cast<std::size_t>(got));
  }
  if (in.bad()) {
    throw Error(Errc::IoFailure, "read error while hashing: " + path.string());
  }
  return h.hex_digest();
}

}  // namespace trajforge
