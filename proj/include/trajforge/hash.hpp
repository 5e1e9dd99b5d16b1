// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

namespace trajforge {

// Deterministic, platform-stable 64-bit hash used wherever reproducible
// pseudo-random ordering is needed (split sampling, quota draws). FNV-1a over
// the seed bytes then the payload bytes, passed through the splitmix64
// finalizer for avalanche. Never use std::hash here: its value is
// implementation-defined and would make seeds non-portable.
std::uint64_t hash64(std::uint64_t seed, std::string_view bytes) noexcept;

// Derives an independent sub-seed for a named purpose from a run-level seed,
// so e.g. split sampling and source balancing draw uncorrelated orderings.
std::uint64_t sub_seed(std::uint64_t seed, std::string_view purpose) noexcept;

// Incremental SHA-256 (hex-encoded digest).
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t len);
  void update(std::string_view s) { update(s.data(), s.size()); }
  // Finalizes and returns the lowercase hex digest. The object must not be
  // updated afterwards.
  std::string hex_digest();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view data);
std::string sha256_hex_file(const std::filesystem::path& path);

}  // namespace trajforge
