// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace trajforge {

struct ExtSortConfig {
  std::size_t max_records_in_memory = 50000;  // spill threshold per chunk
  int merge_fan_in = 64;                      // max runs merged per pass
  std::filesystem::path temp_dir;             // required; holds run files
};

// Disk-backed merge sort of (key, line) pairs, ordered by (key, line).
// Memory stays bounded by max_records_in_memory regardless of input size.
// Pairs with equal keys and identical lines collapse to a single output pair;
// equal keys with differing lines are a DuplicateConflict (the caller's data
// is ambiguous and must not be silently resolved).
//
// The output depends only on the multiset of added pairs — not on insertion
// order, thread count, or chunk boundaries — which is what makes downstream
// artifacts byte-identical across worker configurations.
class ExternalSorter {
 public:
  explicit ExternalSorter(ExtSortConfig config);
  ~ExternalSorter();
  ExternalSorter(const ExternalSorter&) = delete;
  ExternalSorter& operator=(const ExternalSorter&) = delete;

  // Neither key nor line may contain '\n'; keys may not contain '\t'
  // (tab separates key from line in run files).
  void add(std::string_view key, std::string_view line);

  // Sorts, merges, deduplicates, and emits every pair in ascending (key,
  // line) order. add() must not be called afterwards. Run files are deleted
  // as they are consumed.
  void finish(const std::function<void(std::string_view key, std::string_view line)>& emit);

  std::uint64_t records_added() const noexcept { return records_added_; }

 private:
  void spill();

  ExtSortConfig config_;
  std::vector<std::pair<std::string, std::string>> chunk_;
  std::vector<std::filesystem::path> runs_;
  std::uint64_t records_added_ = 0;
  std::uint64_t next_run_id_ = 0;
  bool finished_ = false;
};

}  // namespace trajforge
