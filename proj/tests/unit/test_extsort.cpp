// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "support/testutil.hpp"
#include "trajforge/errors.hpp"
#include "trajforge/extsort.hpp"

using namespace trajforge;

namespace {

using Pairs = std::vector<std::pair<std::string, std::string>>;

Pairs collect(ExternalSorter& sorter) {
  Pairs out;
  sorter.finish([&](std::string_view key, std::string_view line) {
    out.emplace_back(std::string(key), std::string(line));
  });
  return out;
}

ExtSortConfig tiny_config(const std::filesystem::path& dir,
                          std::size_t in_memory = 4, int fan_in = 2) {
  ExtSortConfig cfg;
  cfg.max_records_in_memory = in_memory;
  cfg.merge_fan_in = fan_in;
  cfg.temp_dir = dir;
  return cfg;
}

}  // namespace

TEST_CASE("sorts by (key, line) regardless of insertion order") {
  testutil::TempDir dir;
  ExternalSorter sorter(tiny_config(dir.path(), 100, 64));
  sorter.add("b", "2");
  sorter.add("a", "1");
  sorter.add("c", "3");
  sorter.add("a2", "x");
  const Pairs out = collect(sorter);
  const Pairs expected = {{"a", "1"}, {"a2", "x"}, {"b", "2"}, {"c", "3"}};
  CHECK(out == expected);
}

TEST_CASE("spills to disk and multi-pass merges with a tiny budget") {
  testutil::TempDir dir;
  // 4 records in memory, fan-in 2: 100 records force many runs and at least
  // two merge generations.
  ExternalSorter sorter(tiny_config(dir.path(), 4, 2));
  std::mt19937_64 rng(3);
  std::vector<int> values(100);
  for (int i = 0; i < 100; ++i) values[static_cast<std::size_t>(i)] = i;
  for (std::size_t k = values.size(); k > 1; --k) {
    std::swap(values[k - 1], values[testutil::uniform_below(rng, k)]);
  }
  for (int v : values) {
    char key[16];
    std::snprintf(key, sizeof key, "k%05d", v);
    sorter.add(key, "line-" + std::to_string(v));
  }
  CHECK(sorter.records_added() == 100);
  const Pairs out = collect(sorter);
  REQUIRE(out.size() == 100);
  for (int i = 0; i < 100; ++i) {
    char key[16];
    std::snprintf(key, sizeof key, "k%05d", i);
    CHECK(out[static_cast<std::size_t>(i)].first == key);
    CHECK(out[static_cast<std::size_t>(i)].second == "line-" + std::to_string(i));
  }
  // Run files are cleaned up as they are consumed.
  std::size_t leftovers = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir.path())) {
    (void)entry;
    ++leftovers;
  }
  CHECK(leftovers == 0);
}

TEST_CASE("identical (key, line) pairs collapse to one") {
  testutil::TempDir dir;
  ExternalSorter sorter(tiny_config(dir.path(), 3, 2));
  for (int i = 0; i < 10; ++i) sorter.add("dup", "same-line");
  sorter.add("other", "x");
  const Pairs out = collect(sorter);
  const Pairs expected = {{"dup", "same-line"}, {"other", "x"}};
  CHECK(out == expected);
  CHECK(sorter.records_added() == 11);
}

TEST_CASE("equal keys with different lines raise DuplicateConflict") {
  testutil::TempDir dir;
  SUBCASE("conflict within one in-memory chunk") {
    ExternalSorter sorter(tiny_config(dir.path(), 100, 64));
    sorter.add("k", "line-a");
    sorter.add("k", "line-b");
    bool threw = false;
    try {
      sorter.finish([](std::string_view, std::string_view) {});
    } catch (const Error& e) {
      threw = true;
      CHECK(e.code() == Errc::DuplicateConflict);
    }
    CHECK(threw);
  }
  SUBCASE("conflict across spilled runs") {
    ExternalSorter sorter(tiny_config(dir.path(), 2, 2));
    sorter.add("k", "line-a");
    sorter.add("z1", "x");
    sorter.add("z2", "x");  // force spill boundary between the duplicates
    sorter.add("k", "line-b");
    sorter.add("z3", "x");
    CHECK_THROWS_AS(sorter.finish([](std::string_view, std::string_view) {}),
                    Error);
  }
}

TEST_CASE("separator bytes are rejected at add time") {
  testutil::TempDir dir;
  ExternalSorter sorter(tiny_config(dir.path()));
  CHECK_THROWS_AS(sorter.add("bad\tkey", "line"), Error);
  CHECK_THROWS_AS(sorter.add("bad\nkey", "line"), Error);
  CHECK_THROWS_AS(sorter.add("key", "bad\nline"), Error);
  sorter.add("key", "tab\tin line is fine");
  const Pairs out = collect(sorter);
  REQUIRE(out.size() == 1);
  CHECK(out[0].second == "tab\tin line is fine");
}

TEST_CASE("empty sorter emits nothing") {
  testutil::TempDir dir;
  ExternalSorter sorter(tiny_config(dir.path()));
  const Pairs out = collect(sorter);
  CHECK(out.empty());
  CHECK(sorter.records_added() == 0);
}

TEST_CASE("output is a pure function of the pair multiset") {
  testutil::TempDir dir_a, dir_b;
  // Same pairs, different insertion orders and different chunk budgets.
  Pairs pairs;
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    pairs.emplace_back("key-" + std::to_string(testutil::uniform_below(rng, 150)),
                       "payload");
  }
  Pairs shuffled = pairs;
  std::reverse(shuffled.begin(), shuffled.end());

  ExternalSorter a(tiny_config(dir_a.path(), 7, 2));
  for (const auto& [k, v] : pairs) a.add(k, v);
  ExternalSorter b(tiny_config(dir_b.path(), 64, 5));
  for (const auto& [k, v] : shuffled) b.add(k, v);

  CHECK(collect(a) == collect(b));
}

TEST_CASE("large random corpus matches std::sort oracle") {
  testutil::TempDir dir;
  std::mt19937_64 rng(99);
  Pairs pairs;
  for (int i = 0; i < 5000; ++i) {
    const auto n = testutil::uniform_below(rng, 3000);
    pairs.emplace_back("frame-" + std::to_string(n) + ":" + std::to_string(i % 7),
                       "line-" + std::to_string(n) + "-" + std::to_string(i % 7));
  }
  ExternalSorter sorter(tiny_config(dir.path(), 128, 3));
  for (const auto& [k, v] : pairs) sorter.add(k, v);

  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  CHECK(collect(sorter) == pairs);
}
