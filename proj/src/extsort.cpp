// SPDX-License-Identifier: Apache-2.0
#include "trajforge/extsort.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <future>
#include <queue>
#include <utility>

#include "trajforge/errors.hpp"

namespace trajforge {

namespace fs = std::filesystem;

namespace {

using Pair = std::pair<std::string, std::string>;

bool pair_less(const Pair& a, const Pair& b) {
  if (a.first != b.first) return a.first < b.first;
  return a.second < b.second;
}

void write_run(const fs::path& path, std::vector<Pair>& chunk) {
  std::sort(chunk.begin(), chunk.end(), pair_less);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoFailure, "cannot create run file " + path.string());
  for (const Pair& p : chunk) {
    out << p.first << '\t' << p.second << '\n';
  }
  out.flush();
  if (!out) throw Error(Errc::IoFailure, "write failed: " + path.string());
}

// Sequential reader over one sorted run file.
class RunReader {
 public:
  explicit RunReader(const fs::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw Error(Errc::IoFailure, "cannot open run file " + path.string());
    advance();
  }

  bool ok() const noexcept { return ok_; }
  const std::string& key() const noexcept { return key_; }
  const std::string& line() const noexcept { return line_; }

  void advance() {
    std::string raw;
    if (!std::getline(in_, raw)) {
      if (in_.bad()) throw Error(Errc::IoFailure, "read failed: " + path_.string());
      ok_ = false;
      return;
    }
    auto tab = raw.find('\t');
    if (tab == std::string::npos) {
      throw Error(Errc::IoFailure, "corrupt run file " + path_.string());
    }
    key_.assign(raw, 0, tab);
    line_.assign(raw, tab + 1, raw.size() - tab - 1);
    ok_ = true;
  }

 private:
  fs::path path_;
  std::ifstream in_;
  std::string key_, line_;
  bool ok_ = false;
};

// K-way merge with duplicate collapsing. Emits pairs in ascending (key, line)
// order; byte-identical duplicates collapse, same-key conflicts throw.
void merge_runs(const std::vector<fs::path>& inputs,
                const std::function<void(std::string_view, std::string_view)>& emit) {
  std::vector<std::unique_ptr<RunReader>> readers;
  readers.reserve(inputs.size());
  for (const fs::path& p : inputs) {
    auto r = std::make_unique<RunReader>(p);
    if (r->ok()) readers.push_back(std::move(r));
  }

  auto cmp = [](const RunReader* a, const RunReader* b) {
    if (a->key() != b->key()) return a->key() > b->key();
    return a->line() > b->line();
  };
  std::priority_queue<RunReader*, std::vector<RunReader*>, decltype(cmp)> heap(cmp);
  for (auto& r : readers) heap.push(r.get());

  std::string prev_key, prev_line;
  bool have_prev = false;
  while (!heap.empty()) {
    RunReader* top = heap.top();
    heap.pop();
    if (have_prev && top->key() == prev_key) {
      if (top->line() != prev_line) {
        throw Error(Errc::DuplicateConflict,
                    "key \"" + top->key() + "\" has conflicting payloads");
      }
      // byte-identical duplicate: collapse
    } else {
      emit(top->key(), top->line());
      prev_key = top->key();
      prev_line = top->line();
      have_prev = true;
    }
    top->advance();
    if (top->ok()) heap.push(top);
  }
}

}  // namespace

ExternalSorter::ExternalSorter(ExtSortConfig config) : config_(std::move(config)) {
  if (config_.temp_dir.empty()) {
    throw Error(Errc::ConfigInvalid, "external sorter needs a temp_dir");
  }
  if (config_.max_records_in_memory == 0) config_.max_records_in_memory = 1;
  if (config_.merge_fan_in < 2) config_.merge_fan_in = 2;
  std::error_code ec;
  fs::create_directories(config_.temp_dir, ec);
}

ExternalSorter::~ExternalSorter() {
  std::error_code ec;
  for (const fs::path& run : runs_) fs::remove(run, ec);
}

void ExternalSorter::add(std::string_view key, std::string_view line) {
  // Enforce the separator contract up front: a stray '\t' or '\n' would
  // corrupt run files, and worse, make the in-memory and spilled paths
  // disagree on record boundaries.
  if (key.find('\n') != std::string_view::npos ||
      key.find('\t') != std::string_view::npos) {
    throw Error(Errc::ConfigInvalid, "sort key contains a separator byte");
  }
  if (line.find('\n') != std::string_view::npos) {
    throw Error(Errc::ConfigInvalid, "sort line contains a newline");
  }
  chunk_.emplace_back(std::string(key), std::string(line));
  ++records_added_;
  if (chunk_.size() >= config_.max_records_in_memory) spill();
}

void ExternalSorter::spill() {
  if (chunk_.empty()) return;
  fs::path run = config_.temp_dir / ("run-" + std::to_string(next_run_id_++) + ".tmp");
  std::vector<Pair> chunk;
  chunk.swap(chunk_);
  write_run(run, chunk);
  runs_.push_back(std::move(run));
}

void ExternalSorter::finish(
    const std::function<void(std::string_view, std::string_view)>& emit) {
  if (finished_) {
    throw Error(Errc::IoFailure, "external sorter finished twice");
  }
  finished_ = true;

  if (runs_.empty()) {
    // Everything fit in memory; no temp IO needed.
    std::sort(chunk_.begin(), chunk_.end(), pair_less);
    std::string prev_key, prev_line;
    bool have_prev = false;
    for (const Pair& p : chunk_) {
      if (have_prev && p.first == prev_key) {
        if (p.second != prev_line) {
          throw Error(Errc::DuplicateConflict,
                      "key \"" + p.first + "\" has conflicting payloads");
        }
        continue;
      }
      emit(p.first, p.second);
      prev_key = p.first;
      prev_line = p.second;
      have_prev = true;
    }
    chunk_.clear();
    return;
  }

  spill();

  // Reduce the run count below the fan-in limit, then stream the final merge
  // straight into the caller's sink.
  std::error_code ec;
  while (runs_.size() > static_cast<std::size_t>(config_.merge_fan_in)) {
    std::vector<fs::path> next_runs;
    for (std::size_t i = 0; i < runs_.size(); i += config_.merge_fan_in) {
      std::size_t end = std::min(runs_.size(), i + config_.merge_fan_in);
      std::vector<fs::path> group(runs_.begin() + i, runs_.begin() + end);
      fs::path merged =
          config_.temp_dir / ("run-" + std::to_string(next_run_id_++) + ".tmp");
      std::ofstream out(merged, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(Errc::IoFailure, "cannot create " + merged.string());
      merge_runs(group, [&out](std::string_view key, std::string_view line) {
        out << key << '\t' << line << '\n';
      });
      out.flush();
      if (!out) throw Error(Errc::IoFailure, "write failed: " + merged.string());
      for (const fs::path& p : group) fs::remove(p, ec);
      next_runs.push_back(std::move(merged));
    }
    runs_ = std::move(next_runs);
  }

  merge_runs(runs_, emit);
  for (const fs::path& p : runs_) fs::remove(p, ec);
  runs_.clear();
}

}  // namespace trajforge
