// SPDX-License-Identifier: Apache-2.0
#include "trajforge/export.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

#include "trajforge/errors.hpp"
#include "trajforge/extsort.hpp"
#include "trajforge/hash.hpp"
#include "trajforge/jsonl.hpp"

namespace trajforge {

namespace fs = std::filesystem;

namespace {

std::string shard_name(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "shard-%05llu.jsonl",
                static_cast<unsigned long long>(index));
  return buf;
}

// Extracts a top-level string field from a canonical frame line without a
// full JSON parse. Canonical serialization escapes every '"' inside string
// values, so the literal sequence "key":" can only introduce the real field.
std::optional<std::string> extract_string_field(std::string_view line,
                                                std::string_view key) {
  std::string needle = "\"";
  needle += key;
  needle += "\":\"";
  auto pos = line.find(needle);
  if (pos == std::string_view::npos) return std::nullopt;
  pos += needle.size();
  std::string value;
  while (pos < line.size()) {
    char c = line[pos];
    if (c == '"') return value;
    if (c == '\\') {
      // Field values used for routing (ids, tags, functional names) never
      // need escapes in practice; fall back to a real parse if one shows up.
      return std::nullopt;
    }
    value.push_back(c);
    ++pos;
  }
  return std::nullopt;
}

struct RoutingInfo {
  Functional functional;
  SourceId source;
  std::string trajectory_id;
};

RoutingInfo routing_info(std::string_view line) {
  auto functional_str = extract_string_field(line, "functional");
  auto source_str = extract_string_field(line, "source");
  auto trajectory_id = extract_string_field(line, "trajectory_id");
  if (functional_str && source_str && trajectory_id) {
    auto functional = functional_from_string(*functional_str);
    auto source = source_from_tag(*source_str);
    if (functional && source) {
      return {*functional, *source, std::move(*trajectory_id)};
    }
  }
  // Slow path: full parse (also validates the line).
  Frame f = parse_frame(line);
  return {f.functional, f.source, std::move(f.trajectory_id)};
}

// Accumulates one (functional, source) cell's shard files, rotating at the
// configured size.
class CellWriter {
 public:
  CellWriter(fs::path out_dir, Functional functional, SourceId source,
             const ExportOptions& options)
      : out_dir_(std::move(out_dir)),
        functional_(functional),
        source_(source),
        options_(options) {
    rel_dir_ = fs::path(std::string(to_string(functional_))) /
               std::string(source_tag(source_));
    fs::create_directories(out_dir_ / rel_dir_);
  }

  void add_line(std::string_view line) {
    if (!out_.is_open()) open_next();
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.put('\n');
    if (!out_) {
      throw Error(Errc::IoFailure, "write failed: " + current_rel_.string());
    }
    hasher_->update(line);
    hasher_->update("\n");
    byte_count_ += line.size() + 1;
    frame_count_ += 1;
    if (options_.columnar) columns_.push_back(std::string(line));
    if (frame_count_ >= options_.max_frames_per_shard) close_current();
  }

  void finish(std::vector<Shard>& shards) {
    if (out_.is_open()) close_current();
    for (Shard& s : shards_) shards.push_back(std::move(s));
    shards_.clear();
  }

 private:
  void open_next() {
    current_rel_ = rel_dir_ / shard_name(next_index_++);
    out_.open(out_dir_ / current_rel_, std::ios::binary | std::ios::trunc);
    if (!out_) {
      throw Error(Errc::IoFailure, "cannot create shard " + current_rel_.string());
    }
    hasher_ = std::make_unique<Sha256>();
    byte_count_ = 0;
    frame_count_ = 0;
    columns_.clear();
  }

  void close_current() {
    out_.flush();
    if (!out_) {
      throw Error(Errc::IoFailure, "write failed: " + current_rel_.string());
    }
    out_.close();
    Shard shard;
    shard.path = current_rel_.generic_string();
    shard.functional = functional_;
    shard.source = source_;
    shard.frame_count = frame_count_;
    shard.byte_count = byte_count_;
    shard.content_hash = hasher_->hex_digest();
    shards_.push_back(std::move(shard));
    if (options_.columnar) write_columns();
  }

  // Columnar mirror: same logical schema as the JSONL shard, one array per
  // field. Derived from the canonical lines, so it can always be regenerated;
  // the JSONL file remains the hash target.
  void write_columns() {
    json columns = json::object();
    for (const std::string& line : columns_) {
      json doc = json::parse(line);
      for (auto it = doc.begin(); it != doc.end(); ++it) {
        columns[it.key()].push_back(it.value());
      }
    }
    fs::path path = out_dir_ / current_rel_;
    path.replace_extension();  // strip .jsonl
    path += ".columns.json";
    write_file_atomic(path, canonical_dump(columns) + "\n");
    columns_.clear();
  }

  fs::path out_dir_, rel_dir_, current_rel_;
  Functional functional_;
  SourceId source_;
  const ExportOptions& options_;
  std::ofstream out_;
  std::unique_ptr<Sha256> hasher_;
  std::uint64_t next_index_ = 0;
  std::uint64_t byte_count_ = 0;
  std::uint64_t frame_count_ = 0;
  std::vector<std::string> columns_;
  std::vector<Shard> shards_;
};

}  // namespace

std::vector<Shard> write_shards_lines(
    const std::function<std::optional<std::pair<std::string, std::string>>()>& next,
    const fs::path& out_dir, const ExportOptions& options) {
  if (options.max_frames_per_shard < 1) {
    throw Error(Errc::ConfigInvalid, "max_frames_per_shard must be >= 1");
  }
  ExtSortConfig sort_cfg;
  sort_cfg.max_records_in_memory = options.sort_chunk_records;
  sort_cfg.merge_fan_in = options.merge_fan_in;
  sort_cfg.temp_dir =
      options.temp_dir.empty() ? out_dir / ".sort-tmp" : options.temp_dir;
  ExternalSorter sorter(sort_cfg);

  while (auto item = next()) {
    sorter.add(item->first, item->second);
  }

  // (functional, source) keyed in enum order, so the shard list comes out in
  // canonical order without re-sorting.
  std::map<std::pair<int, int>, std::unique_ptr<CellWriter>> writers;
  sorter.finish([&](std::string_view, std::string_view line) {
    RoutingInfo info = routing_info(line);
    auto key = std::make_pair(static_cast<int>(info.functional),
                              static_cast<int>(info.source));
    auto it = writers.find(key);
    if (it == writers.end()) {
      it = writers
               .emplace(key, std::make_unique<CellWriter>(
                                 out_dir, info.functional, info.source, options))
               .first;
    }
    it->second->add_line(line);
  });

  std::vector<Shard> shards;
  for (auto& [key, writer] : writers) writer->finish(shards);
  return shards;
}

std::vector<Shard> write_shards(const std::function<std::optional<Frame>()>& frames,
                                const fs::path& out_dir,
                                const ExportOptions& options) {
  auto next = [&frames]() -> std::optional<std::pair<std::string, std::string>> {
    auto frame = frames();
    if (!frame) return std::nullopt;
    std::string line = canonical_dump(frame_to_json(*frame));
    return std::make_pair(frame->frame_id, std::move(line));
  };
  return write_shards_lines(next, out_dir, options);
}

Manifest build_manifest(const std::vector<Shard>& shards,
                        const FilterConfig& filter_config,
                        const FilterStats& filter_stats, const fs::path& out_dir,
                        std::string created_at, std::string pipeline_git_ref) {
  Manifest manifest;
  manifest.filter_config = filter_config;
  manifest.filter_stats = filter_stats;
  manifest.created_at = std::move(created_at);
  manifest.pipeline_git_ref = std::move(pipeline_git_ref);
  manifest.shards = shards;
  std::sort(manifest.shards.begin(), manifest.shards.end(),
            [](const Shard& a, const Shard& b) { return a.path < b.path; });

  // Recount by streaming the actual files; trajectory blocks are contiguous
  // across a cell's shard sequence because the global order is by frame_id.
  std::map<std::pair<int, int>, ManifestCell> cells;
  std::map<std::pair<int, int>, std::string> last_trajectory;
  for (const Shard& shard : manifest.shards) {
    std::ifstream in(out_dir / shard.path, std::ios::binary);
    if (!in) {
      throw Error(Errc::IoFailure, "cannot open shard " + shard.path);
    }
    auto key = std::make_pair(static_cast<int>(shard.functional),
                              static_cast<int>(shard.source));
    auto [it, created] = cells.try_emplace(key);
    if (created) {
      it->second.functional = shard.functional;
      it->second.source = shard.source;
    }
    ManifestCell& cell = it->second;
    std::string& last_id = last_trajectory[key];

    std::uint64_t lines = 0;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      ++lines;
      ++cell.n_frames;
      RoutingInfo info = routing_info(line);
      if (info.trajectory_id != last_id) {
        ++cell.n_trajectories;
        last_id = info.trajectory_id;
      }
    }
    if (in.bad()) {
      throw Error(Errc::IoFailure, "read failed: " + shard.path);
    }
    if (lines != shard.frame_count) {
      throw Error(Errc::CountMismatch,
                  "shard " + shard.path + " recount " + std::to_string(lines) +
                      " != recorded " + std::to_string(shard.frame_count));
    }
  }
  for (auto& [key, cell] : cells) manifest.cells.push_back(cell);
  return manifest;
}

json manifest_to_json(const Manifest& manifest) {
  json cells = json::array();
  for (const ManifestCell& cell : manifest.cells) {
    json c = json::object();
    c["functional"] = std::string(to_string(cell.functional));
    c["n_frames"] = cell.n_frames;
    c["n_trajectories"] = cell.n_trajectories;
    c["source"] = std::string(source_tag(cell.source));
    cells.push_back(std::move(c));
  }
  json shards = json::array();
  for (const Shard& shard : manifest.shards) {
    json s = json::object();
    s["byte_count"] = shard.byte_count;
    s["content_hash"] = shard.content_hash;
    s["frame_count"] = shard.frame_count;
    s["functional"] = std::string(to_string(shard.functional));
    s["path"] = shard.path;
    s["source"] = std::string(source_tag(shard.source));
    shards.push_back(std::move(s));
  }
  json doc = json::object();
  doc["cells"] = std::move(cells);
  doc["created_at"] = manifest.created_at;
  doc["filter_config"] = manifest.filter_config.to_json();
  doc["filter_stats"] = manifest.filter_stats.to_json();
  doc["pipeline_git_ref"] = manifest.pipeline_git_ref;
  doc["schema_version"] = manifest.schema_version;
  doc["shards"] = std::move(shards);
  return doc;
}

namespace {

[[noreturn]] void bad_manifest(const std::string& what) {
  throw Error(Errc::ParseFailure, "manifest: " + what);
}

Functional manifest_functional(const json& v) {
  if (!v.is_string()) bad_manifest("functional must be a string");
  auto f = functional_from_string(v.get<std::string>());
  if (!f) bad_manifest("unknown functional " + v.get<std::string>());
  return *f;
}

SourceId manifest_source(const json& v) {
  if (!v.is_string()) bad_manifest("source must be a string");
  auto s = source_from_tag(v.get<std::string>());
  if (!s) bad_manifest("unknown source " + v.get<std::string>());
  return *s;
}

}  // namespace

Manifest manifest_from_json(const json& doc) try {
  if (!doc.is_object()) bad_manifest("not an object");
  Manifest manifest;
  if (auto it = doc.find("schema_version"); it != doc.end() && it->is_string()) {
    manifest.schema_version = it->get<std::string>();
  }
  if (auto it = doc.find("filter_config"); it != doc.end()) {
    manifest.filter_config = FilterConfig::from_json(*it);
  }
  if (auto it = doc.find("filter_stats"); it != doc.end()) {
    manifest.filter_stats = FilterStats::from_json(*it);
  }
  if (auto it = doc.find("created_at"); it != doc.end() && it->is_string()) {
    manifest.created_at = it->get<std::string>();
  }
  if (auto it = doc.find("pipeline_git_ref"); it != doc.end() && it->is_string()) {
    manifest.pipeline_git_ref = it->get<std::string>();
  }
  auto cells = doc.find("cells");
  if (cells == doc.end() || !cells->is_array()) bad_manifest("missing cells");
  for (const auto& c : *cells) {
    ManifestCell cell;
    cell.functional = manifest_functional(c.at("functional"));
    cell.source = manifest_source(c.at("source"));
    cell.n_trajectories = c.at("n_trajectories").get<std::uint64_t>();
    cell.n_frames = c.at("n_frames").get<std::uint64_t>();
    manifest.cells.push_back(cell);
  }
  auto shards = doc.find("shards");
  if (shards == doc.end() || !shards->is_array()) bad_manifest("missing shards");
  for (const auto& s : *shards) {
    Shard shard;
    shard.path = s.at("path").get<std::string>();
    shard.functional = manifest_functional(s.at("functional"));
    shard.source = manifest_source(s.at("source"));
    shard.frame_count = s.at("frame_count").get<std::uint64_t>();
    shard.byte_count = s.at("byte_count").get<std::uint64_t>();
    shard.content_hash = s.at("content_hash").get<std::string>();
    manifest.shards.push_back(std::move(shard));
  }
  return manifest;
} catch (const nlohmann::json::exception& e) {
  bad_manifest(e.what());
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  write_file_atomic(path, canonical_dump(manifest_to_json(manifest)) + "\n");
}

Manifest read_manifest(const fs::path& path) {
  json doc = json::parse(read_file(path), nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) bad_manifest("not valid JSON: " + path.string());
  return manifest_from_json(doc);
}

}  // namespace trajforge
