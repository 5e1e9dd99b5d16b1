// SPDX-License-Identifier: Apache-2.0
#include "trajforge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "trajforge/analysis.hpp"
#include "trajforge/errors.hpp"
#include "trajforge/export.hpp"
#include "trajforge/extsort.hpp"
#include "trajforge/hash.hpp"
#include "trajforge/jsonl.hpp"
#include "trajforge/queue.hpp"

namespace trajforge {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Stage names

namespace {

constexpr std::pair<Stage, std::string_view> kStageNames[] = {
    {Stage::Fetch, "fetch"},   {Stage::Transform, "transform"},
    {Stage::Filter, "filter"}, {Stage::Export, "export"},
    {Stage::Split, "split"},   {Stage::Stats, "stats"},
    {Stage::Pes, "pes"},
};

// Upstream stage each stage consumes; Fetch has none.
std::optional<Stage> stage_dependency(Stage stage) {
  switch (stage) {
    case Stage::Fetch:
      return std::nullopt;
    case Stage::Transform:
      return Stage::Fetch;
    case Stage::Filter:
      return Stage::Transform;
    case Stage::Export:
      return Stage::Filter;
    case Stage::Split:
    case Stage::Stats:
    case Stage::Pes:
      return Stage::Export;
  }
  return std::nullopt;
}

constexpr std::uint64_t kPartLines = 100000;  // line rotation for staging files

}  // namespace

std::string_view stage_name(Stage stage) {
  for (const auto& [s, name] : kStageNames) {
    if (s == stage) return name;
  }
  return "unknown";
}

std::optional<Stage> stage_from_name(std::string_view name) {
  for (const auto& [s, n] : kStageNames) {
    if (n == name) return s;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Config serialization

namespace {

[[noreturn]] void bad_config(const std::string& message) {
  throw Error(Errc::ConfigInvalid, "config: " + message);
}

void require_known_keys(const json& obj, const std::set<std::string>& known,
                        const std::string& prefix) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key())) {
      bad_config(prefix + ": unknown field \"" + it.key() + "\"");
    }
  }
}

double get_number(const json& obj, const char* key, double fallback,
                  const std::string& prefix) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number()) bad_config(prefix + "." + key + " must be a number");
  return it->get<double>();
}

std::int64_t get_integer(const json& obj, const char* key, std::int64_t fallback,
                         const std::string& prefix) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number_integer() && !it->is_number_unsigned()) {
    bad_config(prefix + "." + key + " must be an integer");
  }
  return it->get<std::int64_t>();
}

std::uint64_t get_unsigned(const json& obj, const char* key, std::uint64_t fallback,
                           const std::string& prefix) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  const bool ok = it->is_number_unsigned() ||
                  (it->is_number_integer() && it->get<std::int64_t>() >= 0);
  if (!ok) bad_config(prefix + "." + key + " must be a non-negative integer");
  return it->get<std::uint64_t>();
}

std::string get_string(const json& obj, const char* key, std::string fallback,
                       const std::string& prefix) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_string()) bad_config(prefix + "." + key + " must be a string");
  return it->get<std::string>();
}

json split_config_to_json(const SplitConfig& cfg) {
  json doc = json::object();
  json balance = json::object();
  for (const auto& [source, fraction] : cfg.source_balance) {
    balance[std::string(source_tag(source))] = fraction;
  }
  doc["source_balance"] = std::move(balance);
  if (cfg.target_size) doc["target_size"] = *cfg.target_size;
  doc["test_fraction"] = cfg.test_fraction;
  return doc;
}

SplitConfig split_config_from_json(const json& doc) {
  if (!doc.is_object()) bad_config("split must be an object");
  require_known_keys(doc, {"source_balance", "target_size", "test_fraction"},
                     "split");
  SplitConfig cfg;
  cfg.test_fraction = get_number(doc, "test_fraction", cfg.test_fraction, "split");
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) {
    bad_config("split.test_fraction must lie strictly between 0 and 1");
  }
  if (auto it = doc.find("source_balance"); it != doc.end()) {
    if (!it->is_object()) bad_config("split.source_balance must be an object");
    std::map<SourceId, double> balance;
    for (auto entry = it->begin(); entry != it->end(); ++entry) {
      auto source = source_from_tag(entry.key());
      if (!source) {
        bad_config("split.source_balance has unknown source \"" + entry.key() + "\"");
      }
      if (!entry->is_number()) {
        bad_config("split.source_balance." + entry.key() + " must be a number");
      }
      const double fraction = entry->get<double>();
      if (fraction < 0.0) {
        bad_config("split.source_balance." + entry.key() + " must be >= 0");
      }
      balance[*source] = fraction;
    }
    cfg.source_balance = std::move(balance);
  }
  if (auto it = doc.find("target_size"); it != doc.end()) {
    const std::uint64_t target = get_unsigned(doc, "target_size", 0, "split");
    if (target == 0) bad_config("split.target_size must be >= 1");
    cfg.target_size = static_cast<std::size_t>(target);
  }
  return cfg;
}

json sources_to_json(const std::vector<SourceConfig>& sources) {
  json arr = json::array();
  for (const SourceConfig& src : sources) {
    json doc = json::object();
    doc["batch_size"] = src.batch_size;
    doc["checkpoint_path"] = src.checkpoint_path;
    doc["http_base_delay_s"] = src.http_base_delay_s;
    doc["http_max_attempts"] = src.http_max_attempts;
    doc["location"] = src.location;
    doc["source"] = std::string(source_tag(src.source));
    arr.push_back(std::move(doc));
  }
  return arr;
}

std::vector<SourceConfig> sources_from_json(const json& arr) {
  if (!arr.is_array()) bad_config("sources must be an array");
  std::vector<SourceConfig> sources;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& doc = arr[i];
    const std::string prefix = "sources[" + std::to_string(i) + "]";
    if (!doc.is_object()) bad_config(prefix + " must be an object");
    require_known_keys(doc,
                       {"batch_size", "checkpoint_path", "http_base_delay_s",
                        "http_max_attempts", "location", "source"},
                       prefix);
    SourceConfig src;
    const std::string tag = get_string(doc, "source", "", prefix);
    auto source = source_from_tag(tag);
    if (!source) bad_config(prefix + ".source has unknown tag \"" + tag + "\"");
    src.source = *source;
    src.location = get_string(doc, "location", "", prefix);
    if (src.location.empty()) bad_config(prefix + ".location must be non-empty");
    src.batch_size = static_cast<int>(
        get_integer(doc, "batch_size", src.batch_size, prefix));
    if (src.batch_size < 1) bad_config(prefix + ".batch_size must be >= 1");
    src.checkpoint_path = get_string(doc, "checkpoint_path", "", prefix);
    src.http_max_attempts = static_cast<int>(
        get_integer(doc, "http_max_attempts", src.http_max_attempts, prefix));
    if (src.http_max_attempts < 1) {
      bad_config(prefix + ".http_max_attempts must be >= 1");
    }
    src.http_base_delay_s =
        get_number(doc, "http_base_delay_s", src.http_base_delay_s, prefix);
    if (src.http_base_delay_s < 0.0) {
      bad_config(prefix + ".http_base_delay_s must be >= 0");
    }
    sources.push_back(std::move(src));
  }
  return sources;
}

json pes_stage_to_json(const PesStageConfig& cfg) {
  json doc = json::object();
  doc["elements"] = cfg.elements;
  doc["functional"] = std::string(to_string(cfg.functional));
  doc["n_components"] = cfg.n_components;
  doc["overlay_count"] = cfg.overlay_count;
  doc["refs_path"] = cfg.refs_path;
  json soap = json::object();
  soap["l_max"] = cfg.soap.l_max;
  soap["n_max"] = cfg.soap.n_max;
  soap["r_cut"] = cfg.soap.r_cut;
  soap["sigma"] = cfg.soap.sigma;
  doc["soap"] = std::move(soap);
  return doc;
}

PesStageConfig pes_stage_from_json(const json& doc) {
  if (!doc.is_object()) bad_config("pes must be an object");
  require_known_keys(doc,
                     {"elements", "functional", "n_components", "overlay_count",
                      "refs_path", "soap"},
                     "pes");
  PesStageConfig cfg;
  if (auto it = doc.find("elements"); it != doc.end()) {
    if (!it->is_array()) bad_config("pes.elements must be an array of strings");
    for (const json& e : *it) {
      if (!e.is_string()) bad_config("pes.elements must be an array of strings");
      cfg.elements.push_back(e.get<std::string>());
    }
  }
  const std::string functional =
      get_string(doc, "functional", std::string(to_string(cfg.functional)), "pes");
  auto parsed = functional_from_string(functional);
  if (!parsed) bad_config("pes.functional has unknown value \"" + functional + "\"");
  cfg.functional = *parsed;
  cfg.n_components =
      static_cast<int>(get_integer(doc, "n_components", cfg.n_components, "pes"));
  if (cfg.n_components < 1) bad_config("pes.n_components must be >= 1");
  cfg.overlay_count = get_unsigned(doc, "overlay_count", cfg.overlay_count, "pes");
  cfg.refs_path = get_string(doc, "refs_path", "", "pes");
  if (auto it = doc.find("soap"); it != doc.end()) {
    if (!it->is_object()) bad_config("pes.soap must be an object");
    require_known_keys(*it, {"l_max", "n_max", "r_cut", "sigma"}, "pes.soap");
    cfg.soap.r_cut = get_number(*it, "r_cut", cfg.soap.r_cut, "pes.soap");
    cfg.soap.n_max =
        static_cast<int>(get_integer(*it, "n_max", cfg.soap.n_max, "pes.soap"));
    cfg.soap.l_max =
        static_cast<int>(get_integer(*it, "l_max", cfg.soap.l_max, "pes.soap"));
    cfg.soap.sigma = get_number(*it, "sigma", cfg.soap.sigma, "pes.soap");
    if (!(cfg.soap.r_cut > 0.0)) bad_config("pes.soap.r_cut must be > 0");
    if (cfg.soap.n_max < 1) bad_config("pes.soap.n_max must be >= 1");
    if (cfg.soap.l_max < 0) bad_config("pes.soap.l_max must be >= 0");
    if (!(cfg.soap.sigma > 0.0)) bad_config("pes.soap.sigma must be > 0");
  }
  return cfg;
}

}  // namespace

json config_to_json(const PipelineConfig& config) {
  json doc = json::object();
  doc["created_at"] = config.created_at;
  doc["field_maps"] = config.field_maps.to_json();
  doc["filter"] = config.filter.to_json();
  doc["max_frames_per_shard"] = config.max_frames_per_shard;
  doc["max_reject_rate"] = config.max_reject_rate;
  doc["out_dir"] = config.out_dir;
  doc["pes"] = pes_stage_to_json(config.pes);
  doc["pipeline_git_ref"] = config.pipeline_git_ref;
  doc["seed"] = config.seed;
  doc["sort_chunk_frames"] = config.sort_chunk_frames;
  doc["sources"] = sources_to_json(config.sources);
  doc["split"] = split_config_to_json(config.split);
  json stages = json::array();
  for (Stage stage : config.stages) stages.push_back(std::string(stage_name(stage)));
  doc["stages"] = std::move(stages);
  json stats = json::object();
  stats["length_histogram_bins"] = config.stats.length_histogram_bins;
  stats["profile_bins"] = config.stats.profile_bins;
  doc["stats"] = std::move(stats);
  doc["workers"] = config.workers;
  return doc;
}

PipelineConfig config_from_json(const json& doc) {
  if (!doc.is_object()) bad_config("document must be a JSON object");
  require_known_keys(doc,
                     {"created_at", "field_maps", "filter", "max_frames_per_shard",
                      "max_reject_rate", "out_dir", "pes", "pipeline_git_ref",
                      "seed", "sort_chunk_frames", "sources", "split", "stages",
                      "stats", "workers"},
                     "config");
  PipelineConfig cfg;
  if (auto it = doc.find("sources"); it != doc.end()) {
    cfg.sources = sources_from_json(*it);
  }
  if (auto it = doc.find("filter"); it != doc.end()) {
    cfg.filter = FilterConfig::from_json(*it);
  }
  cfg.out_dir = get_string(doc, "out_dir", cfg.out_dir, "config");
  if (cfg.out_dir.empty()) bad_config("out_dir must be non-empty");
  cfg.workers = static_cast<int>(get_integer(doc, "workers", cfg.workers, "config"));
  if (cfg.workers < 1) bad_config("workers must be >= 1");
  cfg.seed = get_unsigned(doc, "seed", cfg.seed, "config");
  cfg.max_frames_per_shard =
      get_unsigned(doc, "max_frames_per_shard", cfg.max_frames_per_shard, "config");
  if (cfg.max_frames_per_shard == 0) bad_config("max_frames_per_shard must be >= 1");
  cfg.sort_chunk_frames =
      get_unsigned(doc, "sort_chunk_frames", cfg.sort_chunk_frames, "config");
  if (cfg.sort_chunk_frames == 0) bad_config("sort_chunk_frames must be >= 1");
  cfg.max_reject_rate =
      get_number(doc, "max_reject_rate", cfg.max_reject_rate, "config");
  if (cfg.max_reject_rate < 0.0 || cfg.max_reject_rate > 1.0) {
    bad_config("max_reject_rate must lie in [0, 1]");
  }
  if (auto it = doc.find("stages"); it != doc.end()) {
    if (!it->is_array()) bad_config("stages must be an array of stage names");
    std::vector<Stage> stages;
    for (const json& entry : *it) {
      if (!entry.is_string()) bad_config("stages must be an array of stage names");
      auto stage = stage_from_name(entry.get<std::string>());
      if (!stage) {
        bad_config("stages: unknown stage \"" + entry.get<std::string>() + "\"");
      }
      if (std::find(stages.begin(), stages.end(), *stage) != stages.end()) {
        bad_config("stages: stage \"" + entry.get<std::string>() +
                   "\" appears twice");
      }
      stages.push_back(*stage);
    }
    cfg.stages = std::move(stages);
  }
  if (auto it = doc.find("split"); it != doc.end()) {
    cfg.split = split_config_from_json(*it);
  }
  if (auto it = doc.find("stats"); it != doc.end()) {
    if (!it->is_object()) bad_config("stats must be an object");
    require_known_keys(*it, {"length_histogram_bins", "profile_bins"}, "stats");
    cfg.stats.length_histogram_bins = static_cast<int>(get_integer(
        *it, "length_histogram_bins", cfg.stats.length_histogram_bins, "stats"));
    cfg.stats.profile_bins = static_cast<int>(
        get_integer(*it, "profile_bins", cfg.stats.profile_bins, "stats"));
    if (cfg.stats.length_histogram_bins < 1) {
      bad_config("stats.length_histogram_bins must be >= 1");
    }
    if (cfg.stats.profile_bins < 1) bad_config("stats.profile_bins must be >= 1");
  }
  if (auto it = doc.find("pes"); it != doc.end()) {
    cfg.pes = pes_stage_from_json(*it);
  }
  cfg.created_at = get_string(doc, "created_at", "", "config");
  cfg.pipeline_git_ref = get_string(doc, "pipeline_git_ref", "", "config");
  if (auto it = doc.find("field_maps"); it != doc.end()) {
    cfg.field_maps = SourceFieldMaps::from_json(*it);
  }
  return cfg;
}

std::string config_fingerprint(const PipelineConfig& config) {
  json doc = config_to_json(config);
  doc.erase("workers");  // worker count never changes output bytes
  return sha256_hex(canonical_dump(doc));
}

void check_stage_dependencies(const PipelineConfig& config) {
  const fs::path state_dir = fs::path(config.out_dir) / "work" / "state";
  std::set<Stage> scheduled_before;
  std::set<Stage> seen;
  for (Stage stage : config.stages) {
    if (!seen.insert(stage).second) {
      bad_config("stages: stage \"" + std::string(stage_name(stage)) +
                 "\" appears twice");
    }
    if (auto dep = stage_dependency(stage)) {
      const bool satisfied =
          scheduled_before.count(*dep) ||
          fs::exists(state_dir / (std::string(stage_name(*dep)) + ".done"));
      if (!satisfied) {
        bad_config("stages: \"" + std::string(stage_name(stage)) + "\" needs \"" +
                   std::string(stage_name(*dep)) +
                   "\" scheduled before it or already completed in " +
                   config.out_dir);
      }
    }
    scheduled_before.insert(stage);
  }
  if (std::find(config.stages.begin(), config.stages.end(), Stage::Pes) !=
      config.stages.end()) {
    if (config.pes.elements.empty()) {
      bad_config("pes.elements must be non-empty when the pes stage is scheduled");
    }
    if (config.pes.refs_path.empty()) {
      bad_config("pes.refs_path must be set when the pes stage is scheduled");
    }
  }
}

namespace {

std::string iso8601_utc(std::time_t t) {
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

PipelineConfig validate_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    bad_config(std::string("cannot read ") + path.string() + " (" + e.what() + ")");
  }
  const bool blank =
      std::all_of(text.begin(), text.end(),
                  [](unsigned char c) { return std::isspace(c) != 0; });
  json doc;
  if (blank) {
    doc = json::object();
  } else {
    doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) {
      bad_config("invalid JSON in " + path.string());
    }
  }
  PipelineConfig cfg = config_from_json(doc);

  if (const char* out = std::getenv("TRAJFORGE_OUT"); out && *out) {
    cfg.out_dir = out;
  }
  if (cfg.created_at.empty()) {
    const char* epoch = std::getenv("SOURCE_DATE_EPOCH");
    std::time_t stamp = 0;
    bool have_epoch = false;
    if (epoch && *epoch) {
      char* end = nullptr;
      const long long parsed = std::strtoll(epoch, &end, 10);
      if (end && *end == '\0') {
        stamp = static_cast<std::time_t>(parsed);
        have_epoch = true;
      }
    }
    if (!have_epoch) stamp = std::time(nullptr);
    cfg.created_at = iso8601_utc(stamp);
  }
  if (cfg.pipeline_git_ref.empty()) {
    const char* ref = std::getenv("TRAJFORGE_GIT_REF");
    cfg.pipeline_git_ref = (ref && *ref) ? ref : "unknown";
  }
  check_stage_dependencies(cfg);
  return cfg;
}

// ---------------------------------------------------------------------------
// Run report

json run_report_to_json(const RunReport& report) {
  json doc = json::object();
  doc["filter_stats"] = report.filter_stats.to_json();
  doc["manifest_path"] = report.manifest_path;
  doc["rejects_path"] = report.rejects_path;
  json stages = json::array();
  for (const StageReport& sr : report.stages) {
    json s = json::object();
    s["records_in"] = sr.records_in;
    s["records_out"] = sr.records_out;
    s["skipped"] = sr.skipped;
    s["stage"] = sr.stage;
    s["wall_seconds"] = sr.wall_seconds;
    stages.push_back(std::move(s));
  }
  doc["stages"] = std::move(stages);
  doc["transform_frames_per_second"] = report.transform_frames_per_second;
  return doc;
}

// ---------------------------------------------------------------------------
// Shared stage plumbing

namespace {

struct Paths {
  fs::path out;
  fs::path work;
  fs::path state;
  fs::path checkpoints;
  fs::path raw;
  fs::path frames;
  fs::path filtered;
  fs::path tmp;
  fs::path rejects;
  fs::path filter_stats;
  fs::path splits;
  fs::path stats;
  fs::path pes;
  fs::path manifest;

  static Paths make(const std::string& out_dir) {
    Paths p;
    p.out = out_dir;
    p.work = p.out / "work";
    p.state = p.work / "state";
    p.checkpoints = p.work / "checkpoints";
    p.raw = p.work / "raw";
    p.frames = p.work / "frames";
    p.filtered = p.work / "filtered";
    p.tmp = p.work / "tmp";
    p.rejects = p.work / "rejects.jsonl";
    p.filter_stats = p.work / "filter_stats.json";
    p.splits = p.out / "splits";
    p.stats = p.out / "stats";
    p.pes = p.out / "pes";
    p.manifest = p.out / "manifest.json";
    return p;
  }
};

fs::path marker_path(const Paths& paths, Stage stage) {
  return paths.state / (std::string(stage_name(stage)) + ".done");
}

std::optional<json> read_marker(const Paths& paths, Stage stage) {
  const fs::path path = marker_path(paths, stage);
  if (!fs::exists(path)) return std::nullopt;
  json doc = json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
  return doc;
}

void write_marker(const Paths& paths, Stage stage, const std::string& fingerprint,
                  json extra) {
  json doc = json::object();
  doc["extra"] = std::move(extra);
  doc["fingerprint"] = fingerprint;
  doc["stage"] = std::string(stage_name(stage));
  write_file_atomic(marker_path(paths, stage), canonical_dump(doc) + "\n");
}

std::vector<fs::path> sorted_parts(const fs::path& dir) {
  std::vector<fs::path> parts;
  if (!fs::exists(dir)) return parts;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("part-", 0) == 0 && name.size() > 6 &&
        name.substr(name.size() - 6) == ".jsonl") {
      parts.push_back(entry.path());
    }
  }
  std::sort(parts.begin(), parts.end());
  return parts;
}

// Streams every line of every part in order.
void for_each_part_line(const std::vector<fs::path>& parts,
                        const std::function<void(const std::string&)>& fn) {
  for (const fs::path& part : parts) {
    std::ifstream in(part);
    if (!in) throw Error(Errc::IoFailure, "cannot open " + part.string());
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      fn(line);
    }
    if (in.bad()) throw Error(Errc::IoFailure, "read error on " + part.string());
  }
}

std::uint64_t count_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  std::uint64_t lines = 0;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      if (buf[static_cast<std::size_t>(i)] == '\n') ++lines;
    }
  }
  if (in.bad()) throw Error(Errc::IoFailure, "read error on " + path.string());
  return lines;
}

// Rotating JSONL writer: dir/part-00000.jsonl, part-00001.jsonl, ... capped at
// max_lines lines each. With resume=true it continues appending after the
// last existing part instead of starting fresh.
class PartWriter {
 public:
  PartWriter(fs::path dir, std::uint64_t max_lines, bool resume = false)
      : dir_(std::move(dir)), max_lines_(max_lines) {
    fs::create_directories(dir_);
    if (resume) {
      const std::vector<fs::path> parts = sorted_parts(dir_);
      if (!parts.empty()) {
        const fs::path& last = parts.back();
        const std::uint64_t lines = count_lines(last);
        const std::string name = last.filename().string();
        index_ = std::stoull(name.substr(5, name.size() - 11));
        if (lines < max_lines_) {
          lines_in_current_ = lines;
          out_.open(last, std::ios::app | std::ios::binary);
          if (!out_) throw Error(Errc::IoFailure, "cannot open " + last.string());
          return;
        }
        ++index_;
      }
    }
  }

  void append(std::string_view line) {
    if (!out_.is_open()) open_current();
    if (lines_in_current_ >= max_lines_) {
      out_.close();
      ++index_;
      lines_in_current_ = 0;
      open_current();
    }
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.put('\n');
    if (!out_) {
      throw Error(Errc::IoFailure, "write error in " + dir_.string());
    }
    ++lines_in_current_;
    ++total_;
  }

  void flush() {
    if (out_.is_open()) out_.flush();
  }

  void close() {
    if (out_.is_open()) out_.close();
  }

  std::uint64_t total() const noexcept { return total_; }

 private:
  void open_current() {
    char name[32];
    std::snprintf(name, sizeof name, "part-%05llu.jsonl",
                  static_cast<unsigned long long>(index_));
    const fs::path path = dir_ / name;
    // Appending keeps resumed lines; fresh stages cleared the dir first.
    out_.open(path, std::ios::app | std::ios::binary);
    if (!out_) throw Error(Errc::IoFailure, "cannot open " + path.string());
  }

  fs::path dir_;
  std::uint64_t max_lines_;
  std::uint64_t index_ = 0;
  std::uint64_t lines_in_current_ = 0;
  std::uint64_t total_ = 0;
  std::ofstream out_;
};

void clear_directory(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
}

// Trims the staging directory to exactly `target` records. Returns the number
// of records actually available (less than `target` means the staging is
// behind the checkpoint and the source must restart).
std::uint64_t truncate_staging(const fs::path& dir, std::uint64_t target) {
  std::uint64_t consumed = 0;
  for (const fs::path& part : sorted_parts(dir)) {
    if (consumed >= target) {
      fs::remove(part);
      continue;
    }
    const std::uint64_t lines = count_lines(part);
    if (consumed + lines <= target) {
      consumed += lines;
      continue;
    }
    const std::uint64_t keep = target - consumed;
    std::ifstream in(part);
    if (!in) throw Error(Errc::IoFailure, "cannot open " + part.string());
    std::string kept;
    std::string line;
    for (std::uint64_t i = 0; i < keep && std::getline(in, line); ++i) {
      kept += line;
      kept += '\n';
    }
    in.close();
    write_file_atomic(part, kept);
    consumed = target;
  }
  return consumed;
}

// ---------------------------------------------------------------------------
// fetch

void run_fetch_stage(const PipelineConfig& cfg, const Paths& paths,
                     StageReport& report, json& extra) {
  fs::create_directories(paths.raw);
  fs::create_directories(paths.checkpoints);
  std::uint64_t total_emitted = 0;
  for (const SourceConfig& source : cfg.sources) {
    const std::string tag(source_tag(source.source));
    const fs::path raw_dir = paths.raw / tag;
    SourceConfig effective = source;
    if (effective.checkpoint_path.empty()) {
      effective.checkpoint_path = (paths.checkpoints / (tag + ".json")).string();
    }

    if (auto checkpoint = try_load_checkpoint(effective.checkpoint_path)) {
      const std::uint64_t staged =
          truncate_staging(raw_dir, checkpoint->records_emitted);
      if (staged < checkpoint->records_emitted) {
        // Staging fell behind its checkpoint (tampering or an incomplete
        // copy): restart this source from scratch rather than emit a gap.
        clear_directory(raw_dir);
        fs::remove(effective.checkpoint_path);
      }
    } else {
      clear_directory(raw_dir);
    }
    fs::create_directories(raw_dir);

    auto stream = open_stream(effective);
    PartWriter writer(raw_dir, kPartLines, /*resume=*/true);
    while (true) {
      std::vector<RawRecord> batch =
          stream->next_batch(static_cast<std::size_t>(effective.batch_size));
      if (batch.empty()) break;
      for (const RawRecord& record : batch) {
        json line = json::object();
        line["file_index"] = record.file_index;
        line["line_index"] = record.line_index;
        line["payload"] = record.payload;
        writer.append(canonical_dump(line));
      }
      writer.flush();  // data must be visible before the cursor moves past it
      store_checkpoint(effective.checkpoint_path, stream->position());
      report.records_in += batch.size();
      report.records_out += batch.size();
    }
    writer.close();
    total_emitted += stream->position().records_emitted;
  }
  extra["records_total"] = total_emitted;
  extra["records_new"] = report.records_out;
}

// ---------------------------------------------------------------------------
// transform

void run_transform_stage(const PipelineConfig& cfg, const Paths& paths,
                         StageReport& report, json& extra,
                         double* frames_per_second) {
  clear_directory(paths.frames);
  fs::remove(paths.rejects);

  std::ofstream rejects(paths.rejects, std::ios::binary);
  if (!rejects) {
    throw Error(Errc::IoFailure, "cannot open " + paths.rejects.string());
  }
  PartWriter writer(paths.frames, kPartLines);

  const int workers = std::max(1, cfg.workers);
  const std::size_t super_batch = static_cast<std::size_t>(workers) * 512;

  std::uint64_t records_in = 0;
  std::uint64_t frames_out = 0;
  std::uint64_t rejected = 0;

  std::vector<RawRecord> batch;
  batch.reserve(super_batch);
  std::vector<TransformResult> results;

  const auto t0 = std::chrono::steady_clock::now();

  auto process_batch = [&]() {
    if (batch.empty()) return;
    results.assign(batch.size(), TransformResult{});
    run_workers(workers, [&](int worker_id) {
      for (std::size_t i = static_cast<std::size_t>(worker_id); i < batch.size();
           i += static_cast<std::size_t>(workers)) {
        results[i] = dispatch(batch[i], cfg.field_maps);
      }
    });
    for (TransformResult& result : results) {
      for (const Frame& frame : result.frames) {
        writer.append(canonical_dump(frame_to_json(frame)));
        ++frames_out;
      }
      if (result.reject) {
        rejects << canonical_dump(reject_to_json(*result.reject)) << '\n';
        if (!rejects) {
          throw Error(Errc::IoFailure, "write error on " + paths.rejects.string());
        }
        ++rejected;
      }
    }
    batch.clear();
  };

  for (const SourceConfig& source : cfg.sources) {
    const std::string tag(source_tag(source.source));
    const std::vector<fs::path> parts = sorted_parts(paths.raw / tag);
    for_each_part_line(parts, [&](const std::string& line) {
      json doc = json::parse(line, nullptr, false);
      if (doc.is_discarded() || !doc.is_object()) {
        throw Error(Errc::ParseFailure, "staged record is not a JSON object");
      }
      RawRecord record;
      record.source = source.source;
      record.file_index = doc.at("file_index").get<std::uint64_t>();
      record.line_index = doc.at("line_index").get<std::uint64_t>();
      record.payload = doc.at("payload").get<std::string>();
      batch.push_back(std::move(record));
      ++records_in;
      if (batch.size() >= super_batch) process_batch();
    });
    process_batch();  // flush per source so RawRecord.source stays correct
  }
  writer.close();
  rejects.close();

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (frames_per_second && wall > 0.0) {
    *frames_per_second = static_cast<double>(frames_out) / wall;
  }

  if (records_in > 0 &&
      static_cast<double>(rejected) >
          cfg.max_reject_rate * static_cast<double>(records_in)) {
    throw Error(Errc::StageFailure,
                "transform: rejected " + std::to_string(rejected) + " of " +
                    std::to_string(records_in) +
                    " records, above max_reject_rate " +
                    format_double(cfg.max_reject_rate));
  }

  report.records_in = records_in;
  report.records_out = frames_out;
  extra["frames_out"] = frames_out;
  extra["records_in"] = records_in;
  extra["rejected"] = rejected;
}

// ---------------------------------------------------------------------------
// filter

void run_filter_stage(const PipelineConfig& cfg, const Paths& paths,
                      StageReport& report, json& extra, FilterStats* stats_out) {
  clear_directory(paths.filtered);
  clear_directory(paths.tmp);
  fs::remove(paths.filter_stats);

  ExtSortConfig sort_cfg;
  sort_cfg.max_records_in_memory = static_cast<std::size_t>(cfg.sort_chunk_frames);
  sort_cfg.temp_dir = paths.tmp;
  ExternalSorter sorter(sort_cfg);

  for_each_part_line(sorted_parts(paths.frames), [&](const std::string& line) {
    const Frame frame = parse_frame(line);
    sorter.add(frame.frame_id, line);
  });

  PartWriter writer(paths.filtered, kPartLines);
  FilterStats stats;

  // One trajectory's frames plus their original serialized lines; the lines
  // are re-emitted untouched so this stage can never perturb frame bytes.
  std::vector<Frame> block;
  std::map<std::string, std::string> block_lines;
  std::string block_id;

  auto process_block = [&]() {
    if (block.empty()) return;
    stats.frames_in += block.size();

    std::vector<Frame> survivors;
    survivors.reserve(block.size());
    for (Frame& frame : block) {
      if (!filter_frame_completeness(frame)) {
        ++stats.frames_dropped_missing_targets;
        continue;
      }
      if (!validate_frame(frame).ok()) {
        ++stats.frames_dropped_schema;
        continue;
      }
      survivors.push_back(std::move(frame));
    }
    block.clear();
    if (survivors.empty()) {
      block_lines.clear();
      return;
    }

    std::vector<Trajectory> trajs = assemble_trajectories(std::move(survivors));
    for (Trajectory& traj : trajs) {
      if (!filter_convergence(traj, cfg.filter)) {
        ++stats.trajectories_dropped_convergence;
        stats.frames_dropped_convergence += traj.frames.size();
        continue;
      }
      if (!filter_final_force(traj, cfg.filter)) {
        ++stats.trajectories_dropped_final_force;
        stats.frames_dropped_final_force += traj.frames.size();
        continue;
      }
      stats.frames_out += traj.frames.size();
      for (const Frame& frame : traj.frames) {
        writer.append(block_lines.at(frame.frame_id));
      }
    }
    block_lines.clear();
  };

  sorter.finish([&](std::string_view key, std::string_view line) {
    Frame frame = parse_frame(line);
    if (frame.trajectory_id != block_id) {
      process_block();
      block_id = frame.trajectory_id;
    }
    block_lines.emplace(std::string(key), std::string(line));
    block.push_back(std::move(frame));
  });
  process_block();
  writer.close();

  write_file_atomic(paths.filter_stats, canonical_dump(stats.to_json()) + "\n");
  report.records_in = stats.frames_in;
  report.records_out = stats.frames_out;
  extra["filter_stats"] = stats.to_json();
  if (stats_out) *stats_out = stats;
}

// ---------------------------------------------------------------------------
// export

void run_export_stage(const PipelineConfig& cfg, const Paths& paths,
                      StageReport& report, json& extra) {
  FilterStats stats;
  try {
    stats = FilterStats::from_json(json::parse(read_file(paths.filter_stats)));
  } catch (const std::exception& e) {
    throw Error(Errc::StageFailure,
                std::string("export: cannot load filter stats: ") + e.what());
  }

  for (Functional functional : kAllFunctionals) {
    fs::remove_all(paths.out / std::string(to_string(functional)));
  }
  fs::remove(paths.manifest);
  clear_directory(paths.tmp);

  ExportOptions options;
  options.max_frames_per_shard = cfg.max_frames_per_shard;
  options.sort_chunk_records = static_cast<std::size_t>(cfg.sort_chunk_frames);
  options.temp_dir = paths.tmp;

  const std::vector<fs::path> parts = sorted_parts(paths.filtered);
  std::size_t part_index = 0;
  std::ifstream in;
  std::uint64_t frames_in = 0;
  auto next = [&]() -> std::optional<std::pair<std::string, std::string>> {
    std::string line;
    while (true) {
      if (in.is_open() && std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++frames_in;
        Frame frame = parse_frame(line);
        return std::make_pair(std::move(frame.frame_id), std::move(line));
      }
      if (in.is_open() && in.bad()) {
        throw Error(Errc::IoFailure, "read error in " + paths.filtered.string());
      }
      if (part_index >= parts.size()) return std::nullopt;
      in.close();
      in.clear();
      in.open(parts[part_index++]);
      if (!in) {
        throw Error(Errc::IoFailure,
                    "cannot open " + parts[part_index - 1].string());
      }
    }
  };

  std::vector<Shard> shards = write_shards_lines(next, paths.out, options);
  Manifest manifest = build_manifest(shards, cfg.filter, stats, paths.out,
                                     cfg.created_at, cfg.pipeline_git_ref);
  write_manifest(manifest, paths.manifest);

  std::uint64_t frames_out = 0;
  for (const Shard& shard : shards) frames_out += shard.frame_count;
  report.records_in = frames_in;
  report.records_out = frames_out;
  extra["frames"] = frames_out;
  extra["manifest_path"] = paths.manifest.string();
  extra["shards"] = shards.size();
}

// ---------------------------------------------------------------------------
// Shared shard-reading helper for split/stats/pes

// Streams every exported trajectory in canonical order. Cells never share
// trajectories, so grouping resets at cell boundaries; within a cell the
// frame_id sort keeps each trajectory's frames contiguous.
void for_each_exported_trajectory(
    const Paths& paths, const std::function<void(Trajectory&&)>& fn,
    std::optional<Functional> only_functional = std::nullopt) {
  const Manifest manifest = read_manifest(paths.manifest);

  std::vector<Frame> block;
  std::string block_id;
  auto flush = [&]() {
    if (block.empty()) return;
    std::vector<Trajectory> trajs = assemble_trajectories(std::move(block));
    block.clear();
    for (Trajectory& traj : trajs) fn(std::move(traj));
  };

  std::pair<int, int> current_cell{-1, -1};
  for (const Shard& shard : manifest.shards) {
    if (only_functional && shard.functional != *only_functional) continue;
    const std::pair<int, int> cell{static_cast<int>(shard.functional),
                                   static_cast<int>(shard.source)};
    if (cell != current_cell) {
      flush();
      block_id.clear();
      current_cell = cell;
    }
    std::ifstream in(paths.out / shard.path);
    if (!in) {
      throw Error(Errc::IoFailure, "cannot open " + (paths.out / shard.path).string());
    }
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      Frame frame = parse_frame(line);
      if (frame.trajectory_id != block_id) {
        flush();
        block_id = frame.trajectory_id;
      }
      block.push_back(std::move(frame));
    }
    if (in.bad()) {
      throw Error(Errc::IoFailure, "read error on " + (paths.out / shard.path).string());
    }
  }
  flush();
}

// ---------------------------------------------------------------------------
// split

void run_split_stage(const PipelineConfig& cfg, const Paths& paths,
                     StageReport& report, json& extra) {
  clear_directory(paths.splits);

  std::vector<TrajSummary> summaries;
  std::set<std::string> seen_ids;
  for_each_exported_trajectory(paths, [&](Trajectory&& traj) {
    if (!seen_ids.insert(traj.trajectory_id).second) {
      throw Error(Errc::DuplicateKey, "split: trajectory id \"" +
                                          traj.trajectory_id +
                                          "\" appears in more than one cell");
    }
    summaries.push_back(summarize(traj));
  });

  SplitConfig split_cfg = cfg.split;
  split_cfg.seed = cfg.seed;  // all randomness flows from the master seed
  SplitAssignment assignment = stratified_split(summaries, split_cfg);
  write_file_atomic(paths.splits / "assignment.jsonl",
                    split_assignment_to_jsonl(assignment));

  const std::uint64_t n_test = assignment.test_count();
  const std::uint64_t n_total = assignment.labels.size();

  json summary = json::object();
  summary["n_test"] = n_test;
  summary["n_total"] = n_total;
  summary["n_train"] = n_total - n_test;

  if (split_cfg.target_size) {
    std::vector<TrajSummary> train_pool;
    for (const TrajSummary& s : summaries) {
      auto it = assignment.labels.find(s.trajectory_id);
      if (it != assignment.labels.end() && it->second == SplitLabel::train) {
        train_pool.push_back(s);
      }
    }
    std::vector<TrajSummary> balanced = balance_sources(train_pool, split_cfg);
    std::string lines;
    for (const TrajSummary& s : balanced) {
      json doc = json::object();
      doc["trajectory_id"] = s.trajectory_id;
      canonical_dump_append(lines, doc);
      lines += '\n';
    }
    write_file_atomic(paths.splits / "balanced.jsonl", lines);
    summary["n_balanced"] = balanced.size();
  }

  write_file_atomic(paths.splits / "summary.json",
                    canonical_dump(summary) + "\n");
  report.records_in = summaries.size();
  report.records_out = n_total;
  extra["n_test"] = n_test;
  extra["n_total"] = n_total;
}

// ---------------------------------------------------------------------------
// stats

json histogram_to_json(const Histogram& hist) {
  json doc = json::object();
  doc["bin_edges"] = hist.bin_edges;
  doc["counts"] = hist.counts;
  doc["scale"] = hist.scale == HistScale::log10 ? "log10" : "linear";
  return doc;
}

json profile_to_json(const ProfileCurve& curve) {
  json doc = json::object();
  doc["bin_centers"] = curve.bin_centers;
  doc["mean"] = curve.mean;
  doc["n"] = curve.n;
  doc["stddev"] = curve.stddev;
  return doc;
}

void run_stats_stage(const PipelineConfig& cfg, const Paths& paths,
                     StageReport& report, json& extra) {
  clear_directory(paths.stats);

  std::vector<std::uint64_t> lengths;
  ProfileAccumulator delta_e(cfg.stats.profile_bins);
  ProfileAccumulator force(cfg.stats.profile_bins);
  std::map<std::string, std::uint64_t> element_counts;
  std::map<int, std::vector<std::uint64_t>> stage_counts;
  std::uint64_t n_frames = 0;
  std::uint64_t n_traj = 0;
  double force_sum_frames = 0.0;
  double force_sum_traj_maxima = 0.0;

  for_each_exported_trajectory(paths, [&](Trajectory&& traj) {
    ++n_traj;
    lengths.push_back(traj.frames.size());
    accumulate_delta_e_profile(traj, delta_e);
    accumulate_force_profile(traj, force);
    for (const auto& [element, count] : traj.composition) {
      (void)count;
      element_counts[element] += 1;
    }
    std::map<int, std::uint64_t> per_stage;
    double traj_max = 0.0;
    for (const Frame& frame : traj.frames) {
      ++n_frames;
      per_stage[frame.relaxation_number] += 1;
      const double v = max_force_norm(frame);
      force_sum_frames += v;
      traj_max = std::max(traj_max, v);
    }
    force_sum_traj_maxima += traj_max;
    for (const auto& [stage, count] : per_stage) {
      stage_counts[stage].push_back(count);
    }
  });

  json doc = json::object();
  doc["delta_e_profile"] = profile_to_json(delta_e.finalize());
  json elements = json::object();
  for (const auto& [element, count] : element_counts) elements[element] = count;
  doc["element_trajectory_counts"] = std::move(elements);
  doc["force_profile"] = profile_to_json(force.finalize());
  json fsum = json::object();
  fsum["mean_over_frames"] =
      n_frames ? force_sum_frames / static_cast<double>(n_frames) : 0.0;
  fsum["mean_over_trajectory_maxima"] =
      n_traj ? force_sum_traj_maxima / static_cast<double>(n_traj) : 0.0;
  fsum["n_frames"] = n_frames;
  fsum["n_trajectories"] = n_traj;
  doc["force_summary"] = std::move(fsum);
  doc["length_histogram"] = histogram_to_json(
      trajectory_length_histogram(lengths, cfg.stats.length_histogram_bins));
  doc["n_frames"] = n_frames;
  doc["n_trajectories"] = n_traj;
  json stage_hists = json::array();
  for (const StageHistogram& sh : relaxation_stage_histogram_from_counts(stage_counts)) {
    json entry = json::object();
    entry["histogram"] = histogram_to_json(sh.histogram);
    entry["n_trajectories"] = sh.n_trajectories;
    entry["relaxation_number"] = sh.relaxation_number;
    stage_hists.push_back(std::move(entry));
  }
  doc["relaxation_stage_histograms"] = std::move(stage_hists);

  write_file_atomic(paths.stats / "summary.json", canonical_dump(doc) + "\n");
  report.records_in = n_frames;
  report.records_out = n_traj;
  extra["n_frames"] = n_frames;
  extra["n_trajectories"] = n_traj;
}

// ---------------------------------------------------------------------------
// pes

void run_pes_stage(const PipelineConfig& cfg, const Paths& paths,
                   StageReport& report, json& extra) {
  clear_directory(paths.pes);
  const ReferenceEnergies refs = read_reference_energies(cfg.pes.refs_path);

  std::vector<Frame> frames;
  for_each_exported_trajectory(
      paths,
      [&](Trajectory&& traj) {
        for (Frame& frame : traj.frames) frames.push_back(std::move(frame));
      },
      cfg.pes.functional);

  PesParams params;
  params.elements = cfg.pes.elements;
  params.soap = cfg.pes.soap;
  params.functional = cfg.pes.functional;
  params.n_components = cfg.pes.n_components;
  params.overlay_count = cfg.pes.overlay_count;
  params.seed = cfg.seed;
  params.input_label = "export/" + std::string(to_string(cfg.pes.functional));

  const PesResult result = run_pes_job(frames, params, refs, paths.pes);
  report.records_in = frames.size();
  report.records_out = result.n_points;
  extra["n_overlays"] = result.n_overlays;
  extra["n_points"] = result.n_points;
}

}  // namespace

// ---------------------------------------------------------------------------
// Orchestrator

RunReport run_pipeline(const PipelineConfig& config) {
  if (config.workers < 1) bad_config("workers must be >= 1");
  check_stage_dependencies(config);
  const std::string fingerprint = config_fingerprint(config);
  const Paths paths = Paths::make(config.out_dir);
  fs::create_directories(paths.state);

  RunReport report;
  for (Stage stage : config.stages) {
    StageReport sr;
    sr.stage = std::string(stage_name(stage));

    const std::optional<json> marker = read_marker(paths, stage);
    const bool current = marker && marker->value("fingerprint", "") == fingerprint;
    if (current) {
      sr.skipped = true;
      const json extra = marker->value("extra", json::object());
      switch (stage) {
        case Stage::Fetch:
          sr.records_in = extra.value("records_total", 0ULL);
          sr.records_out = sr.records_in;
          break;
        case Stage::Transform:
          sr.records_in = extra.value("records_in", 0ULL);
          sr.records_out = extra.value("frames_out", 0ULL);
          report.rejects_path = paths.rejects.string();
          break;
        case Stage::Filter:
          if (extra.contains("filter_stats")) {
            report.filter_stats = FilterStats::from_json(extra["filter_stats"]);
            sr.records_in = report.filter_stats.frames_in;
            sr.records_out = report.filter_stats.frames_out;
          }
          break;
        case Stage::Export:
          sr.records_out = extra.value("frames", 0ULL);
          sr.records_in = sr.records_out;
          report.manifest_path = paths.manifest.string();
          break;
        case Stage::Split:
          sr.records_in = extra.value("n_total", 0ULL);
          sr.records_out = sr.records_in;
          break;
        case Stage::Stats:
          sr.records_in = extra.value("n_frames", 0ULL);
          sr.records_out = extra.value("n_trajectories", 0ULL);
          break;
        case Stage::Pes:
          sr.records_in = extra.value("n_points", 0ULL);
          sr.records_out = sr.records_in;
          break;
      }
      report.stages.push_back(std::move(sr));
      continue;
    }

    const auto t0 = std::chrono::steady_clock::now();
    json extra = json::object();
    try {
      switch (stage) {
        case Stage::Fetch:
          run_fetch_stage(config, paths, sr, extra);
          break;
        case Stage::Transform:
          run_transform_stage(config, paths, sr, extra,
                              &report.transform_frames_per_second);
          report.rejects_path = paths.rejects.string();
          break;
        case Stage::Filter:
          run_filter_stage(config, paths, sr, extra, &report.filter_stats);
          break;
        case Stage::Export:
          run_export_stage(config, paths, sr, extra);
          report.manifest_path = paths.manifest.string();
          break;
        case Stage::Split:
          run_split_stage(config, paths, sr, extra);
          break;
        case Stage::Stats:
          run_stats_stage(config, paths, sr, extra);
          break;
        case Stage::Pes:
          run_pes_stage(config, paths, sr, extra);
          break;
      }
    } catch (const Error& e) {
      if (e.code() == Errc::ConfigInvalid || e.code() == Errc::StageFailure) {
        throw;
      }
      throw Error(Errc::StageFailure,
                  std::string(stage_name(stage)) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(Errc::StageFailure,
                  std::string(stage_name(stage)) + ": " + e.what());
    }
    sr.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_marker(paths, stage, fingerprint, std::move(extra));
    report.stages.push_back(std::move(sr));
  }

  write_file_atomic(paths.out / "run_report.json",
                    canonical_dump(run_report_to_json(report)) + "\n");
  return report;
}

}  // namespace trajforge
