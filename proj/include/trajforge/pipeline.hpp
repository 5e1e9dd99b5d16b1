// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajforge/curate.hpp"
#include "trajforge/ingest.hpp"
#include "trajforge/pes.hpp"
#include "trajforge/splits.hpp"
#include "trajforge/transform.hpp"

namespace trajforge {

// Orchestration of the end-to-end run. Stages form a dependency chain
// (fetch -> transform -> filter -> export, with split/stats/pes fanning out
// from export); each finished stage leaves a marker under
// <out_dir>/work/state/<stage>.done carrying a fingerprint of the effective
// config, so an interrupted run resumes at the first stage whose marker is
// missing or stale. Every output byte is a pure function of
// (input snapshot, config minus workers, seed).

enum class Stage { Fetch, Transform, Filter, Export, Split, Stats, Pes };

std::string_view stage_name(Stage stage);
std::optional<Stage> stage_from_name(std::string_view name);

struct StatsStageConfig {
  int length_histogram_bins = 10;
  int profile_bins = 20;
};

struct PesStageConfig {
  std::vector<std::string> elements;  // required when the pes stage is scheduled
  SoapParams soap{};
  Functional functional = Functional::PBE;
  int n_components = 2;
  std::uint64_t overlay_count = 5;
  std::string refs_path;              // required when the pes stage is scheduled
};

struct PipelineConfig {
  std::vector<SourceConfig> sources;
  FilterConfig filter{};
  std::string out_dir = "out";
  int workers = 1;
  std::uint64_t seed = 0;
  std::uint64_t max_frames_per_shard = 100000;
  std::uint64_t sort_chunk_frames = 50000;  // external-sort spill threshold
  double max_reject_rate = 0.01;  // transform aborts above this reject share
  std::vector<Stage> stages = {Stage::Fetch,  Stage::Transform, Stage::Filter,
                               Stage::Export, Stage::Split,     Stage::Stats};
  SplitConfig split{};   // split.seed is always wired from `seed`
  StatsStageConfig stats{};
  PesStageConfig pes{};
  std::string created_at;        // stamped into the manifest
  std::string pipeline_git_ref;  // stamped into the manifest
  SourceFieldMaps field_maps{};
};

// Effective config as canonical JSON; the exact inverse of config_from_json.
nlohmann::json config_to_json(const PipelineConfig& config);

// Strict parse with defaults: unknown keys and out-of-range values are
// ConfigInvalid naming the offending field path. Performs no disk checks.
PipelineConfig config_from_json(const nlohmann::json& doc);

// Loads a config file (empty file = all defaults), applies environment
// overrides (TRAJFORGE_OUT; SOURCE_DATE_EPOCH and TRAJFORGE_GIT_REF when the
// config leaves created_at / pipeline_git_ref blank), and checks stage
// dependencies: every scheduled stage needs its upstream either scheduled
// earlier or already completed under out_dir. Errors: ConfigInvalid.
PipelineConfig validate_config(const std::filesystem::path& path);

// Dependency/ordering check only (used by validate_config; callers that build
// configs programmatically can invoke it directly).
void check_stage_dependencies(const PipelineConfig& config);

// SHA-256 over the canonical effective config with `workers` removed: worker
// count never changes output bytes, so it must not invalidate resume markers.
std::string config_fingerprint(const PipelineConfig& config);

struct StageReport {
  std::string stage;
  double wall_seconds = 0.0;
  std::uint64_t records_in = 0;
  std::uint64_t records_out = 0;
  bool skipped = false;  // satisfied by a marker from an earlier run
};

struct RunReport {
  std::vector<StageReport> stages;
  FilterStats filter_stats;     // zeros unless the filter stage ran/was resumed
  std::string manifest_path;    // empty unless export ran/was resumed
  std::string rejects_path;     // empty unless transform ran/was resumed
  double transform_frames_per_second = 0.0;  // raw rate, report-only
};

nlohmann::json run_report_to_json(const RunReport& report);

// Executes config.stages in order, honoring resume markers, and writes
// <out_dir>/run_report.json (the one output excluded from determinism
// comparisons, since it carries wall times). Errors: Error with
// code StageFailure naming the stage and cause; ConfigInvalid.
RunReport run_pipeline(const PipelineConfig& config);

}  // namespace trajforge
