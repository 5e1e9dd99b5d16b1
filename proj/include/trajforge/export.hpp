// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajforge/curate.hpp"
#include "trajforge/frame.hpp"

namespace trajforge {

struct ExportOptions {
  std::uint64_t max_frames_per_shard = 100000;
  bool columnar = false;               // also write shard-XXXXX.columns.json
  std::size_t sort_chunk_records = 50000;  // external-sort spill threshold
  int merge_fan_in = 64;
  std::filesystem::path temp_dir;      // required; external-sort scratch space
};

struct Shard {
  std::string path;  // relative to the export root, e.g. "PBE/mp/shard-00000.jsonl"
  Functional functional = Functional::PBE;
  SourceId source = SourceId::MaterialsProject;
  std::uint64_t frame_count = 0;
  std::uint64_t byte_count = 0;
  std::string content_hash;  // SHA-256 of the shard's bytes
};

// Globally sorts frames by frame_id (external merge sort, bounded memory),
// collapses byte-identical duplicates, and writes them as
// out_dir/<functional>/<source>/shard-XXXXX.jsonl with at most
// max_frames_per_shard frames each. Returned shards are ordered by
// (functional, source, shard index). Output bytes depend only on the input
// frame multiset, never on arrival order or worker count.
// Throws DuplicateConflict when one frame_id maps to two different byte
// payloads.
std::vector<Shard> write_shards(
    const std::function<std::optional<Frame>()>& frames,
    const std::filesystem::path& out_dir, const ExportOptions& options);

// Pre-serialized variant used by the pipeline: yields (frame_id, canonical
// JSONL line without trailing newline) pairs.
std::vector<Shard> write_shards_lines(
    const std::function<std::optional<std::pair<std::string, std::string>>()>& next,
    const std::filesystem::path& out_dir, const ExportOptions& options);

struct ManifestCell {
  Functional functional = Functional::PBE;
  SourceId source = SourceId::MaterialsProject;
  std::uint64_t n_trajectories = 0;
  std::uint64_t n_frames = 0;
};

struct Manifest {
  std::string schema_version = "1.0";
  FilterConfig filter_config;
  FilterStats filter_stats;
  std::vector<ManifestCell> cells;  // canonical (functional, source) order
  std::vector<Shard> shards;        // sorted by path
  std::string created_at;
  std::string pipeline_git_ref;
};

// Recounts every shard by streaming its lines (counts are never trusted from
// upstream bookkeeping) and derives the per-(functional, source) cell table.
// Throws CountMismatch if a shard's recount disagrees with its recorded
// frame_count.
Manifest build_manifest(const std::vector<Shard>& shards,
                        const FilterConfig& filter_config,
                        const FilterStats& filter_stats,
                        const std::filesystem::path& out_dir,
                        std::string created_at, std::string pipeline_git_ref);

nlohmann::json manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(const nlohmann::json& doc);  // ParseFailure

// Canonical, key-sorted JSON with a trailing newline: byte-identical for
// identical manifests.
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace trajforge
