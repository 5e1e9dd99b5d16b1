// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "trajforge/types.hpp"

namespace trajforge {

// Where and how to read one upstream database dump. `location` is either a
// local directory of *.jsonl files or an http://host[:port]/prefix endpoint
// serving the same layout (an index.json listing plus ranged file GETs).
struct SourceConfig {
  SourceId source = SourceId::MaterialsProject;
  std::string location;
  int batch_size = 1000;
  std::string checkpoint_path;  // empty = stateless stream
  int http_max_attempts = 5;
  double http_base_delay_s = 0.5;  // exponential backoff: base * 2^attempt
};

// One raw upstream record, still unparsed. (file_index, line_index) locate it
// within the lexicographic enumeration of the source and are what checkpoints
// point at.
struct RawRecord {
  SourceId source = SourceId::MaterialsProject;
  std::uint64_t file_index = 0;
  std::uint64_t line_index = 0;
  std::string payload;
};

// Durable stream cursor: the position of the NEXT record to read, plus a
// running count of records handed out so far.
struct Checkpoint {
  SourceId source = SourceId::MaterialsProject;
  std::uint64_t file_index = 0;
  std::uint64_t line_index = 0;
  std::uint64_t records_emitted = 0;
};

// Assigns a subset of files to this stream: file i is consumed iff
// i % count == index. Record coordinates always refer to the full listing, so
// partitioned and unpartitioned reads agree on every record's identity.
struct StreamPartition {
  int index = 0;
  int count = 1;
};

// Sequential reader over a source. Enumeration order is files sorted by name,
// lines in file order, identical for directory and HTTP backings of the same
// corpus.
class RecordStream {
 public:
  virtual ~RecordStream() = default;

  // Returns up to n records; an empty vector means the stream is exhausted.
  // Throws IoFailure on a retryable read error; the stream position is left
  // unchanged, so the same call can simply be retried.
  virtual std::vector<RawRecord> next_batch(std::size_t n) = 0;

  // Cursor for the next unread record (suitable for store_checkpoint).
  virtual Checkpoint position() const = 0;
};

// Opens a stream over config.location. If config.checkpoint_path names an
// existing checkpoint file the stream resumes from it. Throws
// LocationUnreadable if the location does not exist or cannot be listed, and
// CorruptCheckpoint if a checkpoint file exists but cannot be trusted.
std::unique_ptr<RecordStream> open_stream(const SourceConfig& config,
                                          const StreamPartition& partition = {});

// Atomically persists a cursor (temp file + rename).
void store_checkpoint(const std::filesystem::path& path, const Checkpoint& cp);

// Reads a checkpoint if the file exists; nullopt when it does not. A present
// but unparseable/incomplete file throws CorruptCheckpoint.
std::optional<Checkpoint> try_load_checkpoint(const std::filesystem::path& path);

}  // namespace trajforge
