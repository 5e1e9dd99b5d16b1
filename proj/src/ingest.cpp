// SPDX-License-Identifier: Apache-2.0
#include "trajforge/ingest.hpp"

#include <httplib.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "trajforge/errors.hpp"
#include "trajforge/jsonl.hpp"

namespace trajforge {

namespace fs = std::filesystem;

namespace {

void check_partition(const StreamPartition& p) {
  if (p.count < 1 || p.index < 0 || p.index >= p.count) {
    throw Error(Errc::ConfigInvalid,
                "invalid stream partition " + std::to_string(p.index) + "/" +
                    std::to_string(p.count));
  }
}

// Shared cursor logic over an abstract "open file f, skip to line l, read
// lines" backend. Subclasses provide file listing and line reads; this class
// owns partition filtering, batch assembly, and failure rollback.
class CursorStream : public RecordStream {
 public:
  CursorStream(const SourceConfig& config, const StreamPartition& partition)
      : config_(config), partition_(partition) {
    check_partition(partition);
  }

  std::vector<RawRecord> next_batch(std::size_t n) override {
    ensure_init();
    Checkpoint before = cursor_;
    std::vector<RawRecord> batch;
    batch.reserve(std::min<std::size_t>(n, 1024));
    try {
      while (batch.size() < n) {
        if (!owned_file_ready()) break;
        std::string line;
        if (!read_line(line)) {
          // Current file exhausted: the cursor moves to the next file in the
          // full enumeration; non-owned files are skipped lazily.
          close_file();
          cursor_.file_index += 1;
          cursor_.line_index = 0;
          continue;
        }
        RawRecord rec;
        rec.source = config_.source;
        rec.file_index = cursor_.file_index;
        rec.line_index = cursor_.line_index;
        rec.payload = std::move(line);
        batch.push_back(std::move(rec));
        cursor_.line_index += 1;
        cursor_.records_emitted += 1;
      }
    } catch (...) {
      // Leave the stream where it was: the caller may retry the same batch.
      close_file();
      cursor_ = before;
      throw;
    }
    return batch;
  }

  Checkpoint position() const override { return cursor_; }

 protected:
  // Number of files in the full enumeration.
  virtual std::size_t file_count() = 0;
  // Opens file `index` and discards its first `skip_lines` lines.
  virtual void open_file(std::size_t index, std::uint64_t skip_lines) = 0;
  // Reads the next line of the open file; false at end of file.
  virtual bool read_line(std::string& line) = 0;
  // Lists files and validates the location; called once, lazily.
  virtual void init() = 0;

  const SourceConfig& config() const { return config_; }

  void ensure_init() {
    if (initialized_) return;
    init();
    initialized_ = true;
    cursor_.source = config_.source;
    if (!config_.checkpoint_path.empty()) {
      if (auto cp = try_load_checkpoint(config_.checkpoint_path)) {
        if (cp->source != config_.source) {
          throw Error(Errc::CorruptCheckpoint,
                      "checkpoint source mismatch in " + config_.checkpoint_path);
        }
        cursor_ = *cp;
      }
    }
  }

 private:
  // Positions the cursor on an owned, open file with data pending; false when
  // the enumeration is exhausted.
  bool owned_file_ready() {
    while (true) {
      if (cursor_.file_index >= file_count()) return false;
      bool owned = (cursor_.file_index % static_cast<std::uint64_t>(partition_.count)) ==
                   static_cast<std::uint64_t>(partition_.index);
      if (!owned) {
        cursor_.file_index += 1;
        cursor_.line_index = 0;
        continue;
      }
      if (!file_open_) {
        open_file(static_cast<std::size_t>(cursor_.file_index), cursor_.line_index);
        file_open_ = true;
      }
      return true;
    }
  }

  void close_file() {
    if (file_open_) {
      close_file_impl();
      file_open_ = false;
    }
  }

  virtual void close_file_impl() = 0;

  SourceConfig config_;
  StreamPartition partition_;
  Checkpoint cursor_;
  bool initialized_ = false;
  bool file_open_ = false;
};

class DirectoryStream final : public CursorStream {
 public:
  using CursorStream::CursorStream;

 protected:
  void init() override {
    fs::path root(config().location);
    std::error_code ec;
    if (!fs::is_directory(root, ec)) {
      throw Error(Errc::LocationUnreadable,
                  "not a readable directory: " + config().location);
    }
    for (const auto& entry : fs::directory_iterator(root, ec)) {
      if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
        files_.push_back(entry.path());
      }
    }
    if (ec) {
      throw Error(Errc::LocationUnreadable,
                  "cannot list directory: " + config().location);
    }
    std::sort(files_.begin(), files_.end(),
              [](const fs::path& a, const fs::path& b) {
                return a.filename().string() < b.filename().string();
              });
  }

  std::size_t file_count() override { return files_.size(); }

  void open_file(std::size_t index, std::uint64_t skip_lines) override {
    stream_.open(files_[index], std::ios::binary);
    if (!stream_) {
      throw Error(Errc::IoFailure, "cannot open " + files_[index].string());
    }
    std::string discard;
    for (std::uint64_t i = 0; i < skip_lines; ++i) {
      if (!std::getline(stream_, discard)) break;
    }
    if (stream_.bad()) {
      throw Error(Errc::IoFailure, "read error in " + files_[index].string());
    }
  }

  bool read_line(std::string& line) override {
    if (!std::getline(stream_, line)) {
      if (stream_.bad()) {
        throw Error(Errc::IoFailure, "read error in source file");
      }
      return false;
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  void close_file_impl() override {
    stream_.close();
    stream_.clear();
  }

 private:
  std::vector<fs::path> files_;
  std::ifstream stream_;
};

// Splits "http://host[:port]/prefix" into client origin and path prefix.
struct HttpLocation {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix, "" or "/..." with no trailing slash
};

HttpLocation parse_http_location(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(Errc::LocationUnreadable, "not a URL: " + url);
  }
  std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http") {
    throw Error(Errc::LocationUnreadable,
                "unsupported URL scheme \"" + scheme + "\" (only http is supported)");
  }
  auto path_start = url.find('/', scheme_end + 3);
  HttpLocation loc;
  if (path_start == std::string::npos) {
    loc.origin = url;
  } else {
    loc.origin = url.substr(0, path_start);
    loc.prefix = url.substr(path_start);
    while (!loc.prefix.empty() && loc.prefix.back() == '/') loc.prefix.pop_back();
  }
  return loc;
}

class HttpStream final : public CursorStream {
 public:
  using CursorStream::CursorStream;

 protected:
  void init() override {
    location_ = parse_http_location(config().location);
    client_ = std::make_unique<httplib::Client>(location_.origin);
    client_->set_connection_timeout(10, 0);
    client_->set_read_timeout(60, 0);

    auto res = get_with_retry(location_.prefix + "/index.json", /*range=*/nullptr);
    json doc = json::parse(res, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("files") ||
        !doc["files"].is_array()) {
      throw Error(Errc::LocationUnreadable,
                  "malformed index.json at " + config().location);
    }
    for (const auto& f : doc["files"]) {
      if (f.is_string()) {
        files_.push_back(f.get<std::string>());
      } else if (f.is_object() && f.contains("name") && f["name"].is_string()) {
        files_.push_back(f["name"].get<std::string>());
      } else {
        throw Error(Errc::LocationUnreadable,
                    "malformed file entry in index.json at " + config().location);
      }
    }
    std::sort(files_.begin(), files_.end());
  }

  std::size_t file_count() override { return files_.size(); }

  void open_file(std::size_t index, std::uint64_t skip_lines) override {
    file_path_ = location_.prefix + "/" + files_[index];
    byte_offset_ = 0;
    buffer_.clear();
    buffer_pos_ = 0;
    at_eof_ = false;
    file_size_ = fetch_content_length(file_path_);
    // Resuming mid-file costs a re-download of the prefix; acceptable because
    // resume happens once per run, not per batch.
    std::string discard;
    for (std::uint64_t i = 0; i < skip_lines; ++i) {
      if (!read_line(discard)) break;
    }
  }

  bool read_line(std::string& line) override {
    while (true) {
      auto nl = buffer_.find('\n', buffer_pos_);
      if (nl != std::string::npos) {
        line.assign(buffer_, buffer_pos_, nl - buffer_pos_);
        buffer_pos_ = nl + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
      }
      if (at_eof_) {
        if (buffer_pos_ < buffer_.size()) {  // final line without newline
          line.assign(buffer_, buffer_pos_, buffer_.size() - buffer_pos_);
          buffer_pos_ = buffer_.size();
          if (!line.empty() && line.back() == '\r') line.pop_back();
          return true;
        }
        return false;
      }
      refill();
    }
  }

  void close_file_impl() override {
    buffer_.clear();
    buffer_pos_ = 0;
    at_eof_ = true;
  }

 private:
  static constexpr std::size_t kChunk = 1 << 20;

  void refill() {
    // Drop consumed bytes before growing the buffer.
    if (buffer_pos_ > 0) {
      buffer_.erase(0, buffer_pos_);
      buffer_pos_ = 0;
    }
    // Clamp the range end when the file size is known: strict servers answer
    // 416 to a last-byte-pos beyond EOF instead of clamping it themselves.
    std::uint64_t end = byte_offset_ + kChunk - 1;
    if (file_size_) {
      if (byte_offset_ >= *file_size_) {
        at_eof_ = true;
        return;
      }
      end = std::min<std::uint64_t>(end, *file_size_ - 1);
    }
    std::pair<std::uint64_t, std::uint64_t> range{byte_offset_, end};
    std::string body = get_with_retry(file_path_, &range);
    if (body.empty()) {
      at_eof_ = true;
      return;
    }
    buffer_ += body;
    byte_offset_ += body.size();
    if (body.size() < end - range.first + 1) at_eof_ = true;
    if (file_size_ && byte_offset_ >= *file_size_) at_eof_ = true;
  }

  // Content length via HEAD with the same retry policy as GETs; nullopt when
  // the server does not support HEAD or omits the header, in which case ranged
  // reads fall back to asking for fixed-size chunks.
  std::optional<std::uint64_t> fetch_content_length(const std::string& path) {
    const int max_attempts = std::max(1, config().http_max_attempts);
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
      if (attempt > 0) {
        double delay = config().http_base_delay_s * std::pow(2.0, attempt - 1);
        std::this_thread::sleep_for(std::chrono::duration<double>(delay));
      }
      auto res = client_->Head(path);
      if (!res || res->status >= 500) continue;
      if (res->status != 200) return std::nullopt;
      if (!res->has_header("Content-Length")) return std::nullopt;
      errno = 0;
      const std::string value = res->get_header_value("Content-Length");
      char* end = nullptr;
      const unsigned long long n = std::strtoull(value.c_str(), &end, 10);
      if (errno != 0 || end == value.c_str() || *end != '\0') return std::nullopt;
      return static_cast<std::uint64_t>(n);
    }
    return std::nullopt;
  }

  // GET with exponential backoff on connect errors and 5xx. A 416 on a ranged
  // request signals end of file and returns "". 4xx means the location is
  // gone; that is not retryable.
  std::string get_with_retry(const std::string& path,
                             const std::pair<std::uint64_t, std::uint64_t>* range) {
    const int max_attempts = std::max(1, config().http_max_attempts);
    std::string last_error;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
      if (attempt > 0) {
        double delay = config().http_base_delay_s * std::pow(2.0, attempt - 1);
        std::this_thread::sleep_for(std::chrono::duration<double>(delay));
      }
      httplib::Headers headers;
      if (range) {
        headers.emplace("Range", "bytes=" + std::to_string(range->first) + "-" +
                                     std::to_string(range->second));
      }
      auto res = client_->Get(path, headers);
      if (!res) {
        last_error = "connection failure (" + httplib::to_string(res.error()) + ")";
        continue;
      }
      if (res->status == 416) return "";
      if (res->status >= 500) {
        last_error = "server error " + std::to_string(res->status);
        continue;
      }
      if (res->status == 200 && range) {
        // Server ignored the Range header and sent the whole file.
        if (range->first >= res->body.size()) return "";
        return res->body.substr(range->first,
                                range->second - range->first + 1);
      }
      if (res->status == 200 || res->status == 206) return res->body;
      throw Error(Errc::LocationUnreadable,
                  "HTTP " + std::to_string(res->status) + " for " +
                      location_.origin + path);
    }
    throw Error(Errc::IoFailure, "HTTP request failed after " +
                                     std::to_string(max_attempts) +
                                     " attempts: " + last_error);
  }

  HttpLocation location_;
  std::unique_ptr<httplib::Client> client_;
  std::vector<std::string> files_;
  std::string file_path_;
  std::uint64_t byte_offset_ = 0;
  std::optional<std::uint64_t> file_size_;
  std::string buffer_;
  std::size_t buffer_pos_ = 0;
  bool at_eof_ = false;
};

}  // namespace

std::unique_ptr<RecordStream> open_stream(const SourceConfig& config,
                                          const StreamPartition& partition) {
  if (config.location.rfind("http://", 0) == 0 ||
      config.location.rfind("https://", 0) == 0) {
    return std::make_unique<HttpStream>(config, partition);
  }
  return std::make_unique<DirectoryStream>(config, partition);
}

void store_checkpoint(const fs::path& path, const Checkpoint& cp) {
  json doc = json::object();
  doc["file_index"] = cp.file_index;
  doc["line_index"] = cp.line_index;
  doc["records_emitted"] = cp.records_emitted;
  doc["source"] = std::string(source_tag(cp.source));
  write_file_atomic(path, canonical_dump(doc) + "\n");
}

std::optional<Checkpoint> try_load_checkpoint(const fs::path& path) {
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  std::string content;
  try {
    content = read_file(path);
  } catch (const Error&) {
    throw Error(Errc::CorruptCheckpoint, "cannot read checkpoint " + path.string());
  }
  json doc = json::parse(content, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error(Errc::CorruptCheckpoint, "checkpoint is not valid JSON: " + path.string());
  }
  auto require_u64 = [&](const char* key) -> std::uint64_t {
    auto it = doc.find(key);
    bool ok = it != doc.end() &&
              (it->is_number_unsigned() ||
               (it->is_number_integer() && it->get<std::int64_t>() >= 0));
    if (!ok) {
      throw Error(Errc::CorruptCheckpoint, std::string("checkpoint field \"") +
                                               key + "\" invalid in " + path.string());
    }
    return it->get<std::uint64_t>();
  };
  Checkpoint cp;
  cp.file_index = require_u64("file_index");
  cp.line_index = require_u64("line_index");
  cp.records_emitted = require_u64("records_emitted");
  if (!doc.contains("source") || !doc["source"].is_string()) {
    throw Error(Errc::CorruptCheckpoint, "checkpoint missing source in " + path.string());
  }
  auto src = source_from_tag(doc["source"].get<std::string>());
  if (!src) {
    throw Error(Errc::CorruptCheckpoint, "checkpoint has unknown source in " + path.string());
  }
  cp.source = *src;
  return cp;
}

}  // namespace trajforge
