// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <atomic>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "support/testutil.hpp"
#include "trajforge/errors.hpp"
#include "trajforge/ingest.hpp"
#include "trajforge/jsonl.hpp"

using namespace trajforge;

namespace {

void write_lines(const std::filesystem::path& path,
                 const std::vector<std::string>& lines) {
  std::string content;
  for (const std::string& l : lines) {
    content += l;
    content += '\n';
  }
  write_file_atomic(path, content);
}

SourceConfig dir_config(const std::filesystem::path& dir, int batch = 1000) {
  SourceConfig cfg;
  cfg.source = SourceId::MaterialsProject;
  cfg.location = dir.string();
  cfg.batch_size = batch;
  return cfg;
}

std::vector<RawRecord> drain(RecordStream& stream, std::size_t batch = 64) {
  std::vector<RawRecord> all;
  while (true) {
    auto got = stream.next_batch(batch);
    if (got.empty()) break;
    for (auto& r : got) all.push_back(std::move(r));
  }
  return all;
}

}  // namespace

TEST_CASE("directory stream reads files in name order") {
  testutil::TempDir dir;
  write_lines(dir / "b.jsonl", {"{\"n\":3}", "{\"n\":4}"});
  write_lines(dir / "a.jsonl", {"{\"n\":1}", "{\"n\":2}"});
  write_lines(dir / "notes.txt", {"ignored"});  // non-.jsonl files are skipped

  auto stream = open_stream(dir_config(dir.path()));
  const auto records = drain(*stream);
  REQUIRE(records.size() == 4);
  CHECK(records[0].payload == "{\"n\":1}");  // a.jsonl first
  CHECK(records[0].file_index == 0);
  CHECK(records[0].line_index == 0);
  CHECK(records[1].payload == "{\"n\":2}");
  CHECK(records[2].payload == "{\"n\":3}");  // then b.jsonl
  CHECK(records[2].file_index == 1);
  CHECK(records[2].line_index == 0);
  CHECK(records[3].line_index == 1);
  CHECK(records[0].source == SourceId::MaterialsProject);
}

TEST_CASE("batching splits five records as [3, 2]") {
  testutil::TempDir dir;
  write_lines(dir / "data.jsonl", {"1", "2", "3", "4", "5"});
  auto stream = open_stream(dir_config(dir.path()));
  CHECK(stream->next_batch(3).size() == 3);
  CHECK(stream->next_batch(3).size() == 2);
  CHECK(stream->next_batch(3).empty());
  CHECK(stream->next_batch(3).empty());  // stays exhausted
}

TEST_CASE("position tracks the next unread record") {
  testutil::TempDir dir;
  write_lines(dir / "data.jsonl", {"1", "2", "3"});
  auto stream = open_stream(dir_config(dir.path()));
  Checkpoint cp = stream->position();
  CHECK(cp.file_index == 0);
  CHECK(cp.line_index == 0);
  CHECK(cp.records_emitted == 0);
  stream->next_batch(2);
  cp = stream->position();
  CHECK(cp.file_index == 0);
  CHECK(cp.line_index == 2);
  CHECK(cp.records_emitted == 2);
  CHECK(cp.source == SourceId::MaterialsProject);
}

TEST_CASE("checkpoint at line 10 of an 11-line file yields one record") {
  testutil::TempDir dir;
  std::vector<std::string> lines;
  for (int i = 0; i < 11; ++i) lines.push_back("{\"i\":" + std::to_string(i) + "}");
  write_lines(dir / "data.jsonl", lines);

  const auto cp_path = dir / "cp.json";
  Checkpoint cp;
  cp.source = SourceId::MaterialsProject;
  cp.file_index = 0;
  cp.line_index = 10;
  cp.records_emitted = 10;
  store_checkpoint(cp_path, cp);

  SourceConfig cfg = dir_config(dir.path());
  cfg.checkpoint_path = cp_path.string();
  auto stream = open_stream(cfg);
  const auto records = drain(*stream);
  REQUIRE(records.size() == 1);
  CHECK(records[0].payload == "{\"i\":10}");
  CHECK(records[0].line_index == 10);
  CHECK(stream->position().records_emitted == 11);
}

TEST_CASE("checkpoint round trip and failure modes") {
  testutil::TempDir dir;
  const auto path = dir / "cp.json";
  CHECK_FALSE(try_load_checkpoint(path).has_value());

  Checkpoint cp;
  cp.source = SourceId::OQMD;
  cp.file_index = 3;
  cp.line_index = 77;
  cp.records_emitted = 1234;
  store_checkpoint(path, cp);
  const auto back = try_load_checkpoint(path);
  REQUIRE(back.has_value());
  CHECK(back->source == SourceId::OQMD);
  CHECK(back->file_index == 3);
  CHECK(back->line_index == 77);
  CHECK(back->records_emitted == 1234);

  write_file_atomic(path, "not json at all");
  CHECK_THROWS_AS(try_load_checkpoint(path), Error);
  write_file_atomic(path, "{\"file_index\":0}");  // incomplete
  CHECK_THROWS_AS(try_load_checkpoint(path), Error);
}

TEST_CASE("checkpoint source mismatch is rejected at open") {
  testutil::TempDir dir;
  write_lines(dir / "data.jsonl", {"1"});
  const auto cp_path = dir / "cp.json";
  Checkpoint cp;
  cp.source = SourceId::Alexandria;  // config says mp
  store_checkpoint(cp_path, cp);
  SourceConfig cfg = dir_config(dir.path());
  cfg.checkpoint_path = cp_path.string();
  auto stream = open_stream(cfg);
  CHECK_THROWS_AS(stream->next_batch(1), Error);
}

TEST_CASE("missing location throws LocationUnreadable") {
  testutil::TempDir dir;
  SourceConfig cfg = dir_config(dir / "nope");
  auto stream = open_stream(cfg);
  try {
    stream->next_batch(1);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::LocationUnreadable);
  }
}

TEST_CASE("stream partitions cover disjoint files with stable coordinates") {
  testutil::TempDir dir;
  write_lines(dir / "f0.jsonl", {"a0", "a1"});
  write_lines(dir / "f1.jsonl", {"b0"});
  write_lines(dir / "f2.jsonl", {"c0", "c1"});
  write_lines(dir / "f3.jsonl", {"d0"});

  auto s0 = open_stream(dir_config(dir.path()), StreamPartition{0, 2});
  auto s1 = open_stream(dir_config(dir.path()), StreamPartition{1, 2});
  const auto r0 = drain(*s0);
  const auto r1 = drain(*s1);

  REQUIRE(r0.size() == 4);  // files 0 and 2
  CHECK(r0[0].payload == "a0");
  CHECK(r0[2].payload == "c0");
  CHECK(r0[2].file_index == 2);  // coordinates refer to the full enumeration
  REQUIRE(r1.size() == 2);  // files 1 and 3
  CHECK(r1[0].payload == "b0");
  CHECK(r1[0].file_index == 1);
  CHECK(r1[1].payload == "d0");
  CHECK(r1[1].file_index == 3);

  auto full = drain(*open_stream(dir_config(dir.path())));
  CHECK(full.size() == r0.size() + r1.size());
}

TEST_CASE("http stream serves the same records as a directory") {
  const std::string file_a = "{\"n\":1}\n{\"n\":2}\n";
  const std::string file_b = "{\"n\":3}\n";

  httplib::Server server;
  std::atomic<int> failures_left{1};
  server.Get("/dump/index.json", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"files":["b.jsonl","a.jsonl"]})", "application/json");
  });
  server.Get("/dump/a.jsonl",
             [&](const httplib::Request&, httplib::Response& res) {
               res.set_content(file_a, "application/jsonl");
             });
  server.Get("/dump/b.jsonl",
             [&](const httplib::Request&, httplib::Response& res) {
               // First hit fails so the retry path is exercised.
               if (failures_left.fetch_sub(1) > 0) {
                 res.status = 503;
                 return;
               }
               res.set_content(file_b, "application/jsonl");
             });

  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  SourceConfig cfg;
  cfg.source = SourceId::OQMD;
  cfg.location = "http://127.0.0.1:" + std::to_string(port) + "/dump";
  cfg.http_base_delay_s = 0.0;  // no backoff sleeps in tests
  auto stream = open_stream(cfg);
  const auto records = drain(*stream);

  server.stop();
  server_thread.join();

  REQUIRE(records.size() == 3);
  CHECK(records[0].payload == "{\"n\":1}");  // a.jsonl sorts first
  CHECK(records[0].file_index == 0);
  CHECK(records[1].payload == "{\"n\":2}");
  CHECK(records[2].payload == "{\"n\":3}");
  CHECK(records[2].file_index == 1);
  CHECK(records[2].source == SourceId::OQMD);
}

TEST_CASE("http stream rejects a bad scheme and a missing index") {
  SourceConfig cfg;
  cfg.location = "ftp://example.com/dump";
  auto stream = open_stream(cfg);
  CHECK_THROWS_AS(stream->next_batch(1), Error);
}
