// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajforge/errors.hpp"
#include "trajforge/export.hpp"
#include "trajforge/pipeline.hpp"
#include "support/synth.hpp"
#include "support/testutil.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace trajforge;

namespace {

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(static_cast<bool>(in), "cannot open " << path.string());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

std::vector<std::string> lines_of(const fs::path& path) {
  std::vector<std::string> lines;
  std::ifstream in(path);
  REQUIRE_MESSAGE(static_cast<bool>(in), "cannot open " << path.string());
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// Runs fn, which must throw ConfigInvalid, and returns the message.
template <typename Fn>
std::string config_error(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ConfigInvalid);
    return e.what();
  }
  FAIL("expected a ConfigInvalid error");
  return {};
}

// Saves and restores the environment variables validate_config consults.
class EnvGuard {
 public:
  EnvGuard() {
    for (const char* name : kNames) {
      const char* value = std::getenv(name);
      saved_.emplace_back(name, value ? std::optional<std::string>(value)
                                      : std::nullopt);
      ::unsetenv(name);
    }
  }
  ~EnvGuard() {
    for (const auto& [name, value] : saved_) {
      if (value) {
        ::setenv(name.c_str(), value->c_str(), 1);
      } else {
        ::unsetenv(name.c_str());
      }
    }
  }
  EnvGuard(const EnvGuard&) = delete;
  EnvGuard& operator=(const EnvGuard&) = delete;

 private:
  static constexpr const char* kNames[] = {"TRAJFORGE_OUT", "SOURCE_DATE_EPOCH",
                                           "TRAJFORGE_GIT_REF"};
  std::vector<std::pair<std::string, std::optional<std::string>>> saved_;
};

// Nudges the first atom's x coordinate in one relaxation step so that frames
// of the same composition still get distinct positions (keeps the embedding
// stage away from degenerate all-identical descriptor rows).
void nudge(json& task, const char* steps_key, std::size_t step, double dx) {
  task[steps_key][step]["structure"]["positions"][0][0] =
      task[steps_key][step]["structure"]["positions"][0][0].get<double>() + dx;
}

// Writes the miniature raw corpus used by the end-to-end cases:
//   mp/tasks.jsonl         6 lines (5 tasks + 1 planted non-JSON line)
//   alexandria/entries.jsonl  3 entries
//   oqmd/entries.jsonl        2 entries
// Filter outcome: mp-4 dropped for non-convergence (2 frames); everything
// else survives. 11 records -> 20 frames -> 18 frames in 9 trajectories.
std::vector<SourceConfig> write_corpus(const fs::path& root) {
  const fs::path mp_dir = root / "mp";
  const fs::path alex_dir = root / "alexandria";
  const fs::path oqmd_dir = root / "oqmd";
  fs::create_directories(mp_dir);
  fs::create_directories(alex_dir);
  fs::create_directories(oqmd_dir);

  {
    std::ofstream out(mp_dir / "tasks.jsonl");
    json t1 = synth::mp_task_json("mp-1", "PBE", false,
                                  {{{"Fe", "O"}, -9.50}, {{"Fe", "O"}, -9.51}});
    nudge(t1, "ionic_steps", 1, 0.25);
    out << t1.dump() << '\n';
    json t2 = synth::mp_task_json("mp-2", "PBE", false,
                                  {{{"Fe", "Fe"}, -8.0}, {{"Fe", "Fe"}, -8.005}});
    nudge(t2, "ionic_steps", 1, 0.125);
    out << t2.dump() << '\n';
    out << synth::mp_task_json("mp-3", "PBE", false, {{{"O", "O"}, -4.0}}).dump()
        << '\n';
    out << "{this line is not JSON\n";
    out << synth::mp_task_json("mp-4", "PBE", false,
                               {{{"Fe", "O"}, -9.2}, {{"Fe", "O"}, -9.5}})
               .dump()
        << '\n';
    json t5 = synth::mp_task_json(
        "mp-5", "r2SCAN", false,
        {{{"Fe", "O", "O"}, -12.0}, {{"Fe", "O", "O"}, -12.01}});
    nudge(t5, "ionic_steps", 1, 0.5);
    out << t5.dump() << '\n';
  }
  {
    std::ofstream out(alex_dir / "entries.jsonl");
    json e1 = synth::alex_entry_json("agm-1", "PBE",
                                     {{{"Fe", "O"}, -9.1}, {{"Fe", "O"}, -9.11}});
    nudge(e1, "steps", 0, 0.375);
    out << e1.dump() << '\n';
    out << synth::alex_entry_json("agm-2", "PBESol",
                                  {{{"Cu"}, -3.0}, {{"Cu"}, -3.01}})
               .dump()
        << '\n';
    out << synth::alex_entry_json(
               "agm-3", "SCAN",
               {{{"Fe", "Fe", "O"}, -15.0},
                {{"Fe", "Fe", "O"}, -14.9},
                {{"Fe", "Fe", "O"}, -14.905}})
               .dump()
        << '\n';
  }
  {
    std::ofstream out(oqmd_dir / "entries.jsonl");
    out << synth::oqmd_entry_json(
               "oq-1",
               {{"relaxation", {"Fe", "O"}, -6.0, -6.01, true, true, 0.0}})
               .dump()
        << '\n';
    out << synth::oqmd_entry_json(
               "oq-2", {{"relaxation", {"O"}, -2.0, -2.005, true, true, 0.0}})
               .dump()
        << '\n';
  }

  std::vector<SourceConfig> sources(3);
  sources[0].source = SourceId::MaterialsProject;
  sources[0].location = mp_dir.string();
  sources[1].source = SourceId::Alexandria;
  sources[1].location = alex_dir.string();
  sources[2].source = SourceId::OQMD;
  sources[2].location = oqmd_dir.string();
  for (SourceConfig& src : sources) src.batch_size = 4;
  return sources;
}

PipelineConfig corpus_config(const fs::path& raw_root, const fs::path& out_dir) {
  PipelineConfig cfg;
  cfg.sources = write_corpus(raw_root);
  cfg.out_dir = out_dir.string();
  cfg.workers = 1;
  cfg.seed = 11;
  cfg.max_frames_per_shard = 4;
  cfg.sort_chunk_frames = 8;
  cfg.max_reject_rate = 0.2;
  cfg.stages = {Stage::Fetch, Stage::Transform, Stage::Filter, Stage::Export,
                Stage::Split, Stage::Stats,     Stage::Pes};
  cfg.created_at = "1970-01-01T00:00:00Z";
  cfg.pipeline_git_ref = "test";
  cfg.pes.elements = {"Fe", "O"};
  cfg.pes.soap.n_max = 2;
  cfg.pes.soap.l_max = 1;
  cfg.pes.soap.r_cut = 3.0;
  cfg.pes.soap.sigma = 0.5;
  cfg.pes.functional = Functional::PBE;
  cfg.pes.refs_path = (raw_root / "refs.json").string();
  {
    std::ofstream out(cfg.pes.refs_path);
    out << R"({"PBE":{"Fe":-4.0,"O":-2.0}})" << '\n';
  }
  return cfg;
}

// Bytes of every determinism-relevant output: the manifest, the exported
// shards, splits, stats, pes, and the reject stream. run_report.json and the
// work/ scratch tree stay out of scope.
std::map<std::string, std::string> snapshot_outputs(const fs::path& out) {
  std::map<std::string, std::string> bytes;
  auto add_tree = [&](const fs::path& dir) {
    if (!fs::exists(dir)) return;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      bytes[fs::relative(entry.path(), out).generic_string()] =
          slurp(entry.path());
    }
  };
  bytes["manifest.json"] = slurp(out / "manifest.json");
  bytes["work/rejects.jsonl"] = slurp(out / "work" / "rejects.jsonl");
  for (const char* functional : {"PBE", "PBESol", "SCAN", "r2SCAN"}) {
    add_tree(out / functional);
  }
  add_tree(out / "splits");
  add_tree(out / "stats");
  add_tree(out / "pes");
  return bytes;
}

const StageReport& stage_report(const RunReport& report, const char* name) {
  for (const StageReport& sr : report.stages) {
    if (sr.stage == name) return sr;
  }
  REQUIRE_MESSAGE(false, "no stage report for " << name);
  static StageReport dummy;
  return dummy;
}

}  // namespace

TEST_CASE("stage names round trip") {
  const std::pair<Stage, std::string> expected[] = {
      {Stage::Fetch, "fetch"},   {Stage::Transform, "transform"},
      {Stage::Filter, "filter"}, {Stage::Export, "export"},
      {Stage::Split, "split"},   {Stage::Stats, "stats"},
      {Stage::Pes, "pes"},
  };
  for (const auto& [stage, name] : expected) {
    CHECK(stage_name(stage) == name);
    REQUIRE(stage_from_name(name).has_value());
    CHECK(*stage_from_name(name) == stage);
  }
  CHECK_FALSE(stage_from_name("warp").has_value());
  CHECK_FALSE(stage_from_name("").has_value());
}

TEST_CASE("config json round trip is the identity") {
  PipelineConfig cfg;
  SourceConfig src;
  src.source = SourceId::Alexandria;
  src.location = "/data/alex";
  src.batch_size = 64;
  src.checkpoint_path = "/ckpt/alex.json";
  src.http_max_attempts = 3;
  src.http_base_delay_s = 0.25;
  cfg.sources = {src};
  cfg.filter.energy_convergence_threshold = 0.05;
  cfg.filter.final_force_threshold = 0.3;
  cfg.out_dir = "/tmp/run";
  cfg.workers = 6;
  cfg.seed = 99;
  cfg.max_frames_per_shard = 1234;
  cfg.sort_chunk_frames = 77;
  cfg.max_reject_rate = 0.125;
  cfg.stages = {Stage::Fetch, Stage::Transform, Stage::Filter,
                Stage::Export, Stage::Split,    Stage::Pes};
  cfg.split.test_fraction = 0.25;
  cfg.split.target_size = 40;
  cfg.split.source_balance = {{SourceId::MaterialsProject, 0.5},
                              {SourceId::OQMD, 0.5}};
  cfg.stats.length_histogram_bins = 12;
  cfg.stats.profile_bins = 30;
  cfg.pes.elements = {"Fe", "O"};
  cfg.pes.functional = Functional::SCAN;
  cfg.pes.n_components = 3;
  cfg.pes.overlay_count = 9;
  cfg.pes.refs_path = "/refs.json";
  cfg.pes.soap.n_max = 5;
  cfg.pes.soap.l_max = 4;
  cfg.pes.soap.r_cut = 6.5;
  cfg.pes.soap.sigma = 0.4;
  cfg.created_at = "2021-06-01T00:00:00Z";
  cfg.pipeline_git_ref = "abc123";

  const json doc = config_to_json(cfg);
  const PipelineConfig parsed = config_from_json(doc);
  CHECK(config_to_json(parsed) == doc);

  CHECK(parsed.sources.size() == 1);
  CHECK(parsed.sources[0].source == SourceId::Alexandria);
  CHECK(parsed.sources[0].batch_size == 64);
  CHECK(parsed.workers == 6);
  CHECK(parsed.stages == cfg.stages);
  CHECK(parsed.split.target_size == cfg.split.target_size);
  CHECK(parsed.split.source_balance == cfg.split.source_balance);
  CHECK(parsed.pes.functional == Functional::SCAN);
  CHECK(parsed.pes.soap.l_max == 4);
  CHECK(parsed.created_at == "2021-06-01T00:00:00Z");
}

TEST_CASE("config defaults come from an empty object") {
  const PipelineConfig cfg = config_from_json(json::object());
  CHECK(cfg.sources.empty());
  CHECK(cfg.out_dir == "out");
  CHECK(cfg.workers == 1);
  CHECK(cfg.seed == 0);
  CHECK(cfg.max_frames_per_shard == 100000);
  CHECK(cfg.sort_chunk_frames == 50000);
  CHECK(cfg.max_reject_rate == doctest::Approx(0.01));
  const std::vector<Stage> default_stages = {Stage::Fetch,  Stage::Transform,
                                             Stage::Filter, Stage::Export,
                                             Stage::Split,  Stage::Stats};
  CHECK(cfg.stages == default_stages);
  CHECK(cfg.split.test_fraction == doctest::Approx(0.2));
  CHECK_FALSE(cfg.split.target_size.has_value());
  CHECK(cfg.stats.length_histogram_bins == 10);
  CHECK(cfg.stats.profile_bins == 20);
  CHECK(cfg.pes.elements.empty());
  CHECK(cfg.created_at.empty());
  CHECK(cfg.pipeline_git_ref.empty());
}

TEST_CASE("strict parsing names the offending field path") {
  const std::pair<json, std::string> cases[] = {
      {json{{"bogus", 1}}, "unknown field \"bogus\""},
      {json{{"stats", json{{"bins", 5}}}}, "stats: unknown field \"bins\""},
      {json{{"pes", json{{"soap", json{{"cut", 1.0}}}}}},
       "pes.soap: unknown field \"cut\""},
      {json{{"sources", json::array({json{{"source", "mp"}}})}},
       "sources[0].location must be non-empty"},
      {json{{"sources", json::array({json{{"source", "xx"}, {"location", "d"}}})}},
       "sources[0].source has unknown tag"},
      {json{{"sources",
             json::array({json{{"source", "mp"}, {"location", "d"},
                               {"batch_size", 0}}})}},
       "sources[0].batch_size must be >= 1"},
      {json{{"workers", 0}}, "workers must be >= 1"},
      {json{{"max_reject_rate", 1.5}}, "max_reject_rate must lie in [0, 1]"},
      {json{{"max_frames_per_shard", 0}}, "max_frames_per_shard must be >= 1"},
      {json{{"split", json{{"test_fraction", 1.0}}}},
       "split.test_fraction must lie strictly between 0 and 1"},
      {json{{"split", json{{"target_size", 0}}}}, "split.target_size must be >= 1"},
      {json{{"split", json{{"source_balance", json{{"nope", 0.5}}}}}},
       "split.source_balance has unknown source \"nope\""},
      {json{{"stages", json::array({"fetch", "fetch"})}},
       "stage \"fetch\" appears twice"},
      {json{{"stages", json::array({"warp"})}}, "unknown stage \"warp\""},
      {json{{"stats", json{{"profile_bins", 0}}}}, "stats.profile_bins must be >= 1"},
      {json{{"pes", json{{"soap", json{{"sigma", 0.0}}}}}},
       "pes.soap.sigma must be > 0"},
      {json{{"pes", json{{"n_components", 0}}}}, "pes.n_components must be >= 1"},
      {json{{"pes", json{{"functional", "HSE06"}}}},
       "pes.functional has unknown value \"HSE06\""},
      {json{{"workers", "two"}}, "workers must be an integer"},
      {json{{"seed", -1}}, "seed must be a non-negative integer"},
  };
  for (const auto& [doc, needle] : cases) {
    CAPTURE(doc.dump());
    const std::string message = config_error([&] { (void)config_from_json(doc); });
    CHECK_MESSAGE(contains(message, needle),
                  "\"" << message << "\" lacks \"" << needle << "\"");
  }

  const std::string message =
      config_error([] { (void)config_from_json(json::array()); });
  CHECK(contains(message, "document must be a JSON object"));
}

TEST_CASE("fingerprint ignores workers and nothing else") {
  PipelineConfig cfg;
  cfg.seed = 5;
  const std::string base = config_fingerprint(cfg);
  CHECK(base.size() == 64);

  PipelineConfig more_workers = cfg;
  more_workers.workers = 8;
  CHECK(config_fingerprint(more_workers) == base);

  PipelineConfig other_seed = cfg;
  other_seed.seed = 6;
  CHECK(config_fingerprint(other_seed) != base);

  PipelineConfig other_filter = cfg;
  other_filter.filter.final_force_threshold = 0.25;
  CHECK(config_fingerprint(other_filter) != base);

  PipelineConfig other_stages = cfg;
  other_stages.stages = {Stage::Fetch, Stage::Transform};
  CHECK(config_fingerprint(other_stages) != base);

  PipelineConfig other_out = cfg;
  other_out.out_dir = "elsewhere";
  CHECK(config_fingerprint(other_out) != base);
}

TEST_CASE("stage dependencies require an upstream schedule or marker") {
  testutil::TempDir tmp;
  PipelineConfig cfg;
  cfg.out_dir = (tmp.path() / "out").string();

  cfg.stages = {Stage::Transform};
  std::string message = config_error([&] { check_stage_dependencies(cfg); });
  CHECK(contains(message, "\"transform\" needs \"fetch\""));

  cfg.stages = {Stage::Fetch, Stage::Transform};
  CHECK_NOTHROW(check_stage_dependencies(cfg));

  cfg.stages = {Stage::Split};
  message = config_error([&] { check_stage_dependencies(cfg); });
  CHECK(contains(message, "\"split\" needs \"export\""));

  // A marker left by an earlier run satisfies the dependency.
  const fs::path state = fs::path(cfg.out_dir) / "work" / "state";
  fs::create_directories(state);
  std::ofstream(state / "export.done") << "{}\n";
  CHECK_NOTHROW(check_stage_dependencies(cfg));

  // Scheduling pes demands its own configuration on top of the upstream.
  cfg.stages = {Stage::Pes};
  message = config_error([&] { check_stage_dependencies(cfg); });
  CHECK(contains(message, "pes.elements must be non-empty"));
  cfg.pes.elements = {"Fe"};
  message = config_error([&] { check_stage_dependencies(cfg); });
  CHECK(contains(message, "pes.refs_path must be set"));
  cfg.pes.refs_path = "refs.json";
  CHECK_NOTHROW(check_stage_dependencies(cfg));

  cfg.stages = {Stage::Fetch, Stage::Fetch};
  message = config_error([&] { check_stage_dependencies(cfg); });
  CHECK(contains(message, "stage \"fetch\" appears twice"));
}

TEST_CASE("validate_config applies environment overrides") {
  testutil::TempDir tmp;
  EnvGuard guard;
  const fs::path path = tmp.path() / "config.json";

  auto write_config = [&](const json& doc) {
    std::ofstream out(path);
    out << doc.dump() << '\n';
  };

  write_config(json{{"out_dir", (tmp.path() / "from-file").string()},
                    {"stages", json::array({"fetch"})}});

  SUBCASE("values come from the file when the environment is clean") {
    ::setenv("SOURCE_DATE_EPOCH", "86400", 1);
    const PipelineConfig cfg = validate_config(path);
    CHECK(cfg.out_dir == (tmp.path() / "from-file").string());
    CHECK(cfg.created_at == "1970-01-02T00:00:00Z");
    CHECK(cfg.pipeline_git_ref == "unknown");
  }

  SUBCASE("TRAJFORGE_OUT and TRAJFORGE_GIT_REF override blanks") {
    ::setenv("TRAJFORGE_OUT", (tmp.path() / "from-env").string().c_str(), 1);
    ::setenv("TRAJFORGE_GIT_REF", "deadbeef", 1);
    ::setenv("SOURCE_DATE_EPOCH", "0", 1);
    const PipelineConfig cfg = validate_config(path);
    CHECK(cfg.out_dir == (tmp.path() / "from-env").string());
    CHECK(cfg.created_at == "1970-01-01T00:00:00Z");
    CHECK(cfg.pipeline_git_ref == "deadbeef");
  }

  SUBCASE("explicit stamps in the file beat the environment") {
    write_config(json{{"stages", json::array({"fetch"})},
                      {"created_at", "2020-02-02T02:02:02Z"},
                      {"pipeline_git_ref", "pinned"}});
    ::setenv("SOURCE_DATE_EPOCH", "86400", 1);
    ::setenv("TRAJFORGE_GIT_REF", "deadbeef", 1);
    const PipelineConfig cfg = validate_config(path);
    CHECK(cfg.created_at == "2020-02-02T02:02:02Z");
    CHECK(cfg.pipeline_git_ref == "pinned");
  }

  SUBCASE("a blank file yields the defaults") {
    std::ofstream(path) << "  \n\t\n";
    ::setenv("SOURCE_DATE_EPOCH", "946684800", 1);
    const PipelineConfig cfg = validate_config(path);
    CHECK(cfg.out_dir == "out");
    CHECK(cfg.created_at == "2000-01-01T00:00:00Z");
    CHECK(cfg.workers == 1);
  }

  SUBCASE("created_at falls back to the clock without SOURCE_DATE_EPOCH") {
    const PipelineConfig cfg = validate_config(path);
    CHECK(cfg.created_at.size() == 20);  // YYYY-MM-DDTHH:MM:SSZ
    CHECK(cfg.created_at.back() == 'Z');
  }

  SUBCASE("unreadable or malformed files are ConfigInvalid") {
    std::string message =
        config_error([&] { (void)validate_config(tmp.path() / "missing.json"); });
    CHECK(contains(message, "cannot read"));
    std::ofstream(path) << "{nope";
    message = config_error([&] { (void)validate_config(path); });
    CHECK(contains(message, "invalid JSON"));
  }

  SUBCASE("stage dependencies are enforced at validation time") {
    write_config(json{{"stages", json::array({"stats"})}});
    const std::string message =
        config_error([&] { (void)validate_config(path); });
    CHECK(contains(message, "\"stats\" needs \"export\""));
  }
}

TEST_CASE("pipeline runs end to end and honors resume markers") {
  testutil::TempDir tmp;
  PipelineConfig cfg = corpus_config(tmp.path() / "raw-src", tmp.path() / "out");
  const fs::path out = cfg.out_dir;

  const RunReport report = run_pipeline(cfg);

  REQUIRE(report.stages.size() == 7);
  for (const StageReport& sr : report.stages) {
    CAPTURE(sr.stage);
    CHECK_FALSE(sr.skipped);
  }

  CHECK(stage_report(report, "fetch").records_out == 11);
  CHECK(stage_report(report, "transform").records_in == 11);
  CHECK(stage_report(report, "transform").records_out == 20);
  CHECK(stage_report(report, "filter").records_in == 20);
  CHECK(stage_report(report, "filter").records_out == 18);
  CHECK(stage_report(report, "export").records_out == 18);
  CHECK(stage_report(report, "stats").records_in == 18);
  CHECK(stage_report(report, "stats").records_out == 9);
  CHECK(stage_report(report, "pes").records_in == 11);
  CHECK(stage_report(report, "pes").records_out == 11);

  CHECK(report.filter_stats.frames_in == 20);
  CHECK(report.filter_stats.frames_out == 18);
  CHECK(report.filter_stats.trajectories_dropped_convergence == 1);
  CHECK(report.filter_stats.frames_dropped_convergence == 2);
  CHECK(report.manifest_path == (out / "manifest.json").string());
  CHECK(report.rejects_path == (out / "work" / "rejects.jsonl").string());
  CHECK(report.transform_frames_per_second > 0.0);

  // One reject: the planted non-JSON line.
  CHECK(lines_of(out / "work" / "rejects.jsonl").size() == 1);

  // Manifest: 6 (functional, source) cells covering 9 trajectories and 18
  // frames, split into 7 shards by the 4-frame cap (5 PBE/mp frames -> 2).
  const Manifest manifest = read_manifest(out / "manifest.json");
  CHECK(manifest.created_at == "1970-01-01T00:00:00Z");
  CHECK(manifest.pipeline_git_ref == "test");
  CHECK(manifest.cells.size() == 6);
  CHECK(manifest.shards.size() == 7);
  std::uint64_t frames = 0;
  std::uint64_t trajectories = 0;
  for (const ManifestCell& cell : manifest.cells) {
    frames += cell.n_frames;
    trajectories += cell.n_trajectories;
  }
  CHECK(frames == 18);
  CHECK(trajectories == 9);
  for (const ManifestCell& cell : manifest.cells) {
    if (cell.functional == Functional::PBE &&
        cell.source == SourceId::MaterialsProject) {
      CHECK(cell.n_trajectories == 3);
      CHECK(cell.n_frames == 5);
    }
  }

  // Split: 9 trajectories, one 5-strong signature class gives the only test
  // slot at fraction 0.2; no target_size means no balanced draw.
  const std::vector<std::string> assignment =
      lines_of(out / "splits" / "assignment.jsonl");
  REQUIRE(assignment.size() == 9);
  int n_train = 0;
  int n_test = 0;
  std::set<std::string> ids;
  for (const std::string& line : assignment) {
    const json doc = json::parse(line);
    ids.insert(doc.at("trajectory_id").get<std::string>());
    if (doc.at("label") == "train") ++n_train;
    if (doc.at("label") == "test") ++n_test;
  }
  CHECK(n_train == 8);
  CHECK(n_test == 1);
  CHECK(ids.size() == 9);
  CHECK(fs::exists(out / "splits" / "summary.json"));
  CHECK_FALSE(fs::exists(out / "splits" / "balanced.jsonl"));

  // Stats and pes artifacts parse and carry the expected sizes.
  const json stats = json::parse(slurp(out / "stats" / "summary.json"));
  CHECK(stats.is_object());
  const json model = json::parse(slurp(out / "pes" / "model.json"));
  CHECK(model.at("n_points").get<std::uint64_t>() == 11);
  CHECK(model.at("input").get<std::string>() == "export/PBE");
  const std::string points = slurp(out / "pes" / "points.csv");
  CHECK(contains(points, "frame_id,trajectory_id,formation_energy_per_atom,pc1"));
  CHECK(fs::exists(out / "pes" / "trajectories.csv"));
  CHECK(fs::exists(out / "run_report.json"));

  for (const char* stage :
       {"fetch", "transform", "filter", "export", "split", "stats", "pes"}) {
    CHECK(fs::exists(out / "work" / "state" / (std::string(stage) + ".done")));
  }

  const std::map<std::string, std::string> before = snapshot_outputs(out);

  // A rerun under the same config skips every stage and rewrites nothing.
  const RunReport rerun = run_pipeline(cfg);
  REQUIRE(rerun.stages.size() == 7);
  for (const StageReport& sr : rerun.stages) {
    CAPTURE(sr.stage);
    CHECK(sr.skipped);
  }
  CHECK(stage_report(rerun, "fetch").records_in == 11);
  CHECK(stage_report(rerun, "transform").records_out == 20);
  CHECK(stage_report(rerun, "export").records_out == 18);
  CHECK(rerun.filter_stats.frames_out == 18);
  CHECK(rerun.manifest_path == report.manifest_path);
  CHECK(snapshot_outputs(out) == before);

  // Changing the seed stales every marker; fetch finds no new records behind
  // its checkpoint but downstream stages recompute from the staged corpus.
  cfg.seed = 12;
  const RunReport reseeded = run_pipeline(cfg);
  for (const StageReport& sr : reseeded.stages) {
    CAPTURE(sr.stage);
    CHECK_FALSE(sr.skipped);
  }
  CHECK(stage_report(reseeded, "fetch").records_out == 0);
  CHECK(stage_report(reseeded, "transform").records_in == 11);
  CHECK(stage_report(reseeded, "export").records_out == 18);
  CHECK(lines_of(out / "splits" / "assignment.jsonl").size() == 9);

  // Deleting one marker reruns that stage and only that stage.
  fs::remove(out / "work" / "state" / "stats.done");
  const RunReport partial = run_pipeline(cfg);
  for (const StageReport& sr : partial.stages) {
    CAPTURE(sr.stage);
    CHECK(sr.skipped == (sr.stage != "stats"));
  }
  CHECK(stage_report(partial, "stats").records_out == 9);
}

TEST_CASE("worker count changes no output byte") {
  testutil::TempDir tmp;
  PipelineConfig serial =
      corpus_config(tmp.path() / "raw-one", tmp.path() / "out-one");
  serial.workers = 1;
  PipelineConfig parallel =
      corpus_config(tmp.path() / "raw-four", tmp.path() / "out-four");
  parallel.workers = 4;

  run_pipeline(serial);
  run_pipeline(parallel);

  const auto one = snapshot_outputs(serial.out_dir);
  const auto four = snapshot_outputs(parallel.out_dir);
  REQUIRE(one.size() == four.size());
  for (const auto& [path, bytes] : one) {
    CAPTURE(path);
    REQUIRE(four.count(path) == 1);
    CHECK(bytes == four.at(path));
  }
}

TEST_CASE("transform aborts above the reject-rate ceiling") {
  testutil::TempDir tmp;
  const fs::path dir = tmp.path() / "mp";
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "tasks.jsonl");
    out << "{bad one\n";
    out << "{bad two\n";
    out << synth::mp_task_json("mp-ok", "PBE", false, {{{"Fe"}, -1.0}}).dump()
        << '\n';
  }
  PipelineConfig cfg;
  SourceConfig src;
  src.source = SourceId::MaterialsProject;
  src.location = dir.string();
  cfg.sources = {src};
  cfg.out_dir = (tmp.path() / "out").string();
  cfg.max_reject_rate = 0.0;
  cfg.stages = {Stage::Fetch, Stage::Transform};

  try {
    run_pipeline(cfg);
    FAIL("expected a StageFailure");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::StageFailure);
    CHECK(contains(e.what(), "transform: rejected 2 of 3"));
    CHECK(contains(e.what(), "max_reject_rate"));
  }

  // The ceiling is a share, not a count: at 0.7 the same corpus passes.
  cfg.max_reject_rate = 0.7;
  const RunReport report = run_pipeline(cfg);
  CHECK(stage_report(report, "transform").records_out == 1);
}

TEST_CASE("run report serializes every stage entry") {
  RunReport report;
  StageReport sr;
  sr.stage = "fetch";
  sr.wall_seconds = 1.5;
  sr.records_in = 10;
  sr.records_out = 10;
  sr.skipped = true;
  report.stages.push_back(sr);
  report.manifest_path = "/out/manifest.json";
  report.rejects_path = "/out/work/rejects.jsonl";
  report.transform_frames_per_second = 123.0;

  const json doc = run_report_to_json(report);
  CHECK(doc.at("manifest_path") == "/out/manifest.json");
  CHECK(doc.at("rejects_path") == "/out/work/rejects.jsonl");
  CHECK(doc.at("transform_frames_per_second") == 123.0);
  REQUIRE(doc.at("stages").size() == 1);
  const json& stage = doc.at("stages")[0];
  CHECK(stage.at("stage") == "fetch");
  CHECK(stage.at("records_in") == 10);
  CHECK(stage.at("records_out") == 10);
  CHECK(stage.at("skipped") == true);
  CHECK(stage.at("wall_seconds") == 1.5);
  CHECK(doc.contains("filter_stats"));
}
