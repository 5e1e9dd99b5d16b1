// SPDX-License-Identifier: Apache-2.0
//
// trajforge: DFT relaxation-trajectory curation pipeline.
//
//   trajforge run -c config.json            run every stage listed in the config
//   trajforge fetch|transform|filter|export|split|stats|pes -c config.json
//                                           run a single stage (upstream stages
//                                           must already be complete on disk)
//   trajforge pes --in export-dir --elements Fe,Cu --refs refs.json --out pes/
//                                           standalone PES map over an existing
//                                           export (no pipeline config needed)
//
// Exit codes: 0 success, 2 invalid configuration, 3 stage failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trajforge/errors.hpp"
#include "trajforge/export.hpp"
#include "trajforge/jsonl.hpp"
#include "trajforge/pes.hpp"
#include "trajforge/pipeline.hpp"

namespace fs = std::filesystem;
using namespace trajforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigInvalid = 2;
constexpr int kExitStageFailure = 3;

struct CommonOpts {
  std::string config_path;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required) {
  auto* config = cmd->add_option("-c,--config", opts.config_path,
                                 "Pipeline configuration file (JSON)");
  if (config_required) config->required();
  cmd->add_option("--workers", opts.workers, "Override worker count (>= 1)");
  cmd->add_option("--seed", opts.seed, "Override the master seed");
}

PipelineConfig load_config(const CommonOpts& opts) {
  PipelineConfig cfg = validate_config(opts.config_path);
  if (opts.workers) cfg.workers = *opts.workers;
  if (opts.seed) cfg.seed = *opts.seed;
  return cfg;
}

void print_report(const RunReport& report) {
  for (const StageReport& sr : report.stages) {
    std::printf("%-10s in=%llu out=%llu wall=%.3fs%s\n", sr.stage.c_str(),
                static_cast<unsigned long long>(sr.records_in),
                static_cast<unsigned long long>(sr.records_out),
                sr.wall_seconds, sr.skipped ? " (up to date)" : "");
  }
  if (report.transform_frames_per_second > 0.0) {
    std::printf("transform throughput: %.0f frames/s\n",
                report.transform_frames_per_second);
  }
  if (!report.manifest_path.empty()) {
    std::printf("manifest: %s\n", report.manifest_path.c_str());
  }
}

int run_stages(const CommonOpts& opts, std::optional<Stage> only) {
  PipelineConfig cfg = load_config(opts);
  if (only) cfg.stages = {*only};
  const RunReport report = run_pipeline(cfg);
  print_report(report);
  return kExitOk;
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::string token;
  for (char c : text) {
    if (c == ',') {
      if (!token.empty()) out.push_back(token);
      token.clear();
    } else {
      token += c;
    }
  }
  if (!token.empty()) out.push_back(token);
  return out;
}

// Loads frames either from an export directory (via its manifest, restricted
// to the requested functional) or from a plain JSONL file of frames.
std::vector<Frame> load_frames(const fs::path& input, Functional functional,
                               std::string& label) {
  std::vector<Frame> frames;
  auto read_jsonl = [&frames](const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      frames.push_back(parse_frame(line));
    }
    if (in.bad()) throw Error(Errc::IoFailure, "read error on " + path.string());
  };

  if (fs::is_directory(input)) {
    const fs::path manifest_path = input / "manifest.json";
    if (!fs::exists(manifest_path)) {
      throw Error(Errc::ConfigInvalid,
                  "--in directory has no manifest.json: " + input.string());
    }
    const Manifest manifest = read_manifest(manifest_path);
    for (const Shard& shard : manifest.shards) {
      if (shard.functional != functional) continue;
      read_jsonl(input / shard.path);
    }
    label = "export/" + std::string(to_string(functional));
  } else {
    read_jsonl(input);
    label = input.filename().string();
  }
  return frames;
}

struct PesOpts {
  std::string elements;
  double rcut = 5.0;
  int nmax = 8;
  int lmax = 6;
  double sigma = 0.5;
  std::string refs_path;
  std::string functional = "PBE";
  int components = 2;
  std::uint64_t overlay = 5;
  std::uint64_t seed = 0;
  std::string in_path;
  std::string fit_in_path;
  std::string out_dir = "pes";
};

int run_standalone_pes(const PesOpts& opts) {
  PesParams params;
  params.elements = split_csv(opts.elements);
  params.soap.r_cut = opts.rcut;
  params.soap.n_max = opts.nmax;
  params.soap.l_max = opts.lmax;
  params.soap.sigma = opts.sigma;
  auto functional = functional_from_string(opts.functional);
  if (!functional) {
    throw Error(Errc::ConfigInvalid,
                "pes: unknown functional \"" + opts.functional + "\"");
  }
  params.functional = *functional;
  params.n_components = opts.components;
  params.overlay_count = opts.overlay;
  params.seed = opts.seed;

  const ReferenceEnergies refs = read_reference_energies(opts.refs_path);

  std::string projection_label;
  const std::vector<Frame> frames =
      load_frames(opts.in_path, params.functional, projection_label);

  std::vector<Frame> fit_frames;
  if (!opts.fit_in_path.empty()) {
    fit_frames = load_frames(opts.fit_in_path, params.functional,
                             params.input_label);
    params.projection_label = projection_label;
  } else {
    params.input_label = projection_label;
  }

  const PesResult result =
      run_pes_job(frames, fit_frames, params, refs, opts.out_dir);
  std::printf("pes: %llu points, %llu overlay trajectories\n",
              static_cast<unsigned long long>(result.n_points),
              static_cast<unsigned long long>(result.n_overlays));
  std::printf("wrote %s\n", result.points_path.string().c_str());
  std::printf("wrote %s\n", result.trajectories_path.string().c_str());
  std::printf("wrote %s\n", result.model_path.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DFT relaxation-trajectory curation pipeline"};
  app.require_subcommand(1);

  CommonOpts run_opts;
  CLI::App* run_cmd = app.add_subcommand("run", "Run every configured stage");
  add_common(run_cmd, run_opts, /*config_required=*/true);

  struct StageCmd {
    Stage stage;
    CLI::App* cmd;
    CommonOpts opts;
  };
  std::vector<StageCmd> stage_cmds;
  for (Stage stage : {Stage::Fetch, Stage::Transform, Stage::Filter,
                      Stage::Export, Stage::Split, Stage::Stats}) {
    StageCmd sc;
    sc.stage = stage;
    sc.cmd = app.add_subcommand(std::string(stage_name(stage)),
                                "Run only the " + std::string(stage_name(stage)) +
                                    " stage");
    stage_cmds.push_back(std::move(sc));
  }
  for (StageCmd& sc : stage_cmds) {
    add_common(sc.cmd, sc.opts, /*config_required=*/true);
  }

  // pes works in two modes: against a pipeline config (like the other stage
  // subcommands) or standalone over an existing export directory/JSONL file.
  PesOpts pes_opts;
  CommonOpts pes_common;
  CLI::App* pes_cmd =
      app.add_subcommand("pes", "Project structures onto a PCA map");
  add_common(pes_cmd, pes_common, /*config_required=*/false);
  pes_cmd->add_option("--elements", pes_opts.elements,
                      "Comma-separated element subset, e.g. Fe,Cu,Al,Ni");
  pes_cmd->add_option("--rcut", pes_opts.rcut, "Descriptor cutoff radius (Å)");
  pes_cmd->add_option("--nmax", pes_opts.nmax, "Radial basis size");
  pes_cmd->add_option("--lmax", pes_opts.lmax, "Angular momentum cutoff");
  pes_cmd->add_option("--sigma", pes_opts.sigma, "Gaussian smearing width (Å)");
  pes_cmd->add_option("--refs", pes_opts.refs_path,
                      "Reference energies JSON (per functional, per element)");
  pes_cmd->add_option("--functional", pes_opts.functional,
                      "Functional to select (PBE, PBESol, SCAN, r2SCAN)");
  pes_cmd->add_option("--components", pes_opts.components, "PCA components");
  pes_cmd->add_option("--overlay", pes_opts.overlay,
                      "Number of example trajectories to trace");
  pes_cmd->add_option("--in", pes_opts.in_path,
                      "Export directory or frames JSONL to project");
  pes_cmd->add_option("--fit-in", pes_opts.fit_in_path,
                      "Optional separate input to fit the PCA on");
  pes_cmd->add_option("--out", pes_opts.out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfigInvalid;
  }

  try {
    if (run_cmd->parsed()) return run_stages(run_opts, std::nullopt);
    for (const StageCmd& sc : stage_cmds) {
      if (sc.cmd->parsed()) return run_stages(sc.opts, sc.stage);
    }
    if (pes_cmd->parsed()) {
      if (!pes_common.config_path.empty()) {
        return run_stages(pes_common, Stage::Pes);
      }
      if (pes_opts.in_path.empty()) {
        throw Error(Errc::ConfigInvalid, "pes: provide --config or --in");
      }
      if (pes_opts.elements.empty()) {
        throw Error(Errc::ConfigInvalid, "pes: --elements is required");
      }
      if (pes_opts.refs_path.empty()) {
        throw Error(Errc::ConfigInvalid, "pes: --refs is required");
      }
      if (pes_common.seed) pes_opts.seed = *pes_common.seed;
      return run_standalone_pes(pes_opts);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == Errc::ConfigInvalid ? kExitConfigInvalid
                                           : kExitStageFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitStageFailure;
  }
  return kExitOk;
}
