// SPDX-License-Identifier: Apache-2.0
#include "trajforge/pes.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>

#include "trajforge/elements.hpp"
#include "trajforge/errors.hpp"
#include "trajforge/hash.hpp"
#include "trajforge/jsonl.hpp"

namespace trajforge {

ReferenceEnergies reference_energies_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) {
    throw Error(Errc::ParseFailure, "reference energies: document is not an object");
  }
  ReferenceEnergies refs;
  for (const auto& [functional_name, table] : doc.items()) {
    auto functional = functional_from_string(functional_name);
    if (!functional) {
      throw Error(Errc::ParseFailure,
                  "reference energies: unknown functional \"" + functional_name + "\"");
    }
    if (!table.is_object()) {
      throw Error(Errc::ParseFailure, "reference energies: table for " +
                                          functional_name + " is not an object");
    }
    ReferenceTable parsed;
    for (const auto& [symbol, value] : table.items()) {
      if (!is_known_element(symbol)) {
        throw Error(Errc::ParseFailure,
                    "reference energies: unknown element \"" + symbol + "\"");
      }
      if (!value.is_number()) {
        throw Error(Errc::ParseFailure, "reference energies: value for " +
                                            symbol + " is not a number");
      }
      parsed[symbol] = value.get<double>();
    }
    refs[*functional] = std::move(parsed);
  }
  return refs;
}

ReferenceEnergies read_reference_energies(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded()) {
    throw Error(Errc::ParseFailure,
                "reference energies: invalid JSON in " + path.string());
  }
  return reference_energies_from_json(doc);
}

std::vector<Frame> select_chemical_subset(std::vector<Frame> frames,
                                          const std::vector<std::string>& elements) {
  if (elements.empty()) {
    throw Error(Errc::ConfigInvalid, "chemical subset: element set is empty");
  }
  const std::set<std::string> allowed(elements.begin(), elements.end());
  std::vector<Frame> kept;
  kept.reserve(frames.size());
  for (auto& frame : frames) {
    const bool subset =
        std::all_of(frame.species.begin(), frame.species.end(),
                    [&](const std::string& s) { return allowed.count(s) != 0; });
    if (subset) kept.push_back(std::move(frame));
  }
  return kept;
}

double formation_energy_per_atom(const Frame& frame, const ReferenceTable& refs) {
  if (!frame.energy.has_value()) {
    throw Error(Errc::MissingTargets,
                "formation energy: " + frame.frame_id + " has no total energy");
  }
  if (frame.species.empty()) {
    throw std::invalid_argument("formation energy: empty structure");
  }
  double reference_sum = 0.0;
  for (const std::string& symbol : frame.species) {
    auto it = refs.find(symbol);
    if (it == refs.end()) {
      throw Error(Errc::MissingReference,
                  "formation energy: no reference for element \"" + symbol + "\"");
    }
    reference_sum += it->second;
  }
  return (*frame.energy - reference_sum) / static_cast<double>(frame.species.size());
}

std::vector<TrajectoryOverlay> trajectory_overlay(
    const std::vector<Trajectory>& trajs, const PcaModel& model,
    const SoapDescriptorCalculator& calc) {
  std::vector<TrajectoryOverlay> overlays;
  overlays.reserve(trajs.size());
  for (const Trajectory& traj : trajs) {
    TrajectoryOverlay overlay;
    overlay.trajectory_id = traj.trajectory_id;
    const std::size_t n = traj.frames.size();
    overlay.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      OverlayPoint point;
      point.coords = pca_project(model, calc.compute(traj.frames[i]));
      if (n == 1) {
        point.marker = "both";
      } else if (i == 0) {
        point.marker = "initial";
      } else if (i + 1 == n) {
        point.marker = "final";
      }
      overlay.points.push_back(std::move(point));
    }
    overlays.push_back(std::move(overlay));
  }
  return overlays;
}

namespace {

std::string csv_header(const std::string& prefix, std::size_t n_components) {
  std::string header = prefix;
  for (std::size_t k = 1; k <= n_components; ++k) {
    header += ",pc" + std::to_string(k);
  }
  header += '\n';
  return header;
}

void append_coords(std::string& row, const std::vector<double>& coords) {
  for (double c : coords) {
    row += ',';
    row += format_double(c);
  }
  row += '\n';
}

}  // namespace

PesResult run_pes_job(const std::vector<Frame>& frames, const PesParams& params,
                      const ReferenceEnergies& refs,
                      const std::filesystem::path& out_dir) {
  return run_pes_job(frames, {}, params, refs, out_dir);
}

PesResult run_pes_job(const std::vector<Frame>& frames,
                      const std::vector<Frame>& fit_frames,
                      const PesParams& params, const ReferenceEnergies& refs,
                      const std::filesystem::path& out_dir) {
  if (params.n_components < 1) {
    throw Error(Errc::ConfigInvalid, "pes: n_components must be >= 1");
  }
  auto table_it = refs.find(params.functional);
  if (table_it == refs.end()) {
    throw Error(Errc::MissingReference, "pes: no reference energies for functional " +
                                            std::string(to_string(params.functional)));
  }
  const ReferenceTable& table = table_it->second;

  SoapDescriptorCalculator calc(params.soap, params.elements);

  auto assemble_pool = [&](const std::vector<Frame>& all) {
    std::vector<Frame> pool;
    for (const Frame& frame : all) {
      if (frame.functional == params.functional) pool.push_back(frame);
    }
    std::vector<Frame> subset = select_chemical_subset(std::move(pool), params.elements);
    if (subset.empty()) {
      throw Error(Errc::Infeasible,
                  "pes: no frames of functional " + std::string(to_string(params.functional)) +
                      " fall inside the element subset");
    }
    return assemble_trajectories(std::move(subset));
  };

  std::vector<Trajectory> trajs = assemble_pool(frames);

  // Energies first (cheap, fails fast on reference gaps), descriptors second.
  struct PointRow {
    const Frame* frame;
    double e_form;
  };
  std::vector<PointRow> rows;
  for (const Trajectory& traj : trajs) {
    for (const Frame& frame : traj.frames) {
      rows.push_back(PointRow{&frame, formation_energy_per_atom(frame, table)});
    }
  }

  std::vector<std::vector<double>> descriptors;
  descriptors.reserve(rows.size());
  for (const PointRow& row : rows) descriptors.push_back(calc.compute(*row.frame));

  PcaFit fit;
  if (fit_frames.empty()) {
    fit = fit_pca(descriptors, params.n_components);
  } else {
    const std::vector<Trajectory> fit_trajs = assemble_pool(fit_frames);
    std::vector<std::vector<double>> fit_descriptors;
    for (const Trajectory& traj : fit_trajs) {
      for (const Frame& frame : traj.frames) {
        fit_descriptors.push_back(calc.compute(frame));
      }
    }
    fit = fit_pca(fit_descriptors, params.n_components);
    fit.scores.clear();
    fit.scores.reserve(descriptors.size());
    for (const std::vector<double>& d : descriptors) {
      fit.scores.push_back(pca_project(fit.model, d));
    }
  }
  const std::size_t k = fit.model.n_components();

  std::string points_csv = csv_header("frame_id,trajectory_id,formation_energy_per_atom", k);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string line = rows[i].frame->frame_id;
    line += ',';
    line += rows[i].frame->trajectory_id;
    line += ',';
    line += format_double(rows[i].e_form);
    append_coords(line, fit.scores[i]);
    points_csv += line;
  }

  // Example trajectories: a seeded deterministic draw over trajectory ids,
  // reported in id order.
  const std::uint64_t draw_seed = sub_seed(params.seed, "pes-sampling");
  std::vector<std::pair<std::uint64_t, std::size_t>> draws;
  draws.reserve(trajs.size());
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    draws.emplace_back(hash64(draw_seed, trajs[i].trajectory_id), i);
  }
  std::sort(draws.begin(), draws.end(),
            [&](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first < b.first;
              return trajs[a.second].trajectory_id < trajs[b.second].trajectory_id;
            });
  const std::size_t n_overlay =
      std::min<std::size_t>(params.overlay_count, draws.size());
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < n_overlay; ++i) chosen.push_back(draws[i].second);
  std::sort(chosen.begin(), chosen.end());  // trajs is id-sorted already

  std::vector<Trajectory> sampled;
  sampled.reserve(chosen.size());
  for (std::size_t idx : chosen) sampled.push_back(trajs[idx]);
  std::vector<TrajectoryOverlay> overlays = trajectory_overlay(sampled, fit.model, calc);

  std::string traj_csv = csv_header("trajectory_id,frame_index,marker", k);
  for (const TrajectoryOverlay& overlay : overlays) {
    for (std::size_t i = 0; i < overlay.points.size(); ++i) {
      std::string line = overlay.trajectory_id;
      line += ',';
      line += std::to_string(i);
      line += ',';
      line += overlay.points[i].marker;
      append_coords(line, overlay.points[i].coords);
      traj_csv += line;
    }
  }

  nlohmann::json model_doc;
  {
    nlohmann::json elements_json = nlohmann::json::array();
    for (const std::string& symbol : calc.elements()) elements_json.push_back(symbol);
    model_doc["elements"] = std::move(elements_json);
    model_doc["functional"] = std::string(to_string(params.functional));
    model_doc["input"] = params.input_label;
    model_doc["n_points"] = rows.size();
    model_doc["projection"] = params.projection_label.empty()
                                  ? params.input_label
                                  : params.projection_label;
    model_doc["overlay_count"] = n_overlay;
    model_doc["pca"] = pca_model_to_json(fit.model);
    model_doc["seed"] = params.seed;
    nlohmann::json soap_doc;
    soap_doc["l_max"] = params.soap.l_max;
    soap_doc["n_max"] = params.soap.n_max;
    soap_doc["r_cut"] = params.soap.r_cut;
    soap_doc["sigma"] = params.soap.sigma;
    model_doc["soap"] = std::move(soap_doc);
  }

  PesResult result;
  result.n_points = rows.size();
  result.n_overlays = n_overlay;
  result.model = fit.model;
  result.points_path = out_dir / "points.csv";
  result.trajectories_path = out_dir / "trajectories.csv";
  result.model_path = out_dir / "model.json";
  write_file_atomic(result.points_path, points_csv);
  write_file_atomic(result.trajectories_path, traj_csv);
  write_file_atomic(result.model_path, canonical_dump(model_doc) + "\n");
  return result;
}

}  // namespace trajforge
