// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajforge/frame.hpp"
#include "trajforge/pca.hpp"
#include "trajforge/soap.hpp"

namespace trajforge {

// Potential-energy-surface map job: SOAP descriptors for every structure of a
// chemical subset, a PCA fit of those descriptors, formation energies from a
// reference table, and example trajectory paths through the projected space.

struct PesParams {
  std::vector<std::string> elements;       // chemical system, required non-empty
  SoapParams soap{};
  Functional functional = Functional::PBE;
  int n_components = 2;
  std::uint64_t overlay_count = 5;         // example trajectories to trace
  std::uint64_t seed = 0;                  // sampling flows from sub-seed "pes-sampling"
  std::string input_label;                 // provenance of the PCA fit input
  std::string projection_label;            // provenance of the projected input ("" = same)
};

// element symbol -> reference energy in eV/atom, one table per functional.
using ReferenceTable = std::map<std::string, double>;
using ReferenceEnergies = std::map<Functional, ReferenceTable>;

// Parses {"PBE": {"Fe": -8.1, ...}, ...}. Errors: ParseFailure.
ReferenceEnergies reference_energies_from_json(const nlohmann::json& doc);
ReferenceEnergies read_reference_energies(const std::filesystem::path& path);

// Keeps frames whose species set is a subset of `elements`.
// Errors: ConfigInvalid when `elements` is empty.
std::vector<Frame> select_chemical_subset(std::vector<Frame> frames,
                                          const std::vector<std::string>& elements);

// (E_total - sum_i count_i * refs[element_i]) / n_atoms.
// Errors: MissingTargets (no energy), MissingReference (element not in table).
double formation_energy_per_atom(const Frame& frame, const ReferenceTable& refs);

struct OverlayPoint {
  std::vector<double> coords;  // projected coordinates, one per PCA component
  std::string marker;          // "initial", "final", "both", or ""
};

struct TrajectoryOverlay {
  std::string trajectory_id;
  std::vector<OverlayPoint> points;  // frame canonical order
};

// Projects each trajectory's frames through the model: an ordered polyline
// with the first point marked "initial" and the last "final" (a single-frame
// trajectory gets "both").
std::vector<TrajectoryOverlay> trajectory_overlay(
    const std::vector<Trajectory>& trajs, const PcaModel& model,
    const SoapDescriptorCalculator& calc);

struct PesResult {
  std::uint64_t n_points = 0;
  std::uint64_t n_overlays = 0;
  PcaModel model;
  std::filesystem::path points_path;
  std::filesystem::path trajectories_path;
  std::filesystem::path model_path;
};

// Full job over a frame collection. Selects the configured functional and
// chemical subset, computes descriptors in canonical trajectory/frame order,
// fits the PCA, and writes points.csv, trajectories.csv, and model.json into
// out_dir. Every float is serialized shortest-round-trip, so outputs are
// byte-identical for identical (input multiset, params, refs).
// Errors: ConfigInvalid, Infeasible (empty subset), MissingReference.
PesResult run_pes_job(const std::vector<Frame>& frames, const PesParams& params,
                      const ReferenceEnergies& refs,
                      const std::filesystem::path& out_dir);

// Variant that fits the PCA on one collection and projects another: the model
// is fit from fit_frames (same functional/subset treatment) while points and
// overlays come from frames. model.json records both provenance labels.
PesResult run_pes_job(const std::vector<Frame>& frames,
                      const std::vector<Frame>& fit_frames,
                      const PesParams& params, const ReferenceEnergies& refs,
                      const std::filesystem::path& out_dir);

}  // namespace trajforge
