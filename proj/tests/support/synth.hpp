// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic-corpus generators for tests: curation corpora with
// planted defects, stratified-split populations, and raw upstream payloads.
#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "support/testutil.hpp"
#include "trajforge/elements.hpp"
#include "trajforge/frame.hpp"
#include "trajforge/splits.hpp"
#include "trajforge/types.hpp"

namespace synth {

// ---------------------------------------------------------------------------
// Curation corpus: n trajectories cycling through kept/dropped categories,
// returned in shuffled frame order so grouping is actually exercised.
//
//   i % 10 == 0  multi-stage, converging, kept
//   i % 10 == 1  boundary energy gap == threshold, kept (inclusive)
//   i % 10 == 2  boundary final force norm == threshold, kept (inclusive)
//   i % 10 == 3  single frame, kept (convergence not applicable)
//   i % 10 == 4  final energy gap above threshold, dropped
//   i % 10 == 5  final force norm above threshold, dropped
//   i % 10 == 6  final frame lacks forces -> frame dropped, remainder kept
//   i % 10 == 7  NaN energy mid-trajectory -> that frame dropped
//   i % 10 == 8  zero-volume lattice on one frame -> that frame dropped
//   i % 10 == 9  forces row-count mismatch on one frame -> that frame dropped

inline std::vector<trajforge::Frame> filter_corpus(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  const std::vector<std::vector<std::string>> palettes = {
      {"Fe"}, {"Fe", "O"}, {"Cu", "Ni"}, {"Si", "O"}, {"Al"}, {"Na", "Cl"}};
  std::vector<trajforge::Frame> frames;

  for (int i = 0; i < n; ++i) {
    const int category = i % 10;
    const auto& palette = palettes[static_cast<std::size_t>(i) % palettes.size()];
    std::vector<std::string> species;
    const int n_atoms = 1 + static_cast<int>(testutil::uniform_below(rng, 4));
    for (int a = 0; a < n_atoms; ++a) {
      species.push_back(palette[testutil::uniform_below(rng, palette.size())]);
    }
    const std::string record = "syn-" + std::to_string(i);
    const auto source = static_cast<trajforge::SourceId>(i % 3);

    int length = 2 + static_cast<int>(testutil::uniform_below(rng, 5));
    if (category == 3) length = 1;
    if (category == 6 || category == 7) length = 3 + static_cast<int>(testutil::uniform_below(rng, 3));

    // Energies drift downward by small converging amounts.
    std::vector<double> energies(static_cast<std::size_t>(length));
    double e = -5.0 - testutil::uniform01(rng);
    for (int t = 0; t < length; ++t) {
      energies[static_cast<std::size_t>(t)] = e;
      e -= 0.015 * testutil::uniform01(rng);
    }
    switch (category) {
      case 1:
        energies.back() = energies[energies.size() - 2] - 0.02;
        break;
      case 4:
        energies.back() = energies[energies.size() - 2] - 0.05 - testutil::uniform01(rng);
        break;
      default:
        break;
    }

    // Two relaxation stages for even multi-frame trajectories.
    const bool two_stages = length >= 4 && (i % 2 == 0);
    for (int t = 0; t < length; ++t) {
      const int rnum = two_stages && t >= length / 2 ? 2 : 1;
      const int rstep = two_stages && t >= length / 2 ? t - length / 2 : t;
      trajforge::Frame f = testutil::make_frame(source, record, rnum, rstep,
                                                species, energies[static_cast<std::size_t>(t)]);
      const bool is_last = t == length - 1;
      if (is_last) {
        switch (category) {
          case 2:
            (*f.forces)[0] = {0.0, 0.12, 0.16};  // norm exactly 0.2
            break;
          case 5:
            (*f.forces)[0] = {0.3, 0.4, 0.0};  // norm 0.5
            break;
          case 6:
            f.forces.reset();
            break;
          default:
            (*f.forces)[0] = {0.01, 0.0, 0.0};
            break;
        }
      }
      if (category == 7 && t == length - 2) {
        f.energy = std::numeric_limits<double>::quiet_NaN();
      }
      if (category == 8 && t == 0) {
        f.lattice[2] = f.lattice[0];  // determinant 0
      }
      if (category == 9 && t == 0) {
        f.forces->push_back({0.0, 0.0, 0.0});  // one row too many
      }
      frames.push_back(std::move(f));
    }
  }

  // Fisher–Yates with the platform-stable generator.
  for (std::size_t k = frames.size(); k > 1; --k) {
    std::swap(frames[k - 1], frames[testutil::uniform_below(rng, k)]);
  }
  return frames;
}

// ---------------------------------------------------------------------------
// Split population: n trajectory summaries spread over n_signatures element
// signatures (sizes vary), sources cycling, plus one trajectory whose
// signature holds an element found nowhere else (must end up in train).

inline trajforge::ElementBits bits_of(const std::vector<std::string>& symbols) {
  trajforge::ElementBits bits;
  for (const std::string& s : symbols) {
    bits.set(static_cast<std::size_t>(*trajforge::element_index(s)));
  }
  return bits;
}

inline std::vector<trajforge::TrajSummary> split_population(std::uint64_t seed,
                                                            int n,
                                                            int n_signatures) {
  std::mt19937_64 rng(seed);
  const std::vector<std::string> pool = {"H",  "C",  "N",  "O",  "Fe", "Cu",
                                         "Ni", "Si", "Al", "Na", "Cl", "Ti"};
  std::vector<std::vector<std::string>> signatures;
  for (int s = 0; s < n_signatures; ++s) {
    std::vector<std::string> sig;
    const std::size_t size = 1 + testutil::uniform_below(rng, 4);
    while (sig.size() < size) {
      const std::string& candidate = pool[testutil::uniform_below(rng, pool.size())];
      if (std::find(sig.begin(), sig.end(), candidate) == sig.end()) {
        sig.push_back(candidate);
      }
    }
    signatures.push_back(std::move(sig));
  }

  std::vector<trajforge::TrajSummary> trajs;
  static const trajforge::SourceId kSources[3] = {
      trajforge::SourceId::MaterialsProject, trajforge::SourceId::Alexandria,
      trajforge::SourceId::OQMD};
  for (int i = 0; i < n; ++i) {
    trajforge::TrajSummary t;
    t.source = kSources[i % 3];
    t.trajectory_id = trajforge::canonical_trajectory_id(
        t.source, "split-" + std::to_string(i));
    t.signature = bits_of(signatures[testutil::uniform_below(rng, signatures.size())]);
    trajs.push_back(std::move(t));
  }
  // Lone trajectory with a unique element: coverage must pin it to train.
  trajforge::TrajSummary lone;
  lone.source = trajforge::SourceId::MaterialsProject;
  lone.trajectory_id = trajforge::canonical_trajectory_id(lone.source, "split-lone");
  lone.signature = bits_of({"Pu"});
  trajs.push_back(std::move(lone));
  return trajs;
}

// ---------------------------------------------------------------------------
// Raw upstream payload builders (canonical field names).

inline nlohmann::json structure_json(const std::vector<std::string>& species,
                                     double a = 8.0) {
  nlohmann::json s;
  s["lattice"] = {{a, 0.0, 0.0}, {0.0, a, 0.0}, {0.0, 0.0, a}};
  s["species"] = species;
  nlohmann::json pos = nlohmann::json::array();
  for (std::size_t i = 0; i < species.size(); ++i) {
    pos.push_back({1.0 + 2.0 * static_cast<double>(i % 3),
                   1.0 + 2.0 * static_cast<double>((i / 3) % 3),
                   1.0 + 2.0 * static_cast<double>(i / 9)});
  }
  s["positions"] = pos;
  return s;
}

struct StepSpec {
  std::vector<std::string> species;
  std::optional<double> energy;
  bool with_forces = true;
  double fmax = 0.0;  // x-component of the first force row
};

inline nlohmann::json forces_json(std::size_t n_atoms, double fmax) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < n_atoms; ++i) {
    rows.push_back({i == 0 ? fmax : 0.0, 0.0, 0.0});
  }
  return rows;
}

inline nlohmann::json mp_task_json(const std::string& task_id,
                                   const std::string& functional,
                                   bool deprecated,
                                   const std::vector<StepSpec>& steps) {
  nlohmann::json doc;
  doc["task_id"] = task_id;
  doc["deprecated"] = deprecated;
  doc["functional"] = functional;
  nlohmann::json arr = nlohmann::json::array();
  for (const StepSpec& spec : steps) {
    nlohmann::json step;
    step["structure"] = structure_json(spec.species);
    if (spec.energy) step["energy"] = *spec.energy;
    if (spec.with_forces) step["forces"] = forces_json(spec.species.size(), spec.fmax);
    arr.push_back(std::move(step));
  }
  doc["ionic_steps"] = std::move(arr);
  return doc;
}

inline nlohmann::json alex_entry_json(const std::string& entry_id,
                                      const std::string& functional,
                                      const std::vector<StepSpec>& steps) {
  nlohmann::json doc;
  doc["entry_id"] = entry_id;
  doc["functional"] = functional;
  nlohmann::json arr = nlohmann::json::array();
  for (const StepSpec& spec : steps) {
    nlohmann::json step;
    step["structure"] = structure_json(spec.species);
    if (spec.energy) step["energy"] = *spec.energy;
    if (spec.with_forces) step["forces"] = forces_json(spec.species.size(), spec.fmax);
    arr.push_back(std::move(step));
  }
  doc["steps"] = std::move(arr);
  return doc;
}

struct OqmdCalcSpec {
  std::string label;
  std::vector<std::string> species;
  std::optional<double> energy_in, energy_out;
  bool forces_in = true, forces_out = true;
  double fmax_out = 0.0;
};

inline nlohmann::json oqmd_entry_json(const std::string& entry_id,
                                      const std::vector<OqmdCalcSpec>& calcs) {
  nlohmann::json doc;
  doc["entry_id"] = entry_id;
  nlohmann::json arr = nlohmann::json::array();
  for (const OqmdCalcSpec& spec : calcs) {
    nlohmann::json calc;
    calc["label"] = spec.label;
    calc["input_structure"] = structure_json(spec.species);
    calc["output_structure"] = structure_json(spec.species);
    nlohmann::json energy = nlohmann::json::object();
    if (spec.energy_in) energy["input"] = *spec.energy_in;
    if (spec.energy_out) energy["output"] = *spec.energy_out;
    if (!energy.empty()) calc["energy"] = std::move(energy);
    nlohmann::json forces = nlohmann::json::object();
    if (spec.forces_in) forces["input"] = forces_json(spec.species.size(), 0.0);
    if (spec.forces_out) forces["output"] = forces_json(spec.species.size(), spec.fmax_out);
    if (!forces.empty()) calc["forces"] = std::move(forces);
    arr.push_back(std::move(calc));
  }
  doc["calculations"] = std::move(arr);
  return doc;
}

}  // namespace synth
