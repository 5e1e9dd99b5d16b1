// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajforge/analysis.hpp"
#include "trajforge/curate.hpp"
#include "trajforge/elements.hpp"
#include "trajforge/errors.hpp"
#include "trajforge/frame.hpp"
#include "trajforge/jsonl.hpp"
#include "trajforge/pca.hpp"
#include "trajforge/pes.hpp"
#include "trajforge/pipeline.hpp"
#include "trajforge/soap.hpp"
#include "trajforge/splits.hpp"
#include "trajforge/transform.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace trajforge;

namespace {

py::object json_to_py(const json& j) {
  switch (j.type()) {
    case json::value_t::null:
      return py::none();
    case json::value_t::boolean:
      return py::bool_(j.get<bool>());
    case json::value_t::number_integer:
      return py::int_(j.get<std::int64_t>());
    case json::value_t::number_unsigned:
      return py::int_(j.get<std::uint64_t>());
    case json::value_t::number_float:
      return py::float_(j.get<double>());
    case json::value_t::string:
      return py::str(j.get<std::string>());
    case json::value_t::array: {
      py::list out;
      for (const json& e : j) out.append(json_to_py(e));
      return out;
    }
    case json::value_t::object: {
      py::dict out;
      for (const auto& [key, value] : j.items()) {
        out[py::str(key)] = json_to_py(value);
      }
      return out;
    }
    default:
      return py::none();
  }
}

json py_to_json(py::handle h) {
  if (h.is_none()) return nullptr;
  if (py::isinstance<py::bool_>(h)) return h.cast<bool>();
  if (py::isinstance<py::int_>(h)) {
    try {
      return h.cast<std::int64_t>();
    } catch (const py::cast_error&) {
      return h.cast<std::uint64_t>();
    }
  }
  if (py::isinstance<py::float_>(h)) return h.cast<double>();
  if (py::isinstance<py::str>(h)) return h.cast<std::string>();
  if (py::isinstance<py::dict>(h)) {
    json out = json::object();
    for (auto item : h.cast<py::dict>()) {
      out[item.first.cast<std::string>()] = py_to_json(item.second);
    }
    return out;
  }
  if (py::isinstance<py::list>(h) || py::isinstance<py::tuple>(h)) {
    json out = json::array();
    for (auto item : h.cast<py::sequence>()) out.push_back(py_to_json(item));
    return out;
  }
  throw std::invalid_argument("cannot convert Python object to JSON");
}

Frame frame_from_py(py::handle h) { return frame_from_json(py_to_json(h)); }

std::vector<Frame> frames_from_py(py::handle h) {
  std::vector<Frame> frames;
  for (auto item : h.cast<py::sequence>()) frames.push_back(frame_from_py(item));
  return frames;
}

py::dict trajectory_to_py(const Trajectory& traj) {
  py::dict out;
  out["trajectory_id"] = traj.trajectory_id;
  py::list frames;
  for (const Frame& frame : traj.frames) {
    frames.append(json_to_py(frame_to_json(frame)));
  }
  out["frames"] = std::move(frames);
  py::dict composition;
  for (const auto& [element, count] : traj.composition) {
    composition[py::str(element)] = count;
  }
  out["composition"] = std::move(composition);
  return out;
}

SourceId source_from_py(const std::string& tag) {
  auto source = source_from_tag(tag);
  if (!source) throw std::invalid_argument("unknown source tag \"" + tag + "\"");
  return *source;
}

SoapParams soap_params_from_args(double r_cut, int n_max, int l_max, double sigma) {
  SoapParams params;
  params.r_cut = r_cut;
  params.n_max = n_max;
  params.l_max = l_max;
  params.sigma = sigma;
  return params;
}

SplitConfig split_config_from_args(double test_fraction, std::uint64_t seed,
                                   py::object source_balance,
                                   py::object target_size) {
  SplitConfig cfg;
  cfg.test_fraction = test_fraction;
  cfg.seed = seed;
  if (!source_balance.is_none()) {
    for (auto item : source_balance.cast<py::dict>()) {
      cfg.source_balance[source_from_py(item.first.cast<std::string>())] =
          item.second.cast<double>();
    }
  }
  if (!target_size.is_none()) {
    cfg.target_size = target_size.cast<std::size_t>();
  }
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Curation pipeline for DFT relaxation trajectories";
  m.attr("__version__") = "1.0.0";

  // --- schema ------------------------------------------------------------
  m.def("is_known_element", [](const std::string& s) { return is_known_element(s); },
        py::arg("symbol"));
  m.def("element_index", [](const std::string& s) { return element_index(s); },
        py::arg("symbol"));
  m.def(
      "canonical_frame_id",
      [](const std::string& source, const std::string& record, int number, int step) {
        return canonical_frame_id(source_from_py(source), record, number, step);
      },
      py::arg("source"), py::arg("record_id"), py::arg("relaxation_number"),
      py::arg("relaxation_step"));
  m.def(
      "canonical_trajectory_id",
      [](const std::string& source, const std::string& record) {
        return canonical_trajectory_id(source_from_py(source), record);
      },
      py::arg("source"), py::arg("record_id"));
  m.def(
      "validate_frame",
      [](py::handle frame) {
        const ValidationReport report = validate_frame(frame_from_py(frame));
        py::list out;
        for (const Violation& v : report.violations) {
          py::dict entry;
          entry["rule_id"] = v.rule_id;
          entry["message"] = v.message;
          out.append(std::move(entry));
        }
        return out;
      },
      py::arg("frame"), "Returns the list of violated schema rules (empty = valid)");
  m.def(
      "assemble_trajectories",
      [](py::handle frames) {
        py::list out;
        for (const Trajectory& traj : assemble_trajectories(frames_from_py(frames))) {
          out.append(trajectory_to_py(traj));
        }
        return out;
      },
      py::arg("frames"));

  // --- serialization -----------------------------------------------------
  m.def("canonical_json", [](py::handle doc) { return canonical_dump(py_to_json(doc)); },
        py::arg("doc"), "Canonical key-sorted JSON with shortest round-trip floats");
  m.def("format_float", [](double x) { return format_double(x); }, py::arg("x"));
  m.def("parse_frame", [](const std::string& line) {
    return json_to_py(frame_to_json(parse_frame(line)));
  });
  m.def("serialize_frame", [](py::handle frame) {
    return serialize_frame(frame_from_py(frame));
  });

  // --- transform ---------------------------------------------------------
  m.def(
      "transform_record",
      [](const std::string& source, const std::string& payload,
         std::uint64_t file_index, std::uint64_t line_index) {
        RawRecord raw;
        raw.source = source_from_py(source);
        raw.payload = payload;
        raw.file_index = file_index;
        raw.line_index = line_index;
        const TransformResult result = dispatch(raw);
        py::dict out;
        py::list frames;
        for (const Frame& frame : result.frames) {
          frames.append(json_to_py(frame_to_json(frame)));
        }
        out["frames"] = std::move(frames);
        out["reject"] = result.reject ? json_to_py(reject_to_json(*result.reject))
                                      : py::object(py::none());
        return out;
      },
      py::arg("source"), py::arg("payload"), py::arg("file_index") = 0,
      py::arg("line_index") = 0);

  // --- curation ----------------------------------------------------------
  m.def(
      "run_filters",
      [](py::handle frames, double energy_convergence_threshold,
         double final_force_threshold) {
        FilterConfig cfg;
        cfg.energy_convergence_threshold = energy_convergence_threshold;
        cfg.final_force_threshold = final_force_threshold;
        auto [kept, stats] = run_filters(assemble_trajectories(frames_from_py(frames)), cfg);
        py::dict out;
        py::list trajs;
        for (const Trajectory& traj : kept) trajs.append(trajectory_to_py(traj));
        out["trajectories"] = std::move(trajs);
        out["stats"] = json_to_py(stats.to_json());
        return out;
      },
      py::arg("frames"), py::arg("energy_convergence_threshold") = 0.02,
      py::arg("final_force_threshold") = 0.2);

  // --- splits ------------------------------------------------------------
  m.def(
      "stratified_split",
      [](py::handle frames, double test_fraction, std::uint64_t seed,
         py::object source_balance, py::object target_size) {
        const SplitConfig cfg =
            split_config_from_args(test_fraction, seed, source_balance, target_size);
        const SplitAssignment assignment =
            stratified_split(assemble_trajectories(frames_from_py(frames)), cfg);
        py::dict labels;
        for (const auto& [id, label] : assignment.labels) {
          labels[py::str(id)] = label == SplitLabel::test ? "test" : "train";
        }
        return labels;
      },
      py::arg("frames"), py::arg("test_fraction") = 0.2, py::arg("seed") = 0,
      py::arg("source_balance") = py::none(), py::arg("target_size") = py::none());
  m.def(
      "balance_sources",
      [](py::handle frames, py::object source_balance, py::object target_size,
         std::uint64_t seed) {
        const SplitConfig cfg =
            split_config_from_args(0.2, seed, source_balance, target_size);
        std::vector<TrajSummary> summaries;
        for (const Trajectory& traj : assemble_trajectories(frames_from_py(frames))) {
          summaries.push_back(summarize(traj));
        }
        py::list out;
        for (const TrajSummary& s : balance_sources(summaries, cfg)) {
          out.append(s.trajectory_id);
        }
        return out;
      },
      py::arg("frames"), py::arg("source_balance") = py::none(),
      py::arg("target_size") = py::none(), py::arg("seed") = 0);

  // --- analysis ----------------------------------------------------------
  m.def("max_force_norm", [](py::handle frame) {
    return max_force_norm(frame_from_py(frame));
  });
  m.def(
      "delta_e_profile",
      [](py::handle frames, int bins) {
        ProfileAccumulator acc(bins);
        for (const Trajectory& traj : assemble_trajectories(frames_from_py(frames))) {
          accumulate_delta_e_profile(traj, acc);
        }
        const ProfileCurve curve = acc.finalize();
        py::dict out;
        out["bin_centers"] = curve.bin_centers;
        out["mean"] = curve.mean;
        out["stddev"] = curve.stddev;
        out["n"] = curve.n;
        return out;
      },
      py::arg("frames"), py::arg("bins") = 20);
  m.def(
      "trajectory_length_histogram",
      [](const std::vector<std::uint64_t>& lengths, int bins) {
        const Histogram hist = trajectory_length_histogram(lengths, bins);
        py::dict out;
        out["bin_edges"] = hist.bin_edges;
        out["counts"] = hist.counts;
        return out;
      },
      py::arg("lengths"), py::arg("bins") = 10);

  // --- descriptors / PCA / PES --------------------------------------------
  m.def(
      "soap_descriptor",
      [](py::handle frame, const std::vector<std::string>& elements, double r_cut,
         int n_max, int l_max, double sigma) {
        const SoapDescriptorCalculator calc(
            soap_params_from_args(r_cut, n_max, l_max, sigma), elements);
        return calc.compute(frame_from_py(frame));
      },
      py::arg("frame"), py::arg("elements"), py::arg("r_cut") = 5.0,
      py::arg("n_max") = 8, py::arg("l_max") = 6, py::arg("sigma") = 0.5);
  m.def(
      "soap_dimension",
      [](const std::vector<std::string>& elements, double r_cut, int n_max,
         int l_max, double sigma) {
        const SoapDescriptorCalculator calc(
            soap_params_from_args(r_cut, n_max, l_max, sigma), elements);
        return calc.dimension();
      },
      py::arg("elements"), py::arg("r_cut") = 5.0, py::arg("n_max") = 8,
      py::arg("l_max") = 6, py::arg("sigma") = 0.5);
  m.def(
      "fit_pca",
      [](const std::vector<std::vector<double>>& rows, int n_components) {
        const PcaFit fit = fit_pca(rows, n_components);
        py::dict out;
        out["model"] = json_to_py(pca_model_to_json(fit.model));
        out["scores"] = fit.scores;
        return out;
      },
      py::arg("rows"), py::arg("n_components"));
  m.def(
      "pca_project",
      [](py::handle model, const std::vector<double>& x) {
        return pca_project(pca_model_from_json(py_to_json(model)), x);
      },
      py::arg("model"), py::arg("x"));
  m.def(
      "formation_energy_per_atom",
      [](py::handle frame, py::handle refs) {
        ReferenceTable table;
        for (auto item : refs.cast<py::dict>()) {
          table[item.first.cast<std::string>()] = item.second.cast<double>();
        }
        return formation_energy_per_atom(frame_from_py(frame), table);
      },
      py::arg("frame"), py::arg("refs"));

  // --- pipeline ----------------------------------------------------------
  m.def(
      "validate_config",
      [](const std::string& path) {
        return json_to_py(config_to_json(validate_config(path)));
      },
      py::arg("path"), "Loads, defaults, and validates a pipeline config file");
  m.def(
      "run_pipeline",
      [](py::handle config) {
        PipelineConfig cfg = config_from_json(py_to_json(config));
        const RunReport report = run_pipeline(cfg);
        return json_to_py(run_report_to_json(report));
      },
      py::arg("config"));
}
