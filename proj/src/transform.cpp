// SPDX-License-Identifier: Apache-2.0
#include "trajforge/transform.hpp"

#include <algorithm>

#include "trajforge/errors.hpp"
#include "trajforge/jsonl.hpp"

namespace trajforge {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& what) {
  throw Error(Errc::ParseFailure, what);
}

const json& need(const json& doc, const FieldMap& fields, const char* canonical) {
  const std::string& key = fields.resolve(canonical);
  auto it = doc.find(key);
  if (it == doc.end()) bad("missing field \"" + key + "\"");
  return *it;
}

const json* maybe(const json& doc, const FieldMap& fields, const char* canonical) {
  const std::string& key = fields.resolve(canonical);
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return nullptr;
  return &*it;
}

std::string need_string(const json& doc, const FieldMap& fields, const char* key) {
  const json& v = need(doc, fields, key);
  if (!v.is_string()) bad(std::string("field \"") + key + "\" must be a string");
  return v.get<std::string>();
}

double as_number(const json& v, const char* what) {
  if (!v.is_number()) bad(std::string(what) + " must be a number");
  return v.get<double>();
}

Vec3 as_vec3(const json& v, const char* what) {
  if (!v.is_array() || v.size() != 3) bad(std::string(what) + " must be a 3-vector");
  return {as_number(v[0], what), as_number(v[1], what), as_number(v[2], what)};
}

Mat3 as_mat3(const json& v, const char* what) {
  if (!v.is_array() || v.size() != 3) bad(std::string(what) + " must be 3x3");
  return {as_vec3(v[0], what), as_vec3(v[1], what), as_vec3(v[2], what)};
}

std::vector<Vec3> as_rows(const json& v, const char* what) {
  if (!v.is_array()) bad(std::string(what) + " must be an array of 3-vectors");
  std::vector<Vec3> rows;
  rows.reserve(v.size());
  for (const auto& r : v) rows.push_back(as_vec3(r, what));
  return rows;
}

RawStructure parse_structure(const json& doc, const FieldMap& fields,
                             const char* what) {
  if (!doc.is_object()) bad(std::string(what) + " must be an object");
  RawStructure s;
  s.lattice = as_mat3(need(doc, fields, "lattice"), "lattice");
  const json& sp = need(doc, fields, "species");
  if (!sp.is_array()) bad("species must be an array of strings");
  s.species.reserve(sp.size());
  for (const auto& sym : sp) {
    if (!sym.is_string()) bad("species must be an array of strings");
    s.species.push_back(sym.get<std::string>());
  }
  s.positions = as_rows(need(doc, fields, "positions"), "positions");
  return s;
}

// Optional targets: absent or null stays absent, anything else must have the
// right shape. A present-but-malformed target is a parse failure, not a
// silent drop.
std::optional<double> opt_energy(const json* v) {
  if (!v) return std::nullopt;
  return as_number(*v, "energy");
}

std::optional<std::vector<Vec3>> opt_forces(const json* v) {
  if (!v) return std::nullopt;
  return as_rows(*v, "forces");
}

Frame frame_skeleton(SourceId source, const std::string& record_id,
                     Functional functional, int relaxation_number,
                     int relaxation_step, RawStructure structure) {
  Frame f;
  f.source = source;
  f.source_record_id = record_id;
  f.functional = functional;
  f.relaxation_number = relaxation_number;
  f.relaxation_step = relaxation_step;
  f.lattice = structure.lattice;
  f.species = std::move(structure.species);
  f.positions = std::move(structure.positions);
  f.trajectory_id = canonical_trajectory_id(source, record_id);
  f.frame_id =
      canonical_frame_id(source, record_id, relaxation_number, relaxation_step);
  return f;
}

Functional resolve_functional(const std::string& label) {
  auto f = functional_from_alias(label);
  if (!f) {
    throw Error(Errc::UnknownFunctional, "functional \"" + label + "\"");
  }
  return *f;
}

std::string sanitize_excerpt(std::string_view payload) {
  std::string out;
  out.reserve(std::min<std::size_t>(payload.size(), 256));
  for (char ch : payload) {
    if (out.size() >= 256) break;
    unsigned char c = static_cast<unsigned char>(ch);
    out.push_back((c >= 0x20 && c < 0x7f) ? ch : '?');
  }
  return out;
}

}  // namespace

FieldMap FieldMap::from_json(const json& doc) {
  if (!doc.is_object()) {
    throw Error(Errc::ConfigInvalid, "field map must be a JSON object");
  }
  std::map<std::string, std::string> renames;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!it.value().is_string()) {
      throw Error(Errc::ConfigInvalid,
                  "field map entry \"" + it.key() + "\" must map to a string");
    }
    renames[it.key()] = it.value().get<std::string>();
  }
  return FieldMap(std::move(renames));
}

json FieldMap::to_json() const {
  json doc = json::object();
  for (const auto& [canonical, dumped] : renames_) doc[canonical] = dumped;
  return doc;
}

json SourceFieldMaps::to_json() const {
  json doc = json::object();
  doc["alexandria"] = alexandria.to_json();
  doc["mp"] = mp.to_json();
  doc["oqmd"] = oqmd.to_json();
  return doc;
}

SourceFieldMaps SourceFieldMaps::from_json(const json& doc) {
  if (!doc.is_object()) {
    throw Error(Errc::ConfigInvalid, "field_maps must be a JSON object");
  }
  SourceFieldMaps maps;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    auto source = source_from_tag(it.key());
    if (!source) {
      throw Error(Errc::ConfigInvalid, "field_maps has unknown source \"" + it.key() + "\"");
    }
    FieldMap parsed = FieldMap::from_json(it.value());
    switch (*source) {
      case SourceId::MaterialsProject:
        maps.mp = std::move(parsed);
        break;
      case SourceId::Alexandria:
        maps.alexandria = std::move(parsed);
        break;
      case SourceId::OQMD:
        maps.oqmd = std::move(parsed);
        break;
    }
  }
  return maps;
}

json reject_to_json(const RejectRecord& reject) {
  json doc = json::object();
  doc["file_index"] = reject.file_index;
  doc["line_index"] = reject.line_index;
  doc["payload_excerpt"] = reject.payload_excerpt;
  doc["reason"] = reject.reason;
  doc["source"] = std::string(source_tag(reject.source));
  return doc;
}

MpRawTask parse_mp_task(const json& doc, const FieldMap& fields) {
  if (!doc.is_object()) bad("task must be an object");
  MpRawTask task;
  task.task_id = need_string(doc, fields, "task_id");
  const json& dep = need(doc, fields, "deprecated");
  if (!dep.is_boolean()) bad("deprecated must be a boolean");
  task.deprecated = dep.get<bool>();
  task.functional = need_string(doc, fields, "functional");
  const json& steps = need(doc, fields, "ionic_steps");
  if (!steps.is_array()) bad("ionic_steps must be an array");
  task.ionic_steps.reserve(steps.size());
  for (const auto& step : steps) {
    if (!step.is_object()) bad("ionic step must be an object");
    MpIonicStep s;
    s.structure = parse_structure(need(step, fields, "structure"), fields, "structure");
    s.energy = opt_energy(maybe(step, fields, "energy"));
    s.forces = opt_forces(maybe(step, fields, "forces"));
    if (const json* stress = maybe(step, fields, "stress")) {
      s.stress = as_mat3(*stress, "stress");
    }
    task.ionic_steps.push_back(std::move(s));
  }
  return task;
}

AlexRawEntry parse_alexandria_entry(const json& doc, const FieldMap& fields) {
  if (!doc.is_object()) bad("entry must be an object");
  AlexRawEntry entry;
  entry.entry_id = need_string(doc, fields, "entry_id");
  entry.functional = need_string(doc, fields, "functional");
  const json& steps = need(doc, fields, "steps");
  if (!steps.is_array() || steps.empty()) bad("steps must be a non-empty array");
  entry.steps.reserve(steps.size());
  for (const auto& step : steps) {
    if (!step.is_object()) bad("step must be an object");
    AlexStep s;
    s.structure = parse_structure(need(step, fields, "structure"), fields, "structure");
    s.energy = opt_energy(maybe(step, fields, "energy"));
    s.forces = opt_forces(maybe(step, fields, "forces"));
    entry.steps.push_back(std::move(s));
  }
  return entry;
}

OqmdRawEntry parse_oqmd_entry(const json& doc, const FieldMap& fields) {
  if (!doc.is_object()) bad("entry must be an object");
  OqmdRawEntry entry;
  entry.entry_id = need_string(doc, fields, "entry_id");
  const json& calcs = need(doc, fields, "calculations");
  if (!calcs.is_array()) bad("calculations must be an array");
  entry.calculations.reserve(calcs.size());
  for (const auto& calc : calcs) {
    if (!calc.is_object()) bad("calculation must be an object");
    OqmdCalculation c;
    c.label = need_string(calc, fields, "label");
    c.input_structure =
        parse_structure(need(calc, fields, "input_structure"), fields, "input_structure");
    c.output_structure =
        parse_structure(need(calc, fields, "output_structure"), fields, "output_structure");
    // Targets are split per structure: {"energy": {"input": e0, "output": e1},
    // "forces": {"input": [...], "output": [...]}}. Any side may be absent.
    if (const json* energy = maybe(calc, fields, "energy")) {
      if (!energy->is_object()) bad("oqmd energy must be {input, output}");
      c.energy_input = opt_energy(maybe(*energy, fields, "input"));
      c.energy_output = opt_energy(maybe(*energy, fields, "output"));
    }
    if (const json* forces = maybe(calc, fields, "forces")) {
      if (!forces->is_object()) bad("oqmd forces must be {input, output}");
      c.forces_input = opt_forces(maybe(*forces, fields, "input"));
      c.forces_output = opt_forces(maybe(*forces, fields, "output"));
    }
    entry.calculations.push_back(std::move(c));
  }
  return entry;
}

std::vector<Frame> transform_mp(const MpRawTask& raw) {
  if (raw.deprecated) return {};
  Functional functional = resolve_functional(raw.functional);
  std::vector<Frame> frames;
  frames.reserve(raw.ionic_steps.size());
  for (std::size_t i = 0; i < raw.ionic_steps.size(); ++i) {
    const MpIonicStep& step = raw.ionic_steps[i];
    Frame f = frame_skeleton(SourceId::MaterialsProject, raw.task_id, functional,
                             /*relaxation_number=*/1, static_cast<int>(i),
                             step.structure);
    f.energy = step.energy;
    f.forces = step.forces;
    f.stress = step.stress;
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<Frame> transform_alexandria(const AlexRawEntry& raw) {
  for (const AlexStep& step : raw.steps) {
    for (const std::string& symbol : step.structure.species) {
      if (symbol == "Yb") return {};
    }
  }
  Functional functional = resolve_functional(raw.functional);
  std::vector<Frame> frames;
  frames.reserve(raw.steps.size());
  for (std::size_t i = 0; i < raw.steps.size(); ++i) {
    const AlexStep& step = raw.steps[i];
    Frame f = frame_skeleton(SourceId::Alexandria, raw.entry_id, functional,
                             /*relaxation_number=*/1, static_cast<int>(i),
                             step.structure);
    f.energy = step.energy;
    f.forces = step.forces;
    frames.push_back(std::move(f));
  }
  return frames;
}

namespace {

int oqmd_stage_number(const std::string& label) {
  if (label == "coarse relaxation") return 1;
  if (label == "relaxation") return 2;
  if (label == "fine relaxation") return 3;
  bad("unknown calculation label \"" + label + "\"");
}

// Usable means: both structures' targets present with rows matching their
// atom counts. Nothing is fabricated for a half-reported calculation.
bool oqmd_calc_usable(const OqmdCalculation& c) {
  if (!c.energy_input || !c.energy_output || !c.forces_input || !c.forces_output) {
    return false;
  }
  return c.forces_input->size() == c.input_structure.species.size() &&
         c.forces_output->size() == c.output_structure.species.size();
}

}  // namespace

std::vector<Frame> transform_oqmd(const OqmdRawEntry& raw) {
  // Validate the label set up front (and refuse duplicated stages, which
  // would forge colliding frame keys downstream).
  bool seen[4] = {false, false, false, false};
  for (const OqmdCalculation& c : raw.calculations) {
    int stage = oqmd_stage_number(c.label);
    if (seen[stage]) bad("duplicate calculation label \"" + c.label + "\"");
    seen[stage] = true;
  }

  std::vector<Frame> frames;
  for (const OqmdCalculation& c : raw.calculations) {
    if (!oqmd_calc_usable(c)) continue;  // MissingTargets: skip this stage only
    int stage = oqmd_stage_number(c.label);

    Frame in = frame_skeleton(SourceId::OQMD, raw.entry_id, Functional::PBE,
                              stage, /*relaxation_step=*/0, c.input_structure);
    in.energy = c.energy_input;
    in.forces = c.forces_input;
    frames.push_back(std::move(in));

    Frame out = frame_skeleton(SourceId::OQMD, raw.entry_id, Functional::PBE,
                               stage, /*relaxation_step=*/1, c.output_structure);
    out.energy = c.energy_output;
    out.forces = c.forces_output;
    frames.push_back(std::move(out));
  }
  return frames;
}

TransformResult dispatch(const RawRecord& raw, const SourceFieldMaps& fields) {
  TransformResult result;
  try {
    json doc = json::parse(raw.payload, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded()) bad("payload is not valid JSON");
    switch (raw.source) {
      case SourceId::MaterialsProject:
        result.frames = transform_mp(parse_mp_task(doc, fields.mp));
        break;
      case SourceId::Alexandria:
        result.frames = transform_alexandria(parse_alexandria_entry(doc, fields.alexandria));
        break;
      case SourceId::OQMD:
        result.frames = transform_oqmd(parse_oqmd_entry(doc, fields.oqmd));
        break;
    }
  } catch (const Error& e) {
    RejectRecord reject;
    reject.source = raw.source;
    reject.file_index = raw.file_index;
    reject.line_index = raw.line_index;
    reject.reason = e.what();
    reject.payload_excerpt = sanitize_excerpt(raw.payload);
    result.frames.clear();
    result.reject = std::move(reject);
  }
  return result;
}

}  // namespace trajforge
