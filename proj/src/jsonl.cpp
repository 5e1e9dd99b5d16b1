// SPDX-License-Identifier: Apache-2.0
#include "trajforge/jsonl.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include "trajforge/errors.hpp"

namespace trajforge {

namespace fs = std::filesystem;

std::string format_double(double value) {
  if (!std::isfinite(value)) {
    throw std::invalid_argument("cannot serialize non-finite double");
  }
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  std::string s(buf, res.ptr);
  // "13" or "-0" would reparse as JSON integers; force double typing while
  // keeping the significant digits minimal.
  if (s.find_first_of(".eE") == std::string::npos) {
    s += ".0";
  }
  return s;
}

namespace {

void append_escaped(std::string& out, std::string_view s) {
  out.push_back('"');
  for (char ch : s) {
    unsigned char c = static_cast<unsigned char>(ch);
    switch (c) {
      case '"':
        out += "\\\"";
        break;
      case '\\':
        out += "\\\\";
        break;
      case '\b':
        out += "\\b";
        break;
      case '\f':
        out += "\\f";
        break;
      case '\n':
        out += "\\n";
        break;
      case '\r':
        out += "\\r";
        break;
      case '\t':
        out += "\\t";
        break;
      default:
        if (c < 0x20) {
          char esc[8];
          std::snprintf(esc, sizeof(esc), "\\u%04x", c);
          out += esc;
        } else {
          out.push_back(ch);
        }
    }
  }
  out.push_back('"');
}

}  // namespace

void canonical_dump_append(std::string& out, const json& doc) {
  switch (doc.type()) {
    case json::value_t::null:
      out += "null";
      break;
    case json::value_t::boolean:
      out += doc.get<bool>() ? "true" : "false";
      break;
    case json::value_t::number_integer: {
      char buf[24];
      auto res = std::to_chars(buf, buf + sizeof(buf), doc.get<std::int64_t>());
      out.append(buf, res.ptr);
      break;
    }
    case json::value_t::number_unsigned: {
      char buf[24];
      auto res = std::to_chars(buf, buf + sizeof(buf), doc.get<std::uint64_t>());
      out.append(buf, res.ptr);
      break;
    }
    case json::value_t::number_float:
      out += format_double(doc.get<double>());
      break;
    case json::value_t::string:
      append_escaped(out, doc.get_ref<const std::string&>());
      break;
    case json::value_t::array: {
      out.push_back('[');
      bool first = true;
      for (const auto& item : doc) {
        if (!first) out.push_back(',');
        first = false;
        canonical_dump_append(out, item);
      }
      out.push_back(']');
      break;
    }
    case json::value_t::object: {
      // nlohmann::json stores object members in a std::map, so iteration is
      // already in ascending key order.
      out.push_back('{');
      bool first = true;
      for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!first) out.push_back(',');
        first = false;
        append_escaped(out, it.key());
        out.push_back(':');
        canonical_dump_append(out, it.value());
      }
      out.push_back('}');
      break;
    }
    default:
      throw std::invalid_argument("cannot serialize discarded/binary JSON value");
  }
}

std::string canonical_dump(const json& doc) {
  std::string out;
  canonical_dump_append(out, doc);
  return out;
}

namespace {

json mat3_to_json(const Mat3& m) {
  json rows = json::array();
  for (const Vec3& r : m) rows.push_back(json::array({r[0], r[1], r[2]}));
  return rows;
}

json rows_to_json(const std::vector<Vec3>& rows) {
  json out = json::array();
  for (const Vec3& r : rows) out.push_back(json::array({r[0], r[1], r[2]}));
  return out;
}

[[noreturn]] void bad_frame(const std::string& what) {
  throw Error(Errc::ParseFailure, "frame: " + what);
}

double require_number(const json& v, const char* what) {
  if (!v.is_number()) bad_frame(std::string(what) + " must be a number");
  return v.get<double>();
}

Vec3 parse_vec3(const json& v, const char* what) {
  if (!v.is_array() || v.size() != 3) {
    bad_frame(std::string(what) + " must be a 3-element array");
  }
  return {require_number(v[0], what), require_number(v[1], what),
          require_number(v[2], what)};
}

Mat3 parse_mat3(const json& v, const char* what) {
  if (!v.is_array() || v.size() != 3) {
    bad_frame(std::string(what) + " must be a 3x3 array");
  }
  return {parse_vec3(v[0], what), parse_vec3(v[1], what), parse_vec3(v[2], what)};
}

std::vector<Vec3> parse_rows(const json& v, const char* what) {
  if (!v.is_array()) bad_frame(std::string(what) + " must be an array of rows");
  std::vector<Vec3> rows;
  rows.reserve(v.size());
  for (const auto& r : v) rows.push_back(parse_vec3(r, what));
  return rows;
}

const json& require_field(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) bad_frame(std::string("missing field \"") + key + "\"");
  return *it;
}

}  // namespace

json frame_to_json(const Frame& frame) {
  json doc = json::object();
  if (frame.energy) doc["energy"] = *frame.energy;
  if (frame.forces) doc["forces"] = rows_to_json(*frame.forces);
  doc["frame_id"] = frame.frame_id;
  doc["functional"] = std::string(to_string(frame.functional));
  doc["lattice"] = mat3_to_json(frame.lattice);
  doc["positions"] = rows_to_json(frame.positions);
  doc["relaxation_number"] = frame.relaxation_number;
  doc["relaxation_step"] = frame.relaxation_step;
  doc["source"] = std::string(source_tag(frame.source));
  doc["source_record_id"] = frame.source_record_id;
  doc["species"] = frame.species;
  if (frame.stress) doc["stress"] = mat3_to_json(*frame.stress);
  doc["trajectory_id"] = frame.trajectory_id;
  return doc;
}

Frame frame_from_json(const json& doc) {
  if (!doc.is_object()) bad_frame("document is not an object");
  Frame f;

  const json& fid = require_field(doc, "frame_id");
  if (!fid.is_string()) bad_frame("frame_id must be a string");
  f.frame_id = fid.get<std::string>();

  const json& tid = require_field(doc, "trajectory_id");
  if (!tid.is_string()) bad_frame("trajectory_id must be a string");
  f.trajectory_id = tid.get<std::string>();

  const json& src = require_field(doc, "source");
  if (!src.is_string()) bad_frame("source must be a string");
  auto source = source_from_tag(src.get<std::string>());
  if (!source) bad_frame("unknown source tag \"" + src.get<std::string>() + "\"");
  f.source = *source;

  const json& rec = require_field(doc, "source_record_id");
  if (!rec.is_string()) bad_frame("source_record_id must be a string");
  f.source_record_id = rec.get<std::string>();

  const json& fn = require_field(doc, "functional");
  if (!fn.is_string()) bad_frame("functional must be a string");
  auto functional = functional_from_string(fn.get<std::string>());
  if (!functional) bad_frame("unknown functional \"" + fn.get<std::string>() + "\"");
  f.functional = *functional;

  const json& rnum = require_field(doc, "relaxation_number");
  if (!rnum.is_number_integer() && !rnum.is_number_unsigned()) {
    bad_frame("relaxation_number must be an integer");
  }
  f.relaxation_number = rnum.get<int>();

  const json& rstep = require_field(doc, "relaxation_step");
  if (!rstep.is_number_integer() && !rstep.is_number_unsigned()) {
    bad_frame("relaxation_step must be an integer");
  }
  f.relaxation_step = rstep.get<int>();

  f.lattice = parse_mat3(require_field(doc, "lattice"), "lattice");

  const json& sp = require_field(doc, "species");
  if (!sp.is_array()) bad_frame("species must be an array of strings");
  f.species.reserve(sp.size());
  for (const auto& s : sp) {
    if (!s.is_string()) bad_frame("species must be an array of strings");
    f.species.push_back(s.get<std::string>());
  }

  f.positions = parse_rows(require_field(doc, "positions"), "positions");

  if (auto it = doc.find("energy"); it != doc.end() && !it->is_null()) {
    f.energy = require_number(*it, "energy");
  }
  if (auto it = doc.find("forces"); it != doc.end() && !it->is_null()) {
    f.forces = parse_rows(*it, "forces");
  }
  if (auto it = doc.find("stress"); it != doc.end() && !it->is_null()) {
    f.stress = parse_mat3(*it, "stress");
  }
  return f;
}

std::string serialize_frame(const Frame& frame) {
  std::string line = canonical_dump(frame_to_json(frame));
  line.push_back('\n');
  return line;
}

Frame parse_frame(std::string_view line) {
  json doc = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) {
    throw Error(Errc::ParseFailure, "invalid JSON line");
  }
  return frame_from_json(doc);
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  fs::path dir = path.parent_path();
  if (!dir.empty()) {
    std::error_code ec;
    fs::create_directories(dir, ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot open " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(Errc::IoFailure, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    throw Error(Errc::IoFailure,
                "rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(Errc::IoFailure, "read failed: " + path.string());
  return ss.str();
}

}  // namespace trajforge
