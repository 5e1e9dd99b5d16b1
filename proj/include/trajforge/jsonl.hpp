// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "trajforge/frame.hpp"

namespace trajforge {

using json = nlohmann::json;

// Shortest decimal text that parses back to exactly the same double. Bare
// integer forms gain a ".0" suffix (and -0.0 renders as "-0.0") so the value
// stays a double — and keeps its sign bit — through any JSON parser. Throws
// std::invalid_argument on non-finite input: NaN/Inf must never reach the
// serializer.
std::string format_double(double value);

// Canonical serialization: object keys in ascending byte order, no
// whitespace, doubles via format_double, UTF-8 passed through. Two documents
// are byte-identical iff they are semantically identical, which is what makes
// shard hashes and manifests reproducible.
std::string canonical_dump(const json& doc);
void canonical_dump_append(std::string& out, const json& doc);

// Frame <-> JSON. Serialized frames carry their fields in canonical key
// order; optional targets that are absent are omitted entirely (never null).
json frame_to_json(const Frame& frame);
Frame frame_from_json(const json& doc);

// One frame per line ("\n"-terminated lines, no padding).
std::string serialize_frame(const Frame& frame);
Frame parse_frame(std::string_view line);  // throws ParseFailure

// Writes content to path via a temp file + atomic rename so readers never
// observe a torn file. Creates parent directories as needed.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);  // throws IoFailure

}  // namespace trajforge
