// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace trajforge {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;  // row-major: rows are lattice vectors

// Exchange-correlation functionals the dataset distinguishes. Enum order is
// the canonical presentation order used in manifests and reports.
enum class Functional { PBE, PBESol, SCAN, r2SCAN };

// Upstream databases. Enum order is canonical (used for quota tie-breaks and
// manifest ordering); the short tags double as id prefixes and directory names.
enum class SourceId { MaterialsProject, Alexandria, OQMD };

inline constexpr std::array<Functional, 4> kAllFunctionals = {
    Functional::PBE, Functional::PBESol, Functional::SCAN, Functional::r2SCAN};

inline constexpr std::array<SourceId, 3> kAllSources = {
    SourceId::MaterialsProject, SourceId::Alexandria, SourceId::OQMD};

std::string_view to_string(Functional f) noexcept;
std::string_view source_tag(SourceId s) noexcept;

std::optional<Functional> functional_from_string(std::string_view s) noexcept;
std::optional<SourceId> source_from_tag(std::string_view s) noexcept;

// Maps raw upstream functional labels (including legacy aliases such as "GGA"
// or case variants like "PBEsol"/"R2SCAN") onto the canonical enum. Returns
// nullopt for anything outside the supported set.
std::optional<Functional> functional_from_alias(std::string_view raw) noexcept;

inline double det3(const Mat3& m) noexcept {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

inline double norm3(const Vec3& v) noexcept {
  return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

}  // namespace trajforge
