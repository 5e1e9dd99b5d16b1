// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace trajforge {

inline constexpr int kNumElements = 118;

// Element symbols indexed by atomic number - 1 (H..Og).
extern const std::array<std::string_view, kNumElements> kElementSymbols;

// 0-based index (Z-1) for a chemical symbol, or nullopt if unknown.
std::optional<int> element_index(std::string_view symbol) noexcept;

inline bool is_known_element(std::string_view symbol) noexcept {
  return element_index(symbol).has_value();
}

}  // namespace trajforge
