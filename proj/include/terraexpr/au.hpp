#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <string>

#include "terraexpr/expression.hpp"

namespace terraexpr {

inline constexpr std::size_t kAuCount = 17;

// Unit order: AU1 2 4 5 6 7 9 10 12 14 15 17 20 23 25 26 45.
inline constexpr std::array<int, kAuCount> kAuUnits{1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 17, 20, 23, 25, 26, 45};

// Action-unit activation magnitudes, each clipped to [0, 1].
struct AUVector {
  std::array<double, kAuCount> values{};

  AUVector() = default;
  explicit AUVector(const std::array<double, kAuCount>& raw);

  double operator[](std::size_t i) const { return values[i]; }
  bool operator==(const AUVector&) const = default;
};

using ReferenceAUs = std::map<Expression, AUVector>;

// Text table, one line per expression: "<Expression> <17 reals in [0,1]>".
// Blank lines and lines starting with '#' are skipped. Out-of-range values,
// wrong counts, unknown names and duplicates are errors.
ReferenceAUs parse_reference_aus(const std::string& text);
std::string format_reference_aus(const ReferenceAUs& refs);
ReferenceAUs read_reference_aus(const std::filesystem::path& path);
void write_reference_aus(const std::filesystem::path& path, const ReferenceAUs& refs);

// Prototype activations of the seven classes (Neutral all zero).
ReferenceAUs default_reference_aus();

}  // namespace terraexpr
