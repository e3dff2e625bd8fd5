#include "terraexpr/au.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace terraexpr {

AUVector::AUVector(const std::array<double, kAuCount>& raw) {
  for (std::size_t i = 0; i < kAuCount; ++i) values[i] = std::clamp(raw[i], 0.0, 1.0);
}

ReferenceAUs parse_reference_aus(const std::string& text) {
  ReferenceAUs refs;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto where = "reference AUs line " + std::to_string(line_no) + ": ";
    std::istringstream row(line);
    std::string name;
    if (!(row >> name) || name[0] == '#') continue;
    const auto e = try_parse_expression(name);
    if (!e) throw std::invalid_argument(where + "unknown expression '" + name + "'");
    if (refs.count(*e)) throw std::invalid_argument(where + "duplicate expression '" + name + "'");
    std::array<double, kAuCount> raw{};
    std::size_t n = 0;
    std::string token;
    while (row >> token) {
      if (n == kAuCount) throw std::invalid_argument(where + "more than 17 values");
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(token, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != token.size()) throw std::invalid_argument(where + "'" + token + "' is not a number");
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(where + "value " + token + " outside [0,1]");
      raw[n++] = v;
    }
    if (n != kAuCount) throw std::invalid_argument(where + "expected 17 values, got " + std::to_string(n));
    refs.emplace(*e, AUVector(raw));
  }
  return refs;
}

std::string format_reference_aus(const ReferenceAUs& refs) {
  std::ostringstream out;
  char buf[40];
  for (const auto& [e, au] : refs) {
    out << expression_name(e);
    for (double v : au.values) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ' ' << buf;
    }
    out << '\n';
  }
  return out.str();
}

ReferenceAUs read_reference_aus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open reference AU file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_reference_aus(text.str());
}

void write_reference_aus(const std::filesystem::path& path, const ReferenceAUs& refs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write reference AU file " + path.string());
  out << format_reference_aus(refs);
}

ReferenceAUs default_reference_aus() {
  auto make = [](std::initializer_list<int> units) {
    std::array<double, kAuCount> raw{};
    for (int u : units) {
      const auto it = std::find(kAuUnits.begin(), kAuUnits.end(), u);
      raw[static_cast<std::size_t>(it - kAuUnits.begin())] = 0.8;
    }
    return AUVector(raw);
  };
  return {
      {Expression::surprise, make({1, 2, 5, 25, 26})},
      {Expression::fear, make({1, 2, 4, 5, 7, 20, 26})},
      {Expression::disgust, make({9, 10, 15, 17})},
      {Expression::happy, make({6, 12, 25})},
      {Expression::sad, make({1, 4, 15, 17})},
      {Expression::anger, make({4, 5, 7, 23})},
      {Expression::neutral, make({})},
  };
}

}  // namespace terraexpr
