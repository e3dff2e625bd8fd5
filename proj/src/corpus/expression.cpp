#include "terraexpr/expression.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace terraexpr {

namespace {

constexpr std::array<const char*, kExpressionCount> kExpressionNames{
    "Surprise", "Fear", "Disgust", "Happy", "Sad", "Anger", "Neutral"};
constexpr std::array<const char*, kPostureCount> kPostureNames{
    "kneeling", "general", "vertical", "cavalry", "civil_servant"};

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

const char* expression_name(Expression e) { return kExpressionNames.at(expression_code(e)); }

std::size_t expression_code(Expression e) { return static_cast<std::size_t>(e); }

Expression expression_from_code(std::size_t code) {
  if (code >= kExpressionCount) throw std::out_of_range("expression code " + std::to_string(code));
  return static_cast<Expression>(code);
}

std::optional<Expression> try_parse_expression(std::string_view text) {
  const auto key = lower(text);
  if (key == "angry") return Expression::anger;
  for (std::size_t i = 0; i < kExpressionCount; ++i)
    if (key == lower(kExpressionNames[i])) return static_cast<Expression>(i);
  return std::nullopt;
}

Expression parse_expression(std::string_view text) {
  if (auto e = try_parse_expression(text)) return *e;
  throw std::invalid_argument("unknown expression '" + std::string(text) + "'");
}

const char* posture_name(Posture p) { return kPostureNames.at(static_cast<std::size_t>(p)); }

Posture parse_posture(std::string_view text) {
  const auto key = lower(text);
  for (std::size_t i = 0; i < kPostureCount; ++i)
    if (key == kPostureNames[i]) return static_cast<Posture>(i);
  throw std::invalid_argument("unknown posture '" + std::string(text) + "'");
}

const char* origin_name(Origin o) { return o == Origin::collected ? "collected" : "generated"; }

Origin parse_origin(std::string_view text) {
  if (text == "collected") return Origin::collected;
  if (text == "generated") return Origin::generated;
  throw std::invalid_argument("unknown origin '" + std::string(text) + "'");
}

}  // namespace terraexpr
