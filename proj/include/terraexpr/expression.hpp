#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace terraexpr {

// Canonical class codes, fixed across every file format and report.
enum class Expression : std::uint8_t { surprise = 0, fear, disgust, happy, sad, anger, neutral };

inline constexpr std::size_t kExpressionCount = 7;
inline constexpr std::array<Expression, kExpressionCount> kAllExpressions{
    Expression::surprise, Expression::fear,  Expression::disgust, Expression::happy,
    Expression::sad,      Expression::anger, Expression::neutral};

using ClassCounts = std::array<std::size_t, kExpressionCount>;

const char* expression_name(Expression e);
std::size_t expression_code(Expression e);
Expression expression_from_code(std::size_t code);
// Case-insensitive; "Angry" is accepted for Anger.
std::optional<Expression> try_parse_expression(std::string_view text);
Expression parse_expression(std::string_view text);

enum class Posture : std::uint8_t { kneeling = 0, general, vertical, cavalry, civil_servant };

inline constexpr std::size_t kPostureCount = 5;
inline constexpr std::array<Posture, kPostureCount> kAllPostures{
    Posture::kneeling, Posture::general, Posture::vertical, Posture::cavalry, Posture::civil_servant};

const char* posture_name(Posture p);
Posture parse_posture(std::string_view text);

enum class Origin : std::uint8_t { collected, generated };

const char* origin_name(Origin o);
Origin parse_origin(std::string_view text);

}  // namespace terraexpr
