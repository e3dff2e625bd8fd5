#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "terraexpr/expression.hpp"

namespace terraexpr {

using ConfusionMatrix = std::array<std::array<std::size_t, kExpressionCount>, kExpressionCount>;

// Rows are true classes. A class without samples has accuracy 0 and is left
// out of the macro average.
struct MetricsReport {
  ConfusionMatrix confusion{};
  std::array<double, kExpressionCount> per_class_accuracy{};
  double micro_average = 0.0;
  double macro_average = 0.0;

  static MetricsReport from_confusion(const ConfusionMatrix& confusion);

  std::size_t support(std::size_t cls) const;
  std::size_t total() const;
  bool operator==(const MetricsReport&) const = default;
};

MetricsReport metrics_from_predictions(std::span<const std::size_t> truth, std::span<const std::size_t> predicted);

// CSV: header "metric,<classes>,Average"; rows accuracy, macro, support and
// one confusion:<class> row per true class. Values use 17 significant
// digits so a report reads back identically.
std::string metrics_to_csv(const MetricsReport& report);
MetricsReport metrics_from_csv(const std::string& text);
void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport read_metrics_csv(const std::filesystem::path& path);

// Aligned text table, one accuracy row per (label, report).
std::string metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows, int decimals = 3);

}  // namespace terraexpr
