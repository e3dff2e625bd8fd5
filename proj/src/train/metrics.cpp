#include "terraexpr/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace terraexpr {

MetricsReport MetricsReport::from_confusion(const ConfusionMatrix& confusion) {
  MetricsReport r;
  r.confusion = confusion;
  std::size_t trace = 0, total = 0, present = 0;
  double macro = 0.0;
  for (std::size_t c = 0; c < kExpressionCount; ++c) {
    const std::size_t row = r.support(c);
    trace += confusion[c][c];
    total += row;
    if (row == 0) continue;
    r.per_class_accuracy[c] = static_cast<double>(confusion[c][c]) / static_cast<double>(row);
    macro += r.per_class_accuracy[c];
    ++present;
  }
  r.micro_average = total ? static_cast<double>(trace) / static_cast<double>(total) : 0.0;
  r.macro_average = present ? macro / static_cast<double>(present) : 0.0;
  return r;
}

std::size_t MetricsReport::support(std::size_t cls) const {
  std::size_t n = 0;
  for (auto v : confusion[cls]) n += v;
  return n;
}

std::size_t MetricsReport::total() const {
  std::size_t n = 0;
  for (std::size_t c = 0; c < kExpressionCount; ++c) n += support(c);
  return n;
}

MetricsReport metrics_from_predictions(std::span<const std::size_t> truth, std::span<const std::size_t> predicted) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("truth and predictions differ in length");
  ConfusionMatrix m{};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= kExpressionCount || predicted[i] >= kExpressionCount) {
      throw std::out_of_range("class index outside [0, 7)");
    }
    ++m[truth[i]][predicted[i]];
  }
  return MetricsReport::from_confusion(m);
}

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream in(line);
  std::string cell;
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string header_line() {
  std::string h = "metric";
  for (auto e : kAllExpressions) h += std::string(",") + expression_name(e);
  return h + ",Average";
}

}  // namespace

std::string metrics_to_csv(const MetricsReport& r) {
  std::ostringstream out;
  out << header_line() << '\n';
  out << "accuracy";
  for (double v : r.per_class_accuracy) out << ',' << g17(v);
  out << ',' << g17(r.micro_average) << '\n';
  out << "macro";
  for (std::size_t c = 0; c < kExpressionCount; ++c) out << ',';
  out << ',' << g17(r.macro_average) << '\n';
  out << "support";
  for (std::size_t c = 0; c < kExpressionCount; ++c) out << ',' << r.support(c);
  out << ',' << r.total() << '\n';
  for (std::size_t c = 0; c < kExpressionCount; ++c) {
    out << "confusion:" << expression_name(expression_from_code(c));
    for (auto v : r.confusion[c]) out << ',' << v;
    out << ',' << r.support(c) << '\n';
  }
  return out.str();
}

MetricsReport metrics_from_csv(const std::string& text) {
  std::stringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != header_line()) throw std::runtime_error("metrics CSV: unexpected header");
  ConfusionMatrix m{};
  std::array<bool, kExpressionCount> seen{};
  std::vector<std::string> accuracy_row, macro_row;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != kExpressionCount + 2) throw std::runtime_error("metrics CSV: wrong column count in '" + line + "'");
    if (cells[0].rfind("confusion:", 0) == 0) {
      const auto cls = expression_code(parse_expression(cells[0].substr(10)));
      for (std::size_t k = 0; k < kExpressionCount; ++k) m[cls][k] = std::stoull(cells[k + 1]);
      seen[cls] = true;
    } else if (cells[0] == "accuracy") {
      accuracy_row = cells;
    } else if (cells[0] == "macro") {
      macro_row = cells;
    } else if (cells[0] != "support") {
      throw std::runtime_error("metrics CSV: unknown row '" + cells[0] + "'");
    }
  }
  for (bool s : seen)
    if (!s) throw std::runtime_error("metrics CSV: missing confusion row");
  auto report = MetricsReport::from_confusion(m);
  // The derived rows must agree with the confusion matrix.
  if (!accuracy_row.empty()) {
    for (std::size_t c = 0; c < kExpressionCount; ++c)
      if (std::stod(accuracy_row[c + 1]) != report.per_class_accuracy[c]) {
        throw std::runtime_error("metrics CSV: accuracy row disagrees with confusion matrix");
      }
    if (std::stod(accuracy_row.back()) != report.micro_average) {
      throw std::runtime_error("metrics CSV: Average disagrees with confusion matrix");
    }
  }
  if (!macro_row.empty() && std::stod(macro_row.back()) != report.macro_average) {
    throw std::runtime_error("metrics CSV: macro disagrees with confusion matrix");
  }
  return report;
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << metrics_to_csv(report);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

MetricsReport read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return metrics_from_csv(buf.str());
}

std::string metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows, int decimals) {
  std::vector<std::string> header{""};
  for (auto e : kAllExpressions) header.emplace_back(expression_name(e));
  header.emplace_back("Average");
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& [label, r] : rows) {
    std::vector<std::string> row{label};
    auto fmt = [&](double v) {
      std::ostringstream s;
      s << std::fixed << std::setprecision(decimals) << v;
      return s.str();
    };
    for (std::size_t c = 0; c < kExpressionCount; ++c) row.push_back(r.support(c) ? fmt(r.per_class_accuracy[c]) : "-");
    row.push_back(fmt(r.micro_average));
    cells.push_back(row);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  std::ostringstream out;
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << (i ? "  " : "") << std::setw(static_cast<int>(width[i])) << (i ? std::right : std::left) << row[i];
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace terraexpr
