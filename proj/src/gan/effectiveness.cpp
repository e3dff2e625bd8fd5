#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "terraexpr/gan.hpp"

namespace terraexpr {

namespace {

MetricsReport train_and_test(const Corpus& corpus, const EffectivenessConfig& cfg, const char* arm) {
  const auto counts = class_counts(corpus);
  for (std::size_t c = 0; c < kExpressionCount; ++c) {
    if (counts[c] == 0) {
      throw std::invalid_argument(std::string("class ") + expression_name(expression_from_code(c)) +
                                  " is absent from the " + arm + " corpus");
    }
  }
  const auto spec = split(corpus, cfg.split);
  const std::size_t r = cfg.net.input_resolution;
  const auto train_set = load_images<double>(corpus, spec.ids(Partition::train), r);
  const auto val_set = load_images<double>(corpus, spec.ids(Partition::val), r);
  const auto test_set = load_images<double>(corpus, spec.ids(Partition::test), r);
  if (test_set.size() == 0) throw std::invalid_argument(std::string("the ") + arm + " corpus has an empty test partition");
  ResNet18<double> net(cfg.net, cfg.init_seed);
  train(net, train_set, val_set, cfg.train);
  return evaluate(net, test_set, cfg.train.batch_size);
}

// The comparison table spells the sixth class "Angry" and the average "Avg".
const char* column_name(std::size_t c) {
  return c == expression_code(Expression::anger) ? "Angry" : expression_name(expression_from_code(c));
}

}  // namespace

EffectivenessReport effectiveness_protocol(const Corpus& original, const Corpus& generated,
                                           const EffectivenessConfig& cfg) {
  EffectivenessReport report;
  report.original = train_and_test(original, cfg, "original");
  report.generated = train_and_test(generated, cfg, "generated");
  for (std::size_t c = 0; c < kExpressionCount; ++c) {
    report.gap[c] = std::abs(report.original.per_class_accuracy[c] - report.generated.per_class_accuracy[c]);
  }
  report.average_gap = std::abs(report.original.micro_average - report.generated.micro_average);
  return report;
}

std::string effectiveness_to_csv(const EffectivenessReport& report) {
  std::ostringstream out;
  out << "arm";
  for (std::size_t c = 0; c < kExpressionCount; ++c) out << ',' << column_name(c);
  out << ",Avg\n";
  char buf[40];
  auto row = [&](const char* name, const std::array<double, kExpressionCount>& v, double avg) {
    out << name;
    for (double x : v) {
      std::snprintf(buf, sizeof buf, "%.17g", x);
      out << ',' << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", avg);
    out << ',' << buf << '\n';
  };
  row("original", report.original.per_class_accuracy, report.original.micro_average);
  row("generated", report.generated.per_class_accuracy, report.generated.micro_average);
  row("gap", report.gap, report.average_gap);
  return out.str();
}

std::string effectiveness_table(const EffectivenessReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(10) << "" << std::right;
  for (std::size_t c = 0; c < kExpressionCount; ++c) out << std::setw(10) << column_name(c);
  out << std::setw(10) << "Avg" << '\n' << std::fixed << std::setprecision(3);
  auto row = [&](const char* name, const std::array<double, kExpressionCount>& v, double avg) {
    out << std::left << std::setw(10) << name << std::right;
    for (double x : v) out << std::setw(10) << x;
    out << std::setw(10) << avg << '\n';
  };
  row("original", report.original.per_class_accuracy, report.original.micro_average);
  row("generated", report.generated.per_class_accuracy, report.generated.micro_average);
  row("gap", report.gap, report.average_gap);
  return out.str();
}

}  // namespace terraexpr
