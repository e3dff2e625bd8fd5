#include "terraexpr/reports.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "terraexpr/dataset.hpp"

namespace terraexpr {

int percent_tenths(std::size_t count, std::size_t size) {
  if (size == 0) throw ReportError("percentage of an empty group");
  // round(1000 * count / size), halves up, in integers.
  return static_cast<int>((2000 * count + size) / (2 * size));
}

std::string format_tenths(int tenths) {
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

DistributionReport distribution_report(
    const std::vector<std::pair<std::string, std::vector<std::size_t>>>& groups) {
  DistributionReport report;
  for (const auto& [name, classes] : groups) {
    if (classes.empty()) throw ReportError("empty group '" + name + "'");
    DistributionRow row;
    row.group = name;
    row.size = classes.size();
    for (auto c : classes) {
      if (c >= kExpressionCount) throw ReportError("class code out of range in group '" + name + "'");
      ++row.counts[c];
    }
    for (std::size_t c = 0; c < kExpressionCount; ++c) row.tenths[c] = percent_tenths(row.counts[c], row.size);
    report.rows.push_back(std::move(row));
  }
  return report;
}

DistributionReport distribution_report(const Corpus& corpus, const std::map<std::string, std::size_t>& predictions) {
  std::map<Posture, std::vector<std::size_t>> by_posture;
  for (const auto& [id, cls] : predictions) {
    const auto& r = corpus.at(id);
    if (!r.posture) throw ReportError("record '" + id + "' has no posture");
    by_posture[*r.posture].push_back(cls);
  }
  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
  for (auto p : kAllPostures) {
    auto it = by_posture.find(p);
    if (it != by_posture.end()) groups.emplace_back(posture_name(p), std::move(it->second));
  }
  return distribution_report(groups);
}

std::string distribution_to_csv(const DistributionReport& report) {
  std::ostringstream out;
  out << "posture,size";
  for (auto e : kAllExpressions) out << ',' << expression_name(e);
  out << '\n';
  for (const auto& row : report.rows) {
    out << row.group << ',' << row.size;
    for (auto t : row.tenths) out << ',' << format_tenths(t);
    out << '\n';
  }
  return out.str();
}

std::string distribution_table(const DistributionReport& report) {
  std::size_t first = 7;
  for (const auto& row : report.rows) first = std::max(first, row.group.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(first)) << "posture" << std::right << std::setw(6) << "n";
  for (auto e : kAllExpressions) out << std::setw(10) << expression_name(e);
  out << '\n';
  for (const auto& row : report.rows) {
    out << std::left << std::setw(static_cast<int>(first)) << row.group << std::right << std::setw(6) << row.size;
    for (auto t : row.tenths) out << std::setw(10) << (format_tenths(t) + "%");
    out << '\n';
  }
  return out.str();
}

SimilarityReport similarity_from_embeddings(const std::vector<std::vector<double>>& embeddings) {
  const std::size_t n = embeddings.size();
  if (n < 2) throw ReportError("similarity needs at least 2 images, got " + std::to_string(n));
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (embeddings[i].size() != embeddings[0].size()) throw ReportError("embedding sizes differ");
    norms[i] = std::sqrt(std::inner_product(embeddings[i].begin(), embeddings[i].end(), embeddings[i].begin(), 0.0));
  }
  SimilarityReport report;
  report.count = n;
  report.matrix.assign(n * n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    report.matrix[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      if (norms[i] > 0.0 && norms[j] > 0.0) {
        s = std::inner_product(embeddings[i].begin(), embeddings[i].end(), embeddings[j].begin(), 0.0) /
            (norms[i] * norms[j]);
        s = std::clamp(s, -1.0, 1.0);
      }
      report.matrix[i * n + j] = s;
      report.matrix[j * n + i] = s;
      total += s;
    }
  }
  report.mean_pairwise = total / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
  return report;
}

template <typename T>
SimilarityReport similarity_report(ResNet18<T>& net, const Corpus& corpus, const std::vector<std::string>& ids,
                                   std::size_t batch_size) {
  const auto data = load_images<T>(corpus, ids, net.config().input_resolution, true);
  if (data.size() < 2) throw ReportError("similarity needs at least 2 images, got " + std::to_string(data.size()));
  NoGradGuard guard;
  std::vector<std::vector<double>> embeddings;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(start + batch_size, data.size()); ++i) idx.push_back(i);
    const auto features = net.embed(data.batch(idx), Mode::eval);
    const auto values = features.data();
    const std::size_t d = features.dim(1);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      embeddings.emplace_back(values.begin() + static_cast<std::ptrdiff_t>(b * d),
                              values.begin() + static_cast<std::ptrdiff_t>((b + 1) * d));
    }
  }
  return similarity_from_embeddings(embeddings);
}

std::string similarity_to_csv(const SimilarityReport& report, const std::vector<std::string>& ids) {
  if (ids.size() != report.count) throw ReportError("similarity CSV: id count does not match the matrix");
  std::ostringstream out;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", report.mean_pairwise);
  out << "# mean_pairwise," << buf << "\nid";
  for (const auto& id : ids) out << ',' << id;
  out << '\n';
  for (std::size_t i = 0; i < report.count; ++i) {
    out << ids[i];
    for (std::size_t j = 0; j < report.count; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", report.at(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

template SimilarityReport similarity_report(ResNet18<double>&, const Corpus&, const std::vector<std::string>&,
                                            std::size_t);
template SimilarityReport similarity_report(ResNet18<float>&, const Corpus&, const std::vector<std::string>&,
                                            std::size_t);

}  // namespace terraexpr
