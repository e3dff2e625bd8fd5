#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "terraexpr/corpus.hpp"
#include "terraexpr/resnet.hpp"

namespace terraexpr {

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// count/size as a percentage in tenths, rounded half up: 7/18 -> 389.
int percent_tenths(std::size_t count, std::size_t size);
// 389 -> "38.9"
std::string format_tenths(int tenths);

struct DistributionRow {
  std::string group;
  std::size_t size = 0;
  ClassCounts counts{};
  std::array<int, kExpressionCount> tenths{};
};

struct DistributionReport {
  std::vector<DistributionRow> rows;
};

// One row per named group of class codes. Throws ReportError on an empty group.
DistributionReport distribution_report(const std::vector<std::pair<std::string, std::vector<std::size_t>>>& groups);

// Groups the predicted (or, when absent, labelled) class of every listed
// record by posture, in canonical posture order; postures with no records
// are omitted. Every listed record must carry a posture.
DistributionReport distribution_report(const Corpus& corpus, const std::map<std::string, std::size_t>& predictions);

// posture,size,Surprise,...,Neutral with 1-decimal percentages.
std::string distribution_to_csv(const DistributionReport& report);
std::string distribution_table(const DistributionReport& report);

// Cosine similarity of embedding vectors. Diagonal is exactly 1; a pair
// involving a zero vector scores 0.
struct SimilarityReport {
  std::size_t count = 0;
  std::vector<double> matrix;  // row-major count x count
  double mean_pairwise = 0.0;  // over i < j

  double at(std::size_t i, std::size_t j) const { return matrix[i * count + j]; }
};

SimilarityReport similarity_from_embeddings(const std::vector<std::vector<double>>& embeddings);

// Embeds the listed records (all when empty) with the network's penultimate
// features. Throws ReportError with fewer than 2 images.
template <typename T>
SimilarityReport similarity_report(ResNet18<T>& net, const Corpus& corpus, const std::vector<std::string>& ids,
                                   std::size_t batch_size = 32);

std::string similarity_to_csv(const SimilarityReport& report, const std::vector<std::string>& ids);

}  // namespace terraexpr
