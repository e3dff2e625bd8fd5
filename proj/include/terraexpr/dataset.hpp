#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "terraexpr/corpus.hpp"
#include "terraexpr/tensor.hpp"

namespace terraexpr {

// Decoded images of one partition, planar [3,R,R] per sample in [-1,1].
template <typename T>
struct LabeledImages {
  std::size_t resolution = 0;
  std::vector<std::string> ids;
  std::vector<std::size_t> labels;
  std::vector<T> pixels;

  std::size_t size() const { return ids.size(); }
  std::size_t sample_size() const { return 3 * resolution * resolution; }
  BasicTensor<T> batch(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> batch_labels(std::span<const std::size_t> indices) const;
};

// Loads the listed records (all records when `ids` is empty), resizing to
// `resolution`. Records without a label are skipped unless keep_unlabelled,
// in which case they get label 0.
template <typename T>
LabeledImages<T> load_images(const Corpus& corpus, const std::vector<std::string>& ids, std::size_t resolution,
                             bool keep_unlabelled = false);

}  // namespace terraexpr
