#include "terraexpr/dataset.hpp"

#include "terraexpr/image.hpp"

namespace terraexpr {

template <typename T>
BasicTensor<T> LabeledImages<T>::batch(std::span<const std::size_t> indices) const {
  const std::size_t n = sample_size();
  std::vector<T> data(indices.size() * n);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    std::copy_n(pixels.begin() + static_cast<std::ptrdiff_t>(indices[b] * n), n,
                data.begin() + static_cast<std::ptrdiff_t>(b * n));
  }
  return BasicTensor<T>::from_data({indices.size(), 3, resolution, resolution}, std::move(data));
}

template <typename T>
std::vector<std::size_t> LabeledImages<T>::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels[i]);
  return out;
}

template <typename T>
LabeledImages<T> load_images(const Corpus& corpus, const std::vector<std::string>& ids, std::size_t resolution,
                             bool keep_unlabelled) {
  LabeledImages<T> out;
  out.resolution = resolution;
  auto add = [&](const ImageRecord& r) {
    if (!r.label && !keep_unlabelled) return;
    const auto image = resize_bilinear(read_ppm(corpus.image_path(r)), resolution, resolution);
    append_planar(image, out.pixels);
    out.ids.push_back(r.id);
    out.labels.push_back(r.label ? expression_code(*r.label) : 0);
  };
  if (ids.empty()) {
    for (const auto& r : corpus.records()) add(r);
  } else {
    for (const auto& id : ids) add(corpus.at(id));
  }
  return out;
}

template struct LabeledImages<double>;
template struct LabeledImages<float>;
template LabeledImages<double> load_images(const Corpus&, const std::vector<std::string>&, std::size_t, bool);
template LabeledImages<float> load_images(const Corpus&, const std::vector<std::string>&, std::size_t, bool);

}  // namespace terraexpr
