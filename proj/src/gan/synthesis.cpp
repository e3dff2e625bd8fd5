#include "terraexpr/gan.hpp"
#include "terraexpr/image.hpp"

namespace terraexpr {

std::vector<ImageRecord> synthesize_corpus(Generator<double>& g, const Corpus& sources, const ReferenceAUs& refs,
                                           const std::filesystem::path& out_root) {
  std::vector<AUVector> targets;
  for (auto e : kAllExpressions) {
    auto it = refs.find(e);
    if (it == refs.end()) {
      throw std::invalid_argument(std::string("missing reference AU for expression ") + expression_name(e));
    }
    targets.push_back(it->second);
  }
  const std::size_t r = g.config.resolution;
  const auto aus = au_batch<double>(targets);
  std::filesystem::create_directories(out_root / "images");
  std::vector<ImageRecord> out;
  NoGradGuard guard;
  for (const auto& src : sources.records()) {
    if (src.origin != Origin::collected) continue;
    auto img = read_ppm(sources.image_path(src));
    if (img.width != r || img.height != r) img = resize_bilinear(img, r, r);
    std::vector<double> one;
    append_planar(img, one);
    std::vector<double> batch;
    for (std::size_t i = 0; i < kExpressionCount; ++i) batch.insert(batch.end(), one.begin(), one.end());
    const auto gen = g.forward(Tensor::from_data({kExpressionCount, 3, r, r}, std::move(batch)), aus, Mode::eval);
    const auto pixels = gen.output.data();
    for (std::size_t i = 0; i < kExpressionCount; ++i) {
      const auto e = kAllExpressions[i];
      ImageRecord rec;
      rec.id = src.id + "__" + expression_name(e);
      rec.source_id = src.id;
      rec.path = "images/" + rec.id + ".ppm";
      rec.origin = Origin::generated;
      rec.posture = src.posture;
      rec.label = e;
      rec.landmark_ok = src.landmark_ok;
      rec.au = targets[i];
      write_ppm(out_root / rec.path, image_from_planar<double>(pixels.subspan(i * 3 * r * r, 3 * r * r), r, r));
      out.push_back(std::move(rec));
    }
  }
  return out;
}

}  // namespace terraexpr
