#include "terraexpr/toy_corpus.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "terraexpr/random.hpp"

namespace terraexpr {

Image toy_image(std::uint64_t identity_seed, Expression e, std::size_t resolution, double noise, std::uint64_t seed) {
  Rng who(identity_seed);
  double base[3];
  for (auto& b : base) b = who.uniform(-0.3, 0.3);
  const double tilt = who.uniform(0.0, 2.0 * std::numbers::pi);
  const double tilt_amp = who.uniform(0.0, 0.2);

  Rng rng(seed);
  const double angle = static_cast<double>(expression_code(e)) * std::numbers::pi / 7.0;
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double freq = 3.0 * 2.0 * std::numbers::pi / static_cast<double>(resolution);
  const double r = static_cast<double>(resolution);

  Image img;
  img.width = img.height = resolution;
  img.rgb.resize(resolution * resolution * 3);
  for (std::size_t y = 0; y < resolution; ++y)
    for (std::size_t x = 0; x < resolution; ++x) {
      const double u = static_cast<double>(x) - r / 2, v = static_cast<double>(y) - r / 2;
      const double grating = 0.45 * std::cos(freq * (u * std::cos(angle) + v * std::sin(angle)) + phase);
      const double slope = tilt_amp * (u * std::cos(tilt) + v * std::sin(tilt)) / r;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double value = std::clamp(base[ch] + slope + grating + rng.uniform(-noise, noise), -1.0, 1.0);
        img.rgb[(y * resolution + x) * 3 + ch] = static_cast<std::uint8_t>(std::lround((value + 1.0) * 127.5));
      }
    }
  return img;
}

Corpus make_toy_corpus(const std::filesystem::path& root, const ToyCorpusConfig& cfg, const ReferenceAUs& refs) {
  if (cfg.resolution < 4) throw std::invalid_argument("toy corpus resolution must be >= 4");
  if (!(cfg.noise >= 0.0)) throw std::invalid_argument("toy corpus noise must be >= 0");
  for (auto e : kAllExpressions) {
    if (!refs.count(e)) throw std::invalid_argument(std::string("missing reference AU for ") + expression_name(e));
  }
  std::filesystem::create_directories(root / "images");
  std::vector<ImageRecord> records;
  for (std::size_t i = 0; i < cfg.identities; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "toy%04zu", i);
    const std::string source = name;
    const auto identity_seed = derive_seed(cfg.seed, "identity:" + source);
    const auto posture = kAllPostures[i % kPostureCount];
    for (auto e : kAllExpressions) {
      if (e != Expression::neutral && !cfg.expressions) continue;
      ImageRecord r;
      r.id = e == Expression::neutral ? source : source + "__" + expression_name(e);
      r.source_id = source;
      r.path = "images/" + r.id + ".ppm";
      r.origin = e == Expression::neutral ? Origin::collected : Origin::generated;
      r.posture = posture;
      r.label = e;
      r.au = refs.at(e);
      write_ppm(root / r.path, toy_image(identity_seed, e, cfg.resolution, cfg.noise, derive_seed(cfg.seed, r.id)));
      records.push_back(std::move(r));
    }
  }
  // Sources first so lineage resolves in manifest order.
  std::stable_partition(records.begin(), records.end(), [](const auto& r) { return r.origin == Origin::collected; });
  write_manifest(root / "manifest.jsonl", records);
  return Corpus(std::move(records), root);
}

}  // namespace terraexpr
