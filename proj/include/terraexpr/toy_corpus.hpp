#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "terraexpr/au.hpp"
#include "terraexpr/corpus.hpp"
#include "terraexpr/image.hpp"

namespace terraexpr {

// Seeded synthetic stand-in for a face corpus. Each identity is a collected
// Neutral source plus six generated records "<source>__<Expression>". A
// record's class shows as an oriented grating (angle code * pi / 7) over a
// smooth identity-specific background, with uniform pixel noise.
struct ToyCorpusConfig {
  std::size_t identities = 100;
  std::size_t resolution = 32;
  std::uint64_t seed = 0;
  double noise = 0.1;
  // false: the collected sources only.
  bool expressions = true;
};

Image toy_image(std::uint64_t identity_seed, Expression e, std::size_t resolution, double noise, std::uint64_t seed);

// Writes <root>/images/*.ppm and <root>/manifest.jsonl, returns the ingested
// corpus. Postures cycle over identities; each record carries the reference
// AU of its class.
Corpus make_toy_corpus(const std::filesystem::path& root, const ToyCorpusConfig& cfg,
                       const ReferenceAUs& refs = default_reference_aus());

}  // namespace terraexpr
