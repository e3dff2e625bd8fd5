#include <set>

#include "doctest.h"
#include "scratch.hpp"
#include "terraexpr/split.hpp"

using namespace terraexpr;
using testing_support::ScratchDir;

namespace {

// `groups` sources, each with `per_group` generated children across classes.
Corpus grouped_corpus(std::size_t groups, std::size_t per_group) {
  std::vector<ImageRecord> records;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::string src = "src" + std::to_string(g);
    records.push_back({src, src, src + ".ppm", Origin::collected, {}, expression_from_code(g % 7), true, {}});
    for (std::size_t k = 1; k < per_group; ++k) {
      const std::string id = src + "__" + std::to_string(k);
      records.push_back({id, src, id + ".ppm", Origin::generated, {}, expression_from_code(k % 7), true, {}});
    }
  }
  return Corpus(records, ".");
}

}  // namespace

TEST_CASE("strict split of 10 groups of 7") {
  const auto corpus = grouped_corpus(10, 7);
  SplitSpec spec;
  spec.seed = 3;
  const auto out = split(corpus, spec);
  CHECK(out.sizes() == std::array<std::size_t, 3>{49, 7, 14});
  std::map<std::string, std::set<Partition>> parts;
  for (const auto& r : corpus.records()) parts[r.source_id].insert(out.assignment.at(r.id));
  for (const auto& [src, p] : parts) CHECK(p.size() == 1);
}

TEST_CASE("strict split keeps groups whole for many seeds and uneven groups") {
  std::vector<ImageRecord> records;
  for (std::size_t g = 0; g < 37; ++g) {
    const std::string src = "s" + std::to_string(g);
    records.push_back({src, src, "p", Origin::collected, {}, {}, true, {}});
    for (std::size_t k = 0; k < g % 5; ++k) {
      const std::string id = src + "_" + std::to_string(k);
      records.push_back({id, src, "p", Origin::generated, {}, {}, true, {}});
    }
  }
  Corpus corpus(records, ".");
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SplitSpec spec;
    spec.seed = seed;
    const auto out = split(corpus, spec);
    CHECK(out.assignment.size() == corpus.size());
    std::map<std::string, std::set<Partition>> parts;
    for (const auto& r : corpus.records()) parts[r.source_id].insert(out.assignment.at(r.id));
    for (const auto& [src, p] : parts) CHECK(p.size() == 1);
    const auto sizes = out.sizes();
    const double n = static_cast<double>(corpus.size());
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(static_cast<double>(sizes[i]) - spec.ratios[i] * n) <= 5.0);
  }
}

TEST_CASE("split determinism and validation") {
  const auto corpus = grouped_corpus(30, 7);
  SplitSpec spec;
  spec.seed = 9;
  CHECK(split(corpus, spec).assignment == split(corpus, spec).assignment);
  spec.seed = 10;
  CHECK(split(corpus, spec).assignment != split(corpus, SplitSpec{}).assignment);
  spec.ratios = {0.7, 0.1, 0.3};
  CHECK_THROWS_AS(split(corpus, spec), std::invalid_argument);
  spec.ratios = {0.7, 0.1, 0.2 + 5e-10};
  CHECK_NOTHROW(split(corpus, spec));
}

TEST_CASE("leaky split stratifies by class") {
  const auto corpus = grouped_corpus(100, 7);
  SplitSpec spec;
  spec.mode = SplitMode::leaky;
  spec.seed = 4;
  const auto out = split(corpus, spec);
  const auto totals = class_counts(corpus);
  for (std::size_t c = 0; c < kExpressionCount; ++c) {
    std::array<double, 3> got{};
    for (const auto& r : corpus.records())
      if (expression_code(*r.label) == c) got[static_cast<std::size_t>(out.assignment.at(r.id))] += 1;
    for (std::size_t p = 0; p < 3; ++p) CHECK(std::abs(got[p] - spec.ratios[p] * totals[c]) <= 1.0);
  }
}

TEST_CASE("split file round trip") {
  ScratchDir dir("split_io");
  const auto corpus = grouped_corpus(10, 7);
  SplitSpec spec;
  spec.seed = 1;
  const auto out = split(corpus, spec);
  write_split(dir.path() / "split.jsonl", out);
  const auto back = read_split(dir.path() / "split.jsonl");
  CHECK(back.assignment == out.assignment);
  CHECK(back.seed == 1);
  CHECK(back.mode == SplitMode::strict);
  CHECK(back.ratios == out.ratios);
}
