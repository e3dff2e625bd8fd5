#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "terraexpr/corpus.hpp"

namespace terraexpr {

enum class Partition { train = 0, val, test };
enum class SplitMode { strict, leaky };

const char* partition_name(Partition p);
Partition parse_partition(const std::string& text);
const char* split_mode_name(SplitMode m);
SplitMode parse_split_mode(const std::string& text);

struct SplitSpec {
  std::array<double, 3> ratios{0.7, 0.1, 0.2};
  SplitMode mode = SplitMode::strict;
  std::uint64_t seed = 0;
  std::map<std::string, Partition> assignment;

  void validate() const;
  std::vector<std::string> ids(Partition p) const;
  std::array<std::size_t, 3> sizes() const;
};

// strict: records grouped by source_id, groups shuffled and assigned whole so
// that each group lands where the midpoint of its records falls on the
// cumulative ratio scale. leaky: records assigned independently, stratified
// by label (round(ratio * n) per class for train and val).
SplitSpec split(const Corpus& corpus, SplitSpec spec);

// JSON Lines: a header object with mode, seed and ratios, then one
// {"id", "partition"} object per record.
void write_split(const std::filesystem::path& path, const SplitSpec& spec);
SplitSpec read_split(const std::filesystem::path& path);

}  // namespace terraexpr
