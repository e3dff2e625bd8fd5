#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "terraexpr/gan.hpp"
#include "terraexpr/resnet.hpp"
#include "terraexpr/split.hpp"
#include "terraexpr/train.hpp"

namespace terraexpr {

enum class Precision { oracle, fast };

// Which records of the manifest a command works on.
enum class OriginFilter { all, collected, generated };

struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path output = "out";
  std::optional<std::filesystem::path> split_file;  // default <output>/split.jsonl
  std::optional<std::filesystem::path> checkpoint;  // default <output>/checkpoint
  std::optional<std::filesystem::path> gan_dir;     // default <output>/gan
  std::optional<std::filesystem::path> references;  // default: built-in table
  std::optional<std::filesystem::path> store;       // default <output>/annotations.jsonl

  NetworkConfig net;
  TrainConfig train;
  GanTrainConfig gan;
  SplitSpec split;
  Precision precision = Precision::oracle;
  OriginFilter origin = OriginFilter::all;
  Partition eval_partition = Partition::test;
  std::uint64_t seed = 0;

  std::filesystem::path split_path() const { return split_file.value_or(output / "split.jsonl"); }
  std::filesystem::path checkpoint_path() const { return checkpoint.value_or(output / "checkpoint"); }
  std::filesystem::path gan_path() const { return gan_dir.value_or(output / "gan"); }
  std::filesystem::path store_path() const { return store.value_or(output / "annotations.jsonl"); }
  ReferenceAUs reference_aus() const;
  bool keep(const ImageRecord& r) const;
};

// Every violation found, one per entry.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

// "key = value" lines, '#' comments. Relative paths resolve against
// `base_dir`. `overrides` ("key=value") are applied after the text. The
// seed key feeds the train, split and gan seeds; TERRAEXPR_SEED, when set,
// replaces it. Throws ConfigError listing unknown keys, malformed values,
// failed constraints and missing paths.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir,
                           const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

// Every recognised key, in documentation order.
const std::vector<std::string>& run_config_keys();

}  // namespace terraexpr
