#include "terraexpr/split.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "terraexpr/random.hpp"

namespace terraexpr {

using nlohmann::json;

const char* partition_name(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::val: return "val";
    case Partition::test: return "test";
  }
  return "?";
}

Partition parse_partition(const std::string& text) {
  if (text == "train") return Partition::train;
  if (text == "val" || text == "validate") return Partition::val;
  if (text == "test") return Partition::test;
  throw std::invalid_argument("unknown partition '" + text + "'");
}

const char* split_mode_name(SplitMode m) { return m == SplitMode::strict ? "strict" : "leaky"; }

SplitMode parse_split_mode(const std::string& text) {
  if (text == "strict") return SplitMode::strict;
  if (text == "leaky") return SplitMode::leaky;
  throw std::invalid_argument("unknown split mode '" + text + "' (expected strict or leaky)");
}

void SplitSpec::validate() const {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw std::invalid_argument("split ratios must be non-negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must sum to 1 (got " + std::to_string(total) + ")");
  }
}

std::vector<std::string> SplitSpec::ids(Partition p) const {
  std::vector<std::string> out;
  for (const auto& [id, part] : assignment)
    if (part == p) out.push_back(id);
  return out;
}

std::array<std::size_t, 3> SplitSpec::sizes() const {
  std::array<std::size_t, 3> out{};
  for (const auto& [id, part] : assignment) ++out[static_cast<std::size_t>(part)];
  return out;
}

namespace {

Partition by_position(double position, const std::array<double, 3>& ratios) {
  if (position < ratios[0]) return Partition::train;
  if (position < ratios[0] + ratios[1]) return Partition::val;
  return Partition::test;
}

void split_strict(const Corpus& corpus, SplitSpec& spec) {
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& r : corpus.records()) groups[r.source_id].push_back(r.id);
  std::vector<const std::pair<const std::string, std::vector<std::string>>*> order;
  for (const auto& g : groups) order.push_back(&g);
  Rng rng(spec.seed);
  rng.shuffle(std::span(order));
  const double total = static_cast<double>(corpus.size());
  double before = 0.0;
  for (const auto* g : order) {
    const double size = static_cast<double>(g->second.size());
    const auto part = by_position((before + size / 2.0) / total, spec.ratios);
    for (const auto& id : g->second) spec.assignment[id] = part;
    before += size;
  }
}

void split_leaky(const Corpus& corpus, SplitSpec& spec) {
  // Stratum kExpressionCount collects unlabelled records.
  std::array<std::vector<std::string>, kExpressionCount + 1> strata;
  for (const auto& r : corpus.records()) {
    strata[r.label ? expression_code(*r.label) : kExpressionCount].push_back(r.id);
  }
  Rng rng(spec.seed);
  for (auto& ids : strata) {
    std::sort(ids.begin(), ids.end());
    rng.shuffle(std::span(ids));
    const double n = static_cast<double>(ids.size());
    const auto n_train = static_cast<std::size_t>(std::llround(spec.ratios[0] * n));
    const auto n_val = std::min(ids.size() - n_train, static_cast<std::size_t>(std::llround(spec.ratios[1] * n)));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      spec.assignment[ids[i]] = i < n_train ? Partition::train : i < n_train + n_val ? Partition::val : Partition::test;
    }
  }
}

}  // namespace

SplitSpec split(const Corpus& corpus, SplitSpec spec) {
  spec.validate();
  spec.assignment.clear();
  if (spec.mode == SplitMode::strict) {
    split_strict(corpus, spec);
  } else {
    split_leaky(corpus, spec);
  }
  return spec;
}

void write_split(const std::filesystem::path& path, const SplitSpec& spec) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  json header;
  header["mode"] = split_mode_name(spec.mode);
  header["seed"] = spec.seed;
  header["ratios"] = spec.ratios;
  out << header.dump() << '\n';
  for (const auto& [id, part] : spec.assignment) {
    out << json{{"id", id}, {"partition", partition_name(part)}}.dump() << '\n';
  }
  if (!out) throw std::runtime_error("failed writing split " + path.string());
}

SplitSpec read_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty split file");
  SplitSpec spec;
  try {
    const auto header = json::parse(line);
    spec.mode = parse_split_mode(header.at("mode").get<std::string>());
    spec.seed = header.at("seed").get<std::uint64_t>();
    spec.ratios = header.at("ratios").get<std::array<double, 3>>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = json::parse(line);
      const auto id = j.at("id").get<std::string>();
      if (!spec.assignment.emplace(id, parse_partition(j.at("partition").get<std::string>())).second) {
        throw std::runtime_error(path.string() + ": id '" + id + "' listed twice");
      }
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed split file: " + e.what());
  }
  return spec;
}

}  // namespace terraexpr
