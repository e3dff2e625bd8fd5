#include "terraexpr/corpus.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "terraexpr/image.hpp"

namespace terraexpr {

using nlohmann::json;

std::string record_to_line(const ImageRecord& r) {
  json j;
  j["id"] = r.id;
  j["source_id"] = r.source_id;
  j["path"] = r.path;
  j["origin"] = origin_name(r.origin);
  if (r.posture) j["posture"] = posture_name(*r.posture);
  if (r.label) j["label"] = expression_name(*r.label);
  j["landmark_ok"] = r.landmark_ok;
  if (r.au) j["au"] = r.au->values;
  return j.dump();
}

ImageRecord record_from_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw CorpusError(std::string("manifest line is not a JSON object: ") + e.what());
  }
  if (!j.is_object()) throw CorpusError("manifest line is not a JSON object");
  static const char* known[] = {"id", "source_id", "path", "origin", "posture", "label", "landmark_ok", "au"};
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known)) {
      throw CorpusError("unknown manifest key '" + key + "'");
    }
  }
  ImageRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.source_id = j.at("source_id").get<std::string>();
    r.path = j.at("path").get<std::string>();
    r.origin = parse_origin(j.at("origin").get<std::string>());
    if (j.contains("posture") && !j["posture"].is_null()) r.posture = parse_posture(j["posture"].get<std::string>());
    if (j.contains("label") && !j["label"].is_null()) r.label = parse_expression(j["label"].get<std::string>());
    r.landmark_ok = j.at("landmark_ok").get<bool>();
    if (j.contains("au") && !j["au"].is_null()) {
      const auto raw = j["au"].get<std::vector<double>>();
      if (raw.size() != kAuCount) throw CorpusError("au must hold " + std::to_string(kAuCount) + " values");
      std::array<double, kAuCount> values{};
      std::copy(raw.begin(), raw.end(), values.begin());
      r.au = AUVector(values);
    }
  } catch (const json::exception& e) {
    throw CorpusError(std::string("bad manifest record: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CorpusError(std::string("bad manifest record: ") + e.what());
  }
  if (r.id.empty()) throw CorpusError("manifest record with empty id");
  return r;
}

std::vector<ImageRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open manifest " + path.string());
  std::vector<ImageRecord> records;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      records.push_back(record_from_line(line));
    } catch (const CorpusError& e) {
      throw CorpusError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return records;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ImageRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto& r : records) out << record_to_line(r) << '\n';
  if (!out) throw CorpusError("failed writing manifest " + path.string());
}

Corpus::Corpus(std::vector<ImageRecord> records, std::filesystem::path root)
    : records_(std::move(records)), root_(std::move(root)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (!index_.emplace(records_[i].id, i).second) throw CorpusError("duplicate id '" + records_[i].id + "'");
  }
  for (const auto& r : records_) {
    if (r.origin == Origin::collected && r.source_id != r.id) {
      throw CorpusError("collected record '" + r.id + "' must be its own source (source_id '" + r.source_id + "')");
    }
    if (r.origin == Origin::generated) {
      if (r.source_id == r.id) throw CorpusError("generated record '" + r.id + "' names itself as source");
      if (!index_.count(r.source_id)) {
        throw CorpusError("record '" + r.id + "' has dangling source_id '" + r.source_id + "'");
      }
    }
  }
}

const ImageRecord& Corpus::at(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw CorpusError("no record with id '" + id + "'");
  return records_[it->second];
}

Corpus ingest(const std::filesystem::path& manifest_path, const IngestOptions& options) {
  Corpus corpus(read_manifest(manifest_path), manifest_path.parent_path());
  if (options.verify_images) {
    for (const auto& r : corpus.records()) {
      try {
        (void)read_ppm(corpus.image_path(r));
      } catch (const ImageError& e) {
        throw CorpusError("unreadable image for '" + r.id + "': " + e.what());
      }
    }
  }
  return corpus;
}

ClassCounts class_counts(const Corpus& corpus, const RecordFilter& filter) {
  ClassCounts counts{};
  for (const auto& r : corpus.records()) {
    if (!r.label || (filter && !filter(r))) continue;
    ++counts[expression_code(*r.label)];
  }
  return counts;
}

std::map<Posture, ClassCounts> class_counts_by_posture(const Corpus& corpus, const RecordFilter& filter) {
  std::map<Posture, ClassCounts> out;
  for (const auto& r : corpus.records()) {
    if (!r.label || !r.posture || (filter && !filter(r))) continue;
    ++out[*r.posture][expression_code(*r.label)];
  }
  return out;
}

}  // namespace terraexpr
