#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "terraexpr/au.hpp"
#include "terraexpr/expression.hpp"

namespace terraexpr {

struct ImageRecord {
  std::string id;
  std::string source_id;  // own id when collected, parent id when generated
  std::string path;       // relative to the manifest directory
  Origin origin = Origin::collected;
  std::optional<Posture> posture;
  std::optional<Expression> label;
  bool landmark_ok = true;
  std::optional<AUVector> au;

  bool operator==(const ImageRecord&) const = default;
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One JSON object per line, LF terminated.
std::string record_to_line(const ImageRecord& record);
ImageRecord record_from_line(const std::string& line);

std::vector<ImageRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ImageRecord>& records);

// Immutable, validated set of records. Image paths resolve against root().
class Corpus {
 public:
  Corpus() = default;
  // Checks id uniqueness and lineage; throws CorpusError naming the record.
  Corpus(std::vector<ImageRecord> records, std::filesystem::path root);

  const std::vector<ImageRecord>& records() const { return records_; }
  const std::filesystem::path& root() const { return root_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const ImageRecord& at(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  std::filesystem::path image_path(const ImageRecord& record) const { return root_ / record.path; }

  bool operator==(const Corpus& other) const { return records_ == other.records_; }

 private:
  std::vector<ImageRecord> records_;
  std::filesystem::path root_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct IngestOptions {
  bool verify_images = true;
};

// Reads and validates a manifest; with verify_images every referenced file
// must be a readable image.
Corpus ingest(const std::filesystem::path& manifest_path, const IngestOptions& options = {});

using RecordFilter = std::function<bool(const ImageRecord&)>;

// Labelled records only, canonical class order.
ClassCounts class_counts(const Corpus& corpus, const RecordFilter& filter = {});
std::map<Posture, ClassCounts> class_counts_by_posture(const Corpus& corpus, const RecordFilter& filter = {});

}  // namespace terraexpr
