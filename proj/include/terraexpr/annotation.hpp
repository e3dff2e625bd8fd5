#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "terraexpr/expression.hpp"

namespace terraexpr {

struct AnnotationRecord {
  std::string image_id;
  std::string annotator_id;
  std::vector<Expression> choices;  // 1 to 3 distinct classes
  std::string timestamp;            // RFC 3339

  bool operator==(const AnnotationRecord&) const = default;
};

class AnnotationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Every violated invariant, empty when the record is valid.
std::vector<std::string> annotation_violations(const AnnotationRecord& record);
void validate_annotation(const AnnotationRecord& record);

std::string annotation_to_line(const AnnotationRecord& record);
AnnotationRecord annotation_from_line(const std::string& line);
// "Sad,Anger" <-> choices
std::string format_choices(const std::vector<Expression>& choices);
std::vector<Expression> parse_choices(const std::string& text);

std::string rfc3339_now();
bool is_rfc3339(const std::string& text);

enum class TiePolicy { strict_majority, ordered };

struct AggregateOutcome {
  ClassCounts votes{};
  std::size_t annotators = 0;
  std::optional<Expression> label;  // empty when unresolved
};

// One vote per chosen class per record. The class with strictly most votes
// wins; ties are unresolved (strict_majority) or go to the lowest class code
// (ordered).
std::map<std::string, AggregateOutcome> aggregate_annotations(const std::vector<AnnotationRecord>& records,
                                                              TiePolicy policy = TiePolicy::strict_majority);

enum class AppendResult { appended, duplicate };

// Append-only JSON Lines file. Appends take an exclusive file lock, pick up
// lines written by other processes, reject (image, annotator) duplicates and
// write the whole line in one call.
class AnnotationStore {
 public:
  explicit AnnotationStore(std::filesystem::path path);

  AppendResult append(const AnnotationRecord& record);
  std::vector<AnnotationRecord> records();
  bool has(const std::string& image_id, const std::string& annotator_id);
  std::size_t size();
  const std::filesystem::path& path() const { return path_; }

 private:
  void sync_locked();

  std::filesystem::path path_;
  std::mutex mutex_;
  std::vector<AnnotationRecord> records_;
  std::set<std::pair<std::string, std::string>> seen_;
  std::uintmax_t offset_ = 0;
};

}  // namespace terraexpr
