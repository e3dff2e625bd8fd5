#include "terraexpr/annotation.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <regex>
#include <sstream>

#include "json.hpp"

namespace terraexpr {

using nlohmann::json;

std::vector<std::string> annotation_violations(const AnnotationRecord& r) {
  std::vector<std::string> problems;
  if (r.image_id.empty()) problems.push_back("image_id must not be empty");
  if (r.annotator_id.empty()) problems.push_back("annotator_id must not be empty");
  if (r.choices.empty() || r.choices.size() > 3) {
    problems.push_back("choices must name 1 to 3 expression categories (got " + std::to_string(r.choices.size()) + ")");
  }
  auto sorted = r.choices;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) problems.push_back("choices must be distinct");
  if (!is_rfc3339(r.timestamp)) problems.push_back("timestamp must be RFC 3339 (got '" + r.timestamp + "')");
  return problems;
}

void validate_annotation(const AnnotationRecord& record) {
  const auto problems = annotation_violations(record);
  if (problems.empty()) return;
  std::string msg;
  for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
  throw AnnotationError(msg);
}

std::string format_choices(const std::vector<Expression>& choices) {
  std::string out;
  for (auto c : choices) out += (out.empty() ? "" : ",") + std::string(expression_name(c));
  return out;
}

std::vector<Expression> parse_choices(const std::string& text) {
  std::vector<Expression> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto first = item.find_first_not_of(' ');
    const auto last = item.find_last_not_of(' ');
    if (first == std::string::npos) throw AnnotationError("empty expression name in choices");
    const auto name = item.substr(first, last - first + 1);
    const auto e = try_parse_expression(name);
    if (!e) throw AnnotationError("unknown expression '" + name + "' in choices");
    out.push_back(*e);
  }
  return out;
}

std::string annotation_to_line(const AnnotationRecord& r) {
  json j;
  j["image_id"] = r.image_id;
  j["annotator_id"] = r.annotator_id;
  j["choices"] = format_choices(r.choices);
  j["timestamp"] = r.timestamp;
  return j.dump();
}

AnnotationRecord annotation_from_line(const std::string& line) {
  try {
    const auto j = json::parse(line);
    AnnotationRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.annotator_id = j.at("annotator_id").get<std::string>();
    r.choices = parse_choices(j.at("choices").get<std::string>());
    r.timestamp = j.at("timestamp").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw AnnotationError(std::string("bad annotation line: ") + e.what());
  }
}

std::string rfc3339_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool is_rfc3339(const std::string& text) {
  static const std::regex pattern(
      R"(\d{4}-(0[1-9]|1[0-2])-(0[1-9]|[12]\d|3[01])[Tt]([01]\d|2[0-3]):[0-5]\d:([0-5]\d|60)(\.\d+)?([Zz]|[+-]([01]\d|2[0-3]):[0-5]\d))");
  return std::regex_match(text, pattern);
}

std::map<std::string, AggregateOutcome> aggregate_annotations(const std::vector<AnnotationRecord>& records,
                                                              TiePolicy policy) {
  std::map<std::string, AggregateOutcome> out;
  for (const auto& r : records) {
    auto& agg = out[r.image_id];
    ++agg.annotators;
    for (auto c : r.choices) ++agg.votes[expression_code(c)];
  }
  for (auto& [id, agg] : out) {
    const auto best = std::max_element(agg.votes.begin(), agg.votes.end());
    if (*best == 0) continue;
    const auto ties = std::count(agg.votes.begin(), agg.votes.end(), *best);
    if (ties == 1 || policy == TiePolicy::ordered) {
      agg.label = expression_from_code(static_cast<std::size_t>(best - agg.votes.begin()));
    }
  }
  return out;
}

namespace {

class FileLock {
 public:
  explicit FileLock(const std::filesystem::path& path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw std::runtime_error("annotation store not writable: " + path.string() + ": " + std::strerror(errno));
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw std::runtime_error("cannot lock annotation store " + path.string());
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;
  int fd() const { return fd_; }

 private:
  int fd_ = -1;
};

}  // namespace

AnnotationStore::AnnotationStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::lock_guard guard(mutex_);
  FileLock lock(path_);
  sync_locked();
}

void AnnotationStore::sync_locked() {
  std::ifstream in(path_, std::ios::binary);
  in.seekg(static_cast<std::streamoff>(offset_));
  std::string line;
  while (std::getline(in, line)) {
    if (in.eof()) break;  // partial trailing line: a writer is mid-append
    offset_ += line.size() + 1;
    if (line.empty()) continue;
    auto r = annotation_from_line(line);
    seen_.emplace(r.image_id, r.annotator_id);
    records_.push_back(std::move(r));
  }
}

AppendResult AnnotationStore::append(const AnnotationRecord& record) {
  validate_annotation(record);
  std::lock_guard guard(mutex_);
  FileLock lock(path_);
  sync_locked();
  if (seen_.count({record.image_id, record.annotator_id})) return AppendResult::duplicate;
  const std::string line = annotation_to_line(record) + "\n";
  const auto written = ::write(lock.fd(), line.data(), line.size());
  if (written != static_cast<ssize_t>(line.size())) throw std::runtime_error("short write to annotation store");
  ::fsync(lock.fd());
  offset_ += line.size();
  seen_.emplace(record.image_id, record.annotator_id);
  records_.push_back(record);
  return AppendResult::appended;
}

std::vector<AnnotationRecord> AnnotationStore::records() {
  std::lock_guard guard(mutex_);
  FileLock lock(path_);
  sync_locked();
  return records_;
}

bool AnnotationStore::has(const std::string& image_id, const std::string& annotator_id) {
  std::lock_guard guard(mutex_);
  FileLock lock(path_);
  sync_locked();
  return seen_.count({image_id, annotator_id}) != 0;
}

std::size_t AnnotationStore::size() {
  std::lock_guard guard(mutex_);
  FileLock lock(path_);
  sync_locked();
  return records_.size();
}

}  // namespace terraexpr
