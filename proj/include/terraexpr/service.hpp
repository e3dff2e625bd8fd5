#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "terraexpr/annotation.hpp"
#include "terraexpr/corpus.hpp"

namespace terraexpr {

struct ServiceOptions {
  TiePolicy policy = TiePolicy::strict_majority;
  // Served at / when set.
  std::optional<std::filesystem::path> static_dir;
};

// HTTP adapter over the corpus and the annotation store:
//   GET  /api/tasks/next?annotator=<id>  next unannotated image, 204 when done
//   POST /api/annotations                201, 409 duplicate, 422 invalid
//   GET  /api/progress                   per-annotator and per-image counts
//   GET  /api/aggregate                  majority vote incl. unresolved ids
//   GET  /images/<id>                    image bytes
class AnnotationService {
 public:
  AnnotationService(Corpus corpus, std::filesystem::path store, ServiceOptions options = {});
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  // Port 0 picks a free port. Returns the bound port; throws
  // std::runtime_error when the address is taken or the store is not writable.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace terraexpr
