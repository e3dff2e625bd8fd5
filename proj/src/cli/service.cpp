#include "terraexpr/service.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "httplib.h"
#include "json.hpp"

namespace terraexpr {

using nlohmann::json;

struct AnnotationService::Impl {
  Corpus corpus;
  AnnotationStore store;
  ServiceOptions options;
  httplib::Server server;

  Impl(Corpus c, std::filesystem::path path, ServiceOptions o)
      : corpus(std::move(c)), store(std::move(path)), options(std::move(o)) {}

  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, json{{"error", message}});
  }

  void next_task(const httplib::Request& req, httplib::Response& res) {
    const auto annotator = req.get_param_value("annotator");
    if (annotator.empty()) return send_error(res, 400, "missing annotator parameter");
    const ImageRecord* next = nullptr;
    std::size_t remaining = 0;
    for (const auto& r : corpus.records()) {
      if (store.has(r.id, annotator)) continue;
      if (!next) next = &r;
      ++remaining;
    }
    if (!next) {
      res.status = 204;
      return;
    }
    json j{{"image_id", next->id},
           {"image_url", "/images/" + next->id},
           {"source_id", next->source_id},
           {"origin", origin_name(next->origin)},
           {"annotator_id", annotator},
           {"remaining", remaining}};
    if (next->posture) j["posture"] = posture_name(*next->posture);
    send_json(res, 200, j);
  }

  void post_annotation(const httplib::Request& req, httplib::Response& res) {
    AnnotationRecord record;
    try {
      const auto body = json::parse(req.body);
      record.image_id = body.at("image_id").get<std::string>();
      record.annotator_id = body.at("annotator_id").get<std::string>();
      const auto& choices = body.at("choices");
      if (choices.is_array()) {
        std::string text;
        for (const auto& c : choices) text += (text.empty() ? "" : ",") + c.get<std::string>();
        record.choices = text.empty() ? std::vector<Expression>{} : parse_choices(text);
      } else {
        record.choices = parse_choices(choices.get<std::string>());
      }
      record.timestamp = body.contains("timestamp") ? body["timestamp"].get<std::string>() : rfc3339_now();
    } catch (const json::exception& e) {
      return send_error(res, 400, std::string("malformed annotation body: ") + e.what());
    } catch (const AnnotationError& e) {
      return send_error(res, 422, e.what());
    }
    if (!corpus.contains(record.image_id)) return send_error(res, 422, "unknown image '" + record.image_id + "'");
    const auto violations = annotation_violations(record);
    if (!violations.empty()) {
      std::string message;
      for (const auto& v : violations) message += (message.empty() ? "" : "; ") + v;
      return send_error(res, 422, message);
    }
    if (store.append(record) == AppendResult::duplicate) {
      return send_error(res, 409, "annotator '" + record.annotator_id + "' already labelled '" + record.image_id + "'");
    }
    send_json(res, 201, json::parse(annotation_to_line(record)));
  }

  void progress(httplib::Response& res) {
    std::map<std::string, std::size_t> annotators, images;
    const auto records = store.records();
    for (const auto& r : records) {
      ++annotators[r.annotator_id];
      ++images[r.image_id];
    }
    send_json(res, 200,
              json{{"annotators", annotators}, {"images", images}, {"records", records.size()},
                   {"corpus_size", corpus.size()}});
  }

  void aggregate(httplib::Response& res) {
    json resolved = json::object(), votes = json::object();
    json unresolved = json::array();
    for (const auto& [id, outcome] : aggregate_annotations(store.records(), options.policy)) {
      if (outcome.label) {
        resolved[id] = expression_name(*outcome.label);
      } else {
        unresolved.push_back(id);
      }
      json v = json::object();
      for (auto e : kAllExpressions) {
        if (outcome.votes[expression_code(e)]) v[expression_name(e)] = outcome.votes[expression_code(e)];
      }
      votes[id] = {{"votes", v}, {"annotators", outcome.annotators}};
    }
    send_json(res, 200,
              json{{"policy", options.policy == TiePolicy::ordered ? "ordered" : "strict_majority"},
                   {"resolved", resolved},
                   {"unresolved", unresolved},
                   {"images", votes}});
  }

  void image(const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    if (!corpus.contains(id)) return send_error(res, 404, "unknown image '" + id + "'");
    std::ifstream in(corpus.image_path(corpus.at(id)), std::ios::binary);
    if (!in) return send_error(res, 404, "image file missing for '" + id + "'");
    std::ostringstream bytes;
    bytes << in.rdbuf();
    res.set_content(bytes.str(), "image/x-portable-pixmap");
  }

  void routes() {
    // Address reuse only: a second service on a busy port must fail to bind.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    server.Get("/api/tasks/next", [this](const auto& req, auto& res) { next_task(req, res); });
    server.Post("/api/annotations", [this](const auto& req, auto& res) { post_annotation(req, res); });
    server.Get("/api/progress", [this](const auto&, auto& res) { progress(res); });
    server.Get("/api/aggregate", [this](const auto&, auto& res) { aggregate(res); });
    server.Get(R"(/images/([^/]+))", [this](const auto& req, auto& res) { image(req, res); });
    server.set_exception_handler([](const auto&, auto& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    });
    if (options.static_dir && !server.set_mount_point("/", options.static_dir->string())) {
      throw std::runtime_error("static directory " + options.static_dir->string() + " does not exist");
    }
  }
};

AnnotationService::AnnotationService(Corpus corpus, std::filesystem::path store, ServiceOptions options) {
  {
    std::ofstream probe(store, std::ios::app);
    if (!probe) throw std::runtime_error("annotation store " + store.string() + " is not writable");
  }
  impl_ = std::make_unique<Impl>(std::move(corpus), std::move(store), std::move(options));
  impl_->routes();
}

AnnotationService::~AnnotationService() { stop(); }

int AnnotationService::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
  return bound;
}

void AnnotationService::listen() { impl_->server.listen_after_bind(); }

void AnnotationService::stop() {
  if (impl_) impl_->server.stop();
}

void AnnotationService::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace terraexpr
