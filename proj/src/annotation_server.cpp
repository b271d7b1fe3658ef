#include "forumlm/annotation_server.hpp"

#include <chrono>
#include <ctime>

#include <httplib.h>

namespace forumlm {

using json = nlohmann::json;

namespace {

constexpr const char *kJson = "application/json; charset=utf-8";

void reply(httplib::Response &res, int status, const json &body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void fail(httplib::Response &res, int status, const std::string &message) {
  reply(res, status, json{{"error", message}});
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace

AnnotationServer::AnnotationServer() : server_(std::make_unique<httplib::Server>()) { install_routes(); }

AnnotationServer::~AnnotationServer() { stop(); }

void AnnotationServer::add_study(Study study, std::optional<std::filesystem::path> answer_log) {
  const std::string id = study.config.study_id;
  Entry entry;
  entry.study = std::make_unique<Study>(std::move(study));
  entry.store = std::make_unique<AnswerStore>(*entry.study, std::move(answer_log));
  studies_[id] = std::move(entry);
}

void AnnotationServer::set_static_dir(const std::filesystem::path &dir) {
  if (!server_->set_mount_point("/", dir.string()))
    throw Error("annotation_service", "cannot serve static files from " + dir.string());
}

int AnnotationServer::bind(const std::string &host, int port) {
  if (port == 0)
    return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool AnnotationServer::run() { return server_->listen_after_bind(); }

void AnnotationServer::stop() {
  if (server_)
    server_->stop();
}

const AnswerStore &AnnotationServer::store(const std::string &study_id) const { return *studies_.at(study_id).store; }

AnnotationServer::Entry *AnnotationServer::find(const std::string &study_id) {
  auto it = studies_.find(study_id);
  return it == studies_.end() ? nullptr : &it->second;
}

void AnnotationServer::install_routes() {
  server_->Get(R"(/api/study/([^/]+)/items)", [this](const httplib::Request &req, httplib::Response &res) {
    Entry *e = find(req.matches[1]);
    if (!e)
      return fail(res, 404, "unknown study");
    const std::string annotator = req.get_param_value("annotator");
    try {
      json items = json::array();
      std::size_t position = 0;
      for (const auto &[item, done] : e->store->items_for(annotator)) {
        json j = item_payload(*item);
        j["position"] = position++;
        j["answered"] = done;
        items.push_back(std::move(j));
      }
      reply(res, 200, json{{"annotator", annotator}, {"items", std::move(items)}});
    } catch (const NotFoundError &err) {
      fail(res, 404, err.what());
    }
  });

  server_->Get(R"(/api/study/([^/]+)/next)", [this](const httplib::Request &req, httplib::Response &res) {
    Entry *e = find(req.matches[1]);
    if (!e)
      return fail(res, 404, "unknown study");
    const std::string annotator = req.get_param_value("annotator");
    try {
      const auto items = e->store->items_for(annotator);
      std::size_t answered = 0;
      const StudyItem *next = nullptr;
      for (const auto &[item, done] : items) {
        answered += done;
        if (!done && !next)
          next = item;
      }
      json body = {{"done", next == nullptr}, {"answered", answered}, {"total", items.size()}};
      if (next)
        body["item"] = item_payload(*next);
      reply(res, 200, body);
    } catch (const NotFoundError &err) {
      fail(res, 404, err.what());
    }
  });

  server_->Post(R"(/api/study/([^/]+)/answers)", [this](const httplib::Request &req, httplib::Response &res) {
    Entry *e = find(req.matches[1]);
    if (!e)
      return fail(res, 404, "unknown study");
    AnnotationAnswer answer;
    try {
      answer = answer_from_json(json::parse(req.body));
    } catch (const json::exception &err) {
      return fail(res, 400, std::string("bad answer payload: ") + err.what());
    }
    if (answer.timestamp.empty())
      answer.timestamp = utc_now();
    try {
      const SubmitStatus status = e->store->record_answer(answer);
      reply(res, status == SubmitStatus::kStored ? 201 : 200,
            json{{"status", status == SubmitStatus::kStored ? "stored" : "duplicate"}});
    } catch (const NotFoundError &err) {
      fail(res, 404, err.what());
    } catch (const ForbiddenError &err) {
      fail(res, 403, err.what());
    } catch (const ConflictError &err) {
      fail(res, 409, err.what());
    } catch (const Error &err) {
      fail(res, 500, err.what());
    }
  });

  server_->Get(R"(/api/study/([^/]+)/results)", [this](const httplib::Request &req, httplib::Response &res) {
    Entry *e = find(req.matches[1]);
    if (!e)
      return fail(res, 404, "unknown study");
    const bool strict = req.get_param_value("strict") == "true";
    try {
      const auto answers = e->store->snapshot();
      reply(res, 200, results_to_json(compute_results(*e->study, answers, strict)));
    } catch (const ValidationError &err) {
      fail(res, 409, err.what());
    }
  });
}

} // namespace forumlm
