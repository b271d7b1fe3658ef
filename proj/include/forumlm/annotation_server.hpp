#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "forumlm/annotation.hpp"
#include "forumlm/study.hpp"

namespace httplib {
class Server;
}

namespace forumlm {

// HTTP front end of the annotation service.
//
//   GET  /api/study/{id}/items?annotator=A     annotator-facing items in order
//   GET  /api/study/{id}/next?annotator=A      next unanswered item or done
//   POST /api/study/{id}/answers               AnnotationAnswer JSON
//   GET  /api/study/{id}/results?strict=bool   ResultsTable JSON
//
// The UI bundle, when configured, is served statically at "/".
class AnnotationServer {
public:
  AnnotationServer();
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer &) = delete;
  AnnotationServer &operator=(const AnnotationServer &) = delete;

  void add_study(Study study, std::optional<std::filesystem::path> answer_log);
  void set_static_dir(const std::filesystem::path &dir);

  // Binds to `port` (0 picks a free one) and returns the bound port.
  int bind(const std::string &host, int port);
  // Serves until stop(); call after bind().
  bool run();
  void stop();

  const AnswerStore &store(const std::string &study_id) const;

private:
  struct Entry {
    std::unique_ptr<Study> study;
    std::unique_ptr<AnswerStore> store;
  };

  void install_routes();
  Entry *find(const std::string &study_id);

  std::unique_ptr<httplib::Server> server_;
  std::map<std::string, Entry> studies_;
};

} // namespace forumlm
