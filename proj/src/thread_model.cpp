#include "forumlm/thread_model.hpp"

#include <unordered_set>

#include <nlohmann/json.hpp>

#include "forumlm/error.hpp"

namespace forumlm {

using json = nlohmann::json;

namespace {

constexpr const char *kModule = "thread_model";

bool is_blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

const json &require(const json &obj, const char *key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw ParseError(kModule, line, std::string("missing key '") + key + "'");
  return *it;
}

std::string require_string(const json &obj, const char *key, std::size_t line) {
  const json &v = require(obj, key, line);
  if (!v.is_string())
    throw ParseError(kModule, line, std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

Post parse_post(const json &p, std::size_t line) {
  if (!p.is_object())
    throw ParseError(kModule, line, "post must be an object");
  Post post;
  post.author = require_string(p, "author", line);
  post.body = require_string(p, "body", line);
  if (auto q = p.find("quote"); q != p.end() && !q->is_null()) {
    if (!q->is_object())
      throw ParseError(kModule, line, "'quote' must be an object");
    post.quote = Quote{require_string(*q, "author", line), require_string(*q, "text", line), false};
  }
  return post;
}

ForumThread parse_line(std::string_view text, std::size_t line) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error &e) {
    throw ParseError(kModule, line, e.what());
  }
  if (!obj.is_object())
    throw ParseError(kModule, line, "thread must be an object");

  ForumThread thread;
  const json &forum = require(obj, "forum", line);
  if (!forum.is_array())
    throw ParseError(kModule, line, "'forum' must be an array of strings");
  for (const auto &seg : forum) {
    if (!seg.is_string())
      throw ParseError(kModule, line, "'forum' must be an array of strings");
    thread.forum.segments.push_back(seg.get<std::string>());
  }
  thread.title = require_string(obj, "title", line);
  const json &posts = require(obj, "posts", line);
  if (!posts.is_array())
    throw ParseError(kModule, line, "'posts' must be an array");
  for (const auto &p : posts)
    thread.posts.push_back(parse_post(p, line));
  return thread;
}

} // namespace

std::string ForumPath::header() const {
  std::string out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i > 0)
      out += " > ";
    out += segments[i];
  }
  return out;
}

void validate_thread(ForumThread &thread, std::size_t thread_index) {
  const std::string where = "thread " + std::to_string(thread_index);
  if (thread.forum.segments.empty())
    throw ValidationError(kModule, where + ": empty forum path");
  if (thread.posts.empty())
    throw ValidationError(kModule, where + ": no posts");

  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < thread.posts.size(); ++i) {
    Post &post = thread.posts[i];
    if (is_blank(post.body))
      throw ValidationError(kModule, where + ", post " + std::to_string(i) + ": empty body");
    if (post.quote)
      post.quote->external = !seen.contains(post.quote->author);
    seen.insert(post.author);
  }
}

std::vector<ForumThread> parse_thread_file(std::string_view content) {
  std::vector<ForumThread> threads;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos)
      end = content.size();
    const std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (is_blank(line))
      continue;
    ForumThread thread = parse_line(line, line_no);
    validate_thread(thread, threads.size());
    threads.push_back(std::move(thread));
  }
  return threads;
}

std::string serialize_thread_file(const std::vector<ForumThread> &threads) {
  std::string out;
  for (const auto &thread : threads) {
    json posts = json::array();
    for (const auto &post : thread.posts) {
      json p = {{"author", post.author}, {"body", post.body}};
      if (post.quote)
        p["quote"] = {{"author", post.quote->author}, {"text", post.quote->text}};
      posts.push_back(std::move(p));
    }
    json obj = {{"forum", thread.forum.segments}, {"title", thread.title}, {"posts", std::move(posts)}};
    out += obj.dump(-1, ' ', false, json::error_handler_t::replace);
    out += '\n';
  }
  return out;
}

} // namespace forumlm
