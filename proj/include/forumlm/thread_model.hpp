#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace forumlm {

// Forum names from the top level downward, e.g. {"Dator och IT", "Hårdvara: PC"}.
struct ForumPath {
  std::vector<std::string> segments;

  const std::string &top_level() const { return segments.front(); }
  // "Dator och IT > Hårdvara: PC"
  std::string header() const;

  bool operator==(const ForumPath &) const = default;
};

struct Quote {
  std::string author;
  std::string text;
  // Set by the parser when `author` has not posted earlier in the thread.
  bool external = false;

  bool operator==(const Quote &) const = default;
};

struct Post {
  std::string author;
  std::string body;
  std::optional<Quote> quote;

  bool operator==(const Post &) const = default;
};

struct ForumThread {
  ForumPath forum;
  std::string title;
  std::vector<Post> posts;

  bool operator==(const ForumThread &) const = default;
};

// Parses the line-delimited thread interchange format: one JSON object per
// line with keys `forum`, `title`, `posts`. Blank lines are skipped.
// Throws ParseError (with 1-based line number) on malformed lines and
// ValidationError on empty forum paths, empty post lists or empty bodies.
std::vector<ForumThread> parse_thread_file(std::string_view content);

std::string serialize_thread_file(const std::vector<ForumThread> &threads);

// Checks the ForumThread invariants and recomputes Quote::external.
void validate_thread(ForumThread &thread, std::size_t thread_index);

} // namespace forumlm
