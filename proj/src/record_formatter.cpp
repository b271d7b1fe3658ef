#include "forumlm/record_formatter.hpp"

#include <omp.h>

#include "forumlm/error.hpp"
#include "forumlm/utf8.hpp"

namespace forumlm {

namespace {

constexpr const char *kModule = "record_formatter";
constexpr std::string_view kPostSeparator = "\n\n";

void append_indented(std::string &out, std::string_view text) {
  std::size_t pos = 0;
  while (true) {
    const std::size_t end = text.find('\n', pos);
    out += kQuoteIndent;
    out += text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    out += '\n';
    if (end == std::string_view::npos)
      break;
    pos = end + 1;
  }
}

// Longest prefix of `text` whose encoding is at most `budget` tokens, cut
// on a UTF-8 boundary that is also a token boundary of the full encoding.
std::string truncate_to_budget(const Vocabulary &vocab, const std::string &text, std::size_t budget) {
  const TokenSequence tokens = encode(vocab, text);
  std::size_t keep = std::min(budget, tokens.size());
  while (true) {
    std::size_t bytes = 0;
    for (std::size_t i = 0; i < keep; ++i)
      bytes += vocab.token_bytes(tokens[i]).size();
    std::string candidate = text.substr(0, utf8::floor_boundary(text, bytes));
    if (encode(vocab, candidate).size() <= budget)
      return candidate;
    --keep;
  }
}

} // namespace

const std::string &AnonymizationMap::label(const std::string &author) {
  auto it = labels_.find(author);
  if (it == labels_.end())
    it = labels_.emplace(author, "[user" + std::to_string(labels_.size() + 1) + "]").first;
  return it->second;
}

std::string render_header(const ForumThread &thread) {
  return thread.forum.header() + "\n" + thread.title + "\n\n";
}

std::string render_post(const Post &post, AnonymizationMap &map) {
  std::string out = map.label(post.author);
  out += ":\n";
  if (post.quote) {
    out += kQuoteMarker;
    out += map.label(post.quote->author);
    out += '\n';
    append_indented(out, post.quote->text);
  }
  out += post.body;
  return out;
}

Post strip_quotes(const Post &post) { return Post{post.author, post.body, std::nullopt}; }

std::string render_thread(const ForumThread &thread) {
  AnonymizationMap map;
  std::string out = render_header(thread);
  for (std::size_t i = 0; i < thread.posts.size(); ++i) {
    if (i > 0)
      out += kPostSeparator;
    out += render_post(thread.posts[i], map);
  }
  return out;
}

FormatResult format_thread(const ForumThread &thread, std::size_t thread_index, const Vocabulary &vocab,
                           std::size_t budget) {
  const std::string header = render_header(thread);
  const std::size_t header_tokens = encode(vocab, header).size();
  if (budget < header_tokens + 1)
    throw ValidationError(kModule, "thread " + std::to_string(thread_index) + ": budget " +
                                       std::to_string(budget) + " leaves no room after a " +
                                       std::to_string(header_tokens) + "-token header");

  FormatResult result;
  AnonymizationMap map;
  std::string current = header;
  std::size_t current_tokens = header_tokens;
  bool has_posts = false;

  auto emit = [&](std::string text, std::size_t tokens) {
    result.records.push_back(TrainingRecord{std::move(text), thread_index, result.records.size(), tokens});
  };

  for (std::size_t i = 0; i < thread.posts.size(); ++i) {
    const std::string rendered = render_post(thread.posts[i], map);
    if (has_posts) {
      std::string candidate = current + std::string(kPostSeparator) + rendered;
      const std::size_t tokens = encode(vocab, candidate).size();
      if (tokens <= budget) {
        current = std::move(candidate);
        current_tokens = tokens;
        continue;
      }
      emit(std::move(current), current_tokens);
      current = header;
      current_tokens = header_tokens;
      has_posts = false;
    }

    std::string candidate = header + rendered;
    std::size_t tokens = encode(vocab, candidate).size();
    if (tokens > budget) {
      candidate = truncate_to_budget(vocab, candidate, budget);
      result.warnings.push_back("thread " + std::to_string(thread_index) + ", post " + std::to_string(i) +
                                ": " + std::to_string(tokens) + " tokens with header exceeds budget " +
                                std::to_string(budget) + "; truncated");
      tokens = encode(vocab, candidate).size();
      emit(std::move(candidate), tokens);
      current = header;
      current_tokens = header_tokens;
      continue;
    }
    current = std::move(candidate);
    current_tokens = tokens;
    has_posts = true;
  }
  if (has_posts)
    emit(std::move(current), current_tokens);
  return result;
}

FormatResult format_corpus(std::span<const ForumThread> threads, const Vocabulary &vocab, std::size_t budget) {
  std::vector<FormatResult> parts(threads.size());
  const auto count = static_cast<std::int64_t>(threads.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      const auto idx = static_cast<std::size_t>(i);
      parts[idx] = format_thread(threads[idx], idx, vocab, budget);
    } catch (...) {
#pragma omp critical(forumlm_format_failure)
      if (!failure)
        failure = std::current_exception();
    }
  }
  if (failure)
    std::rethrow_exception(failure);

  FormatResult out;
  for (auto &p : parts) {
    std::move(p.records.begin(), p.records.end(), std::back_inserter(out.records));
    std::move(p.warnings.begin(), p.warnings.end(), std::back_inserter(out.warnings));
  }
  return out;
}

std::string write_record_file(std::span<const TrainingRecord> records, std::string_view delimiter) {
  std::string out;
  for (const auto &r : records) {
    out += r.text;
    out += '\n';
    out += delimiter;
    out += '\n';
  }
  return out;
}

std::vector<std::string> read_record_file(std::string_view content, std::string_view delimiter) {
  std::vector<std::string> records;
  std::string current;
  bool open = false;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos)
      end = content.size();
    const std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    if (line == delimiter) {
      records.push_back(std::move(current));
      current.clear();
      open = false;
      continue;
    }
    if (open)
      current += '\n';
    current += line;
    open = true;
  }
  if (open)
    records.push_back(std::move(current));
  return records;
}

} // namespace forumlm
