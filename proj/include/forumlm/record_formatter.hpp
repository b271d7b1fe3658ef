#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "forumlm/bpe.hpp"
#include "forumlm/thread_model.hpp"

namespace forumlm {

inline constexpr std::size_t kDefaultRecordBudget = 400;
inline constexpr std::string_view kQuoteMarker = "Citat: ";
inline constexpr std::string_view kQuoteIndent = "        ";

// Per-thread mapping from user ids to `[user1]`, `[user2]`, ... in order of
// first appearance.
class AnonymizationMap {
public:
  // Placeholder for `author`, assigning the next free one on first sight.
  const std::string &label(const std::string &author);
  std::size_t size() const { return labels_.size(); }
  bool contains(const std::string &author) const { return labels_.contains(author); }

private:
  std::unordered_map<std::string, std::string> labels_;
};

struct TrainingRecord {
  std::string text;
  std::size_t source_thread = 0;
  std::size_t part_index = 0;
  std::size_t token_count = 0;

  bool operator==(const TrainingRecord &) const = default;
};

struct FormatResult {
  std::vector<TrainingRecord> records;
  std::vector<std::string> warnings;
};

// "Forum > Sub" line, title line, blank line.
std::string render_header(const ForumThread &thread);

// "[userK]:" line, optional "Citat: [userJ]" block with the quoted lines
// indented by eight spaces, then the body.
std::string render_post(const Post &post, AnonymizationMap &map);

Post strip_quotes(const Post &post);

// Header followed by every post, posts separated by one blank line. No
// token budget is applied.
std::string render_thread(const ForumThread &thread);

// Greedy packing at post boundaries into records of at most `budget` tokens.
// Each record repeats the header. A post that alone does not fit is emitted
// truncated in its own record and reported in `warnings`.
FormatResult format_thread(const ForumThread &thread, std::size_t thread_index, const Vocabulary &vocab,
                           std::size_t budget = kDefaultRecordBudget);

// format_thread over a corpus, parallel across threads; records are returned
// in thread order.
FormatResult format_corpus(std::span<const ForumThread> threads, const Vocabulary &vocab,
                           std::size_t budget = kDefaultRecordBudget);

// Record file: each record followed by a line holding only the delimiter.
std::string write_record_file(std::span<const TrainingRecord> records,
                              std::string_view delimiter = Vocabulary::kRecordDelimiterText);
std::vector<std::string> read_record_file(std::string_view content,
                                          std::string_view delimiter = Vocabulary::kRecordDelimiterText);

} // namespace forumlm
