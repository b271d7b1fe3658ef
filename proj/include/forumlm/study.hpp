#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "forumlm/bpe.hpp"
#include "forumlm/decoder.hpp"
#include "forumlm/ngram_lm.hpp"
#include "forumlm/thread_model.hpp"

namespace forumlm {

enum class Origin { kHuman, kModel };

std::string_view to_string(Origin origin);

struct StudyConfig {
  std::string study_id = "pilot";
  std::size_t num_threads = 120;
  std::size_t num_strata = 12;
  std::size_t groups = 2;
  std::size_t annotators_per_group = 3;
  std::size_t max_response_chars = 200;
  std::size_t max_context_tokens = 350;
  // Number of leading posts shown as context; the post after them is the
  // one swapped. A thread uses the largest count in range that qualifies.
  std::size_t min_context_posts = 2;
  std::size_t max_context_posts = 2;
  std::size_t reserves_per_stratum = 2;
  // Top-level forums to stratify over; empty means the num_strata forums
  // with the most qualifying threads.
  std::vector<std::string> strata;
  std::uint64_t rng_seed = 0;

  std::size_t per_stratum() const { return num_threads / num_strata; }
  std::size_t per_group() const { return num_threads / groups; }
  void validate() const;
};

struct StudyPost {
  std::string author; // placeholder label
  std::string body;
  std::optional<Quote> quote; // author is a placeholder label

  bool operator==(const StudyPost &) const = default;
};

struct StudyItem {
  std::string item_id;
  ForumPath forum;
  std::string title;
  std::vector<StudyPost> context_posts;
  std::string context_text;
  std::string response_author;
  std::string final_response;
  Origin origin = Origin::kHuman; // never serialized for annotators
  std::string stratum;
  std::size_t group = 0;
};

struct ProvenanceEntry {
  std::string item_id;
  Origin origin = Origin::kHuman;
  std::size_t thread_index = 0; // index into the pool
  std::size_t context_posts = 0;
  std::optional<double> joint_log_prob;
  std::size_t steps = 0;
};

struct Study {
  StudyConfig config;
  std::vector<std::string> strata;
  std::vector<std::vector<std::string>> annotators; // per group
  std::vector<StudyItem> items;                     // by group, then presentation order
  std::vector<ProvenanceEntry> ledger;              // server-side only
  std::vector<std::string> log;

  std::vector<const StudyItem *> items_for_group(std::size_t group) const;
  std::optional<std::size_t> group_of(std::string_view annotator) const;
  const StudyItem *find_item(std::string_view item_id) const;
};

struct Candidate {
  std::size_t thread_index = 0;
  std::size_t context_posts = 0;
};

struct Selection {
  std::vector<std::string> strata;
  std::vector<std::vector<Candidate>> selected; // per stratum
  std::vector<std::vector<Candidate>> reserves; // per stratum
};

// Context shown to annotators and fed to the model: header, the first
// `context_posts` posts, and the "[userK]:" line of the post that follows.
std::string render_context(const ForumThread &thread, std::size_t context_posts);

// Largest allowed context size under which the thread passes every filter:
// enough posts, a final response of at most max_response_chars scalar values
// once quotes are stripped, a context of at most max_context_tokens tokens.
std::optional<std::size_t> qualifying_context(const ForumThread &thread, const Vocabulary &vocab,
                                              const StudyConfig &config);

// Stratified uniform sample of qualifiers plus reserves per stratum. Throws
// ValidationError naming an understocked stratum.
Selection select_threads(std::span<const ForumThread> pool, const Vocabulary &vocab, const StudyConfig &config);

// Splits the selected threads across groups (disjoint at thread level), makes
// a human and a model item per thread, and shuffles each group's items.
// Threads whose generation dead-ends or comes back empty are replaced from
// their stratum's reserves.
Study build_study(std::span<const ForumThread> pool, const Selection &selection, const LMBackend &backend,
                  const Vocabulary &vocab, const DecodeConfig &decode, const StudyConfig &config);

// Annotator-facing fields only.
nlohmann::json item_payload(const StudyItem &item);

// Study file (config echo, annotators, annotator-facing items) and the
// separately stored provenance ledger.
std::string write_study_file(const Study &study, std::string_view ledger_file);
std::string write_ledger_file(const Study &study);
Study read_study(std::string_view study_file, std::string_view ledger_file);
// Ledger file name recorded in a study file.
std::string ledger_reference(std::string_view study_file);

} // namespace forumlm
