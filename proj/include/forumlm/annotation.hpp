#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "forumlm/error.hpp"
#include "forumlm/study.hpp"

namespace forumlm {

struct AnnotationAnswer {
  std::string item_id;
  std::string annotator_id;
  // "Is there any indication that the last message was not written by a human?"
  bool q1_not_human = false;
  // "Do you think that the last message adds information to the discussion?"
  bool q2_adds_info = false;
  std::string timestamp;

  // Same judgment; the timestamp is ignored.
  bool same_judgment(const AnnotationAnswer &o) const {
    return item_id == o.item_id && annotator_id == o.annotator_id && q1_not_human == o.q1_not_human &&
           q2_adds_info == o.q2_adds_info;
  }
};

nlohmann::json answer_to_json(const AnnotationAnswer &answer);
AnnotationAnswer answer_from_json(const nlohmann::json &j);

// One JSON answer per line. A torn final line (no newline, unparsable) is
// skipped so a crash mid-append does not poison the log.
std::vector<AnnotationAnswer> parse_answer_log(std::string_view content);

class NotFoundError : public Error {
public:
  explicit NotFoundError(const std::string &what) : Error("annotation_service", what) {}
};

class ForbiddenError : public Error {
public:
  explicit ForbiddenError(const std::string &what) : Error("annotation_service", what) {}
};

class ConflictError : public Error {
public:
  explicit ConflictError(const std::string &what) : Error("annotation_service", what) {}
};

enum class SubmitStatus { kStored, kDuplicate };

// Append-only answer store for one study. Appends are serialized; reads see
// a consistent snapshot.
class AnswerStore {
public:
  // Replays `log_path` when it exists, then appends to it. Without a path
  // the store is memory-only.
  explicit AnswerStore(const Study &study, std::optional<std::filesystem::path> log_path = std::nullopt);

  // Throws NotFoundError, ForbiddenError or ConflictError.
  SubmitStatus record_answer(const AnnotationAnswer &answer);

  std::vector<AnnotationAnswer> snapshot() const;
  std::size_t size() const;

  // The annotator's items in presentation order, with whether each is done.
  std::vector<std::pair<const StudyItem *, bool>> items_for(std::string_view annotator) const;
  const StudyItem *next_item(std::string_view annotator) const;

  const Study &study() const { return study_; }

private:
  const Study &study_;
  std::optional<std::filesystem::path> log_path_;
  std::ofstream log_;
  mutable std::mutex mutex_;
  std::vector<AnnotationAnswer> answers_;
  std::map<std::pair<std::string, std::string>, std::size_t> index_;
};

struct Ratio {
  std::size_t num = 0;
  std::size_t den = 0;

  double value() const { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }
  // Nearest integer percent, halves rounded away from zero.
  std::size_t percent() const { return den == 0 ? 0 : (200 * num + den) / (2 * den); }
  bool operator==(const Ratio &) const = default;
};

struct OriginResults {
  Ratio humanlike_majority;
  Ratio humanlike_unanimous;
  Ratio informative_majority;
  Ratio informative_unanimous;
  Ratio humanlike_and_informative;

  bool operator==(const OriginResults &) const = default;
};

struct StratumResults {
  std::string stratum;
  Ratio model;
  Ratio human;

  bool operator==(const StratumResults &) const = default;
};

// How the parenthesized agreement figure is counted.
enum class AgreementMode {
  // All annotators gave the favourable answer (never exceeds the majority figure).
  kUnanimousFavourable,
  // All annotators gave the same answer, favourable or not.
  kAnyUnanimous,
};

struct ResultsTable {
  OriginResults model;
  OriginResults human;
  std::vector<StratumResults> per_stratum;
  bool complete = true;
  std::vector<std::string> incomplete_items;

  bool operator==(const ResultsTable &) const = default;
};

// Majority and agreement statistics per origin, plus the per-forum combined
// ratio. Items lacking answers from any group member are reported in
// `incomplete_items` and left out; in strict mode they are an error.
ResultsTable compute_results(const Study &study, std::span<const AnnotationAnswer> answers, bool strict = false,
                             AgreementMode mode = AgreementMode::kUnanimousFavourable);

// Two-column table: Humanlike and Informative rows as "NN% (NN%)", the
// combined row as "NN%".
std::string render_table(const ResultsTable &results);

// CSV with one row per top-level forum.
std::string render_plot_data(const ResultsTable &results);

nlohmann::json results_to_json(const ResultsTable &results);

} // namespace forumlm
