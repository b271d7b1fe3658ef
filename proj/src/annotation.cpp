#include "forumlm/annotation.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace forumlm {

using json = nlohmann::json;

namespace {

constexpr const char *kModule = "annotation_service";

std::string format_ratio(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

json ratio_json(const Ratio &r) { return {{"num", r.num}, {"den", r.den}, {"percent", r.percent()}}; }

json origin_json(const OriginResults &o) {
  return {{"humanlike_majority", ratio_json(o.humanlike_majority)},
          {"humanlike_unanimous", ratio_json(o.humanlike_unanimous)},
          {"informative_majority", ratio_json(o.informative_majority)},
          {"informative_unanimous", ratio_json(o.informative_unanimous)},
          {"humanlike_and_informative", ratio_json(o.humanlike_and_informative)}};
}

std::string cell(const Ratio &majority, const Ratio *agreement) {
  std::string out = std::to_string(majority.percent()) + "%";
  if (agreement)
    out += " (" + std::to_string(agreement->percent()) + "%)";
  return out;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width)
    s.append(width - s.size(), ' ');
  return s;
}

} // namespace

json answer_to_json(const AnnotationAnswer &a) {
  return {{"item_id", a.item_id},
          {"annotator_id", a.annotator_id},
          {"q1_not_human", a.q1_not_human},
          {"q2_adds_info", a.q2_adds_info},
          {"timestamp", a.timestamp}};
}

AnnotationAnswer answer_from_json(const json &j) {
  AnnotationAnswer a;
  a.item_id = j.at("item_id").get<std::string>();
  a.annotator_id = j.at("annotator_id").get<std::string>();
  a.q1_not_human = j.at("q1_not_human").get<bool>();
  a.q2_adds_info = j.at("q2_adds_info").get<bool>();
  if (auto it = j.find("timestamp"); it != j.end() && it->is_string())
    a.timestamp = it->get<std::string>();
  return a;
}

std::vector<AnnotationAnswer> parse_answer_log(std::string_view content) {
  std::vector<AnnotationAnswer> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    const bool terminated = end != std::string_view::npos;
    if (!terminated)
      end = content.size();
    const std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos)
      continue;
    try {
      out.push_back(answer_from_json(json::parse(line)));
    } catch (const json::exception &e) {
      if (!terminated)
        break;
      throw ParseError(kModule, line_no, e.what());
    }
  }
  return out;
}

AnswerStore::AnswerStore(const Study &study, std::optional<std::filesystem::path> log_path)
    : study_(study), log_path_(std::move(log_path)) {
  if (!log_path_)
    return;
  std::string existing;
  if (std::ifstream in{*log_path_, std::ios::binary}) {
    std::ostringstream ss;
    ss << in.rdbuf();
    existing = ss.str();
  }
  for (auto &a : parse_answer_log(existing)) {
    const auto key = std::make_pair(a.item_id, a.annotator_id);
    if (index_.contains(key))
      continue;
    index_.emplace(key, answers_.size());
    answers_.push_back(std::move(a));
  }
  // Drop a torn tail so the next append starts on a fresh line.
  if (!existing.empty() && existing.back() != '\n')
    std::filesystem::resize_file(*log_path_, existing.rfind('\n') == std::string::npos ? 0 : existing.rfind('\n') + 1);
  log_.open(*log_path_, std::ios::binary | std::ios::app);
  if (!log_)
    throw Error(kModule, "cannot open answer log " + log_path_->string());
}

SubmitStatus AnswerStore::record_answer(const AnnotationAnswer &answer) {
  const StudyItem *item = study_.find_item(answer.item_id);
  if (!item)
    throw NotFoundError("unknown item '" + answer.item_id + "'");
  const auto group = study_.group_of(answer.annotator_id);
  if (!group || *group != item->group)
    throw ForbiddenError("annotator '" + answer.annotator_id + "' is not assigned to item '" + answer.item_id + "'");

  std::lock_guard lock(mutex_);
  const auto key = std::make_pair(answer.item_id, answer.annotator_id);
  if (auto it = index_.find(key); it != index_.end()) {
    if (answers_[it->second].same_judgment(answer))
      return SubmitStatus::kDuplicate;
    throw ConflictError("annotator '" + answer.annotator_id + "' already answered item '" + answer.item_id +
                        "' differently");
  }
  if (log_.is_open()) {
    log_ << answer_to_json(answer).dump() << '\n';
    log_.flush();
    if (!log_)
      throw Error(kModule, "failed to append to answer log");
  }
  index_.emplace(key, answers_.size());
  answers_.push_back(answer);
  return SubmitStatus::kStored;
}

std::vector<AnnotationAnswer> AnswerStore::snapshot() const {
  std::lock_guard lock(mutex_);
  return answers_;
}

std::size_t AnswerStore::size() const {
  std::lock_guard lock(mutex_);
  return answers_.size();
}

std::vector<std::pair<const StudyItem *, bool>> AnswerStore::items_for(std::string_view annotator) const {
  const auto group = study_.group_of(annotator);
  if (!group)
    throw NotFoundError("unknown annotator '" + std::string(annotator) + "'");
  std::lock_guard lock(mutex_);
  std::vector<std::pair<const StudyItem *, bool>> out;
  for (const StudyItem *item : study_.items_for_group(*group))
    out.emplace_back(item, index_.contains({item->item_id, std::string(annotator)}));
  return out;
}

const StudyItem *AnswerStore::next_item(std::string_view annotator) const {
  for (const auto &[item, done] : items_for(annotator))
    if (!done)
      return item;
  return nullptr;
}

ResultsTable compute_results(const Study &study, std::span<const AnnotationAnswer> answers, bool strict,
                             AgreementMode mode) {
  // (item, annotator) -> answer, ignoring exact repeats.
  std::map<std::pair<std::string, std::string>, const AnnotationAnswer *> votes;
  for (const auto &a : answers) {
    const StudyItem *item = study.find_item(a.item_id);
    if (!item)
      throw ValidationError(kModule, "answer for unknown item '" + a.item_id + "'");
    const auto group = study.group_of(a.annotator_id);
    if (!group || *group != item->group)
      throw ValidationError(kModule, "annotator '" + a.annotator_id + "' is not assigned to item '" + a.item_id + "'");
    auto [it, inserted] = votes.emplace(std::make_pair(a.item_id, a.annotator_id), &a);
    if (!inserted && !it->second->same_judgment(a))
      throw ValidationError(kModule, "conflicting answers from '" + a.annotator_id + "' on item '" + a.item_id + "'");
  }

  ResultsTable table;
  std::map<std::string, StratumResults> strata;
  for (const auto &s : study.strata)
    strata[s].stratum = s;

  for (const StudyItem &item : study.items) {
    const auto &members = study.annotators.at(item.group);
    std::size_t not_human = 0, adds_info = 0, answered = 0;
    for (const auto &annotator : members) {
      auto it = votes.find({item.item_id, annotator});
      if (it == votes.end())
        continue;
      ++answered;
      not_human += it->second->q1_not_human ? 1 : 0;
      adds_info += it->second->q2_adds_info ? 1 : 0;
    }
    if (answered < members.size()) {
      table.complete = false;
      table.incomplete_items.push_back(item.item_id);
      continue;
    }

    const std::size_t n = members.size();
    const std::size_t looks_human = n - not_human;
    const bool humanlike = 2 * looks_human > n;
    const bool informative = 2 * adds_info > n;
    bool humanlike_agree = looks_human == n;
    bool informative_agree = adds_info == n;
    if (mode == AgreementMode::kAnyUnanimous) {
      humanlike_agree = humanlike_agree || looks_human == 0;
      informative_agree = informative_agree || adds_info == 0;
    }

    OriginResults &o = item.origin == Origin::kModel ? table.model : table.human;
    for (Ratio *r : {&o.humanlike_majority, &o.humanlike_unanimous, &o.informative_majority,
                     &o.informative_unanimous, &o.humanlike_and_informative})
      ++r->den;
    o.humanlike_majority.num += humanlike;
    o.humanlike_unanimous.num += humanlike_agree;
    o.informative_majority.num += informative;
    o.informative_unanimous.num += informative_agree;
    o.humanlike_and_informative.num += humanlike && informative;

    StratumResults &s = strata[item.stratum];
    s.stratum = item.stratum;
    Ratio &r = item.origin == Origin::kModel ? s.model : s.human;
    ++r.den;
    r.num += humanlike && informative;
  }

  if (strict && !table.complete) {
    std::string ids;
    for (const auto &id : table.incomplete_items)
      ids += (ids.empty() ? "" : ", ") + id;
    throw ValidationError(kModule, std::to_string(table.incomplete_items.size()) +
                                       " items lack answers from every annotator: " + ids);
  }

  for (const auto &s : study.strata)
    table.per_stratum.push_back(strata[s]);
  for (auto &[name, s] : strata)
    if (std::find(study.strata.begin(), study.strata.end(), name) == study.strata.end())
      table.per_stratum.push_back(s);
  return table;
}

std::string render_table(const ResultsTable &r) {
  const std::size_t label_w = 25, col_w = 12;
  std::ostringstream out;
  out << pad("", label_w) << pad("Model", col_w) << "Human" << '\n';
  out << pad("Humanlike", label_w) << pad(cell(r.model.humanlike_majority, &r.model.humanlike_unanimous), col_w)
      << cell(r.human.humanlike_majority, &r.human.humanlike_unanimous) << '\n';
  out << pad("Informative", label_w)
      << pad(cell(r.model.informative_majority, &r.model.informative_unanimous), col_w)
      << cell(r.human.informative_majority, &r.human.informative_unanimous) << '\n';
  out << pad("Humanlike + informative", label_w) << pad(cell(r.model.humanlike_and_informative, nullptr), col_w)
      << cell(r.human.humanlike_and_informative, nullptr) << '\n';
  return out.str();
}

std::string render_plot_data(const ResultsTable &r) {
  std::ostringstream out;
  out << "forum,model_ratio,model_items,human_ratio,human_items\n";
  for (const auto &s : r.per_stratum) {
    std::string name = s.stratum;
    if (name.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : name)
        quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      name = quoted + "\"";
    }
    out << name << ',' << format_ratio(s.model.value()) << ',' << s.model.den << ','
        << format_ratio(s.human.value()) << ',' << s.human.den << '\n';
  }
  return out.str();
}

json results_to_json(const ResultsTable &r) {
  json strata = json::array();
  for (const auto &s : r.per_stratum)
    strata.push_back({{"stratum", s.stratum}, {"model", ratio_json(s.model)}, {"human", ratio_json(s.human)}});
  return {{"model", origin_json(r.model)},
          {"human", origin_json(r.human)},
          {"per_stratum", std::move(strata)},
          {"complete", r.complete},
          {"incomplete_items", r.incomplete_items}};
}

} // namespace forumlm
