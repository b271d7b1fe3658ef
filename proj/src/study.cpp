#include "forumlm/study.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include <omp.h>

#include "forumlm/record_formatter.hpp"
#include "forumlm/rng.hpp"
#include "forumlm/utf8.hpp"

namespace forumlm {

using json = nlohmann::json;

namespace {

constexpr const char *kModule = "study_builder";
constexpr int kStudyVersion = 1;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct Generated {
  std::optional<GeneratedResponse> response;
  std::string failure;
};

Generated generate_for(const ForumThread &thread, const Candidate &c, const LMBackend &backend,
                       const Vocabulary &vocab, DecodeConfig decode, std::uint64_t seed) {
  decode.rng_seed = derive_seed(seed, "generate/" + std::to_string(c.thread_index));
  const TokenSequence context = encode(vocab, render_context(thread, c.context_posts));
  try {
    GeneratedResponse r = generate(backend, vocab, context, decode);
    if (r.text.find_first_not_of(" \t\r\n") == std::string::npos)
      return {std::nullopt, "empty generated response"};
    return {std::move(r), {}};
  } catch (const Error &e) {
    return {std::nullopt, e.what()};
  }
}

StudyItem make_item(const ForumThread &thread, const Candidate &c, std::string stratum, std::size_t group) {
  StudyItem item;
  item.forum = thread.forum;
  item.title = thread.title;
  item.stratum = std::move(stratum);
  item.group = group;
  item.context_text = render_context(thread, c.context_posts);
  AnonymizationMap map;
  for (std::size_t i = 0; i < c.context_posts; ++i) {
    const Post &post = thread.posts[i];
    StudyPost sp{map.label(post.author), post.body, std::nullopt};
    if (post.quote)
      sp.quote = Quote{map.label(post.quote->author), post.quote->text, post.quote->external};
    item.context_posts.push_back(std::move(sp));
  }
  item.response_author = map.label(thread.posts[c.context_posts].author);
  return item;
}

json config_to_json(const StudyConfig &c) {
  return {{"study_id", c.study_id},
          {"num_threads", c.num_threads},
          {"num_strata", c.num_strata},
          {"groups", c.groups},
          {"annotators_per_group", c.annotators_per_group},
          {"max_response_chars", c.max_response_chars},
          {"max_context_tokens", c.max_context_tokens},
          {"min_context_posts", c.min_context_posts},
          {"max_context_posts", c.max_context_posts},
          {"reserves_per_stratum", c.reserves_per_stratum},
          {"strata", c.strata},
          {"rng_seed", c.rng_seed}};
}

StudyConfig config_from_json(const json &j) {
  StudyConfig c;
  c.study_id = j.at("study_id").get<std::string>();
  c.num_threads = j.at("num_threads").get<std::size_t>();
  c.num_strata = j.at("num_strata").get<std::size_t>();
  c.groups = j.at("groups").get<std::size_t>();
  c.annotators_per_group = j.at("annotators_per_group").get<std::size_t>();
  c.max_response_chars = j.at("max_response_chars").get<std::size_t>();
  c.max_context_tokens = j.at("max_context_tokens").get<std::size_t>();
  c.min_context_posts = j.at("min_context_posts").get<std::size_t>();
  c.max_context_posts = j.at("max_context_posts").get<std::size_t>();
  c.reserves_per_stratum = j.at("reserves_per_stratum").get<std::size_t>();
  c.strata = j.at("strata").get<std::vector<std::string>>();
  c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  return c;
}

json quote_json(const Quote &q) { return {{"author", q.author}, {"text", q.text}}; }

} // namespace

std::string_view to_string(Origin origin) { return origin == Origin::kHuman ? "human" : "model"; }

void StudyConfig::validate() const {
  if (num_threads == 0 || num_strata == 0 || groups == 0)
    throw ValidationError(kModule, "num_threads, num_strata and groups must be positive");
  if (num_threads % num_strata != 0)
    throw ValidationError(kModule, "num_threads must be divisible by num_strata");
  if (num_threads % groups != 0)
    throw ValidationError(kModule, "num_threads must be divisible by groups");
  if (annotators_per_group == 0 || annotators_per_group % 2 == 0)
    throw ValidationError(kModule, "annotators_per_group must be odd so every vote has a strict majority");
  if (min_context_posts < 1 || min_context_posts > max_context_posts)
    throw ValidationError(kModule, "context post range must satisfy 1 <= min <= max");
  if (!strata.empty() && strata.size() != num_strata)
    throw ValidationError(kModule, "explicit strata list must hold num_strata forums");
}

std::vector<const StudyItem *> Study::items_for_group(std::size_t group) const {
  std::vector<const StudyItem *> out;
  for (const auto &item : items)
    if (item.group == group)
      out.push_back(&item);
  return out;
}

std::optional<std::size_t> Study::group_of(std::string_view annotator) const {
  for (std::size_t g = 0; g < annotators.size(); ++g)
    if (std::find(annotators[g].begin(), annotators[g].end(), annotator) != annotators[g].end())
      return g;
  return std::nullopt;
}

const StudyItem *Study::find_item(std::string_view item_id) const {
  for (const auto &item : items)
    if (item.item_id == item_id)
      return &item;
  return nullptr;
}

std::string render_context(const ForumThread &thread, std::size_t context_posts) {
  if (context_posts >= thread.posts.size())
    throw ValidationError(kModule, "context of " + std::to_string(context_posts) + " posts leaves no response in a " +
                                       std::to_string(thread.posts.size()) + "-post thread");
  AnonymizationMap map;
  std::string out = render_header(thread);
  for (std::size_t i = 0; i < context_posts; ++i) {
    out += render_post(thread.posts[i], map);
    out += "\n\n";
  }
  out += map.label(thread.posts[context_posts].author);
  out += ":\n";
  return out;
}

std::optional<std::size_t> qualifying_context(const ForumThread &thread, const Vocabulary &vocab,
                                              const StudyConfig &config) {
  for (std::size_t c = config.max_context_posts; c >= config.min_context_posts; --c) {
    if (thread.posts.size() < c + 1)
      continue;
    const Post response = strip_quotes(thread.posts[c]);
    if (utf8::count_scalars(response.body) > config.max_response_chars)
      continue;
    if (encode(vocab, render_context(thread, c)).size() > config.max_context_tokens)
      continue;
    return c;
  }
  return std::nullopt;
}

Selection select_threads(std::span<const ForumThread> pool, const Vocabulary &vocab, const StudyConfig &config) {
  config.validate();

  std::vector<std::optional<std::size_t>> qualified(pool.size());
  const auto count = static_cast<std::int64_t>(pool.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < count; ++i)
    qualified[static_cast<std::size_t>(i)] = qualifying_context(pool[static_cast<std::size_t>(i)], vocab, config);

  std::map<std::string, std::vector<Candidate>> by_forum;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (qualified[i])
      by_forum[pool[i].forum.top_level()].push_back(Candidate{i, *qualified[i]});

  Selection sel;
  if (!config.strata.empty()) {
    sel.strata = config.strata;
  } else {
    std::vector<std::pair<std::string, std::size_t>> forums;
    for (const auto &[name, cands] : by_forum)
      forums.emplace_back(name, cands.size());
    std::stable_sort(forums.begin(), forums.end(), [](const auto &a, const auto &b) { return a.second > b.second; });
    if (forums.size() < config.num_strata)
      throw ValidationError(kModule, "pool has qualifying threads in only " + std::to_string(forums.size()) +
                                         " top-level forums; " + std::to_string(config.num_strata) + " strata needed");
    for (std::size_t s = 0; s < config.num_strata; ++s)
      sel.strata.push_back(forums[s].first);
    std::sort(sel.strata.begin(), sel.strata.end());
  }

  const std::size_t need = config.per_stratum();
  for (const auto &stratum : sel.strata) {
    std::vector<Candidate> cands = by_forum[stratum];
    if (cands.size() < need)
      throw ValidationError(kModule, "stratum '" + stratum + "' has " + std::to_string(cands.size()) +
                                         " qualifying threads; " + std::to_string(need) + " needed");
    Rng rng(derive_seed(config.rng_seed, "select/" + stratum));
    rng.shuffle(cands);
    const std::size_t reserve_end = std::min(cands.size(), need + config.reserves_per_stratum);
    sel.selected.emplace_back(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(need));
    sel.reserves.emplace_back(cands.begin() + static_cast<std::ptrdiff_t>(need),
                              cands.begin() + static_cast<std::ptrdiff_t>(reserve_end));
  }
  return sel;
}

Study build_study(std::span<const ForumThread> pool, const Selection &selection, const LMBackend &backend,
                  const Vocabulary &vocab, const DecodeConfig &decode, const StudyConfig &config) {
  config.validate();
  Study study;
  study.config = config;
  study.strata = selection.strata;
  for (std::size_t g = 0; g < config.groups; ++g) {
    std::vector<std::string> members;
    for (std::size_t a = 0; a < config.annotators_per_group; ++a)
      members.push_back("g" + std::to_string(g + 1) + "-a" + std::to_string(a + 1));
    study.annotators.push_back(std::move(members));
  }

  DecodeConfig model_decode = decode;
  model_decode.banned_texts.emplace_back("Citat:");
  model_decode.banned_sequences.push_back(encode(vocab, "Citat:"));

  // Flatten in stratum order, dealing threads to groups round-robin.
  struct Slot {
    std::size_t stratum;
    std::size_t group;
    Candidate candidate;
  };
  std::vector<Slot> slots;
  std::size_t dealt = 0;
  for (std::size_t s = 0; s < selection.strata.size(); ++s)
    for (const Candidate &c : selection.selected[s])
      slots.push_back(Slot{s, dealt++ % config.groups, c});
  if (slots.size() != config.num_threads)
    throw ValidationError(kModule, "selection holds " + std::to_string(slots.size()) + " threads; expected " +
                                       std::to_string(config.num_threads));

  std::vector<Generated> generated(slots.size());
  const auto count = static_cast<std::int64_t>(slots.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < count; ++i) {
    const Slot &slot = slots[static_cast<std::size_t>(i)];
    generated[static_cast<std::size_t>(i)] = generate_for(pool[slot.candidate.thread_index], slot.candidate, backend,
                                                          vocab, model_decode, config.rng_seed);
  }

  std::vector<std::size_t> next_reserve(selection.strata.size(), 0);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    Slot &slot = slots[i];
    while (!generated[i].response) {
      const std::string &stratum = selection.strata[slot.stratum];
      study.log.push_back("thread " + std::to_string(slot.candidate.thread_index) + " (" + stratum +
                          "): " + generated[i].failure);
      const auto &reserves = selection.reserves[slot.stratum];
      if (next_reserve[slot.stratum] >= reserves.size())
        throw Error(kModule, "stratum '" + stratum + "' ran out of reserve threads");
      slot.candidate = reserves[next_reserve[slot.stratum]++];
      study.log.push_back("replaced with reserve thread " + std::to_string(slot.candidate.thread_index));
      generated[i] = generate_for(pool[slot.candidate.thread_index], slot.candidate, backend, vocab, model_decode,
                                  config.rng_seed);
    }
  }

  struct Pending {
    StudyItem item;
    ProvenanceEntry provenance;
  };
  std::vector<std::vector<Pending>> per_group(config.groups);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const Slot &slot = slots[i];
    const ForumThread &thread = pool[slot.candidate.thread_index];
    const std::string &stratum = selection.strata[slot.stratum];
    const GeneratedResponse &response = *generated[i].response;

    StudyItem human = make_item(thread, slot.candidate, stratum, slot.group);
    StudyItem model = human;
    human.final_response = strip_quotes(thread.posts[slot.candidate.context_posts]).body;
    human.origin = Origin::kHuman;
    model.final_response = response.text;
    model.origin = Origin::kModel;

    const ProvenanceEntry base{{}, Origin::kHuman, slot.candidate.thread_index, slot.candidate.context_posts, {}, 0};
    ProvenanceEntry model_prov = base;
    model_prov.origin = Origin::kModel;
    model_prov.joint_log_prob = response.joint_log_prob;
    model_prov.steps = response.steps;
    per_group[slot.group].push_back(Pending{std::move(human), base});
    per_group[slot.group].push_back(Pending{std::move(model), model_prov});
  }

  Rng rng(derive_seed(config.rng_seed, "present"));
  std::set<std::string> used_ids;
  for (auto &group : per_group) {
    rng.shuffle(group);
    for (auto &p : group) {
      std::string id;
      do {
        id = hex64(rng.next());
      } while (!used_ids.insert(id).second);
      p.item.item_id = id;
      p.provenance.item_id = id;
      study.items.push_back(std::move(p.item));
      study.ledger.push_back(std::move(p.provenance));
    }
  }
  return study;
}

json item_payload(const StudyItem &item) {
  json posts = json::array();
  for (const auto &p : item.context_posts) {
    json jp = {{"author", p.author}, {"body", p.body}};
    if (p.quote)
      jp["quote"] = quote_json(*p.quote);
    posts.push_back(std::move(jp));
  }
  return {{"item_id", item.item_id},
          {"forum", item.forum.segments},
          {"title", item.title},
          {"context_posts", std::move(posts)},
          {"context_text", item.context_text},
          {"response_author", item.response_author},
          {"response", item.final_response}};
}

std::string write_study_file(const Study &study, std::string_view ledger_file) {
  json items = json::array();
  for (const auto &item : study.items) {
    json j = item_payload(item);
    j["group"] = item.group;
    j["stratum"] = item.stratum;
    items.push_back(std::move(j));
  }
  json doc = {{"format", "forumlm-study"},
              {"version", kStudyVersion},
              {"study_id", study.config.study_id},
              {"config", config_to_json(study.config)},
              {"strata", study.strata},
              {"annotators", study.annotators},
              {"ledger_file", std::string(ledger_file)},
              {"items", std::move(items)}};
  return doc.dump(2) + "\n";
}

std::string write_ledger_file(const Study &study) {
  json entries = json::array();
  for (const auto &e : study.ledger) {
    json j = {{"item_id", e.item_id},
              {"origin", std::string(to_string(e.origin))},
              {"thread_index", e.thread_index},
              {"context_posts", e.context_posts}};
    if (e.joint_log_prob) {
      j["joint_log_prob"] = *e.joint_log_prob;
      j["steps"] = e.steps;
    }
    entries.push_back(std::move(j));
  }
  json doc = {{"format", "forumlm-ledger"},
              {"version", kStudyVersion},
              {"study_id", study.config.study_id},
              {"entries", std::move(entries)},
              {"log", study.log}};
  return doc.dump(2) + "\n";
}

std::string ledger_reference(std::string_view study_file) {
  try {
    return json::parse(study_file).at("ledger_file").get<std::string>();
  } catch (const json::exception &e) {
    throw ParseError(kModule, 1, e.what());
  }
}

Study read_study(std::string_view study_file, std::string_view ledger_file) {
  Study study;
  try {
    const json doc = json::parse(study_file);
    if (doc.at("format") != "forumlm-study" || doc.at("version") != kStudyVersion)
      throw ParseError(kModule, 1, "not a version " + std::to_string(kStudyVersion) + " study file");
    study.config = config_from_json(doc.at("config"));
    study.strata = doc.at("strata").get<std::vector<std::string>>();
    study.annotators = doc.at("annotators").get<std::vector<std::vector<std::string>>>();
    for (const auto &j : doc.at("items")) {
      StudyItem item;
      item.item_id = j.at("item_id").get<std::string>();
      item.forum.segments = j.at("forum").get<std::vector<std::string>>();
      item.title = j.at("title").get<std::string>();
      for (const auto &jp : j.at("context_posts")) {
        StudyPost p{jp.at("author").get<std::string>(), jp.at("body").get<std::string>(), std::nullopt};
        if (jp.contains("quote"))
          p.quote = Quote{jp["quote"].at("author").get<std::string>(), jp["quote"].at("text").get<std::string>(), false};
        item.context_posts.push_back(std::move(p));
      }
      item.context_text = j.at("context_text").get<std::string>();
      item.response_author = j.at("response_author").get<std::string>();
      item.final_response = j.at("response").get<std::string>();
      item.group = j.at("group").get<std::size_t>();
      item.stratum = j.at("stratum").get<std::string>();
      study.items.push_back(std::move(item));
    }

    const json ledger = json::parse(ledger_file);
    if (ledger.at("format") != "forumlm-ledger" || ledger.at("study_id") != study.config.study_id)
      throw ParseError(kModule, 1, "ledger does not belong to study '" + study.config.study_id + "'");
    std::map<std::string, Origin> origins;
    for (const auto &j : ledger.at("entries")) {
      ProvenanceEntry e;
      e.item_id = j.at("item_id").get<std::string>();
      const std::string origin = j.at("origin").get<std::string>();
      if (origin != "human" && origin != "model")
        throw ParseError(kModule, 1, "unknown origin '" + origin + "'");
      e.origin = origin == "human" ? Origin::kHuman : Origin::kModel;
      e.thread_index = j.at("thread_index").get<std::size_t>();
      e.context_posts = j.at("context_posts").get<std::size_t>();
      if (j.contains("joint_log_prob")) {
        e.joint_log_prob = j["joint_log_prob"].get<double>();
        e.steps = j.at("steps").get<std::size_t>();
      }
      origins[e.item_id] = e.origin;
      study.ledger.push_back(std::move(e));
    }
    study.log = ledger.at("log").get<std::vector<std::string>>();
    for (auto &item : study.items) {
      auto it = origins.find(item.item_id);
      if (it == origins.end())
        throw ParseError(kModule, 1, "ledger has no entry for item " + item.item_id);
      item.origin = it->second;
    }
  } catch (const json::exception &e) {
    throw ParseError(kModule, 1, e.what());
  }
  study.config.validate();
  return study;
}

} // namespace forumlm
