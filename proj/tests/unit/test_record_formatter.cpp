#include <doctest.h>

#include <map>
#include <set>

#include "forumlm/error.hpp"
#include "forumlm/record_formatter.hpp"
#include "forumlm/utf8.hpp"
#include "support/synthetic.hpp"

using namespace forumlm;

namespace {

std::vector<ForumThread> fixtures() {
  return parse_thread_file(testing::read_file(FORUMLM_FIXTURES_DIR "/example_threads.jsonl"));
}

std::string expected(const char *name) { return testing::read_file(std::string(FORUMLM_FIXTURES_DIR "/") + name); }

// Independent renderer written from the layout description.
std::string reference_render(const ForumThread &t) {
  std::map<std::string, int> ids;
  auto label = [&](const std::string &a) {
    auto it = ids.find(a);
    if (it == ids.end())
      it = ids.emplace(a, static_cast<int>(ids.size()) + 1).first;
    return "[user" + std::to_string(it->second) + "]";
  };
  std::string s;
  for (std::size_t i = 0; i < t.forum.segments.size(); ++i)
    s += (i ? " > " : "") + t.forum.segments[i];
  s += "\n" + t.title + "\n\n";
  for (std::size_t i = 0; i < t.posts.size(); ++i) {
    const auto &p = t.posts[i];
    if (i)
      s += "\n\n";
    s += label(p.author) + ":\n";
    if (p.quote) {
      s += "Citat: " + label(p.quote->author) + "\n";
      std::size_t start = 0;
      while (true) {
        const auto nl = p.quote->text.find('\n', start);
        s += "        " + p.quote->text.substr(start, nl == std::string::npos ? nl : nl - start) + "\n";
        if (nl == std::string::npos)
          break;
        start = nl + 1;
      }
    }
    s += p.body;
  }
  return s;
}

Vocabulary small_vocab() {
  std::vector<std::string> docs;
  for (const auto &t : fixtures())
    docs.push_back(render_thread(t));
  return train_bpe(docs, 400).vocab;
}

} // namespace

TEST_CASE("minimal post") {
  AnonymizationMap map;
  CHECK(render_post(Post{"someone", "hej", std::nullopt}, map) == "[user1]:\nhej");
}

TEST_CASE("fixture threads render byte-exactly") {
  const auto threads = fixtures();
  REQUIRE(threads.size() == 4);
  CHECK(render_thread(threads[0]) == expected("kylning.expected.txt"));
  CHECK(render_thread(threads[1]) == expected("mc.expected.txt"));
  CHECK(render_thread(threads[2]) == expected("ekvation.expected.txt"));
  CHECK(render_thread(threads[3]) == expected("resor.expected.txt"));

  const Vocabulary vocab = small_vocab();
  const auto r = format_thread(threads[0], 0, vocab, 400);
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].part_index == 0);
  CHECK(r.records[0].text == expected("kylning.expected.txt"));
  CHECK(r.records[0].token_count == encode(vocab, r.records[0].text).size());
  CHECK(r.warnings.empty());
}

TEST_CASE("renderer agrees with the reference renderer on synthetic threads") {
  testing::SynthOptions opts;
  opts.quote_rate = 0.5;
  opts.external_quote_rate = 0.3;
  for (const auto &t : testing::synthetic_threads(300, 21, opts))
    CHECK(render_thread(t) == reference_render(t));
}

TEST_CASE("external quote gets the next fresh placeholder") {
  ForumThread t{ForumPath{{"Resor"}}, "t", {}};
  t.posts.push_back(Post{"a", "x", std::nullopt});
  t.posts.push_back(Post{"b", "y", Quote{"ghost", "boo\nbaa", false}});
  t.posts.push_back(Post{"ghost", "z", std::nullopt});
  CHECK(render_thread(t) == "Resor\nt\n\n[user1]:\nx\n\n[user2]:\nCitat: [user3]\n        boo\n        baa\ny\n\n"
                            "[user3]:\nz");
}

TEST_CASE("greedy split after post 2 of 3") {
  const auto threads = fixtures();
  const Vocabulary vocab = small_vocab();
  for (const auto &t : threads) {
    AnonymizationMap map;
    const std::string header = render_header(t);
    const std::string p1 = render_post(t.posts[0], map);
    const std::string p2 = render_post(t.posts[1], map);
    const std::string p3 = render_post(t.posts[2], map);
    const std::size_t two = encode(vocab, header + p1 + "\n\n" + p2).size();
    REQUIRE(encode(vocab, header + p1 + "\n\n" + p2 + "\n\n" + p3).size() > two);
    REQUIRE(encode(vocab, header + p3).size() <= two);
    const auto r = format_thread(t, 7, vocab, two);
    REQUIRE(r.records.size() == 2);
    CHECK(r.records[0].text == header + p1 + "\n\n" + p2);
    CHECK(r.records[1].text == header + p3);
    CHECK(r.records[1].part_index == 1);
    CHECK(r.records[1].source_thread == 7);
    CHECK(r.warnings.empty());
  }
}

TEST_CASE("post of exactly budget minus header fits without truncation") {
  const Vocabulary vocab; // bytes only: one token per byte
  ForumThread t{ForumPath{{"A"}}, "T", {Post{"u", std::string(50, 'x'), std::nullopt}}};
  const std::size_t total = render_thread(t).size();
  const auto r = format_thread(t, 0, vocab, total);
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].token_count == total);
  CHECK(r.warnings.empty());

  const auto cut = format_thread(t, 0, vocab, total - 1);
  REQUIRE(cut.records.size() == 1);
  CHECK(cut.records[0].token_count <= total - 1);
  CHECK(cut.warnings.size() == 1);
}

TEST_CASE("truncation lands on a character boundary") {
  const Vocabulary vocab;
  ForumThread t{ForumPath{{"A"}}, "T", {Post{"u", std::string(30, 'a') + "åäöåäöåäö", std::nullopt}}};
  const std::size_t header = render_header(t).size() + std::string("[user1]:\n").size();
  for (std::size_t budget = header + 29; budget < header + 40; ++budget) {
    const auto r = format_thread(t, 0, vocab, budget);
    REQUIRE(r.records.size() == 1);
    CHECK(r.records[0].token_count <= budget);
    CHECK(utf8::is_valid(r.records[0].text));
  }
}

TEST_CASE("budget below header size is rejected") {
  const Vocabulary vocab;
  ForumThread t{ForumPath{{"A"}}, "T", {Post{"u", "x", std::nullopt}}};
  CHECK_THROWS_AS(format_thread(t, 0, vocab, render_header(t).size()), ValidationError);
}

TEST_CASE("records cover every post once, in order, within budget") {
  const Vocabulary vocab = small_vocab();
  const auto threads = testing::synthetic_threads(200, 4);
  for (std::size_t budget : {150u, 250u, 400u}) {
    const auto result = format_corpus(threads, vocab, budget);
    std::map<std::size_t, std::string> bodies;
    std::size_t prev_thread = 0, next_part = 0;
    for (const auto &rec : result.records) {
      CHECK(rec.token_count <= budget);
      CHECK(rec.token_count == encode(vocab, rec.text).size());
      const auto &t = threads[rec.source_thread];
      const std::string header = render_header(t);
      REQUIRE(rec.text.rfind(header, 0) == 0);
      if (rec.source_thread != prev_thread)
        next_part = 0;
      CHECK(rec.part_index == next_part);
      ++next_part;
      prev_thread = rec.source_thread;
      auto &acc = bodies[rec.source_thread];
      if (!acc.empty())
        acc += "\n\n";
      acc += rec.text.substr(header.size());
    }
    std::set<std::size_t> truncated;
    for (const auto &w : result.warnings)
      truncated.insert(std::stoul(w.substr(std::string("thread ").size())));
    for (std::size_t i = 0; i < threads.size(); ++i)
      if (!truncated.count(i))
        CHECK(render_header(threads[i]) + bodies[i] == render_thread(threads[i]));
  }
}

TEST_CASE("strip_quotes") {
  const auto threads = fixtures();
  const Post &p = threads[0].posts[1];
  REQUIRE(p.quote);
  const Post s = strip_quotes(p);
  CHECK_FALSE(s.quote);
  CHECK(s.body == p.body);
  CHECK(s.author == p.author);
  const Post plain = threads[0].posts[0];
  CHECK(strip_quotes(plain) == plain);

  AnonymizationMap m1, m2;
  m1.label("Kylfantast");
  m2.label("Kylfantast");
  const std::string before = render_post(p, m1);
  const std::string after = render_post(s, m2);
  CHECK(before.find("Citat:") != std::string::npos);
  CHECK(after == "[user2]:\n" + p.body);
}

TEST_CASE("record file round trip") {
  const auto threads = testing::synthetic_threads(30, 8);
  const auto result = format_corpus(threads, Vocabulary{}, 300);
  const auto back = read_record_file(write_record_file(result.records));
  REQUIRE(back.size() == result.records.size());
  for (std::size_t i = 0; i < back.size(); ++i)
    CHECK(back[i] == result.records[i].text);
}

TEST_CASE("formatting is deterministic") {
  const auto threads = testing::synthetic_threads(50, 12);
  const Vocabulary vocab = small_vocab();
  CHECK(format_corpus(threads, vocab, 150).records == format_corpus(threads, vocab, 150).records);
}
