#include <doctest.h>

#include "forumlm/error.hpp"
#include "forumlm/thread_model.hpp"
#include "support/synthetic.hpp"

using namespace forumlm;

TEST_CASE("minimal one-post thread") {
  const auto threads =
      parse_thread_file(R"({"forum":["Övrigt"],"title":"Hej","posts":[{"author":"a","body":"hej"}]})");
  REQUIRE(threads.size() == 1);
  CHECK(threads[0].posts.size() == 1);
  CHECK(threads[0].forum.header() == "Övrigt");
  CHECK_FALSE(threads[0].posts[0].quote);
}

TEST_CASE("example fixtures parse in order") {
  const auto threads = parse_thread_file(testing::read_file(FORUMLM_FIXTURES_DIR "/example_threads.jsonl"));
  REQUIRE(threads.size() == 4);
  CHECK(threads[0].forum.header() == "Dator och IT > Hårdvara: PC");
  CHECK(threads[1].title == "Off road MC");
  CHECK(threads[2].forum.segments.size() == 3);
  for (const auto &t : threads)
    CHECK(t.posts.size() == 3);
  REQUIRE(threads[0].posts[1].quote);
  CHECK(threads[0].posts[1].quote->author == "Kylfantast");
  CHECK_FALSE(threads[0].posts[1].quote->external);
}

TEST_CASE("quote of an author who has not posted is flagged external") {
  const auto threads = parse_thread_file(
      R"({"forum":["Resor"],"title":"t","posts":[{"author":"a","body":"x"},)"
      R"({"author":"b","body":"y","quote":{"author":"ghost","text":"boo"}},)"
      R"({"author":"c","body":"z","quote":{"author":"b","text":"y"}}]})");
  REQUIRE(threads.size() == 1);
  CHECK(threads[0].posts[1].quote->external);
  CHECK_FALSE(threads[0].posts[2].quote->external);
}

TEST_CASE("a post may not quote its own later self as earlier") {
  const auto threads = parse_thread_file(
      R"({"forum":["Resor"],"title":"t","posts":[{"author":"a","body":"x","quote":{"author":"a","text":"q"}}]})");
  CHECK(threads[0].posts[0].quote->external);
}

TEST_CASE("malformed lines report their line number") {
  const std::string file = "\n" R"({"forum":["A"],"title":"t","posts":[{"author":"a","body":"x"}]})" "\n{not json\n";
  try {
    parse_thread_file(file);
    FAIL("expected a parse error");
  } catch (const ParseError &e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse_thread_file(R"({"forum":"A","title":"t","posts":[]})"), ParseError);
  CHECK_THROWS_AS(parse_thread_file(R"({"forum":["A"],"posts":[]})"), ParseError);
}

TEST_CASE("empty bodies are validation errors naming thread and post") {
  const std::string file = R"({"forum":["A"],"title":"t","posts":[{"author":"a","body":"x"}]})"
                           "\n"
                           R"({"forum":["A"],"title":"t","posts":[{"author":"a","body":"x"},{"author":"b","body":"  \n"}]})";
  try {
    parse_thread_file(file);
    FAIL("expected a validation error");
  } catch (const ValidationError &e) {
    CHECK(std::string(e.what()).find("thread 1, post 1") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_thread_file(R"({"forum":["A"],"title":"t","posts":[]})"), ValidationError);
  CHECK_THROWS_AS(parse_thread_file(R"({"forum":[],"title":"t","posts":[{"author":"a","body":"x"}]})"),
                  ValidationError);
}

TEST_CASE("serializer output parses back to an equal value") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto threads = testing::synthetic_threads(25, seed);
    const auto again = parse_thread_file(serialize_thread_file(threads));
    REQUIRE(again.size() == threads.size());
    CHECK(again == threads);
  }
}
