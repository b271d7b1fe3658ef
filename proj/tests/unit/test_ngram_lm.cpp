#include <doctest.h>

#include <cmath>

#include "forumlm/error.hpp"
#include "forumlm/ngram_lm.hpp"
#include "forumlm/rng.hpp"

using namespace forumlm;

namespace {

constexpr TokenId a = 0, b = 1;

NGramModel toy(const std::vector<TokenSequence> &records, std::size_t order, double alpha, std::size_t vocab) {
  return NGramModel(order, alpha, vocab, count_ngram_events(records, order, false));
}

} // namespace

TEST_CASE("a b a b counts and smoothed probability") {
  const std::vector<TokenSequence> recs{{a, b, a, b}};
  const NGramModel m = toy(recs, 2, 1.0, 3);
  const TokenSequence ctx{a};
  CHECK(m.count(ctx, b) == 2);
  CHECK(m.count(ctx, a) == 0);
  CHECK(m.probability(ctx, b) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(m.next_token_distribution(ctx).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("unseen context is uniform") {
  const std::vector<TokenSequence> recs{{a, b, a, b}};
  const NGramModel m = toy(recs, 3, 0.1, 5);
  const TokenSequence ctx{4, 4};
  const auto d = m.next_token_distribution(ctx);
  for (double p : d.probabilities)
    CHECK(p == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("order 1 ignores context") {
  const std::vector<TokenSequence> recs{{0, 1, 2, 1, 1, 3}, {2, 2}};
  const NGramModel m = toy(recs, 1, 0.5, 4);
  const auto base = m.next_token_distribution({});
  for (const TokenSequence &ctx : {TokenSequence{0}, TokenSequence{3, 1}, TokenSequence{2, 2, 2}})
    CHECK(m.next_token_distribution(ctx).probabilities == base.probabilities);
}

TEST_CASE("duplicated records double every count") {
  const TokenSequence r{3, 1, 4, 1, 5, 9, 2, 6};
  const auto once = count_ngram_events(std::vector<TokenSequence>{r}, 3);
  const auto twice = count_ngram_events(std::vector<TokenSequence>{r, r}, 3);
  REQUIRE(once.size() == twice.size());
  for (const auto &[ctx, cc] : once) {
    const auto &other = twice.at(ctx);
    CHECK(other.total == 2 * cc.total);
    for (const auto &[t, n] : cc.next)
      CHECK(other.next.at(t) == 2 * n);
  }
}

TEST_CASE("record boundaries reset the context") {
  const std::vector<TokenSequence> recs{{a, b}, {b, a}};
  const auto c = count_ngram_events(recs, 3, false);
  // Events: ()->a, (a)->b, ()->b, (b)->a
  CHECK(c.at(TokenSequence{}).total == 2);
  CHECK_FALSE(c.contains(TokenSequence{a, b}));
  const auto with_end = count_ngram_events(recs, 3, true);
  CHECK(with_end.at(TokenSequence{a, b}).next.at(Vocabulary::kRecordDelimiter) == 1);
}

TEST_CASE("queries condition on tokens after the last delimiter") {
  const std::vector<TokenSequence> recs{{a, b, a, b}};
  const NGramModel m = toy(recs, 3, 1.0, 300);
  const TokenSequence ctx{a, b, Vocabulary::kRecordDelimiter};
  CHECK(m.next_token_distribution(ctx).probabilities == m.next_token_distribution({}).probabilities);
}

TEST_CASE("normalization and chain rule on random models") {
  Rng rng(99);
  for (int round = 0; round < 20; ++round) {
    const std::size_t vocab = 2 + rng.below(6);
    const std::size_t order = 1 + rng.below(4);
    std::vector<TokenSequence> recs(1 + rng.below(5));
    for (auto &r : recs) {
      r.resize(rng.below(30));
      for (auto &t : r)
        t = static_cast<TokenId>(rng.below(vocab));
    }
    const NGramModel m = toy(recs, order, 0.05 + rng.uniform(), vocab);
    for (int q = 0; q < 20; ++q) {
      TokenSequence seq(1 + rng.below(6));
      for (auto &t : seq)
        t = static_cast<TokenId>(rng.below(vocab));
      double product = 1.0;
      for (std::size_t i = 0; i < seq.size(); ++i) {
        const std::span<const TokenId> ctx(seq.data(), i);
        const auto d = m.next_token_distribution(ctx);
        CHECK(std::abs(d.sum() - 1.0) < 1e-9);
        product *= d[seq[i]];
      }
      const double lp = sequence_log_prob(m, seq);
      CHECK(std::abs(std::exp(lp) - product) <= 1e-9 * product);

      const std::size_t split = rng.below(seq.size());
      const std::span<const TokenId> x(seq.data(), split), y(seq.data() + split, seq.size() - split);
      const double joined = (split ? sequence_log_prob(m, x) : 0.0) + continuation_log_prob(m, x, y);
      CHECK(joined == doctest::Approx(lp).epsilon(1e-12));
    }
  }
}

TEST_CASE("alpha to zero approaches the MLE") {
  const std::vector<TokenSequence> recs{{a, b, a, b, a, b}};
  const NGramModel m = toy(recs, 2, 1e-9, 4);
  CHECK(m.probability(TokenSequence{a}, b) > 1 - 1e-8);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(sequence_log_prob(toy({{a}}, 1, 1.0, 2), TokenSequence{}), ValidationError);
  CHECK_THROWS_AS(train_ngram(std::vector<TokenSequence>{}, Vocabulary{}), ValidationError);
  CHECK_THROWS_AS(NGramModel(0, 1.0, 3, {}), ValidationError);
  CHECK_THROWS_AS(NGramModel(2, 0.0, 3, {}), ValidationError);
  CHECK_THROWS_AS(toy({{a, 7}}, 2, 1.0, 3), ValidationError);
}

TEST_CASE("model and bundle files round trip") {
  std::vector<std::string> docs{"hej hopp hej hopp hallå"};
  const Vocabulary vocab = train_bpe(docs, 270).vocab;
  const std::vector<TokenSequence> recs{encode(vocab, docs[0]), encode(vocab, "hopp hej")};
  const NGramModel m = train_ngram(recs, vocab, 3, 0.1);
  CHECK(m.vocab_size() == vocab.size());
  const NGramModel back = NGramModel::from_file(m.to_file());
  CHECK(back == m);
  CHECK(back.to_file() == m.to_file());
  const auto [v2, m2] = read_model_bundle(write_model_bundle(vocab, m));
  CHECK(v2 == vocab);
  CHECK(m2 == m);
  CHECK_THROWS_AS(NGramModel::from_file("forumlm-ngram version=9"), ParseError);
}
