#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forumlm/bpe.hpp"
#include "forumlm/error.hpp"
#include "forumlm/ngram_lm.hpp"

namespace forumlm {

inline constexpr std::string_view kPostHeaderStop = "\n\n[user";

struct DecodeConfig {
  std::size_t beam_size = 6;
  std::size_t top_k = 50;
  // 0 disables n-gram blocking.
  std::size_t no_repeat_ngram = 3;
  std::vector<TokenSequence> banned_sequences;
  // Byte strings that may never appear in the generated bytes, however
  // they are tokenized. Needs a Vocabulary at decode time.
  std::vector<std::string> banned_texts;
  std::size_t max_total_tokens = 400;
  std::size_t max_new_tokens = 400;
  std::uint64_t rng_seed = 0;
  // Distinct candidates drawn per beam and step; defaults to beam_size.
  std::optional<std::size_t> samples_per_beam;
  // Final ranking divides the joint log-likelihood by length^penalty; 0 is off.
  double length_penalty = 0.0;
  std::vector<TokenId> stop_tokens = {Vocabulary::kRecordDelimiter};
  // Generation ends where the generated bytes first contain one of these;
  // the hypothesis is cut to the last whole token before it.
  std::vector<std::string> stop_texts = {std::string(kPostHeaderStop)};

  std::size_t candidates_per_beam() const { return samples_per_beam.value_or(beam_size); }
  void validate(std::size_t context_length) const;
};

struct BeamState {
  TokenSequence prefix;
  double joint_log_prob = 0.0;
  bool finished = false;
  std::string bytes;
};

struct GeneratedResponse {
  std::string text;
  TokenSequence tokens;
  double joint_log_prob = 0.0;
  std::size_t steps = 0;
  bool finished = false;
};

// Raised when every beam dead-ends before any hypothesis finished.
class DecodeError : public Error {
public:
  DecodeError(const std::string &what, GeneratedResponse partial)
      : Error("decoder", what), partial_(std::move(partial)) {}
  const GeneratedResponse &partial() const { return partial_; }

private:
  GeneratedResponse partial_;
};

// Keeps the k most probable tokens (ties to the lower id) and rescales them
// to sum to one. Returned unchanged when k covers the whole support.
NextTokenDistribution top_k_renormalize(const NextTokenDistribution &dist, std::size_t k);

// Zeroes every token that would repeat an n-gram of context+prefix, or
// complete a banned token sequence (or, given `vocab`, a banned byte string)
// at the end of `prefix`, then renormalizes. nullopt when nothing survives.
std::optional<NextTokenDistribution> apply_constraints(const NextTokenDistribution &dist,
                                                       std::span<const TokenId> context,
                                                       std::span<const TokenId> prefix,
                                                       const DecodeConfig &config,
                                                       const Vocabulary *vocab = nullptr);

// Stochastic beam search: every live beam samples candidates without
// replacement from its top-k, constrained distribution; the pooled
// candidates are ranked by joint log-likelihood and pruned to beam_size.
GeneratedResponse generate(const LMBackend &backend, const Vocabulary &vocab, std::span<const TokenId> context,
                           const DecodeConfig &config);

// One surface form per line. Each word is banned both as its token
// encoding and as a byte string.
void add_banned_words(DecodeConfig &config, const Vocabulary &vocab, std::string_view word_list);

} // namespace forumlm
