#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "forumlm/bpe.hpp"

namespace forumlm {

// Dense next-token probabilities indexed by TokenId.
struct NextTokenDistribution {
  std::vector<double> probabilities;

  std::size_t size() const { return probabilities.size(); }
  double operator[](TokenId id) const { return probabilities[id]; }
  double sum() const;
};

// Anything that can score the next token given a context.
class LMBackend {
public:
  virtual ~LMBackend() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual NextTokenDistribution next_token_distribution(std::span<const TokenId> context) const = 0;
};

struct TokenVectorHash {
  std::size_t operator()(const TokenSequence &seq) const noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL ^ seq.size();
    for (TokenId t : seq) {
      h ^= t;
      h *= 0x100000001B3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

struct ContextCounts {
  std::uint64_t total = 0;
  std::unordered_map<TokenId, std::uint64_t> next;

  bool operator==(const ContextCounts &) const = default;
};

// Exact (context, next token) event counts. The context of an event is the
// min(position, order - 1) tokens preceding it inside its record.
using NGramCounts = std::unordered_map<TokenSequence, ContextCounts, TokenVectorHash>;

inline constexpr std::size_t kDefaultOrder = 4;
inline constexpr double kDefaultAlpha = 0.1;

// Add-alpha smoothed Markov model of order `order`. Queries condition on the
// last min(|context|, order - 1) tokens after the most recent record
// delimiter.
class NGramModel : public LMBackend {
public:
  NGramModel(std::size_t order, double alpha, std::size_t vocab_size, NGramCounts counts);

  std::size_t order() const { return order_; }
  double alpha() const { return alpha_; }
  std::size_t vocab_size() const override { return vocab_size_; }
  const NGramCounts &counts() const { return counts_; }

  std::uint64_t count(std::span<const TokenId> context, TokenId token) const;
  NextTokenDistribution next_token_distribution(std::span<const TokenId> context) const override;
  double probability(std::span<const TokenId> context, TokenId token) const;

  // Text dump with rows sorted by (context, token).
  std::string to_file() const;
  static NGramModel from_file(std::string_view content);

  bool operator==(const NGramModel &other) const {
    return order_ == other.order_ && alpha_ == other.alpha_ && vocab_size_ == other.vocab_size_ &&
           counts_ == other.counts_;
  }

private:
  std::span<const TokenId> history(std::span<const TokenId> context) const;

  std::size_t order_;
  double alpha_;
  std::size_t vocab_size_;
  NGramCounts counts_;
};

// Counts events over every record. With `end_events`, each record is
// followed by a record-delimiter event so the model learns where records
// stop. OpenMP-parallel across records.
NGramCounts count_ngram_events(std::span<const TokenSequence> records, std::size_t order,
                               bool end_events = true);

NGramModel train_ngram(std::span<const TokenSequence> records, const Vocabulary &vocab,
                       std::size_t order = kDefaultOrder, double alpha = kDefaultAlpha);

// Vocabulary and model in one file so a model never meets the wrong
// tokenizer: a "forumlm-model" line, then "[vocabulary]" and "[ngram]"
// sections holding the two file formats verbatim.
std::string write_model_bundle(const Vocabulary &vocab, const NGramModel &model);
std::pair<Vocabulary, NGramModel> read_model_bundle(std::string_view content);

// log p(x_1) + sum_i log p(x_i | x_<i). Throws on an empty sequence.
double sequence_log_prob(const LMBackend &model, std::span<const TokenId> tokens);

// Same, for `tokens` appended to an existing `context` (the context itself
// is not scored).
double continuation_log_prob(const LMBackend &model, std::span<const TokenId> context,
                             std::span<const TokenId> tokens);

} // namespace forumlm
