#pragma once

// Single-threaded reference versions of the OpenMP kernels. Tests compare
// the parallel kernels against these; the benchmark times both.

#include <span>

#include "forumlm/bpe.hpp"
#include "forumlm/ngram_lm.hpp"
#include "forumlm/record_formatter.hpp"

namespace forumlm::reference {

PairCounts count_pairs(std::span<const TokenSequence> sequences);

NGramCounts count_ngram_events(std::span<const TokenSequence> records, std::size_t order, bool end_events = true);

FormatResult format_corpus(std::span<const ForumThread> threads, const Vocabulary &vocab,
                           std::size_t budget = kDefaultRecordBudget);

std::vector<TokenSequence> encode_batch(const Vocabulary &vocab, std::span<const std::string> texts);

} // namespace forumlm::reference
