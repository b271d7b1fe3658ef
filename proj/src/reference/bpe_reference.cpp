#include "forumlm/reference.hpp"

namespace forumlm::reference {

PairCounts count_pairs(std::span<const TokenSequence> sequences) {
  PairCounts counts;
  for (const auto &seq : sequences)
    for (std::size_t i = 0; i + 1 < seq.size(); ++i)
      ++counts[TokenPair{seq[i], seq[i + 1]}];
  return counts;
}

std::vector<TokenSequence> encode_batch(const Vocabulary &vocab, std::span<const std::string> texts) {
  std::vector<TokenSequence> out;
  out.reserve(texts.size());
  for (const auto &t : texts)
    out.push_back(encode(vocab, t));
  return out;
}

} // namespace forumlm::reference
