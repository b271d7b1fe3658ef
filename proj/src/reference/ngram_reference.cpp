#include "forumlm/reference.hpp"

#include <algorithm>

namespace forumlm::reference {

NGramCounts count_ngram_events(std::span<const TokenSequence> records, std::size_t order, bool end_events) {
  NGramCounts counts;
  for (const auto &record : records) {
    const std::size_t events = record.size() + (end_events ? 1 : 0);
    for (std::size_t i = 0; i < events; ++i) {
      const std::size_t h = std::min(i, order - 1);
      TokenSequence ctx(record.begin() + static_cast<std::ptrdiff_t>(i - h),
                        record.begin() + static_cast<std::ptrdiff_t>(i));
      ContextCounts &cc = counts[ctx];
      ++cc.total;
      ++cc.next[i < record.size() ? record[i] : Vocabulary::kRecordDelimiter];
    }
  }
  return counts;
}

} // namespace forumlm::reference
