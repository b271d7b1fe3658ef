#include "forumlm/reference.hpp"

namespace forumlm::reference {

FormatResult format_corpus(std::span<const ForumThread> threads, const Vocabulary &vocab, std::size_t budget) {
  FormatResult out;
  for (std::size_t i = 0; i < threads.size(); ++i) {
    FormatResult part = format_thread(threads[i], i, vocab, budget);
    out.records.insert(out.records.end(), part.records.begin(), part.records.end());
    out.warnings.insert(out.warnings.end(), part.warnings.begin(), part.warnings.end());
  }
  return out;
}

} // namespace forumlm::reference
