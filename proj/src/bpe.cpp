#include "forumlm/bpe.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <queue>
#include <sstream>
#include <tuple>

#include <omp.h>

#include "forumlm/error.hpp"
#include "forumlm/utf8.hpp"

namespace forumlm {

namespace {

constexpr const char *kModule = "bpe_tokenizer";
constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
constexpr TokenId kDead = std::numeric_limits<TokenId>::max();

std::string hex_encode(std::string_view bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out.push_back(digits[c >> 4]);
    out.push_back(digits[c & 0xF]);
  }
  return out;
}

std::optional<std::string> hex_decode(std::string_view hex) {
  if (hex.empty() || hex.size() % 2 != 0)
    return std::nullopt;
  std::string out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    unsigned value = 0;
    auto [ptr, ec] = std::from_chars(hex.data() + i, hex.data() + i + 2, value, 16);
    if (ec != std::errc() || ptr != hex.data() + i + 2)
      return std::nullopt;
    out.push_back(static_cast<char>(value));
  }
  return out;
}

bool pair_less(TokenPair a, TokenPair b) {
  return std::tie(a.left, a.right) < std::tie(b.left, b.right);
}

// Incremental merge training. Every document is a doubly linked list of
// symbols inside one flat array; pair counts and occurrence positions are
// updated locally around each merge instead of recounted.
class MergeTrainer {
public:
  MergeTrainer(std::span<const std::string> documents, Vocabulary &vocab)
      : vocab_(vocab), heap_(Worse{&vocab}) {
    std::size_t total = 0;
    for (const auto &d : documents)
      total += d.size();
    if (total >= kNone)
      throw ValidationError(kModule, "training corpus exceeds 4 GiB");
    sym_.reserve(total);
    prev_.reserve(total);
    next_.reserve(total);

    std::vector<TokenSequence> seqs;
    seqs.reserve(documents.size());
    for (const auto &doc : documents) {
      const auto base = static_cast<std::uint32_t>(sym_.size());
      TokenSequence seq(doc.begin(), doc.end());
      for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto at = base + static_cast<std::uint32_t>(i);
        seq[i] = static_cast<unsigned char>(doc[i]);
        sym_.push_back(seq[i]);
        prev_.push_back(i == 0 ? kNone : at - 1);
        next_.push_back(i + 1 == doc.size() ? kNone : at + 1);
        if (i > 0)
          positions_[TokenPair{seq[i - 1], seq[i]}].push_back(at - 1);
      }
      seqs.push_back(std::move(seq));
    }
    counts_ = count_pairs(seqs);
    for (const auto &[pair, count] : counts_)
      push(pair, count);
  }

  // Performs the next merge; false when no eligible pair occurs twice.
  bool step() {
    std::optional<TokenPair> best;
    while (!heap_.empty()) {
      const HeapEntry top = heap_.top();
      heap_.pop();
      auto it = counts_.find(top.pair);
      if (it == counts_.end() || it->second != top.count)
        continue; // stale
      if (vocab_.find(vocab_.token_bytes(top.pair.left) + vocab_.token_bytes(top.pair.right)))
        continue;
      best = top.pair;
      break;
    }
    if (!best)
      return false;

    const TokenPair pair = *best;
    const TokenId merged = vocab_.add_merge(pair);
    std::vector<std::uint32_t> where = std::move(positions_[pair]);
    positions_.erase(pair);
    std::sort(where.begin(), where.end());
    where.erase(std::unique(where.begin(), where.end()), where.end());

    touched_.clear();
    for (std::uint32_t i : where) {
      if (sym_[i] != pair.left)
        continue;
      const std::uint32_t j = next_[i];
      if (j == kNone || sym_[j] != pair.right)
        continue;
      const std::uint32_t p = prev_[i];
      const std::uint32_t n = next_[j];
      if (p != kNone)
        adjust(TokenPair{sym_[p], pair.left}, -1);
      adjust(pair, -1);
      if (n != kNone)
        adjust(TokenPair{pair.right, sym_[n]}, -1);

      sym_[i] = merged;
      sym_[j] = kDead;
      next_[i] = n;
      if (n != kNone)
        prev_[n] = i;

      if (p != kNone) {
        adjust(TokenPair{sym_[p], merged}, +1);
        positions_[TokenPair{sym_[p], merged}].push_back(p);
      }
      if (n != kNone) {
        adjust(TokenPair{merged, sym_[n]}, +1);
        positions_[TokenPair{merged, sym_[n]}].push_back(i);
      }
    }

    std::sort(touched_.begin(), touched_.end(), pair_less);
    touched_.erase(std::unique(touched_.begin(), touched_.end()), touched_.end());
    for (const TokenPair &t : touched_) {
      auto it = counts_.find(t);
      if (it == counts_.end())
        continue;
      if (it->second <= 0) {
        counts_.erase(it);
        positions_.erase(t);
      } else {
        push(t, it->second);
      }
    }
    return true;
  }

private:
  struct HeapEntry {
    std::int64_t count;
    TokenPair pair;
  };

  // Orders the heap so the top is the highest count, then the smallest
  // (left bytes, right bytes).
  struct Worse {
    const Vocabulary *vocab;
    bool operator()(const HeapEntry &a, const HeapEntry &b) const {
      if (a.count != b.count)
        return a.count < b.count;
      const auto &al = vocab->token_bytes(a.pair.left);
      const auto &bl = vocab->token_bytes(b.pair.left);
      if (al != bl)
        return al > bl;
      const auto &ar = vocab->token_bytes(a.pair.right);
      const auto &br = vocab->token_bytes(b.pair.right);
      if (ar != br)
        return ar > br;
      return pair_less(b.pair, a.pair);
    }
  };

  void adjust(TokenPair pair, std::int64_t delta) {
    counts_[pair] += delta;
    touched_.push_back(pair);
  }

  void push(TokenPair pair, std::int64_t count) {
    if (count >= 2)
      heap_.push(HeapEntry{count, pair});
  }

  Vocabulary &vocab_;
  std::vector<TokenId> sym_;
  std::vector<std::uint32_t> prev_;
  std::vector<std::uint32_t> next_;
  PairCounts counts_;
  std::unordered_map<TokenPair, std::vector<std::uint32_t>, TokenPairHash> positions_;
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, Worse> heap_;
  std::vector<TokenPair> touched_;
};

} // namespace

Vocabulary::Vocabulary() {
  bytes_.reserve(kFirstMergeId);
  for (int b = 0; b < 256; ++b) {
    bytes_.emplace_back(1, static_cast<char>(b));
    ids_by_bytes_.emplace(bytes_.back(), static_cast<TokenId>(b));
  }
  bytes_.emplace_back(kRecordDelimiterText);
}

TokenId Vocabulary::add_merge(TokenPair pair) {
  if (!contains(pair.left) || !contains(pair.right) || is_special(pair.left) || is_special(pair.right))
    throw ValidationError(kModule, "merge refers to an unknown or special token");
  if (merge_ids_.contains(pair))
    throw ValidationError(kModule, "duplicate merge");
  const auto id = static_cast<TokenId>(bytes_.size());
  std::string joined = bytes_[pair.left] + bytes_[pair.right];
  if (!ids_by_bytes_.emplace(joined, id).second)
    throw ValidationError(kModule, "merge duplicates an existing token: " + hex_encode(joined));
  bytes_.push_back(std::move(joined));
  merges_.push_back(pair);
  merge_ids_.emplace(pair, id);
  return id;
}

std::optional<TokenId> Vocabulary::merged(TokenPair pair) const {
  auto it = merge_ids_.find(pair);
  if (it == merge_ids_.end())
    return std::nullopt;
  return it->second;
}

std::optional<TokenId> Vocabulary::find(std::string_view bytes) const {
  auto it = ids_by_bytes_.find(std::string(bytes));
  if (it == ids_by_bytes_.end())
    return std::nullopt;
  return it->second;
}

std::string Vocabulary::to_file() const {
  std::ostringstream out;
  out << "forumlm-bpe version=" << kFileVersion << " size=" << size() << " merges=" << merges_.size()
      << " specials=" << kNumSpecial << '\n';
  for (const auto &m : merges_)
    out << hex_encode(bytes_[m.left]) << ' ' << hex_encode(bytes_[m.right]) << '\n';
  return out.str();
}

Vocabulary Vocabulary::from_file(std::string_view content) {
  std::istringstream in{std::string(content)};
  std::string header;
  if (!std::getline(in, header))
    throw ParseError(kModule, 1, "empty vocabulary file");

  std::istringstream hs(header);
  std::string magic, version, size, merges, specials;
  hs >> magic >> version >> size >> merges >> specials;
  if (magic != "forumlm-bpe" || version != "version=" + std::to_string(kFileVersion))
    throw ParseError(kModule, 1, "not a version " + std::to_string(kFileVersion) + " vocabulary file");
  if (specials != "specials=" + std::to_string(kNumSpecial))
    throw ParseError(kModule, 1, "unsupported special token count: " + specials);
  std::size_t declared_size = 0, declared_merges = 0;
  if (std::sscanf(size.c_str(), "size=%zu", &declared_size) != 1 ||
      std::sscanf(merges.c_str(), "merges=%zu", &declared_merges) != 1)
    throw ParseError(kModule, 1, "malformed header");

  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty())
      continue;
    const auto space = line.find(' ');
    if (space == std::string::npos)
      throw ParseError(kModule, line_no, "expected two symbols");
    auto left = hex_decode(std::string_view(line).substr(0, space));
    auto right = hex_decode(std::string_view(line).substr(space + 1));
    if (!left || !right)
      throw ParseError(kModule, line_no, "bad hex symbol");
    auto l = vocab.find(*left), r = vocab.find(*right);
    if (!l || !r)
      throw ParseError(kModule, line_no, "merge part is not a known token");
    try {
      vocab.add_merge(TokenPair{*l, *r});
    } catch (const ValidationError &e) {
      throw ParseError(kModule, line_no, e.what());
    }
  }
  if (vocab.merges().size() != declared_merges || vocab.size() != declared_size)
    throw ParseError(kModule, line_no, "merge count does not match header");
  return vocab;
}

BpeTrainResult train_bpe(std::span<const std::string> documents, std::size_t target_size) {
  if (target_size <= Vocabulary::kFirstMergeId)
    throw ValidationError(kModule, "target size must exceed " + std::to_string(Vocabulary::kFirstMergeId));
  bool any = false;
  for (const auto &d : documents)
    any = any || !d.empty();
  if (!any)
    throw ValidationError(kModule, "empty training corpus");

  BpeTrainResult result;
  MergeTrainer trainer(documents, result.vocab);
  while (result.vocab.size() < target_size) {
    if (!trainer.step()) {
      result.warning = "corpus exhausted after " + std::to_string(result.vocab.merges().size()) +
                       " merges; vocabulary size " + std::to_string(result.vocab.size()) + " < target " +
                       std::to_string(target_size);
      break;
    }
  }
  return result;
}

TokenSequence encode(const Vocabulary &vocab, std::string_view text) {
  const std::size_t n = text.size();
  TokenSequence sym(n);
  std::vector<std::uint32_t> prev(n), next(n);
  for (std::size_t i = 0; i < n; ++i) {
    sym[i] = static_cast<unsigned char>(text[i]);
    prev[i] = i == 0 ? kNone : static_cast<std::uint32_t>(i - 1);
    next[i] = i + 1 == n ? kNone : static_cast<std::uint32_t>(i + 1);
  }

  // Min-heap on (merge id, position): lowest rank first, leftmost first.
  using Entry = std::pair<TokenId, std::uint32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  auto consider = [&](std::uint32_t i) {
    if (i == kNone || next[i] == kNone)
      return;
    if (auto id = vocab.merged(TokenPair{sym[i], sym[next[i]]}))
      heap.emplace(*id, i);
  };
  for (std::size_t i = 0; i + 1 < n; ++i)
    consider(static_cast<std::uint32_t>(i));

  while (!heap.empty()) {
    const auto [id, i] = heap.top();
    heap.pop();
    if (sym[i] == kDead || next[i] == kNone)
      continue;
    auto current = vocab.merged(TokenPair{sym[i], sym[next[i]]});
    if (!current || *current != id)
      continue;
    const std::uint32_t j = next[i];
    sym[i] = id;
    sym[j] = kDead;
    next[i] = next[j];
    if (next[j] != kNone)
      prev[next[j]] = i;
    consider(prev[i]);
    consider(i);
  }

  TokenSequence out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; i = next[i]) {
    out.push_back(sym[i]);
    if (next[i] == kNone)
      break;
  }
  return out;
}

std::vector<TokenSequence> encode_batch(const Vocabulary &vocab, std::span<const std::string> texts) {
  std::vector<TokenSequence> out(texts.size());
  const auto count = static_cast<std::int64_t>(texts.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < count; ++i)
    out[static_cast<std::size_t>(i)] = encode(vocab, texts[static_cast<std::size_t>(i)]);
  return out;
}

std::string decode_bytes(const Vocabulary &vocab, std::span<const TokenId> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!vocab.contains(tokens[i]))
      throw ValidationError(kModule, "token id " + std::to_string(tokens[i]) + " at position " +
                                         std::to_string(i) + " is outside the vocabulary");
    out += vocab.token_bytes(tokens[i]);
  }
  return out;
}

std::string decode(const Vocabulary &vocab, std::span<const TokenId> tokens) {
  return utf8::sanitize(decode_bytes(vocab, tokens));
}

PairCounts count_pairs(std::span<const TokenSequence> sequences) {
  PairCounts total;
  const auto count = static_cast<std::int64_t>(sequences.size());
#pragma omp parallel
  {
    PairCounts local;
#pragma omp for schedule(dynamic, 64) nowait
    for (std::int64_t s = 0; s < count; ++s) {
      const auto &seq = sequences[static_cast<std::size_t>(s)];
      for (std::size_t i = 0; i + 1 < seq.size(); ++i)
        ++local[TokenPair{seq[i], seq[i + 1]}];
    }
#pragma omp critical(forumlm_count_pairs)
    for (const auto &[pair, c] : local)
      total[pair] += c;
  }
  return total;
}

} // namespace forumlm
