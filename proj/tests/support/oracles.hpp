#pragma once

// Brute-force oracles. Deliberately naive and independent of the library's
// incremental/heap-based algorithms.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "forumlm/annotation.hpp"
#include "forumlm/bpe.hpp"

namespace forumlm::oracle {

// Byte-string BPE: recount every adjacent pair from scratch each round.
inline std::vector<std::pair<std::string, std::string>> bpe_merges(const std::vector<std::string> &documents,
                                                                   std::size_t target_size, std::size_t base = 257) {
  std::vector<std::vector<std::string>> docs;
  std::set<std::string> tokens;
  for (const auto &d : documents) {
    std::vector<std::string> syms;
    for (char c : d)
      syms.emplace_back(1, c);
    docs.push_back(syms);
  }
  for (int b = 0; b < 256; ++b)
    tokens.insert(std::string(1, static_cast<char>(b)));

  std::vector<std::pair<std::string, std::string>> merges;
  while (base + merges.size() < target_size) {
    std::map<std::pair<std::string, std::string>, long> counts;
    for (const auto &syms : docs)
      for (std::size_t i = 0; i + 1 < syms.size(); ++i)
        ++counts[{syms[i], syms[i + 1]}];
    // std::map orders keys lexicographically, so the first maximum wins ties.
    std::pair<std::string, std::string> best;
    long best_count = 1;
    for (const auto &[pair, c] : counts) {
      if (tokens.count(pair.first + pair.second))
        continue;
      if (c > best_count) {
        best = pair;
        best_count = c;
      }
    }
    if (best_count < 2)
      break;
    merges.push_back(best);
    tokens.insert(best.first + best.second);
    for (auto &syms : docs) {
      std::vector<std::string> out;
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == best.first && syms[i + 1] == best.second) {
          out.push_back(best.first + best.second);
          ++i;
        } else {
          out.push_back(syms[i]);
        }
      }
      syms = std::move(out);
    }
  }
  return merges;
}

// Applies each merge in order to the whole text, left to right.
inline TokenSequence sequential_encode(const Vocabulary &vocab, const std::string &text) {
  TokenSequence seq;
  for (char c : text)
    seq.push_back(static_cast<unsigned char>(c));
  for (std::size_t m = 0; m < vocab.merges().size(); ++m) {
    const TokenPair pair = vocab.merges()[m];
    const TokenId id = static_cast<TokenId>(Vocabulary::kFirstMergeId + m);
    TokenSequence out;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i + 1 < seq.size() && seq[i] == pair.left && seq[i + 1] == pair.right) {
        out.push_back(id);
        ++i;
      } else {
        out.push_back(seq[i]);
      }
    }
    seq = std::move(out);
  }
  return seq;
}

// Every n-gram of `seq`, with multiplicity.
inline std::map<TokenSequence, int> ngrams(const TokenSequence &seq, std::size_t n) {
  std::map<TokenSequence, int> out;
  for (std::size_t i = 0; i + n <= seq.size(); ++i)
    ++out[TokenSequence(seq.begin() + static_cast<std::ptrdiff_t>(i),
                        seq.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

// True when some n-gram ending inside output[..] also occurs earlier in
// context+output.
inline bool repeats_ngram(const TokenSequence &context, const TokenSequence &output, std::size_t n) {
  TokenSequence all = context;
  all.insert(all.end(), output.begin(), output.end());
  for (std::size_t end = std::max(context.size(), n - 1); end < all.size(); ++end) {
    if (end + 1 < n)
      continue;
    const std::size_t start = end + 1 - n;
    for (std::size_t s = 0; s < start; ++s)
      if (std::equal(all.begin() + static_cast<std::ptrdiff_t>(s), all.begin() + static_cast<std::ptrdiff_t>(s + n),
                     all.begin() + static_cast<std::ptrdiff_t>(start)))
        return true;
  }
  return false;
}

inline bool contains_subsequence(const TokenSequence &seq, const TokenSequence &needle) {
  return std::search(seq.begin(), seq.end(), needle.begin(), needle.end()) != seq.end();
}

// Direct vote tally per origin: {humanlike, humanlike unanimous,
// informative, informative unanimous, both} numerators and the item count.
struct Tally {
  std::size_t num[5] = {0, 0, 0, 0, 0};
  std::size_t den = 0;
};

struct Votes {
  bool model = false;
  std::vector<bool> q1; // "not human" per annotator
  std::vector<bool> q2; // "adds info" per annotator
};

inline std::pair<Tally, Tally> tally(const std::vector<Votes> &items) {
  Tally model, human;
  for (const auto &v : items) {
    Tally &t = v.model ? model : human;
    int says_human = 0, says_info = 0;
    for (bool b : v.q1)
      says_human += !b;
    for (bool b : v.q2)
      says_info += b;
    const int n = static_cast<int>(v.q1.size());
    const bool hl = says_human * 2 > n, inf = says_info * 2 > n;
    t.num[0] += hl;
    t.num[1] += says_human == n;
    t.num[2] += inf;
    t.num[3] += says_info == n;
    t.num[4] += hl && inf;
    ++t.den;
  }
  return {model, human};
}

inline bool matches(const OriginResults &r, const Tally &t) {
  const Ratio *rs[5] = {&r.humanlike_majority, &r.humanlike_unanimous, &r.informative_majority,
                        &r.informative_unanimous, &r.humanlike_and_informative};
  for (int i = 0; i < 5; ++i)
    if (rs[i]->num != t.num[i] || rs[i]->den != t.den)
      return false;
  return true;
}

// A study of `origins.size()` items in one group of three annotators.
inline Study vote_study(const std::vector<bool> &model_origin) {
  Study s;
  s.config.num_threads = 2;
  s.config.num_strata = 1;
  s.config.groups = 1;
  s.strata = {"Resor"};
  s.annotators = {{"a1", "a2", "a3"}};
  for (std::size_t i = 0; i < model_origin.size(); ++i) {
    StudyItem item;
    item.item_id = "item" + std::to_string(i);
    item.origin = model_origin[i] ? Origin::kModel : Origin::kHuman;
    item.stratum = "Resor";
    s.items.push_back(item);
  }
  return s;
}

inline std::vector<AnnotationAnswer> answers_for(const Study &s, const std::vector<Votes> &votes) {
  std::vector<AnnotationAnswer> out;
  for (std::size_t i = 0; i < votes.size(); ++i)
    for (std::size_t a = 0; a < 3; ++a)
      out.push_back(AnnotationAnswer{s.items[i].item_id, s.annotators[0][a], votes[i].q1[a], votes[i].q2[a], "t"});
  return out;
}

} // namespace forumlm::oracle
