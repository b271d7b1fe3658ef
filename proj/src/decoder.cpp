#include "forumlm/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "forumlm/rng.hpp"

namespace forumlm {

namespace {

constexpr const char *kModule = "decoder";

bool better(const BeamState &a, const BeamState &b) {
  if (a.joint_log_prob != b.joint_log_prob)
    return a.joint_log_prob > b.joint_log_prob;
  return a.prefix < b.prefix;
}

void renormalize(std::vector<double> &p) {
  double sum = 0.0;
  for (double v : p)
    sum += v;
  for (double &v : p)
    v /= sum;
}

bool ends_with(std::span<const TokenId> seq, std::span<const TokenId> tail) {
  return tail.size() <= seq.size() && std::equal(tail.begin(), tail.end(), seq.end() - static_cast<std::ptrdiff_t>(tail.size()));
}

// The last bytes of the decoded prefix, at least `want` of them when the
// prefix is that long.
std::string tail_bytes(const Vocabulary &vocab, std::span<const TokenId> prefix, std::size_t want) {
  std::size_t i = prefix.size(), have = 0;
  while (i > 0 && have < want)
    have += vocab.token_bytes(prefix[--i]).size();
  return decode_bytes(vocab, prefix.subspan(i));
}

// Tokens drawn without replacement, each with probability proportional to
// its remaining mass.
std::vector<TokenId> sample_distinct(const NextTokenDistribution &dist, std::size_t count, Rng &rng) {
  std::vector<TokenId> support;
  std::vector<double> mass;
  for (std::size_t t = 0; t < dist.size(); ++t) {
    if (dist.probabilities[t] > 0.0) {
      support.push_back(static_cast<TokenId>(t));
      mass.push_back(dist.probabilities[t]);
    }
  }
  std::vector<TokenId> picks;
  double remaining = std::accumulate(mass.begin(), mass.end(), 0.0);
  while (picks.size() < count && remaining > 0.0) {
    const double u = rng.uniform() * remaining;
    double acc = 0.0;
    std::size_t chosen = support.size();
    std::size_t last_positive = support.size();
    for (std::size_t i = 0; i < support.size(); ++i) {
      if (mass[i] <= 0.0)
        continue;
      last_positive = i;
      acc += mass[i];
      if (u < acc) {
        chosen = i;
        break;
      }
    }
    if (chosen == support.size())
      chosen = last_positive;
    if (chosen == support.size())
      break;
    picks.push_back(support[chosen]);
    remaining -= mass[chosen];
    mass[chosen] = 0.0;
    if (picks.size() == support.size())
      break;
  }
  return picks;
}

} // namespace

void DecodeConfig::validate(std::size_t context_length) const {
  if (beam_size < 1)
    throw ValidationError(kModule, "beam_size must be >= 1");
  if (top_k < 1)
    throw ValidationError(kModule, "top_k must be >= 1");
  if (candidates_per_beam() < 1)
    throw ValidationError(kModule, "samples_per_beam must be >= 1");
  if (context_length + 1 > max_total_tokens)
    throw ValidationError(kModule, "context of " + std::to_string(context_length) +
                                       " tokens leaves no room under max_total_tokens " +
                                       std::to_string(max_total_tokens));
  if (length_penalty < 0.0)
    throw ValidationError(kModule, "length_penalty must be >= 0");
  for (const auto &b : banned_sequences)
    if (b.empty())
      throw ValidationError(kModule, "empty banned sequence");
  for (const auto &b : banned_texts)
    if (b.empty())
      throw ValidationError(kModule, "empty banned text");
}

NextTokenDistribution top_k_renormalize(const NextTokenDistribution &dist, std::size_t k) {
  if (k < 1)
    throw ValidationError(kModule, "top_k must be >= 1");
  std::vector<TokenId> support;
  for (std::size_t t = 0; t < dist.size(); ++t)
    if (dist.probabilities[t] > 0.0)
      support.push_back(static_cast<TokenId>(t));
  if (k >= support.size())
    return dist;

  auto higher = [&](TokenId a, TokenId b) {
    const double pa = dist.probabilities[a], pb = dist.probabilities[b];
    return pa != pb ? pa > pb : a < b;
  };
  std::nth_element(support.begin(), support.begin() + static_cast<std::ptrdiff_t>(k - 1), support.end(), higher);
  NextTokenDistribution out;
  out.probabilities.assign(dist.size(), 0.0);
  for (std::size_t i = 0; i < k; ++i)
    out.probabilities[support[i]] = dist.probabilities[support[i]];
  renormalize(out.probabilities);
  return out;
}

std::optional<NextTokenDistribution> apply_constraints(const NextTokenDistribution &dist,
                                                       std::span<const TokenId> context,
                                                       std::span<const TokenId> prefix,
                                                       const DecodeConfig &config, const Vocabulary *vocab) {
  std::vector<double> p = dist.probabilities;
  auto ban = [&](TokenId t) {
    if (t < p.size())
      p[t] = 0.0;
  };

  const std::size_t n = config.no_repeat_ngram;
  if (n > 0 && context.size() + prefix.size() >= n - 1) {
    TokenSequence seq(context.begin(), context.end());
    seq.insert(seq.end(), prefix.begin(), prefix.end());
    const std::size_t key_len = n - 1;
    const auto key = std::span<const TokenId>(seq).subspan(seq.size() - key_len);
    for (std::size_t k = 0; k + n <= seq.size(); ++k)
      if (std::equal(key.begin(), key.end(), seq.begin() + static_cast<std::ptrdiff_t>(k)))
        ban(seq[k + key_len]);
  }

  for (const auto &banned : config.banned_sequences)
    if (ends_with(prefix, std::span<const TokenId>(banned).first(banned.size() - 1)))
      ban(banned.back());

  if (vocab && !config.banned_texts.empty()) {
    std::size_t longest = 0;
    for (const auto &b : config.banned_texts)
      longest = std::max(longest, b.size());
    const std::string tail = tail_bytes(*vocab, prefix, longest - 1);
    for (std::size_t t = 0; t < p.size(); ++t) {
      if (p[t] <= 0.0 || !vocab->contains(static_cast<TokenId>(t)))
        continue;
      const std::string joined = tail + vocab->token_bytes(static_cast<TokenId>(t));
      for (const auto &b : config.banned_texts) {
        // Only matches that end inside the candidate token are new.
        const std::size_t from = tail.size() + 1 >= b.size() ? tail.size() + 1 - b.size() : 0;
        if (joined.find(b, from) != std::string::npos) {
          p[t] = 0.0;
          break;
        }
      }
    }
  }

  double sum = 0.0;
  for (double v : p)
    sum += v;
  if (!(sum > 0.0))
    return std::nullopt;
  for (double &v : p)
    v /= sum;
  return NextTokenDistribution{std::move(p)};
}

GeneratedResponse generate(const LMBackend &backend, const Vocabulary &vocab, std::span<const TokenId> context,
                           const DecodeConfig &config) {
  config.validate(context.size());
  if (backend.vocab_size() > vocab.size())
    throw ValidationError(kModule, "backend vocabulary is larger than the tokenizer vocabulary");

  const std::unordered_set<TokenId> stops(config.stop_tokens.begin(), config.stop_tokens.end());
  std::size_t longest_stop = 0;
  for (const auto &s : config.stop_texts)
    longest_stop = std::max(longest_stop, s.size());

  Rng rng(config.rng_seed);
  std::vector<BeamState> live(1);
  std::vector<BeamState> finished;
  std::optional<BeamState> best_dead;
  const std::size_t limit = std::min(config.max_new_tokens, config.max_total_tokens - context.size());

  auto final_score = [&](const BeamState &h) {
    if (config.length_penalty <= 0.0 || h.prefix.empty())
      return h.joint_log_prob;
    return h.joint_log_prob / std::pow(static_cast<double>(h.prefix.size()), config.length_penalty);
  };

  std::size_t steps = 0;
  TokenSequence full(context.begin(), context.end());
  while (!live.empty() && steps < limit) {
    std::vector<BeamState> pool;
    for (const BeamState &beam : live) {
      full.resize(context.size());
      full.insert(full.end(), beam.prefix.begin(), beam.prefix.end());
      const NextTokenDistribution dist = backend.next_token_distribution(full);
      const auto constrained =
          apply_constraints(top_k_renormalize(dist, config.top_k), context, beam.prefix, config, &vocab);
      if (!constrained) {
        if (!best_dead || better(beam, *best_dead))
          best_dead = beam;
        continue;
      }
      for (TokenId t : sample_distinct(*constrained, config.candidates_per_beam(), rng)) {
        const double score = beam.joint_log_prob + std::log(dist[t]);
        if (stops.contains(t)) {
          finished.push_back(BeamState{beam.prefix, score, true, beam.bytes});
          continue;
        }
        BeamState next{beam.prefix, score, false, beam.bytes + vocab.token_bytes(t)};
        next.prefix.push_back(t);

        std::size_t cut = std::string::npos;
        const std::size_t from = beam.bytes.size() + 1 >= longest_stop ? beam.bytes.size() + 1 - longest_stop : 0;
        for (const auto &s : config.stop_texts)
          cut = std::min(cut, next.bytes.find(s, from));
        if (cut == std::string::npos) {
          pool.push_back(std::move(next));
          continue;
        }
        std::size_t keep = 0, bytes = 0;
        while (keep < next.prefix.size() && bytes + vocab.token_bytes(next.prefix[keep]).size() <= cut)
          bytes += vocab.token_bytes(next.prefix[keep++]).size();
        next.prefix.resize(keep);
        next.bytes.resize(bytes);
        next.finished = true;
        finished.push_back(std::move(next));
      }
    }
    ++steps;

    std::sort(pool.begin(), pool.end(), [](const BeamState &a, const BeamState &b) {
      return a.prefix != b.prefix ? a.prefix < b.prefix : a.joint_log_prob > b.joint_log_prob;
    });
    pool.erase(std::unique(pool.begin(), pool.end(),
                           [](const BeamState &a, const BeamState &b) { return a.prefix == b.prefix; }),
               pool.end());
    std::sort(pool.begin(), pool.end(), better);
    if (pool.size() > config.beam_size)
      pool.resize(config.beam_size);
    live = std::move(pool);

    // Scores only decrease as hypotheses grow, so once beam_size finished
    // hypotheses beat every live one the search is settled.
    if (config.length_penalty <= 0.0 && finished.size() >= config.beam_size && !live.empty()) {
      std::vector<double> scores;
      for (const auto &f : finished)
        scores.push_back(f.joint_log_prob);
      std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(config.beam_size - 1),
                       scores.end(), std::greater<>());
      if (live.front().joint_log_prob <= scores[config.beam_size - 1])
        break;
    }
  }

  const std::vector<BeamState> &candidates = finished.empty() ? live : finished;
  if (candidates.empty()) {
    const BeamState partial = best_dead.value_or(BeamState{});
    throw DecodeError("every beam dead-ended after " + std::to_string(steps) + " steps",
                      GeneratedResponse{decode(vocab, partial.prefix), partial.prefix, partial.joint_log_prob, steps, false});
  }
  const BeamState *best = &candidates.front();
  for (const auto &h : candidates) {
    const double a = final_score(h), b = final_score(*best);
    if (a > b || (a == b && h.prefix < best->prefix))
      best = &h;
  }
  return GeneratedResponse{decode(vocab, best->prefix), best->prefix, best->joint_log_prob, steps, !finished.empty()};
}

void add_banned_words(DecodeConfig &config, const Vocabulary &vocab, std::string_view word_list) {
  std::size_t pos = 0;
  while (pos < word_list.size()) {
    std::size_t end = word_list.find('\n', pos);
    if (end == std::string_view::npos)
      end = word_list.size();
    std::string_view word = word_list.substr(pos, end - pos);
    pos = end + 1;
    if (!word.empty() && word.back() == '\r')
      word.remove_suffix(1);
    if (word.empty())
      continue;
    config.banned_sequences.push_back(encode(vocab, word));
    config.banned_texts.emplace_back(word);
  }
}

} // namespace forumlm
