#include "forumlm/ngram_lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <omp.h>

#include "forumlm/error.hpp"

namespace forumlm {

namespace {

constexpr const char *kModule = "ngram_lm";
constexpr int kFileVersion = 1;

void merge_into(NGramCounts &dst, NGramCounts &&src) {
  for (auto &[ctx, cc] : src) {
    auto [it, inserted] = dst.try_emplace(ctx);
    if (inserted) {
      it->second = std::move(cc);
      continue;
    }
    it->second.total += cc.total;
    for (const auto &[tok, c] : cc.next)
      it->second.next[tok] += c;
  }
}

void count_record(NGramCounts &counts, std::span<const TokenId> record, std::size_t order, bool end_event) {
  const std::size_t n = record.size();
  TokenSequence ctx;
  for (std::size_t i = 0; i < n + (end_event ? 1 : 0); ++i) {
    const TokenId next = i < n ? record[i] : Vocabulary::kRecordDelimiter;
    const std::size_t h = std::min(i, order - 1);
    ctx.assign(record.begin() + static_cast<std::ptrdiff_t>(i - h), record.begin() + static_cast<std::ptrdiff_t>(i));
    ContextCounts &cc = counts[ctx];
    ++cc.total;
    ++cc.next[next];
  }
}

} // namespace

double NextTokenDistribution::sum() const {
  // Kahan summation; plain accumulation over a 50k vocabulary drifts close
  // to the 1e-9 normalization tolerance.
  double s = 0.0, c = 0.0;
  for (double p : probabilities) {
    const double y = p - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return s;
}

NGramModel::NGramModel(std::size_t order, double alpha, std::size_t vocab_size, NGramCounts counts)
    : order_(order), alpha_(alpha), vocab_size_(vocab_size), counts_(std::move(counts)) {
  if (order_ < 1)
    throw ValidationError(kModule, "order must be >= 1");
  if (!(alpha_ > 0.0))
    throw ValidationError(kModule, "alpha must be > 0");
  if (vocab_size_ == 0)
    throw ValidationError(kModule, "vocabulary size must be > 0");
  for (const auto &[ctx, cc] : counts_) {
    if (ctx.size() >= order_)
      throw ValidationError(kModule, "context longer than order - 1");
    std::uint64_t total = 0;
    for (const auto &[tok, c] : cc.next) {
      if (tok >= vocab_size_)
        throw ValidationError(kModule, "count for token " + std::to_string(tok) + " outside the vocabulary");
      total += c;
    }
    if (total != cc.total)
      throw ValidationError(kModule, "context total does not match its counts");
  }
}

std::span<const TokenId> NGramModel::history(std::span<const TokenId> context) const {
  auto reset = std::find(context.rbegin(), context.rend(), Vocabulary::kRecordDelimiter);
  if (reset != context.rend())
    context = context.subspan(context.size() - static_cast<std::size_t>(reset - context.rbegin()));
  const std::size_t h = std::min(context.size(), order_ - 1);
  return context.subspan(context.size() - h);
}

std::uint64_t NGramModel::count(std::span<const TokenId> context, TokenId token) const {
  auto it = counts_.find(TokenSequence(context.begin(), context.end()));
  if (it == counts_.end())
    return 0;
  auto t = it->second.next.find(token);
  return t == it->second.next.end() ? 0 : t->second;
}

NextTokenDistribution NGramModel::next_token_distribution(std::span<const TokenId> context) const {
  const auto h = history(context);
  NextTokenDistribution dist;
  auto it = counts_.find(TokenSequence(h.begin(), h.end()));
  const double total = it == counts_.end() ? 0.0 : static_cast<double>(it->second.total);
  const double denom = total + alpha_ * static_cast<double>(vocab_size_);
  dist.probabilities.assign(vocab_size_, alpha_ / denom);
  if (it != counts_.end())
    for (const auto &[tok, c] : it->second.next)
      dist.probabilities[tok] = (static_cast<double>(c) + alpha_) / denom;
  return dist;
}

double NGramModel::probability(std::span<const TokenId> context, TokenId token) const {
  const auto h = history(context);
  auto it = counts_.find(TokenSequence(h.begin(), h.end()));
  double total = 0.0, c = 0.0;
  if (it != counts_.end()) {
    total = static_cast<double>(it->second.total);
    if (auto t = it->second.next.find(token); t != it->second.next.end())
      c = static_cast<double>(t->second);
  }
  return (c + alpha_) / (total + alpha_ * static_cast<double>(vocab_size_));
}

std::string NGramModel::to_file() const {
  std::vector<const TokenSequence *> contexts;
  contexts.reserve(counts_.size());
  for (const auto &[ctx, cc] : counts_)
    contexts.push_back(&ctx);
  std::sort(contexts.begin(), contexts.end(), [](const TokenSequence *a, const TokenSequence *b) {
    return a->size() != b->size() ? a->size() < b->size() : *a < *b;
  });

  char alpha[64];
  std::snprintf(alpha, sizeof alpha, "%.17g", alpha_);
  std::ostringstream out;
  out << "forumlm-ngram version=" << kFileVersion << " order=" << order_ << " alpha=" << alpha
      << " vocab_size=" << vocab_size_ << " contexts=" << counts_.size() << '\n';
  for (const TokenSequence *ctx : contexts) {
    const ContextCounts &cc = counts_.at(*ctx);
    std::vector<std::pair<TokenId, std::uint64_t>> rows(cc.next.begin(), cc.next.end());
    std::sort(rows.begin(), rows.end());
    out << 'C';
    for (TokenId t : *ctx)
      out << ' ' << t;
    out << '\n';
    for (const auto &[tok, c] : rows)
      out << tok << ' ' << c << '\n';
  }
  return out.str();
}

NGramModel NGramModel::from_file(std::string_view content) {
  std::istringstream in{std::string(content)};
  std::string line;
  if (!std::getline(in, line))
    throw ParseError(kModule, 1, "empty model file");
  std::size_t order = 0, vocab_size = 0, contexts = 0;
  double alpha = 0.0;
  int version = 0;
  if (std::sscanf(line.c_str(), "forumlm-ngram version=%d order=%zu alpha=%lf vocab_size=%zu contexts=%zu",
                  &version, &order, &alpha, &vocab_size, &contexts) != 5)
    throw ParseError(kModule, 1, "malformed header");
  if (version != kFileVersion)
    throw ParseError(kModule, 1, "unsupported model version " + std::to_string(version));

  NGramCounts counts;
  ContextCounts *current = nullptr;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty())
      continue;
    std::istringstream ls(line);
    if (line[0] == 'C') {
      ls.get();
      TokenSequence ctx;
      TokenId t;
      while (ls >> t)
        ctx.push_back(t);
      if (ctx.size() >= order)
        throw ParseError(kModule, line_no, "context longer than order - 1");
      current = &counts[ctx];
      continue;
    }
    TokenId tok;
    std::uint64_t c;
    if (!current || !(ls >> tok >> c) || tok >= vocab_size)
      throw ParseError(kModule, line_no, "bad count row");
    current->next[tok] += c;
    current->total += c;
  }
  if (counts.size() != contexts)
    throw ParseError(kModule, line_no, "context count does not match header");
  return NGramModel(order, alpha, vocab_size, std::move(counts));
}

NGramCounts count_ngram_events(std::span<const TokenSequence> records, std::size_t order, bool end_events) {
  if (order < 1)
    throw ValidationError(kModule, "order must be >= 1");
  const auto count = static_cast<std::int64_t>(records.size());
  const int workers = omp_get_max_threads();
  std::vector<NGramCounts> partial(static_cast<std::size_t>(workers));
#pragma omp parallel num_threads(workers)
  {
    NGramCounts &local = partial[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(dynamic, 32)
    for (std::int64_t r = 0; r < count; ++r)
      count_record(local, records[static_cast<std::size_t>(r)], order, end_events);
  }
  NGramCounts total = std::move(partial.front());
  for (std::size_t w = 1; w < partial.size(); ++w)
    merge_into(total, std::move(partial[w]));
  return total;
}

NGramModel train_ngram(std::span<const TokenSequence> records, const Vocabulary &vocab, std::size_t order,
                       double alpha) {
  if (records.empty())
    throw ValidationError(kModule, "no training records");
  for (std::size_t r = 0; r < records.size(); ++r)
    for (TokenId t : records[r])
      if (!vocab.contains(t))
        throw ValidationError(kModule, "record " + std::to_string(r) + " holds token " + std::to_string(t) +
                                           " outside the vocabulary");
  return NGramModel(order, alpha, vocab.size(), count_ngram_events(records, order));
}

std::string write_model_bundle(const Vocabulary &vocab, const NGramModel &model) {
  if (model.vocab_size() != vocab.size())
    throw ValidationError(kModule, "model and vocabulary sizes differ");
  return "forumlm-model version=" + std::to_string(kFileVersion) + "\n[vocabulary]\n" + vocab.to_file() +
         "[ngram]\n" + model.to_file();
}

std::pair<Vocabulary, NGramModel> read_model_bundle(std::string_view content) {
  const std::string magic = "forumlm-model version=" + std::to_string(kFileVersion) + "\n[vocabulary]\n";
  if (content.substr(0, magic.size()) != magic)
    throw ParseError(kModule, 1, "not a version " + std::to_string(kFileVersion) + " model bundle");
  const std::size_t split = content.find("\n[ngram]\n");
  if (split == std::string_view::npos)
    throw ParseError(kModule, 1, "model bundle lacks an [ngram] section");
  Vocabulary vocab = Vocabulary::from_file(content.substr(magic.size(), split + 1 - magic.size()));
  NGramModel model = NGramModel::from_file(content.substr(split + 9));
  if (model.vocab_size() != vocab.size())
    throw ValidationError(kModule, "model and vocabulary sizes differ");
  return {std::move(vocab), std::move(model)};
}

double continuation_log_prob(const LMBackend &model, std::span<const TokenId> context,
                             std::span<const TokenId> tokens) {
  TokenSequence seq(context.begin(), context.end());
  seq.reserve(context.size() + tokens.size());
  double total = 0.0;
  for (TokenId t : tokens) {
    if (t >= model.vocab_size())
      throw ValidationError(kModule, "token " + std::to_string(t) + " outside the vocabulary");
    total += std::log(model.next_token_distribution(seq)[t]);
    seq.push_back(t);
  }
  return total;
}

double sequence_log_prob(const LMBackend &model, std::span<const TokenId> tokens) {
  if (tokens.empty())
    throw ValidationError(kModule, "sequence_log_prob of an empty sequence");
  return continuation_log_prob(model, {}, tokens);
}

} // namespace forumlm
