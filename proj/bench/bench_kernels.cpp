#include <benchmark/benchmark.h>

#include <omp.h>

#include "forumlm/reference.hpp"
#include "support/synthetic.hpp"

using namespace forumlm;

namespace {

struct Corpus {
  std::vector<ForumThread> threads;
  std::vector<std::string> texts;
  Vocabulary vocab;
  std::vector<TokenSequence> tokens;
};

const Corpus &corpus() {
  static const Corpus c = [] {
    Corpus c;
    c.threads = testing::synthetic_threads(2000, 42);
    for (const auto &t : c.threads)
      c.texts.push_back(render_thread(t));
    c.vocab = train_bpe(std::span(c.texts).first(500), 1500).vocab;
    c.tokens = reference::encode_batch(c.vocab, c.texts);
    return c;
  }();
  return c;
}

void set_threads(benchmark::State &state) {
  if (state.range(0) > 0)
    omp_set_num_threads(static_cast<int>(state.range(0)));
}

void BM_CountPairs_Parallel(benchmark::State &state) {
  set_threads(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(count_pairs(corpus().tokens));
}

void BM_CountPairs_Reference(benchmark::State &state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::count_pairs(corpus().tokens));
}

void BM_CountNgrams_Parallel(benchmark::State &state) {
  set_threads(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(count_ngram_events(corpus().tokens, 4));
}

void BM_CountNgrams_Reference(benchmark::State &state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::count_ngram_events(corpus().tokens, 4));
}

void BM_FormatCorpus_Parallel(benchmark::State &state) {
  set_threads(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(format_corpus(corpus().threads, corpus().vocab));
}

void BM_FormatCorpus_Reference(benchmark::State &state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::format_corpus(corpus().threads, corpus().vocab));
}

void BM_EncodeBatch_Parallel(benchmark::State &state) {
  set_threads(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(encode_batch(corpus().vocab, corpus().texts));
}

void BM_EncodeBatch_Reference(benchmark::State &state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::encode_batch(corpus().vocab, corpus().texts));
}

} // namespace

// Argument: OpenMP thread count (0 leaves the runtime default).
BENCHMARK(BM_CountPairs_Parallel)->Arg(0)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CountPairs_Reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CountNgrams_Parallel)->Arg(0)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CountNgrams_Reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FormatCorpus_Parallel)->Arg(0)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FormatCorpus_Reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EncodeBatch_Parallel)->Arg(0)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EncodeBatch_Reference)->Unit(benchmark::kMillisecond);

int main(int argc, char **argv) {
  corpus(); // build the shared corpus outside the timed region
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv))
    return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
