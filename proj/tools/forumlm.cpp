// forumlm: format, tokenize, train, generate, build the evaluation study,
// serve it to annotators and score the answers.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "forumlm/annotation.hpp"
#include "forumlm/annotation_server.hpp"
#include "forumlm/bpe.hpp"
#include "forumlm/decoder.hpp"
#include "forumlm/error.hpp"
#include "forumlm/ngram_lm.hpp"
#include "forumlm/record_formatter.hpp"
#include "forumlm/study.hpp"
#include "forumlm/thread_model.hpp"

namespace fs = std::filesystem;
using namespace forumlm;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kValidation = 2, kRuntime = 3 };

constexpr const char *kConfigEnv = "FORUMLM_CONFIG";

std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error("cli", "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string &path, const std::string &content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out)
    throw Error("cli", "cannot write " + path);
}

struct DecodeFlags {
  std::size_t beam = 6;
  std::size_t top_k = 50;
  std::size_t no_repeat = 3;
  std::size_t max_new = 400;
  std::size_t max_total = 400;
  std::size_t samples_per_beam = 0;
  double length_penalty = 0.0;
  std::string banned;

  void add(CLI::App *cmd) {
    cmd->add_option("--beam", beam, "Beam size")->capture_default_str();
    cmd->add_option("--top-k", top_k, "Sample from the k most probable tokens")->capture_default_str();
    cmd->add_option("--no-repeat", no_repeat, "Block repeated n-grams of this order (0: off)")->capture_default_str();
    cmd->add_option("--max-new", max_new, "Maximum generated tokens")->capture_default_str();
    cmd->add_option("--max-total", max_total, "Maximum context plus generated tokens")->capture_default_str();
    cmd->add_option("--samples-per-beam", samples_per_beam, "Candidates drawn per beam (0: beam size)");
    cmd->add_option("--length-penalty", length_penalty, "Length normalization exponent (0: off)");
    cmd->add_option("--banned", banned, "Banned word list, one word per line")->check(CLI::ExistingFile);
  }

  DecodeConfig config(const Vocabulary &vocab, std::uint64_t seed) const {
    DecodeConfig c;
    c.beam_size = beam;
    c.top_k = top_k;
    c.no_repeat_ngram = no_repeat;
    c.max_new_tokens = max_new;
    c.max_total_tokens = max_total;
    if (samples_per_beam > 0)
      c.samples_per_beam = samples_per_beam;
    c.length_penalty = length_penalty;
    c.rng_seed = seed;
    if (!banned.empty())
      add_banned_words(c, vocab, read_file(banned));
    return c;
  }
};

std::vector<std::string> corpus_documents(const std::string &records_path, const std::string &threads_path) {
  if (!threads_path.empty()) {
    std::vector<std::string> docs;
    for (const auto &t : parse_thread_file(read_file(threads_path)))
      docs.push_back(render_thread(t));
    return docs;
  }
  return read_record_file(read_file(records_path));
}

AnnotationServer *g_server = nullptr;

void on_signal(int) {
  if (g_server)
    g_server->stop();
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"forumlm: forum-thread language modelling and evaluation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string default_config;
  if (const char *env = std::getenv(kConfigEnv))
    default_config = env;
  app.set_config("--config", default_config, "TOML config file (flags override it); default from $FORUMLM_CONFIG");
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for every stochastic stage")->capture_default_str();

  // format
  auto *format = app.add_subcommand("format", "Serialize threads into bounded-token training records");
  std::string fmt_in, fmt_vocab, fmt_out, fmt_delim(Vocabulary::kRecordDelimiterText);
  std::size_t budget = kDefaultRecordBudget;
  format->add_option("--in", fmt_in, "Thread interchange file (JSON lines)")->required()->check(CLI::ExistingFile);
  format->add_option("--vocab", fmt_vocab, "Vocabulary file")->required()->check(CLI::ExistingFile);
  format->add_option("--budget", budget, "Maximum tokens per record")->capture_default_str();
  format->add_option("--out", fmt_out, "Record file")->required();
  format->add_option("--delimiter", fmt_delim, "Record delimiter line")->capture_default_str();

  // train-bpe
  auto *train_bpe_cmd = app.add_subcommand("train-bpe", "Learn a byte-level BPE vocabulary");
  std::string bpe_in, bpe_threads, bpe_out;
  std::size_t bpe_size = 4000;
  auto *bpe_in_opt = train_bpe_cmd->add_option("--in", bpe_in, "Record file")->check(CLI::ExistingFile);
  auto *bpe_thr_opt =
      train_bpe_cmd->add_option("--threads", bpe_threads, "Thread file, rendered without a budget")->check(CLI::ExistingFile);
  bpe_in_opt->excludes(bpe_thr_opt);
  train_bpe_cmd->add_option("--size", bpe_size, "Target vocabulary size")->capture_default_str();
  train_bpe_cmd->add_option("--out", bpe_out, "Vocabulary file")->required();

  // train-lm
  auto *train_lm_cmd = app.add_subcommand("train-lm", "Count an add-alpha n-gram model over records");
  std::string lm_records, lm_vocab, lm_out;
  std::size_t order = kDefaultOrder;
  double alpha = kDefaultAlpha;
  train_lm_cmd->add_option("--records", lm_records, "Record file")->required()->check(CLI::ExistingFile);
  train_lm_cmd->add_option("--vocab", lm_vocab, "Vocabulary file")->required()->check(CLI::ExistingFile);
  train_lm_cmd->add_option("--order", order, "n-gram order")->capture_default_str();
  train_lm_cmd->add_option("--alpha", alpha, "Additive smoothing constant")->capture_default_str();
  train_lm_cmd->add_option("--out", lm_out, "Model file")->required();

  // generate
  auto *generate_cmd = app.add_subcommand("generate", "Generate a response with constrained beam sampling");
  std::string gen_model, gen_context;
  DecodeFlags gen_flags;
  generate_cmd->add_option("--model", gen_model, "Model file")->required()->check(CLI::ExistingFile);
  generate_cmd->add_option("--context", gen_context, "Context text file")->required()->check(CLI::ExistingFile);
  gen_flags.add(generate_cmd);

  // build-study
  auto *study_cmd = app.add_subcommand("build-study", "Select threads and build the blinded evaluation study");
  std::string st_threads, st_model, st_out, st_ledger;
  StudyConfig st_config;
  DecodeFlags st_flags;
  study_cmd->add_option("--threads", st_threads, "Held-out thread pool")->required()->check(CLI::ExistingFile);
  study_cmd->add_option("--model", st_model, "Model file")->required()->check(CLI::ExistingFile);
  study_cmd->add_option("--out", st_out, "Study file")->required();
  study_cmd->add_option("--ledger", st_ledger, "Provenance ledger file (default: <out stem>.ledger.json)");
  study_cmd->add_option("--study-id", st_config.study_id, "Study identifier")->capture_default_str();
  study_cmd->add_option("--n", st_config.num_threads, "Threads in the study")->capture_default_str();
  study_cmd->add_option("--strata", st_config.num_strata, "Top-level forums to stratify over")->capture_default_str();
  study_cmd->add_option("--forum", st_config.strata, "Explicit stratum (repeatable)");
  study_cmd->add_option("--groups", st_config.groups, "Annotator groups")->capture_default_str();
  study_cmd->add_option("--annotators", st_config.annotators_per_group, "Annotators per group (odd)")
      ->capture_default_str();
  study_cmd->add_option("--max-response-chars", st_config.max_response_chars)->capture_default_str();
  study_cmd->add_option("--max-context-tokens", st_config.max_context_tokens)->capture_default_str();
  study_cmd->add_option("--min-context-posts", st_config.min_context_posts)->capture_default_str();
  study_cmd->add_option("--max-context-posts", st_config.max_context_posts)->capture_default_str();
  study_cmd->add_option("--reserves", st_config.reserves_per_stratum, "Reserve threads per stratum")
      ->capture_default_str();
  st_flags.add(study_cmd);

  // serve
  auto *serve_cmd = app.add_subcommand("serve", "Serve a study to annotators over HTTP");
  std::string sv_study, sv_answers, sv_host = "127.0.0.1", sv_ui;
  int sv_port = 8080;
  serve_cmd->add_option("--study", sv_study, "Study file")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--answers", sv_answers, "Answer log (created if missing)")->required();
  serve_cmd->add_option("--host", sv_host)->capture_default_str();
  serve_cmd->add_option("--port", sv_port)->capture_default_str();
  serve_cmd->add_option("--ui", sv_ui, "Directory with the annotation UI bundle")->check(CLI::ExistingDirectory);

  // score
  auto *score_cmd = app.add_subcommand("score", "Majority-vote statistics over the answer log");
  std::string sc_study, sc_answers, sc_plot, sc_agreement = "favourable", sc_json;
  bool sc_strict = false;
  score_cmd->add_option("--study", sc_study, "Study file")->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--answers", sc_answers, "Answer log")->required()->check(CLI::ExistingFile);
  score_cmd->add_flag("--strict", sc_strict, "Fail when any item lacks answers");
  score_cmd->add_option("--plot-out", sc_plot, "Per-forum CSV for plotting");
  score_cmd->add_option("--json", sc_json, "Write the full results as JSON");
  score_cmd->add_option("--agreement", sc_agreement, "Parenthesized figure: favourable or any unanimity")
      ->check(CLI::IsMember({"favourable", "any"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  auto load_study = [](const std::string &path) {
    const std::string content = read_file(path);
    const fs::path ledger = fs::path(path).parent_path() / ledger_reference(content);
    return read_study(content, read_file(ledger.string()));
  };

  try {
    if (*format) {
      const auto threads = parse_thread_file(read_file(fmt_in));
      const Vocabulary vocab = Vocabulary::from_file(read_file(fmt_vocab));
      const FormatResult result = format_corpus(threads, vocab, budget);
      for (const auto &w : result.warnings)
        std::cerr << "warning: " << w << '\n';
      write_file(fmt_out, write_record_file(result.records, fmt_delim));
      std::cerr << threads.size() << " threads -> " << result.records.size() << " records\n";
    } else if (*train_bpe_cmd) {
      if (bpe_in.empty() && bpe_threads.empty())
        throw ValidationError("cli", "train-bpe needs --in or --threads");
      const auto docs = corpus_documents(bpe_in, bpe_threads);
      const BpeTrainResult result = train_bpe(docs, bpe_size);
      if (result.warning)
        std::cerr << "warning: " << *result.warning << '\n';
      write_file(bpe_out, result.vocab.to_file());
      std::cerr << "vocabulary size " << result.vocab.size() << '\n';
    } else if (*train_lm_cmd) {
      const Vocabulary vocab = Vocabulary::from_file(read_file(lm_vocab));
      const auto records = read_record_file(read_file(lm_records));
      const auto tokens = encode_batch(vocab, records);
      const NGramModel model = train_ngram(tokens, vocab, order, alpha);
      write_file(lm_out, write_model_bundle(vocab, model));
      std::cerr << records.size() << " records, " << model.counts().size() << " contexts\n";
    } else if (*generate_cmd) {
      const auto [vocab, model] = read_model_bundle(read_file(gen_model));
      const DecodeConfig config = gen_flags.config(vocab, seed);
      const TokenSequence context = encode(vocab, read_file(gen_context));
      const GeneratedResponse response = generate(model, vocab, context, config);
      std::cout << response.text << '\n';
      std::printf("joint_log_prob\t%.17g\n", response.joint_log_prob);
    } else if (*study_cmd) {
      const auto pool = parse_thread_file(read_file(st_threads));
      const auto [vocab, model] = read_model_bundle(read_file(st_model));
      st_config.rng_seed = seed;
      const DecodeConfig decode = st_flags.config(vocab, seed);
      const Selection selection = select_threads(pool, vocab, st_config);
      const Study study = build_study(pool, selection, model, vocab, decode, st_config);
      if (st_ledger.empty())
        st_ledger = (fs::path(st_out).parent_path() / (fs::path(st_out).stem().string() + ".ledger.json")).string();
      const fs::path ledger_rel = fs::path(st_ledger).lexically_relative(fs::path(st_out).parent_path());
      write_file(st_out, write_study_file(study, ledger_rel.empty() ? st_ledger : ledger_rel.string()));
      write_file(st_ledger, write_ledger_file(study));
      for (const auto &line : study.log)
        std::cerr << "log: " << line << '\n';
      std::cerr << study.items.size() << " items in " << study.annotators.size() << " groups\n";
    } else if (*serve_cmd) {
      AnnotationServer server;
      server.add_study(load_study(sv_study), fs::path(sv_answers));
      if (!sv_ui.empty())
        server.set_static_dir(sv_ui);
      const int port = server.bind(sv_host, sv_port);
      if (port < 0)
        throw Error("annotation_service", "cannot bind " + sv_host + ":" + std::to_string(sv_port));
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "serving on http://" << sv_host << ':' << port << '\n';
      server.run();
      g_server = nullptr;
    } else if (*score_cmd) {
      const Study study = load_study(sc_study);
      const auto answers = parse_answer_log(read_file(sc_answers));
      const auto mode = sc_agreement == "any" ? AgreementMode::kAnyUnanimous : AgreementMode::kUnanimousFavourable;
      const ResultsTable results = compute_results(study, answers, sc_strict, mode);
      if (!results.complete)
        std::cerr << "warning: " << results.incomplete_items.size() << " items lack answers and were skipped\n";
      std::cout << render_table(results);
      if (!sc_plot.empty())
        write_file(sc_plot, render_plot_data(results));
      if (!sc_json.empty())
        write_file(sc_json, results_to_json(results).dump(2) + "\n");
    }
  } catch (const ValidationError &e) {
    std::cerr << "forumlm: " << e.module() << ": " << e.what() << '\n';
    return kValidation;
  } catch (const ParseError &e) {
    std::cerr << "forumlm: " << e.module() << ": " << e.what() << '\n';
    return kValidation;
  } catch (const Error &e) {
    std::cerr << "forumlm: " << e.module() << ": " << e.what() << '\n';
    return kRuntime;
  } catch (const std::exception &e) {
    std::cerr << "forumlm: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
