#include "plot.hpp"

#include "tod/corpus/io.hpp"
#include "tod/corpus/synthetic.hpp"
#include "tod/corpus/text.hpp"
#include "tod/miner/miner.hpp"
#include "tod/model/poly_ranker.hpp"
#include "tod/registry/registry.hpp"
#include "tod/serve/bench.hpp"
#include "tod/serve/http.hpp"
#include "tod/serve/service.hpp"
#include "tod/train/examples.hpp"
#include "tod/train/fit.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <random>

namespace {

using namespace tod;

corpus::SyntheticConfig resolve_config(const std::string& name, int dialogues) {
  corpus::SyntheticConfig cfg;
  if (name == "desk") {
    cfg = corpus::desk_config();
  } else if (name == "coverage") {
    cfg = corpus::coverage_config(8000, 5000, 1.0);
  } else {
    cfg = corpus::load_config(name);
  }
  if (dialogues > 0) cfg.dialogues = dialogues;
  return cfg;
}

std::vector<corpus::Dialogue> read_dialogues(const std::string& path) {
  auto result = corpus::load_corpus(path);
  for (const auto& d : result.diagnostics) spdlog::warn("{}:{}: {}", path, d.line, d.message);
  return std::move(result.dialogues);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::vector<std::size_t> parse_sizes(const std::string& spec) {
  std::vector<std::size_t> out;
  std::stringstream ss(spec);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    out.push_back(std::stoul(item));
  }
  if (out.empty()) throw std::invalid_argument("no sizes in '" + spec + "'");
  return out;
}

// ---- gen-corpus -----------------------------------------------------------

struct GenArgs {
  std::string config = "desk";
  int dialogues = 0;
  std::uint64_t seed = 1;
  std::string out;
  std::string pool_out;
  std::string dump_config;
};

int run_gen(const GenArgs& a) {
  const auto cfg = resolve_config(a.config, a.dialogues);
  if (!a.dump_config.empty()) write_text(a.dump_config, corpus::config_to_json(cfg) + "\n");
  if (!a.out.empty()) {
    const auto dialogues = corpus::generate_synthetic(cfg, a.seed);
    corpus::save_corpus(dialogues, a.out);
    spdlog::info("wrote {} dialogues to {}", dialogues.size(), a.out);
  }
  if (!a.pool_out.empty()) {
    auto pool = registry::pool_from_gold(corpus::gold_bank(cfg));
    registry::save_pool(pool, a.pool_out);
    spdlog::info("wrote {} gold templates to {}", pool.templates.size(), a.pool_out);
  }
  return 0;
}

// ---- corpus-stats ---------------------------------------------------------

int run_stats(const std::string& in) {
  auto result = corpus::load_corpus(in);
  const auto& ds = result.dialogues;
  std::size_t turns = 0, agent = 0, tokens = 0;
  std::map<std::string, std::size_t> intents;
  for (const auto& d : ds) {
    turns += d.turns.size();
    agent += d.agent_turn_count();
    for (const auto& t : d.turns) tokens += corpus::tokenize(t.text).size();
    ++intents[d.intent.empty() ? "(none)" : d.intent];
  }
  nlohmann::ordered_json j;
  j["dialogues"] = ds.size();
  j["turns"] = turns;
  j["agent_turns"] = agent;
  j["tokens"] = tokens;
  j["mean_turns"] = ds.empty() ? 0.0 : double(turns) / double(ds.size());
  j["vocab_size"] = corpus::build_vocab(ds, 1u << 30).size() - corpus::Vocab::kReserved;
  j["intents"] = intents;
  j["malformed_lines"] = result.diagnostics.size();
  std::cout << j.dump(2) << "\n";
  return 0;
}

// ---- mine -----------------------------------------------------------------

struct MineArgs {
  std::string corpus;
  double lambda = 0.4;
  std::int64_t f1 = 350;
  std::int64_t f2 = 15;
  std::string keywords;
  std::string exclude;
  bool no_keyword_rule = false;
  std::string out;
};

int run_mine(const MineArgs& a) {
  miner::MinerParams p;
  p.lambda = a.lambda;
  p.f1 = a.f1;
  p.f2 = a.f2;
  p.keyword_rule = !a.no_keyword_rule;
  if (!a.keywords.empty()) p.keywords = miner::load_word_list(a.keywords);
  const std::vector<std::string> exclude = a.exclude.empty() ? std::vector<std::string>{}
                                                             : miner::load_word_list(a.exclude);
  const auto dialogues = read_dialogues(a.corpus);
  const auto records = miner::preprocess_sentences(dialogues);
  const auto mined = miner::mine_pool(records, p, exclude);
  registry::save_pool(registry::pool_from_mined(mined), a.out);
  spdlog::info("mined {} templates from {} distinct sentences", mined.size(), records.size());
  return 0;
}

// ---- coverage -------------------------------------------------------------

int run_coverage(const std::string& pool_path, const std::string& heldout, const std::string& sizes) {
  const auto pool = registry::load_pool(pool_path);
  const auto reports = miner::coverage_bleu(pool.texts(), read_dialogues(heldout), parse_sizes(sizes));
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : reports) j.push_back({{"pool_size", r.pool_size}, {"mean_bleu", r.mean_bleu}});
  std::cout << j.dump(2) << "\n";
  return 0;
}

// ---- pool decorate --------------------------------------------------------

struct DecorateArgs {
  std::string pool;
  std::string out;
  int id = 0;
  std::vector<std::string> constraints;
  std::string action;
};

int run_decorate(const DecorateArgs& a) {
  const auto pool = registry::load_pool(a.pool);
  std::optional<registry::Action> action;
  if (!a.action.empty()) action = registry::parse_action(a.action);
  std::optional<std::vector<registry::Constraint>> constraints;
  if (!a.constraints.empty()) {
    constraints.emplace();
    for (const auto& c : a.constraints) constraints->push_back(registry::parse_constraint(c));
  }
  const auto next = registry::attach_decoration(pool, a.id, action, constraints);
  registry::save_pool(next, a.out.empty() ? a.pool : a.out);
  spdlog::info("template {} decorated; pool version {}", a.id, next.version);
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string stage = "sst";
  bool replay = false;
  std::string corpus;
  std::string pool;
  std::string feedback;
  std::string init;
  std::string out;
  std::string history;
  int dim = 64;
  int layers = 2;
  int heads = 4;
  int ffn = 0;
  int history_codes = 16;
  int feature_codes = 8;
  bool shared_encoder = false;
  double dropout = 0.1;
  double lr = 0.00015;
  int epochs = 30;
  int patience = 3;
  std::size_t batch = 32;
  std::size_t negatives = 29;
  std::size_t vocab_cap = 5000;
  std::string loss = "bce";
  std::uint64_t seed = 1;
};

void split_events(const std::vector<train::FeedbackEvent>& events, std::uint64_t seed,
                  std::vector<train::FeedbackEvent>& fit_set, std::vector<train::FeedbackEvent>& dev_set) {
  std::vector<std::string> sessions;
  for (const auto& e : events) sessions.push_back(e.session_id);
  std::sort(sessions.begin(), sessions.end());
  sessions.erase(std::unique(sessions.begin(), sessions.end()), sessions.end());
  std::mt19937_64 rng(seed);
  std::shuffle(sessions.begin(), sessions.end(), rng);
  const std::size_t n_dev = std::max<std::size_t>(1, sessions.size() / 10);
  const std::set<std::string> dev(sessions.begin(), sessions.begin() + std::ptrdiff_t(std::min(n_dev, sessions.size())));
  for (const auto& e : events) (dev.count(e.session_id) && sessions.size() > 1 ? dev_set : fit_set).push_back(e);
}

int run_train(const TrainArgs& a) {
  train::FitConfig fc;
  fc.adam.lr = a.lr;
  fc.max_epochs = a.epochs;
  fc.patience = a.patience;
  fc.batch_size = a.batch;
  fc.seed = a.seed;
  if (a.loss == "categorical") {
    fc.loss = model::LossKind::kCategorical;
  } else if (a.loss != "bce") {
    throw std::invalid_argument("--loss must be bce or categorical");
  }
  const std::string history_path = a.history.empty() ? a.out + ".history.jsonl" : a.history;
  std::vector<train::EpochRecord> history;
  auto on_epoch = [&](const train::EpochRecord& r) {
    history.push_back(r);
    train::save_history(history, history_path);
  };

  if (a.stage == "sst") {
    if (a.corpus.empty()) throw std::invalid_argument("--corpus is required for the sst stage");
    const auto dialogues = read_dialogues(a.corpus);
    const auto split = corpus::split_corpus(dialogues, {}, a.seed);
    const auto vocab = corpus::build_vocab(split.train, a.vocab_cap);
    const auto fit_set = train::make_sst_examples(split.train, vocab, a.negatives, a.seed);
    const auto dev_set = train::make_sst_examples(split.dev, vocab, a.negatives, a.seed + 1);
    const auto test_set = train::make_sst_examples(split.test, vocab, a.negatives, a.seed + 2);
    model::RankerConfig rc;
    rc.encoder.model_dim = a.dim;
    rc.encoder.layers = a.layers;
    rc.encoder.heads = a.heads;
    rc.encoder.ffn_dim = a.ffn > 0 ? a.ffn : 4 * a.dim;
    rc.encoder.dropout = a.dropout;
    rc.encoder.vocab_size = int(vocab.size());
    rc.history_codes = a.history_codes;
    rc.feature_codes = a.feature_codes;
    rc.shared_encoder = a.shared_encoder;
    model::PolyRanker<float> m(rc, a.seed);
    spdlog::info("sst: {} train / {} dev / {} test examples, vocab {}", fit_set.size(), dev_set.size(),
                 test_set.size(), vocab.size());
    const std::vector<train::Monitor> monitors{{"sst_test", test_set}};
    const auto result = train::fit(m, fit_set, dev_set, fc, monitors, on_epoch);
    model::save_model(m, vocab, a.out);
    spdlog::info("best epoch {}: dev R@1 {:.4f} MRR {:.4f}", result.best_epoch, result.best_dev.recall(1),
                 result.best_dev.mrr);
    return 0;
  }

  if (a.stage != "sft") throw std::invalid_argument("--stage must be sst or sft");
  if (a.init.empty() || a.pool.empty() || a.feedback.empty()) {
    throw std::invalid_argument("the sft stage needs --init, --pool and --feedback");
  }
  auto loaded = model::load_model(a.init);
  const auto pool = registry::load_pool(a.pool);
  const auto events = train::load_feedback_log(a.feedback);
  std::vector<train::FeedbackEvent> fit_events, dev_events;
  split_events(events, a.seed, fit_events, dev_events);
  const auto fit_build = train::make_sft_examples(fit_events, pool, loaded.vocab, a.negatives, a.seed);
  const auto dev_build = train::make_sft_examples(dev_events, pool, loaded.vocab, a.negatives, a.seed + 1);
  spdlog::info("sft: {} accepted, {} searched, {} failures", fit_build.accepted + dev_build.accepted,
               fit_build.searched + dev_build.searched, fit_build.failures + dev_build.failures);
  if (fit_build.examples.empty() || dev_build.examples.empty()) {
    throw std::runtime_error("feedback log yields no usable training examples");
  }
  std::vector<train::TrainingExample> fit_set = fit_build.examples;
  std::vector<train::TrainingExample> sst_test;
  std::vector<train::Monitor> monitors;
  if (a.replay) {
    if (a.corpus.empty()) throw std::invalid_argument("--replay needs --corpus");
    const auto split = corpus::split_corpus(read_dialogues(a.corpus), {}, a.seed);
    const auto sst = train::make_sst_examples(split.train, loaded.vocab, a.negatives, a.seed);
    sst_test = train::make_sst_examples(split.test, loaded.vocab, a.negatives, a.seed + 2);
    fit_set = train::mix_replay(fit_build.examples, sst, a.seed);
    monitors.push_back({"sst_test", sst_test});
  }
  const auto result = train::fit(loaded.model, fit_set, dev_build.examples, fc, monitors, on_epoch);
  model::save_model(loaded.model, loaded.vocab, a.out);
  spdlog::info("best epoch {}: dev R@1 {:.4f} MRR {:.4f}", result.best_epoch, result.best_dev.recall(1),
               result.best_dev.mrr);
  return 0;
}

// ---- plot-history ---------------------------------------------------------

int run_plot(const std::string& in, const std::string& out) {
  write_text(out, tools::history_svg(train::load_history(in), "ranking metrics per epoch"));
  return 0;
}

// ---- serve ----------------------------------------------------------------

serve::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

struct ServeArgs {
  std::string checkpoint;
  std::string pool;
  std::string host = "127.0.0.1";
  int port = 8080;
  double explore_temp = 1.0;
  std::string cache;
};

int run_serve(const ServeArgs& a) {
  auto loaded = model::load_model(a.checkpoint);
  auto model = std::make_shared<model::PolyRanker<float>>(std::move(loaded.model));
  serve::ServiceConfig cfg;
  cfg.explore_temperature = a.explore_temp;
  if (const char* log = std::getenv(serve::kFeedbackLogEnv); log != nullptr && *log != '\0') cfg.feedback_log = log;
  serve::Service service(serve::make_snapshot(model, loaded.vocab, registry::load_pool(a.pool), a.cache), cfg);
  serve::HttpServer server(service);
  const int port = server.bind(a.host, a.port);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  spdlog::info("serving {} templates on http://{}:{} (feedback log: {})", service.snapshot()->pool.templates.size(),
               a.host, port, cfg.feedback_log ? cfg.feedback_log->string() : "disabled");
  server.listen();
  g_server = nullptr;
  return 0;
}

// ---- bench ----------------------------------------------------------------

struct BenchArgs {
  std::string checkpoint;
  std::string pool;
  std::string sizes = "250,500,1000,2000,4000";
  std::string requests;
  int repetitions = 5;
  std::string out;
};

int run_bench(const BenchArgs& a) {
  auto loaded = model::load_model(a.checkpoint);
  auto model = std::make_shared<model::PolyRanker<float>>(std::move(loaded.model));
  serve::BenchConfig cfg;
  cfg.sizes = parse_sizes(a.sizes);
  cfg.repetitions = a.repetitions;
  const auto requests = serve::load_requests(a.requests);
  const auto report = serve::bench_latency(model, loaded.vocab, registry::load_pool(a.pool), requests, cfg);
  const auto text = serve::bench_to_json(report);
  if (a.out.empty()) {
    std::cout << text << "\n";
  } else {
    write_text(a.out, text + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("tod"));

  CLI::App app{"Retrieval-based task-oriented dialogue engine"};
  app.require_subcommand(1);
  int verbosity = 0;
  app.add_flag("-v,--verbose", verbosity, "More logging");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic corpus");
  gen_cmd->add_option("--config", gen.config, "desk, coverage, or a config JSON file");
  gen_cmd->add_option("--dialogues", gen.dialogues, "Override the dialogue count");
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--out", gen.out, "Corpus file to write");
  gen_cmd->add_option("--pool-out", gen.pool_out, "Also write the gold template pool");
  gen_cmd->add_option("--dump-config", gen.dump_config, "Write the resolved config as JSON");

  std::string stats_in;
  auto* stats_cmd = app.add_subcommand("corpus-stats", "Summarize a corpus file");
  stats_cmd->add_option("--in", stats_in)->required();

  MineArgs mine;
  auto* mine_cmd = app.add_subcommand("mine", "Mine a template pool from a corpus");
  mine_cmd->add_option("--corpus", mine.corpus)->required();
  mine_cmd->add_option("--lambda", mine.lambda);
  mine_cmd->add_option("--f1", mine.f1);
  mine_cmd->add_option("--f2", mine.f2);
  mine_cmd->add_option("--keywords", mine.keywords, "Keyword lemma list, one per line");
  mine_cmd->add_option("--exclude", mine.exclude, "Sentences to drop, one per line");
  mine_cmd->add_flag("--no-keyword-rule", mine.no_keyword_rule, "Admit on the f1 floor only");
  mine_cmd->add_option("--out", mine.out)->required();

  std::string cov_pool, cov_heldout, cov_sizes = "100,250,500,1000";
  auto* cov_cmd = app.add_subcommand("coverage", "BLEU coverage of held-out agent sentences by pool prefixes");
  cov_cmd->add_option("--pool", cov_pool)->required();
  cov_cmd->add_option("--heldout", cov_heldout)->required();
  cov_cmd->add_option("--sizes", cov_sizes);

  DecorateArgs dec;
  auto* pool_cmd = app.add_subcommand("pool", "Edit a template pool");
  pool_cmd->require_subcommand(1);
  auto* dec_cmd = pool_cmd->add_subcommand("decorate", "Attach constraints and an action to a template");
  dec_cmd->add_option("--pool", dec.pool)->required();
  dec_cmd->add_option("--id", dec.id)->required();
  dec_cmd->add_option("--constraint", dec.constraints, "key=v1,v2 (repeatable)");
  dec_cmd->add_option("--action", dec.action, "name:arg1,arg2");
  dec_cmd->add_option("--out", dec.out, "Defaults to rewriting --pool");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the ranker");
  train_cmd->add_option("--stage", tr.stage)->check(CLI::IsMember({"sst", "sft"}));
  train_cmd->add_flag("--replay", tr.replay, "Mix in an equal number of self-supervised examples");
  train_cmd->add_option("--corpus", tr.corpus);
  train_cmd->add_option("--pool", tr.pool);
  train_cmd->add_option("--feedback", tr.feedback);
  train_cmd->add_option("--init", tr.init, "Checkpoint to fine-tune (sft)");
  train_cmd->add_option("--out", tr.out)->required();
  train_cmd->add_option("--history", tr.history, "Epoch metrics file (default <out>.history.jsonl)");
  train_cmd->add_option("--dim", tr.dim);
  train_cmd->add_option("--layers", tr.layers);
  train_cmd->add_option("--heads", tr.heads);
  train_cmd->add_option("--ffn", tr.ffn);
  train_cmd->add_option("--history-codes", tr.history_codes);
  train_cmd->add_option("--feature-codes", tr.feature_codes);
  train_cmd->add_flag("--shared-encoder", tr.shared_encoder);
  train_cmd->add_option("--dropout", tr.dropout);
  train_cmd->add_option("--lr", tr.lr);
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--patience", tr.patience);
  train_cmd->add_option("--batch", tr.batch);
  train_cmd->add_option("--negatives", tr.negatives);
  train_cmd->add_option("--vocab-cap", tr.vocab_cap);
  train_cmd->add_option("--loss", tr.loss)->check(CLI::IsMember({"bce", "categorical"}));
  train_cmd->add_option("--seed", tr.seed);

  std::string plot_in, plot_out;
  auto* plot_cmd = app.add_subcommand("plot-history", "Render an epoch metrics file as SVG");
  plot_cmd->add_option("--in", plot_in)->required();
  plot_cmd->add_option("--out", plot_out)->required();

  ServeArgs sv;
  auto* serve_cmd = app.add_subcommand("serve", "Run the ranking service");
  serve_cmd->add_option("--checkpoint", sv.checkpoint)->required();
  serve_cmd->add_option("--pool", sv.pool)->required();
  serve_cmd->add_option("--host", sv.host);
  serve_cmd->add_option("--port", sv.port);
  serve_cmd->add_option("--explore-temp", sv.explore_temp);
  serve_cmd->add_option("--cache", sv.cache, "Pool encoding cache file");

  BenchArgs bn;
  auto* bench_cmd = app.add_subcommand("bench", "Latency against pool size");
  bench_cmd->add_option("--checkpoint", bn.checkpoint)->required();
  bench_cmd->add_option("--pool", bn.pool)->required();
  bench_cmd->add_option("--sizes", bn.sizes);
  bench_cmd->add_option("--requests", bn.requests, "Rank requests, one JSON object per line")->required();
  bench_cmd->add_option("--repetitions", bn.repetitions);
  bench_cmd->add_option("--out", bn.out);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbosity > 0 ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*stats_cmd) return run_stats(stats_in);
    if (*mine_cmd) return run_mine(mine);
    if (*cov_cmd) return run_coverage(cov_pool, cov_heldout, cov_sizes);
    if (*dec_cmd) return run_decorate(dec);
    if (*train_cmd) return run_train(tr);
    if (*plot_cmd) return run_plot(plot_in, plot_out);
    if (*serve_cmd) return run_serve(sv);
    if (*bench_cmd) return run_bench(bn);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
