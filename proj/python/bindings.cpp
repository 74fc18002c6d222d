#include "tod/corpus/io.hpp"
#include "tod/corpus/synthetic.hpp"
#include "tod/corpus/text.hpp"
#include "tod/miner/annotate.hpp"
#include "tod/miner/miner.hpp"
#include "tod/model/inference.hpp"
#include "tod/registry/registry.hpp"
#include "tod/serve/service.hpp"
#include "tod/train/examples.hpp"
#include "tod/train/fit.hpp"

#include <json.hpp>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace tod;

namespace {

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

std::size_t generate_corpus(const std::string& config, int dialogues, std::uint64_t seed, const std::string& out,
                            const std::string& pool_out) {
  const auto cfg = resolve_config(config, dialogues);
  const auto ds = corpus::generate_synthetic(cfg, seed);
  corpus::save_corpus(ds, out);
  if (!pool_out.empty()) registry::save_pool(registry::pool_from_gold(corpus::gold_bank(cfg)), pool_out);
  return ds.size();
}

py::list mine(const std::string& corpus_path, double lambda, std::int64_t f1, std::int64_t f2,
              const std::string& out) {
  const auto ds = corpus::load_corpus(corpus_path).dialogues;
  miner::MinerParams p;
  p.lambda = lambda;
  p.f1 = f1;
  p.f2 = f2;
  const auto mined = miner::mine_pool(miner::preprocess_sentences(ds), p);
  if (!out.empty()) registry::save_pool(registry::pool_from_mined(mined), out);
  py::list result;
  for (const auto& t : mined) result.append(py::make_tuple(t.text, t.frequency));
  return result;
}

std::vector<std::pair<std::size_t, double>> coverage(const std::vector<std::string>& pool,
                                                     const std::string& heldout_path,
                                                     const std::vector<std::size_t>& sizes) {
  const auto ds = corpus::load_corpus(heldout_path).dialogues;
  std::vector<std::pair<std::size_t, double>> out;
  for (const auto& r : miner::coverage_bleu(pool, ds, sizes)) out.emplace_back(r.pool_size, r.mean_bleu);
  return out;
}

std::vector<std::string> train_sst(const std::string& corpus_path, const std::string& out, int dim, int layers,
                                   int heads, int epochs, std::size_t negatives, double lr, std::uint64_t seed) {
  const auto ds = corpus::load_corpus(corpus_path).dialogues;
  const auto split = corpus::split_corpus(ds, {}, seed);
  const auto vocab = corpus::build_vocab(split.train, 5000);
  const auto fit_set = train::make_sst_examples(split.train, vocab, negatives, seed);
  const auto dev_set = train::make_sst_examples(split.dev, vocab, negatives, seed + 1);
  model::RankerConfig rc;
  rc.encoder.model_dim = dim;
  rc.encoder.layers = layers;
  rc.encoder.heads = heads;
  rc.encoder.ffn_dim = 4 * dim;
  rc.encoder.vocab_size = int(vocab.size());
  model::PolyRanker<float> m(rc, seed);
  train::FitConfig fc;
  fc.adam.lr = lr;
  fc.max_epochs = epochs;
  fc.seed = seed;
  std::vector<std::string> history;
  {
    py::gil_scoped_release release;
    for (const auto& r : train::fit(m, fit_set, dev_set, fc).history) history.push_back(train::epoch_to_json(r));
  }
  model::save_model(m, vocab, out);
  return history;
}

std::string sft_examples(const std::string& log, const std::string& pool_path, const std::string& checkpoint,
                         std::size_t negatives, std::uint64_t seed) {
  const auto loaded = model::load_model(checkpoint);
  const auto events = train::load_feedback_log(log);
  const auto build = train::make_sft_examples(events, registry::load_pool(pool_path), loaded.vocab, negatives, seed);
  return train::examples_to_jsonl(build.examples);
}

class Ranker {
 public:
  Ranker(const std::string& checkpoint, const std::string& pool_path, double temperature,
         const std::optional<std::string>& feedback_log) {
    auto loaded = model::load_model(checkpoint);
    auto m = std::make_shared<model::PolyRanker<float>>(std::move(loaded.model));
    serve::ServiceConfig cfg;
    cfg.explore_temperature = temperature;
    if (feedback_log) cfg.feedback_log = *feedback_log;
    service_ = std::make_unique<serve::Service>(serve::make_snapshot(m, loaded.vocab, registry::load_pool(pool_path)),
                                                cfg);
  }

  std::string rank(const std::string& request_json) {
    py::gil_scoped_release release;
    return serve::rank_response_to_json(service_->rank(serve::rank_request_from_json(request_json)));
  }
  bool feedback(const std::string& event_json) {
    return service_->feedback(serve::feedback_request_from_json(event_json)).recorded;
  }
  std::string templates(const std::string& query, std::size_t limit) const {
    return serve::templates_to_json(service_->templates(query, limit));
  }

 private:
  std::unique_ptr<serve::Service> service_;
};

}  // namespace

PYBIND11_MODULE(_tod, m) {
  m.doc() = "Retrieval-based response ranking for task-oriented dialogue";

  py::register_exception<corpus::CorpusError>(m, "CorpusError", PyExc_ValueError);
  py::register_exception<miner::MinerError>(m, "MinerError", PyExc_ValueError);
  py::register_exception<registry::RegistryError>(m, "RegistryError", PyExc_ValueError);
  py::register_exception<train::TrainError>(m, "TrainError", PyExc_ValueError);
  py::register_exception<serve::RequestError>(m, "RequestError", PyExc_ValueError);

  m.def("tokenize", [](const std::string& s) { return corpus::tokenize(s); });
  m.def("split_sentences", [](const std::string& s) { return corpus::split_sentences(s); });
  m.def("lemmatize", [](const std::string& s) { return miner::lemmatize(s); });
  m.def("content_lemmas", [](const std::string& s) { return miner::content_lemmas(s); });
  m.def("sentence_bleu", &miner::sentence_bleu, py::arg("hypothesis"), py::arg("reference"));
  m.def("sample_gumbel",
        [](const std::vector<double>& scores, double temperature, std::uint64_t seed) {
          return model::sample_gumbel(scores, temperature, seed);
        },
        py::arg("scores"), py::arg("temperature") = 1.0, py::arg("seed") = 0);

  m.def("generate_corpus", &generate_corpus, py::arg("config"), py::arg("dialogues"), py::arg("seed"),
        py::arg("out"), py::arg("pool_out") = "");
  m.def("mine", &mine, py::arg("corpus"), py::arg("lambda_") = 0.4, py::arg("f1") = 350, py::arg("f2") = 15,
        py::arg("out") = "");
  m.def("coverage", &coverage, py::arg("pool"), py::arg("heldout"), py::arg("sizes"));
  m.def("train_sst", &train_sst, py::arg("corpus"), py::arg("out"), py::arg("dim") = 64, py::arg("layers") = 2,
        py::arg("heads") = 4, py::arg("epochs") = 30, py::arg("negatives") = 29, py::arg("lr") = 0.00015,
        py::arg("seed") = 1);
  m.def("sft_examples", &sft_examples, py::arg("log"), py::arg("pool"), py::arg("checkpoint"),
        py::arg("negatives") = 29, py::arg("seed") = 1);

  py::class_<Ranker>(m, "_Ranker")
      .def(py::init<const std::string&, const std::string&, double, const std::optional<std::string>&>(),
           py::arg("checkpoint"), py::arg("pool"), py::arg("temperature") = 1.0, py::arg("feedback_log") = py::none())
      .def("rank", &Ranker::rank)
      .def("feedback", &Ranker::feedback)
      .def("templates", &Ranker::templates);
}
