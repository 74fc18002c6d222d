#include "tod/train/fit.hpp"

#include "tod/nn/checkpoint.hpp"
#include "tod/nn/tape.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

namespace tod::train {

using nlohmann::ordered_json;

void FitConfig::validate() const {
  if (!(adam.lr > 0.0)) throw TrainError("fit: lr must be positive");
  if (max_epochs < 1) throw TrainError("fit: max_epochs must be at least 1");
  if (patience < 1) throw TrainError("fit: patience must be at least 1");
  if (batch_size < 1) throw TrainError("fit: batch_size must be at least 1");
  if (ks.empty() || ks.front() != 1) throw TrainError("fit: ks must start with 1");
}

double batch_loss_and_grad(model::PolyRanker<float>& model, std::span<const TrainingExample* const> batch,
                           model::LossKind loss, bool training, std::uint64_t seed) {
  nn::Tape<float> tape(training, seed);
  std::map<corpus::TokenIds, nn::Var> encoded;
  std::vector<nn::Var> losses;
  losses.reserve(batch.size());
  for (const TrainingExample* ex : batch) {
    auto [z_h, z_f] = model.encode_context(tape, ex->history, ex->features);
    std::vector<nn::Var> rows;
    rows.reserve(ex->candidates.size());
    for (const auto& cand : ex->candidates) {
      auto it = encoded.find(cand);
      if (it == encoded.end()) it = encoded.emplace(cand, model.encode_response(tape, cand)).first;
      rows.push_back(it->second);
    }
    nn::Var responses = nn::ops::concat_rows(tape, rows);
    nn::Var logits = model.score(tape, z_h, z_f, responses);
    losses.push_back(model.loss(tape, logits, ex->positive, loss));
  }
  nn::Var total = nn::ops::concat_rows(tape, losses);
  nn::Var mean = nn::ops::mean(tape, total);
  const double value = tape.value(mean)(0, 0);
  if (!std::isfinite(value)) return value;
  tape.backward(mean);
  return value;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

EpochRecord score_epoch(model::PolyRanker<float>& model, int epoch, double train_loss,
                        std::span<const TrainingExample> dev, std::span<const Monitor> monitors,
                        const FitConfig& config) {
  EpochRecord r;
  r.epoch = epoch;
  r.train_loss = train_loss;
  r.dev = evaluate(model, dev, config.ks);
  for (const auto& m : monitors) r.monitors[m.name] = evaluate(model, m.examples, config.ks);
  return r;
}

}  // namespace

FitResult fit(model::PolyRanker<float>& model, std::span<const TrainingExample> train,
              std::span<const TrainingExample> dev, const FitConfig& config, std::span<const Monitor> monitors,
              const EpochCallback& on_epoch) {
  config.validate();
  if (train.empty()) throw TrainError("fit: no training examples");
  if (dev.empty()) throw TrainError("fit: no dev examples");

  auto params = model.params();
  nn::Adam<float> adam(params, config.adam);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  FitResult result;
  double best = -1.0;
  std::vector<nn::ParamRecord> best_state;
  int stale = 0;

  auto record = [&](EpochRecord r) {
    if (on_epoch) on_epoch(r);
    result.history.push_back(std::move(r));
  };
  auto consider = [&](const EpochRecord& r) {
    if (r.dev.recall(1) > best) {
      best = r.dev.recall(1);
      result.best_epoch = r.epoch;
      result.best_dev = r.dev;
      best_state = nn::snapshot_params(params);
      stale = 0;
    } else {
      ++stale;
    }
  };

  if (config.eval_initial) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord r = score_epoch(model, 0, 0.0, dev, monitors, config);
    r.seconds = seconds_since(t0);
    consider(r);
    stale = 0;
    record(std::move(r));
  }

  std::vector<const TrainingExample*> batch;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
        batch.push_back(&train[order[i]]);
      }
      adam.zero_grad();
      const double loss = batch_loss_and_grad(model, batch, config.loss, true, rng());
      if (!std::isfinite(loss)) {
        throw TrainError("fit: non-finite loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch) +
                         ", batch " + std::to_string(batches) + " (lr " + std::to_string(config.adam.lr) + ")");
      }
      const auto step = adam.step();
      if (!step.applied) spdlog::warn("fit: skipped step with non-finite gradient at epoch {}", epoch);
      loss_sum += loss;
      ++batches;
    }
    EpochRecord r = score_epoch(model, epoch, loss_sum / double(batches), dev, monitors, config);
    r.seconds = seconds_since(t0);
    spdlog::info("epoch {} loss {:.4f} dev R@1 {:.4f} MRR {:.4f} ({:.1f}s)", epoch, r.train_loss, r.dev.recall(1),
                 r.dev.mrr, r.seconds);
    consider(r);
    record(std::move(r));
    if (stale >= config.patience) {
      result.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  if (!best_state.empty()) nn::restore_params(best_state, params);
  return result;
}

namespace {

ordered_json metrics_json(const Metrics& m) { return ordered_json::parse(metrics_to_json(m)); }

Metrics metrics_of(const ordered_json& j) {
  Metrics m;
  for (const auto& [k, v] : j.at("recall_at").items()) m.recall_at[std::stoi(k)] = v.get<double>();
  m.mrr = j.at("mrr").get<double>();
  m.loss = j.value("loss", 0.0);
  m.count = j.value("count", std::size_t{0});
  return m;
}

}  // namespace

std::string epoch_to_json(const EpochRecord& r) {
  ordered_json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["seconds"] = r.seconds;
  j["dev"] = metrics_json(r.dev);
  ordered_json mon = ordered_json::object();
  for (const auto& [name, m] : r.monitors) mon[name] = metrics_json(m);
  j["monitors"] = std::move(mon);
  return j.dump();
}

EpochRecord epoch_from_json(const std::string& line) {
  try {
    const ordered_json j = ordered_json::parse(line);
    EpochRecord r;
    r.epoch = j.at("epoch").get<int>();
    r.train_loss = j.at("train_loss").get<double>();
    r.seconds = j.value("seconds", 0.0);
    r.dev = metrics_of(j.at("dev"));
    const ordered_json monitors_json = j.value("monitors", ordered_json::object());
    for (const auto& [name, m] : monitors_json.items()) r.monitors[name] = metrics_of(m);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw TrainError(std::string("bad history record: ") + e.what());
  }
}

void save_history(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw TrainError("cannot write history " + path.string());
  for (const auto& r : history) out << epoch_to_json(r) << '\n';
}

std::vector<EpochRecord> load_history(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TrainError("cannot open history " + path.string());
  std::vector<EpochRecord> out;
  for (std::string line; std::getline(in, line);) {
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    out.push_back(epoch_from_json(line));
  }
  if (out.empty()) throw TrainError("history " + path.string() + " has no records");
  return out;
}

}  // namespace tod::train
