#pragma once

#include "tod/model/poly_ranker.hpp"
#include "tod/nn/optim.hpp"
#include "tod/train/metrics.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace tod::train {

struct FitConfig {
  nn::AdamConfig adam;  // lr 0.00015, clip 1.0
  int max_epochs = 30;
  int patience = 3;
  std::size_t batch_size = 32;
  model::LossKind loss = model::LossKind::kBinary;
  std::uint64_t seed = 1;
  std::vector<int> ks = {1, 2, 5, 10};
  // Evaluate the untrained model as epoch 0.
  bool eval_initial = true;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean over batches; 0 for epoch 0
  Metrics dev;
  std::map<std::string, Metrics> monitors;
  double seconds = 0.0;
};

struct FitResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  Metrics best_dev;
  bool stopped_early = false;
};

// Extra example sets scored after every epoch, e.g. the held-out sets of
// both training stages.
struct Monitor {
  std::string name;
  std::span<const TrainingExample> examples;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch training with early stopping on dev Recall@1; the parameters
// of the best dev epoch are restored before returning. Throws TrainError on
// empty inputs or a non-finite loss.
FitResult fit(model::PolyRanker<float>& model, std::span<const TrainingExample> train,
              std::span<const TrainingExample> dev, const FitConfig& config,
              std::span<const Monitor> monitors = {}, const EpochCallback& on_epoch = {});

// Mean loss of one batch on a fresh tape, with gradients accumulated into
// the model parameters.
double batch_loss_and_grad(model::PolyRanker<float>& model, std::span<const TrainingExample* const> batch,
                           model::LossKind loss, bool training, std::uint64_t seed);

std::string epoch_to_json(const EpochRecord& r);
EpochRecord epoch_from_json(const std::string& line);
void save_history(const std::vector<EpochRecord>& history, const std::filesystem::path& path);
std::vector<EpochRecord> load_history(const std::filesystem::path& path);

}  // namespace tod::train
