#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "pasnet/dataset.hpp"
#include "pasnet/errors.hpp"
#include "pasnet/metrics.hpp"
#include "pasnet/model.hpp"

namespace pasnet {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 16;
  std::size_t epochs = 500;
  float lambda = 1.0f;
  double gamma = 0.5;
  std::size_t lr_step_epochs = 100;
  std::size_t k_folds = 5;
  std::uint64_t seed = 0;
  bool with_decoder = true;
  std::size_t n_f = 16;
  std::size_t eval_every = 10;
  std::size_t parallel_folds = 1;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  ModelConfig model_config(const VolumeGeometry& geometry) const;

  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, TrainConfig& c);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;

  static AdamState for_params(std::span<const Tensor> params);
};

/// One bias-corrected Adam update from the params' gradient buffers. Rejects
/// non-finite gradients or mismatched moment shapes before touching any
/// parameter.
void adam_step(std::span<Tensor> params, AdamState& state, double lr);

/// Step decay: lr * gamma^floor(epoch / lr_step_epochs).
double lr_at(std::size_t epoch, const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double total = 0.0;
  double cls = 0.0;
  double seg = 0.0;
};

struct EvalRecord {
  std::size_t epoch = 0;
  double auc = 0.0;  // NaN when the validation labels hold a single class
  double accuracy = 0.0;
};

struct RunRecord {
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  TrainConfig config;
  ModelConfig model;
  std::vector<EpochRecord> epochs;
  std::vector<EvalRecord> evals;
  double wall_clock_seconds = 0.0;
  bool aborted = false;
  std::string error;

  nlohmann::json to_json() const;
};

/// Raised when a training step produces non-finite values. Carries the
/// partial record and the state at the end of the last finite epoch.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, RunRecord record, std::vector<NamedTensor> last_good)
      : NumericError(what), record_(std::move(record)), last_good_(std::move(last_good)) {}
  const RunRecord& record() const { return record_; }
  const std::vector<NamedTensor>& last_good_state() const { return last_good_; }

 private:
  RunRecord record_;
  std::vector<NamedTensor> last_good_;
};

struct Evaluation {
  PredictionSet predictions;
  double mean_dice = 0.0;  // per-volume Dice of sigmoid(mask) > 0.5, NaN without decoder
};

/// Eval-mode inference over `indices`.
Evaluation evaluate(PasNet& net, const Dataset& data, std::span<const std::size_t> indices, std::size_t batch_size);

/// Dice of two binary masks; 1 when both are empty.
double dice(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);

struct TrainResult {
  PasNet net;
  RunRecord record;
};

/// Fresh network for a training run: PasNet::build, then every slice channel
/// of the mask head shares the first channel's initial weight row, and the
/// head bias is the log-odds of the positive voxel fraction over `train`.
PasNet initial_model(const Dataset& data, const std::vector<std::size_t>& train, const TrainConfig& cfg,
                     std::uint64_t model_seed);

/// Trains a fresh network on `train` (shuffled mini-batches, last partial
/// batch kept), validating on `validation` every eval_every epochs and after
/// the last one. `model_seed` initializes the network; `stream_seed` drives
/// the per-epoch shuffles.
TrainResult train_model(const Dataset& data, const std::vector<std::size_t>& train,
                        const std::vector<std::size_t>& validation, const TrainConfig& cfg, std::uint64_t model_seed,
                        std::uint64_t stream_seed, std::size_t fold = 0);

/// Seeds derived from cfg.seed and the fold index.
TrainResult train_fold(const Dataset& data, const FoldPlan& plan, std::size_t fold, const TrainConfig& cfg);

FoldPlan fold_plan_for(const Dataset& data, const TrainConfig& cfg);

struct CrossValidationResult {
  FoldPlan plan;
  MetricsReport report;
  std::vector<RunRecord> runs;
};

/// Called once per finished fold; may run on worker threads.
using FoldCallback = std::function<void(std::size_t fold, const PasNet& net, const RunRecord& record)>;

/// Trains one model per fold of fold_plan_for(data, cfg) and reports the
/// final-epoch validation macro-AUC and accuracy. A fold that aborts is
/// marked failed and excluded from the means.
CrossValidationResult cross_validate(const Dataset& data, const TrainConfig& cfg, const FoldCallback& on_fold = {});

struct BranchAblation {
  CrossValidationResult backbone;
  CrossValidationResult full;
  /// backbone,segmentation_branch,auc
  std::string csv() const;
};

/// Backbone-only versus backbone + segmentation branch (lambda = 1) on the
/// same fold plan.
BranchAblation ablate_branch(const Dataset& data, const TrainConfig& cfg);

struct LambdaSweep {
  std::vector<float> lambdas;
  std::vector<CrossValidationResult> runs;
  /// lambda,auc,accuracy
  std::string csv() const;
};

LambdaSweep sweep_lambda(const Dataset& data, const TrainConfig& cfg, const std::vector<float>& lambdas);

}  // namespace pasnet
