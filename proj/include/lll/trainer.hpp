#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lll/class_profile.hpp"
#include "lll/config.hpp"
#include "lll/contrastive_bank.hpp"
#include "lll/data_gen.hpp"
#include "lll/losses.hpp"
#include "lll/model.hpp"

namespace lll {

struct Schedule {
  double base_lr = 0.1;
  std::size_t warmup_epochs = 0;
  ScheduleKind kind = ScheduleKind::cosine;
  std::vector<std::size_t> milestones;
  std::vector<double> factors;  // empty means 0.1 per milestone
  std::size_t total_epochs = 1;

  static Schedule from_config(const OptimConfig& optim);
};

/// Linear warmup lr * (epoch + 1) / warmup, then either step decay (product of the
/// factors of milestones already reached) or cosine decay to zero over the remaining epochs.
double lr_at(const Schedule& schedule, std::size_t epoch);

struct OptimizerState {
  ModelParams velocity;
  double momentum = 0.9;
  double weight_decay = 0.0;

  static OptimizerState for_params(const ModelParams& params, double momentum, double weight_decay);
};

/// v <- momentum v + grad + weight_decay param; param <- param - lr v.
/// Throws NumericalError on a non-finite gradient.
void sgd_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double lr);

/// Parameter gradients for a loss evaluated on forward() outputs. Loss gradients that are
/// zero-sized (the loss has no such input) are treated as zero.
ModelParams backward(const ModelParams& params, const LossResult& loss, const ForwardCache& cache);

/// Argmax of the classifier output per instance (ties to the lowest class); per-class accuracy.
Vec evaluate(const ModelParams& params, const Dataset& dataset, HeadKind head, double gamma_t);

/// Evaluates the configured loss on one batch.
LossResult compute_loss(const Config& config, const ClassProfile& profile, const BatchInputs& inputs,
                        const Mat& theta, const KeyBank& bank);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double ce_component = 0.0;
  double scl_component = 0.0;
  Vec train_acc;
  Vec test_acc;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingLog {
  ClassProfile profile;  // training counts n_c
  std::vector<EpochRecord> epochs;
  std::vector<std::pair<std::string, std::string>> config_echo;
  std::int64_t many_threshold = 100;
  std::int64_t few_threshold = 20;
  std::uint64_t steps = 0;
  std::uint64_t keys_enqueued = 0;

  friend bool operator==(const TrainingLog&, const TrainingLog&) = default;
};

struct TrainResult {
  TrainingLog log;
  ModelParams params;
  MomentumParams shadow;
  std::size_t queue_size = 0;
};

/// Builds the train/test datasets the config describes (synthetic mixture or CSV).
std::pair<Dataset, Dataset> make_datasets(const Config& config);

/// The untrained model train_on starts from; a pure function of the config seed and shape.
ModelParams initial_params(const Config& config, std::size_t input_dim, std::size_t num_classes);

/// Called after each epoch's record is appended.
using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train_on(const Config& config, const Dataset& train_set, const Dataset& test_set,
                     const EpochCallback& on_epoch = {});

/// Full deterministic run from a config.
TrainingLog train(const Config& config, const EpochCallback& on_epoch = {});

}  // namespace lll
