#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "biasly/corpus.hpp"
#include "biasly/labels.hpp"
#include "biasly/metrics.hpp"
#include "biasly/model.hpp"
#include "biasly/optim.hpp"
#include "json.hpp"

namespace biasly::harness {

// A tokenized sample with its soft-label target.
struct Example {
  std::string id;
  corpus::Encoded tokens;
  labels::SoftLabel label;
};
using Dataset = std::vector<Example>;

Dataset encode(const std::vector<labels::AnnotatedSample>& samples, const corpus::Vocab& vocab,
               std::size_t max_len);

// Gathers the selected examples into a padded batch trimmed to the longest
// sequence in it. Trimming only removes columns that are padding everywhere.
model::TokenBatch make_batch(const Dataset& data, std::span<const std::size_t> indices);

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 5;
  std::uint64_t seed = 0;
  std::string checkpoint_path;  // best-validation checkpoint, when set
  double loss_eps = labels::kLossEps;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

inline constexpr std::size_t kEvalBatchSize = 64;

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean of the minibatch losses seen during the epoch
  double val_loss = 0.0;
};

struct TrainResult {
  model::Model model;  // parameters of the best validation epoch
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

// Mean soft cross-entropy of the model over a dataset.
double dataset_loss(const model::Model& m, const Dataset& data, double eps = labels::kLossEps,
                    std::size_t batch_size = kEvalBatchSize);

std::vector<metrics::Probs> predict(const model::Model& m, const Dataset& data,
                                    std::size_t batch_size = kEvalBatchSize);

// One optimizer step on a batch; returns the batch loss before the update.
double train_step(const model::Model& m, std::vector<Tensor>& params, AdamState& adam,
                  const Dataset& data, std::span<const std::size_t> indices, double eps);

// Minibatch Adam on the soft-label loss. Each epoch shuffles (seeded),
// steps through batches, then scores the validation set; the best epoch is
// kept and, with a checkpoint path, saved together with `vocab`.
TrainResult train(const model::ModelConfig& model_cfg, const TrainConfig& cfg,
                  const Dataset& train_set, const Dataset& val_set,
                  const corpus::Vocab* vocab = nullptr);

metrics::MetricsReport evaluate(const model::Model& m, const Dataset& data, metrics::Mode mode,
                                const std::vector<std::size_t>& ks = {1, 2, 3},
                                double eps = labels::kLossEps);

// Builds prediction records (used by evaluate and by stub-model tests).
std::vector<metrics::PredictionRecord> make_records(const Dataset& data,
                                                    const std::vector<metrics::Probs>& probs,
                                                    const std::vector<std::size_t>& ks = {1, 2, 3});

// --- multi-objective search -------------------------------------------------

struct SearchSpace {
  double lr_min = 1e-4;
  double lr_max = 1e-2;
  std::size_t max_hf_layers = 0;  // 0 means the model's n_layers
  std::vector<std::size_t> pool_heads = {1, 2, 4};
  std::size_t flops_seq_len = 0;  // 0 means max_len

  void validate() const;
};

struct TrialParams {
  double lr = 0.0;
  std::size_t num_hf_layers = 0;
  bool use_hopfield_pool = false;
  std::size_t pool_num_heads = 1;
};

// Minimize val_loss and flops; maximize map and iou1.
struct Objectives {
  double val_loss = 0.0;
  double flops = 0.0;
  double map = 0.0;
  double iou1 = 0.0;
};

// a dominates b: no worse on every objective, strictly better on one.
bool dominates(const Objectives& a, const Objectives& b);

struct TrialResult {
  std::size_t trial_id = 0;
  TrialParams params;
  Objectives objectives;
  std::vector<EpochStats> history;
  std::size_t param_count = 0;
};

struct ParetoFront {
  std::vector<TrialResult> members;  // in trial id order
};

ParetoFront pareto_front(const std::vector<TrialResult>& trials);

// Seeded sampling of trial parameters; deterministic for a given seed.
std::vector<TrialParams> sample_trials(const SearchSpace& space, std::size_t n_layers,
                                       std::size_t n_trials, std::uint64_t seed);

struct SearchResult {
  std::vector<TrialResult> trials;
  ParetoFront front;
  std::size_t selected_trial = 0;  // front member with the lowest validation loss
};

// Each trial trains `train_cfg.epochs` epochs with its sampled parameters and
// is scored on the validation set. `progress` is called after each trial.
SearchResult search(const model::ModelConfig& base, const TrainConfig& train_cfg,
                    const SearchSpace& space, std::size_t n_trials, std::uint64_t seed,
                    const Dataset& train_set, const Dataset& val_set,
                    const std::function<void(const TrialResult&)>& progress = {});

nlohmann::json to_json(const TrialResult& t);
nlohmann::json to_json(const SearchResult& r);

}  // namespace biasly::harness
