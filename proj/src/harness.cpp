#include "biasly/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <random>

#include "biasly/checkpoint.hpp"
#include "biasly/error.hpp"
#include "biasly/ops.hpp"

namespace biasly::harness {

Dataset encode(const std::vector<labels::AnnotatedSample>& samples, const corpus::Vocab& vocab,
               std::size_t max_len) {
  Dataset out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    out.push_back({s.id, corpus::tokenize(corpus::preprocess(s.text), vocab, max_len),
                   labels::soft_label(s.annotations)});
  }
  return out;
}

model::TokenBatch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InvalidArgument("make_batch: no examples selected");
  model::TokenBatch b;
  b.batch = indices.size();
  for (std::size_t i : indices) b.length = std::max(b.length, data.at(i).tokens.length);
  b.ids.reserve(b.batch * b.length);
  b.mask.reserve(b.batch * b.length);
  for (std::size_t i : indices) {
    const auto& e = data[i].tokens;
    b.ids.insert(b.ids.end(), e.ids.begin(), e.ids.begin() + static_cast<std::ptrdiff_t>(b.length));
    b.mask.insert(b.mask.end(), e.mask.begin(), e.mask.begin() + static_cast<std::ptrdiff_t>(b.length));
  }
  return b;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
  if (epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
  if (!(lr >= 0.0)) throw InvalidArgument("train: learning rate must be >= 0");
  if (!(loss_eps > 0.0)) throw InvalidArgument("train: loss eps must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.lr},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"seed", c.seed},
       {"checkpoint_path", c.checkpoint_path},
       {"loss_eps", c.loss_eps}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw SchemaError("train config must be a JSON object");
  static const std::set<std::string> known = {"lr",   "batch_size",      "epochs",
                                              "seed", "checkpoint_path", "loss_eps"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw SchemaError("train config: unknown field '" + key + "'");
  }
  try {
    if (j.contains("lr")) j.at("lr").get_to(c.lr);
    if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
    if (j.contains("epochs")) j.at("epochs").get_to(c.epochs);
    if (j.contains("seed")) j.at("seed").get_to(c.seed);
    if (j.contains("checkpoint_path")) j.at("checkpoint_path").get_to(c.checkpoint_path);
    if (j.contains("loss_eps")) j.at("loss_eps").get_to(c.loss_eps);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("train config: ") + e.what());
  }
}

namespace {

Tensor target_matrix(const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<double> t;
  t.reserve(indices.size() * labels::kNumClasses);
  for (std::size_t i : indices) t.insert(t.end(), data[i].label.probs.begin(), data[i].label.probs.end());
  return Tensor({indices.size(), labels::kNumClasses}, std::move(t));
}

Tensor batch_loss_tensor(const model::Model& m, const Dataset& data,
                         std::span<const std::size_t> indices, double eps) {
  Tensor probs = model::predict_proba(m, make_batch(data, indices));
  return soft_cross_entropy(probs, target_matrix(data, indices), eps);
}

template <typename F>
void for_each_chunk(std::size_t n, std::size_t chunk, F&& f) {
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += chunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(n, start + chunk); ++i) idx.push_back(i);
    f(std::span<const std::size_t>(idx));
  }
}

// Evaluation never needs the graph: run on detached parameter copies.
const model::Model& untracked(const model::Model& m, std::optional<model::Model>& holder) {
  holder.emplace(m.clone());
  for (Tensor p : holder->parameters()) p.set_requires_grad(false);
  return *holder;
}

}  // namespace

double dataset_loss(const model::Model& m, const Dataset& data, double eps, std::size_t batch_size) {
  if (data.empty()) throw InvalidArgument("dataset_loss: empty dataset");
  std::optional<model::Model> holder;
  const model::Model& frozen = untracked(m, holder);
  double total = 0.0;
  for_each_chunk(data.size(), batch_size, [&](std::span<const std::size_t> idx) {
    total += batch_loss_tensor(frozen, data, idx, eps).item() * static_cast<double>(idx.size());
  });
  return total / static_cast<double>(data.size());
}

std::vector<metrics::Probs> predict(const model::Model& m, const Dataset& data, std::size_t batch_size) {
  std::optional<model::Model> holder;
  const model::Model& frozen = untracked(m, holder);
  std::vector<metrics::Probs> out;
  out.reserve(data.size());
  for_each_chunk(data.size(), batch_size, [&](std::span<const std::size_t> idx) {
    Tensor p = model::predict_proba(frozen, make_batch(data, idx));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      metrics::Probs row;
      std::copy_n(p.data().begin() + static_cast<std::ptrdiff_t>(r * labels::kNumClasses),
                  labels::kNumClasses, row.begin());
      out.push_back(row);
    }
  });
  return out;
}

double train_step(const model::Model& m, std::vector<Tensor>& params, AdamState& adam,
                  const Dataset& data, std::span<const std::size_t> indices, double eps) {
  zero_grads(params);
  Tensor loss = batch_loss_tensor(m, data, indices, eps);
  const double value = loss.item();
  if (!std::isfinite(value)) throw NumericError("training loss is not finite");
  loss.backward();
  adam_step(params, adam);
  return value;
}

TrainResult train(const model::ModelConfig& model_cfg, const TrainConfig& cfg,
                  const Dataset& train_set, const Dataset& val_set, const corpus::Vocab* vocab) {
  cfg.validate();
  if (train_set.empty()) throw InvalidArgument("train: training split is empty");
  if (val_set.empty()) throw InvalidArgument("train: validation split is empty");
  if (vocab && vocab->size() != model_cfg.vocab_size) {
    throw InvalidArgument("train: vocabulary size differs from model vocab_size");
  }

  model::Model m(model_cfg);
  std::vector<Tensor> params = m.parameters();
  AdamState adam = make_adam_state(params, cfg.lr);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result{m.clone(), {}, 0, 0.0};
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double seen = 0.0, total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      try {
        total += train_step(m, params, adam, train_set, idx, cfg.loss_eps) * static_cast<double>(idx.size());
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch starting at " +
                           std::to_string(start) + ": " + e.what() + " (try a lower learning rate)");
      }
      seen += static_cast<double>(idx.size());
    }
    EpochStats stats{epoch, total / seen, dataset_loss(m, val_set, cfg.loss_eps)};
    result.history.push_back(stats);
    if (epoch == 1 || stats.val_loss < result.best_val_loss) {
      result.best_val_loss = stats.val_loss;
      result.best_epoch = epoch;
      result.model = m.clone();
    }
  }

  if (!cfg.checkpoint_path.empty()) {
    if (!vocab) throw InvalidArgument("train: writing a checkpoint needs the vocabulary");
    nlohmann::json meta = {{"best_epoch", result.best_epoch},
                           {"best_val_loss", result.best_val_loss},
                           {"train", cfg}};
    model::save_checkpoint(cfg.checkpoint_path,
                           model::make_checkpoint(result.model, vocab->tokens(), std::move(meta)));
  }
  return result;
}

std::vector<metrics::PredictionRecord> make_records(const Dataset& data,
                                                    const std::vector<metrics::Probs>& probs,
                                                    const std::vector<std::size_t>& ks) {
  if (data.size() != probs.size()) throw InvalidArgument("make_records: size mismatch");
  std::vector<metrics::PredictionRecord> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.push_back(metrics::make_record(data[i].id, probs[i], data[i].label, ks));
  }
  return out;
}

metrics::MetricsReport evaluate(const model::Model& m, const Dataset& data, metrics::Mode mode,
                                const std::vector<std::size_t>& ks, double eps) {
  if (data.empty()) throw InvalidArgument("evaluate: empty dataset");
  const auto probs = predict(m, data);
  metrics::MetricsReport rep = metrics::compute_report(make_records(data, probs, ks), mode, ks);
  rep.loss = dataset_loss(m, data, eps);
  return rep;
}

void SearchSpace::validate() const {
  if (!(lr_min > 0.0 && lr_max >= lr_min)) throw InvalidArgument("search: need 0 < lr_min <= lr_max");
  if (pool_heads.empty()) throw InvalidArgument("search: pool_heads must list at least one option");
  for (std::size_t h : pool_heads) {
    if (h == 0) throw InvalidArgument("search: pool head counts must be positive");
  }
}

bool dominates(const Objectives& a, const Objectives& b) {
  const bool no_worse = a.val_loss <= b.val_loss && a.flops <= b.flops && a.map >= b.map && a.iou1 >= b.iou1;
  const bool better = a.val_loss < b.val_loss || a.flops < b.flops || a.map > b.map || a.iou1 > b.iou1;
  return no_worse && better;
}

ParetoFront pareto_front(const std::vector<TrialResult>& trials) {
  ParetoFront front;
  for (const auto& candidate : trials) {
    const bool dominated = std::any_of(trials.begin(), trials.end(), [&](const TrialResult& other) {
      return dominates(other.objectives, candidate.objectives);
    });
    if (!dominated) front.members.push_back(candidate);
  }
  std::sort(front.members.begin(), front.members.end(),
            [](const TrialResult& a, const TrialResult& b) { return a.trial_id < b.trial_id; });
  return front;
}

std::vector<TrialParams> sample_trials(const SearchSpace& space, std::size_t n_layers,
                                       std::size_t n_trials, std::uint64_t seed) {
  space.validate();
  const std::size_t max_hf = space.max_hf_layers ? std::min(space.max_hf_layers, n_layers) : n_layers;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> log_lr(std::log(space.lr_min), std::log(space.lr_max));
  std::uniform_int_distribution<std::size_t> hf(0, max_hf);
  std::bernoulli_distribution pool(0.5);
  std::uniform_int_distribution<std::size_t> heads(0, space.pool_heads.size() - 1);
  std::vector<TrialParams> out;
  for (std::size_t i = 0; i < n_trials; ++i) {
    TrialParams p;
    p.lr = std::exp(log_lr(rng));
    p.num_hf_layers = hf(rng);
    p.use_hopfield_pool = pool(rng);
    p.pool_num_heads = space.pool_heads[heads(rng)];
    if (!p.use_hopfield_pool) p.pool_num_heads = 1;
    out.push_back(p);
  }
  return out;
}

SearchResult search(const model::ModelConfig& base, const TrainConfig& train_cfg,
                    const SearchSpace& space, std::size_t n_trials, std::uint64_t seed,
                    const Dataset& train_set, const Dataset& val_set,
                    const std::function<void(const TrialResult&)>& progress) {
  if (n_trials == 0) throw InvalidArgument("search: n_trials must be >= 1");
  const auto params = sample_trials(space, base.n_layers, n_trials, seed);
  const std::size_t seq_len = space.flops_seq_len ? space.flops_seq_len : base.max_len;
  SearchResult result;
  for (std::size_t i = 0; i < params.size(); ++i) {
    model::ModelConfig cfg = base;
    cfg.num_hf_layers = params[i].num_hf_layers;
    cfg.use_hopfield_pool = params[i].use_hopfield_pool;
    cfg.pool_num_heads = params[i].pool_num_heads;
    TrainConfig tc = train_cfg;
    tc.lr = params[i].lr;
    tc.checkpoint_path.clear();

    TrainResult trained = train(cfg, tc, train_set, val_set);
    const auto report = evaluate(trained.model, val_set, metrics::Mode::kMulticlass, {1, 2, 3}, tc.loss_eps);
    TrialResult t;
    t.trial_id = i;
    t.params = params[i];
    t.objectives = {trained.best_val_loss, model::flops_estimate(cfg, seq_len).forward_flops,
                    report.map, report.iou_at_k.at(1)};
    t.history = std::move(trained.history);
    t.param_count = trained.model.param_count();
    if (progress) progress(t);
    result.trials.push_back(std::move(t));
  }
  result.front = pareto_front(result.trials);
  const auto best = std::min_element(
      result.front.members.begin(), result.front.members.end(),
      [](const TrialResult& a, const TrialResult& b) { return a.objectives.val_loss < b.objectives.val_loss; });
  result.selected_trial = best->trial_id;
  return result;
}

nlohmann::json to_json(const TrialResult& t) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : t.history) {
    history.push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"val_loss", h.val_loss}});
  }
  return {{"trial", t.trial_id},
          {"params",
           {{"lr", t.params.lr},
            {"num_hf_layers", t.params.num_hf_layers},
            {"use_hopfield_pool", t.params.use_hopfield_pool},
            {"pool_num_heads", t.params.pool_num_heads}}},
          {"objectives",
           {{"val_loss", t.objectives.val_loss},
            {"flops", t.objectives.flops},
            {"map", t.objectives.map},
            {"iou1", t.objectives.iou1}}},
          {"param_count", t.param_count},
          {"history", history}};
}

nlohmann::json to_json(const SearchResult& r) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : r.trials) trials.push_back(to_json(t));
  nlohmann::json front = nlohmann::json::array();
  for (const auto& t : r.front.members) front.push_back(t.trial_id);
  return {{"trials", trials}, {"pareto_front", front}, {"selected_trial", r.selected_trial}};
}

}  // namespace biasly::harness
