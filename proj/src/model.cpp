#include "biasly/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

#include "biasly/error.hpp"
#include "biasly/ops.hpp"

namespace biasly::model {

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw InvalidArgument(std::string("model config: ") + name + " must be positive");
  };
  positive(vocab_size, "vocab_size");
  positive(max_len, "max_len");
  positive(d_model, "d_model");
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(d_ff, "d_ff");
  positive(pool_num_heads, "pool_num_heads");
  if (num_hf_layers > n_layers) {
    throw InvalidArgument("model config: num_hf_layers " + std::to_string(num_hf_layers) +
                          " exceeds n_layers " + std::to_string(n_layers));
  }
  if (n_classes != kNumClasses) throw InvalidArgument("model config: n_classes must be 6");
  if (hopfield_beta < 0.0) throw InvalidArgument("model config: hopfield_beta must be >= 0");
  if (!(init_scale > 0.0)) throw InvalidArgument("model config: init_scale must be positive");
  hopfield_config().validate();
}

hopfield::HopfieldConfig ModelConfig::hopfield_config() const {
  hopfield::HopfieldConfig h;
  h.d_model = d_model;
  h.n_heads = n_heads;
  if (hopfield_beta > 0.0) h.beta = hopfield_beta;
  h.update_steps = hopfield_update_steps;
  h.update_tol = hopfield_update_tol;
  h.tie_value_to_key = tie_value_to_key;
  return h;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size},
                     {"max_len", c.max_len},
                     {"d_model", c.d_model},
                     {"n_layers", c.n_layers},
                     {"n_heads", c.n_heads},
                     {"d_ff", c.d_ff},
                     {"num_hf_layers", c.num_hf_layers},
                     {"use_hopfield_pool", c.use_hopfield_pool},
                     {"pool_num_heads", c.pool_num_heads},
                     {"n_classes", c.n_classes},
                     {"seed", c.seed},
                     {"tie_value_to_key", c.tie_value_to_key},
                     {"hopfield_beta", c.hopfield_beta},
                     {"hopfield_update_steps", c.hopfield_update_steps},
                     {"hopfield_update_tol", c.hopfield_update_tol},
                     {"init_scale", c.init_scale}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (!j.is_object()) throw SchemaError("model config must be a JSON object");
  static const std::unordered_set<std::string> known = {
      "vocab_size", "max_len",        "d_model",          "n_layers",
      "n_heads",    "d_ff",           "num_hf_layers",    "use_hopfield_pool",
      "pool_num_heads", "n_classes",  "seed",             "tie_value_to_key",
      "hopfield_beta", "hopfield_update_steps", "hopfield_update_tol", "init_scale"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw SchemaError("model config: unknown field '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("vocab_size", c.vocab_size);
    get("max_len", c.max_len);
    get("d_model", c.d_model);
    get("n_layers", c.n_layers);
    get("n_heads", c.n_heads);
    get("d_ff", c.d_ff);
    get("num_hf_layers", c.num_hf_layers);
    get("use_hopfield_pool", c.use_hopfield_pool);
    get("pool_num_heads", c.pool_num_heads);
    get("n_classes", c.n_classes);
    get("seed", c.seed);
    get("tie_value_to_key", c.tie_value_to_key);
    get("hopfield_beta", c.hopfield_beta);
    get("hopfield_update_steps", c.hopfield_update_steps);
    get("hopfield_update_tol", c.hopfield_update_tol);
    get("init_scale", c.init_scale);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("model config: ") + e.what());
  }
}

namespace {

class Initializer {
 public:
  Initializer(std::uint64_t seed, double scale) : rng_(seed), normal_(0.0, scale) {}

  Tensor normal(std::size_t rows, std::size_t cols) {
    std::vector<double> data(rows * cols);
    for (double& v : data) v = normal_(rng_);
    return Tensor({rows, cols}, std::move(data), true);
  }
  static Tensor constant(std::size_t n, double value) { return Tensor::full({n}, value, true); }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
};

Tensor self_attention(const Tensor& x, std::size_t batch, std::size_t seq,
                      const hopfield::HopfieldWeights& w, std::size_t heads,
                      const KeyMask& mask) {
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(x.dim(1) / heads));
  Tensor q = split_heads(matmul(x, w.query), batch, seq, heads);
  Tensor k = split_heads(matmul(x, w.key), batch, seq, heads);
  Tensor v = split_heads(matmul(x, w.value), batch, seq, heads);
  Tensor probs = softmax_rows(matmul_nt(q, k), scale_factor, mask);
  return matmul(merge_heads(matmul(probs, v), batch, seq, heads), w.out);
}

KeyMask head_mask(const std::vector<std::uint8_t>& mask, std::size_t batch, std::size_t seq,
                  std::size_t heads) {
  KeyMask out;
  out.reserve(batch * heads * seq);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      out.insert(out.end(), mask.begin() + b * seq, mask.begin() + (b + 1) * seq);
  return out;
}

}  // namespace

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Initializer init(cfg_.seed, cfg_.init_scale);
  const std::size_t d = cfg_.d_model;
  token_embedding_ = init.normal(cfg_.vocab_size, d);
  position_embedding_ = init.normal(cfg_.max_len, d);
  embed_ln_gain_ = Initializer::constant(d, 1.0);
  embed_ln_bias_ = Initializer::constant(d, 0.0);

  for (std::size_t i = 0; i < cfg_.n_layers; ++i) {
    EncoderBlock b;
    b.kind = i >= cfg_.n_layers - cfg_.num_hf_layers ? BlockKind::kHopfield : BlockKind::kAttention;
    b.mix.query = init.normal(d, d);
    b.mix.key = init.normal(d, d);
    const bool tie = b.kind == BlockKind::kHopfield && cfg_.tie_value_to_key;
    b.mix.value = tie ? b.mix.key : init.normal(d, d);
    b.mix.out = init.normal(d, d);
    b.ln1_gain = Initializer::constant(d, 1.0);
    b.ln1_bias = Initializer::constant(d, 0.0);
    b.ff_in = init.normal(d, cfg_.d_ff);
    b.ff_in_bias = Initializer::constant(cfg_.d_ff, 0.0);
    b.ff_out = init.normal(cfg_.d_ff, d);
    b.ff_out_bias = Initializer::constant(d, 0.0);
    b.ln2_gain = Initializer::constant(d, 1.0);
    b.ln2_bias = Initializer::constant(d, 0.0);
    blocks_.push_back(std::move(b));
  }

  std::size_t pooled_width = d;
  if (cfg_.use_hopfield_pool) {
    pooling_.state_patterns = init.normal(cfg_.pool_num_heads, d);
    pooling_.key = init.normal(d, d);
    pooling_.value = cfg_.tie_value_to_key ? pooling_.key : init.normal(d, d);
    pooling_.out = init.normal(d, d);
    pooled_width = cfg_.pool_num_heads * d;
  }
  classifier_ = init.normal(pooled_width, cfg_.n_classes);
  classifier_bias_ = Initializer::constant(cfg_.n_classes, 0.0);
}

Tensor Model::forward(const TokenBatch& batch) const {
  const std::size_t n = batch.batch;
  const std::size_t len = batch.length;
  if (n == 0 || len == 0) throw InvalidArgument("forward: empty batch");
  if (len > cfg_.max_len) {
    throw InvalidArgument("forward: sequence length " + std::to_string(len) +
                          " exceeds max_len " + std::to_string(cfg_.max_len));
  }
  if (batch.ids.size() != n * len || batch.mask.size() != n * len) {
    throw ShapeError("forward: ids/mask do not match [batch, length]");
  }
  for (std::size_t id : batch.ids) {
    if (id >= cfg_.vocab_size) {
      throw InvalidArgument("forward: token id " + std::to_string(id) +
                            " is outside the vocabulary of " + std::to_string(cfg_.vocab_size));
    }
  }
  for (std::size_t b = 0; b < n; ++b) {
    bool any = false;
    for (std::size_t t = 0; t < len; ++t) any = any || batch.mask[b * len + t];
    if (!any) throw InvalidArgument("forward: sequence " + std::to_string(b) + " is all padding");
  }

  std::vector<std::size_t> positions(n * len);
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i % len;
  Tensor x = add(gather_rows(token_embedding_, batch.ids), gather_rows(position_embedding_, positions));
  x = layer_norm(x, embed_ln_gain_, embed_ln_bias_);

  const KeyMask mask = head_mask(batch.mask, n, len, cfg_.n_heads);
  const hopfield::HopfieldConfig hcfg = cfg_.hopfield_config();
  for (const EncoderBlock& b : blocks_) {
    Tensor mixed = b.kind == BlockKind::kHopfield
                       ? hopfield::associate(x, x, n, b.mix, hcfg, batch.mask).output
                       : self_attention(x, n, len, b.mix, cfg_.n_heads, mask);
    x = layer_norm(add(x, mixed), b.ln1_gain, b.ln1_bias);
    Tensor ff = add_bias(matmul(gelu(add_bias(matmul(x, b.ff_in), b.ff_in_bias)), b.ff_out),
                         b.ff_out_bias);
    x = layer_norm(add(x, ff), b.ln2_gain, b.ln2_bias);
  }

  Tensor pooled;
  if (cfg_.use_hopfield_pool) {
    pooled = hopfield::pool(x, n, pooling_, hcfg, batch.mask);
  } else {
    std::vector<std::size_t> first(n);
    for (std::size_t b = 0; b < n; ++b) first[b] = b * len;
    pooled = gather_rows(x, first);
  }
  return add_bias(matmul(pooled, classifier_), classifier_bias_);
}

std::vector<NamedParam> Model::named_parameters() const {
  std::vector<NamedParam> out;
  out.push_back({"embed.token", token_embedding_});
  out.push_back({"embed.position", position_embedding_});
  out.push_back({"embed.ln.gain", embed_ln_gain_});
  out.push_back({"embed.ln.bias", embed_ln_bias_});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const EncoderBlock& b = blocks_[i];
    const std::string p = "block" + std::to_string(i) + ".";
    out.push_back({p + "mix.query", b.mix.query});
    out.push_back({p + "mix.key", b.mix.key});
    if (!b.mix.tied()) out.push_back({p + "mix.value", b.mix.value});
    out.push_back({p + "mix.out", b.mix.out});
    out.push_back({p + "ln1.gain", b.ln1_gain});
    out.push_back({p + "ln1.bias", b.ln1_bias});
    out.push_back({p + "ff.in", b.ff_in});
    out.push_back({p + "ff.in_bias", b.ff_in_bias});
    out.push_back({p + "ff.out", b.ff_out});
    out.push_back({p + "ff.out_bias", b.ff_out_bias});
    out.push_back({p + "ln2.gain", b.ln2_gain});
    out.push_back({p + "ln2.bias", b.ln2_bias});
  }
  if (cfg_.use_hopfield_pool) {
    out.push_back({"pool.state_patterns", pooling_.state_patterns});
    out.push_back({"pool.key", pooling_.key});
    if (!pooling_.tied()) out.push_back({"pool.value", pooling_.value});
    out.push_back({"pool.out", pooling_.out});
  }
  out.push_back({"classifier.weight", classifier_});
  out.push_back({"classifier.bias", classifier_bias_});
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

std::size_t Model::param_count() const {
  std::size_t total = 0;
  for (const auto& p : named_parameters()) total += p.tensor.size();
  return total;
}

Model Model::clone() const {
  Model copy(cfg_);
  copy.assign_parameters(named_parameters());
  return copy;
}

void Model::assign_parameters(const std::vector<NamedParam>& source) {
  std::vector<NamedParam> own = named_parameters();
  if (source.size() != own.size()) {
    throw SchemaError("parameter set has " + std::to_string(source.size()) +
                      " tensors, model expects " + std::to_string(own.size()));
  }
  for (NamedParam& p : own) {
    const NamedParam* match = nullptr;
    for (const NamedParam& s : source) {
      if (s.name == p.name) match = &s;
    }
    if (!match) throw SchemaError("parameter '" + p.name + "' is missing");
    if (match->tensor.shape() != p.tensor.shape()) {
      throw SchemaError("parameter '" + p.name + "' has shape " +
                        shape_string(match->tensor.shape()) + ", expected " +
                        shape_string(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    auto src = match->tensor.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

Tensor predict_proba(const Model& model, const TokenBatch& batch) {
  return softmax_rows(model.forward(batch), 1.0);
}

FlopsEstimate flops_estimate(const ModelConfig& cfg, std::size_t seq_len) {
  cfg.validate();
  if (seq_len == 0 || seq_len > cfg.max_len) {
    throw InvalidArgument("flops_estimate: seq_len must be in 1.." + std::to_string(cfg.max_len));
  }
  const double t = static_cast<double>(seq_len);
  const double d = static_cast<double>(cfg.d_model);
  const double h = static_cast<double>(cfg.n_heads);
  const double ff = static_cast<double>(cfg.d_ff);
  const double steps = static_cast<double>(cfg.hopfield_update_steps);

  FlopsEstimate est;
  est.embedding = t * d + 8.0 * t * d;
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    BlockFlops b;
    b.kind = i >= cfg.n_layers - cfg.num_hf_layers ? BlockKind::kHopfield : BlockKind::kAttention;
    const bool hop = b.kind == BlockKind::kHopfield;
    const double rounds = hop ? steps : 1.0;
    const double proj_count = hop && cfg.tie_value_to_key ? 3.0 : 4.0;
    b.projections = proj_count * matmul_flops(t, d, d);
    b.scores = rounds * matmul_flops(t, d, t);
    b.softmax = rounds * 5.0 * h * t * t;
    b.mixing = rounds * matmul_flops(t, t, d);
    b.feed_forward = matmul_flops(t, d, ff) + matmul_flops(t, ff, d) + t * ff + t * d +
                     10.0 * t * ff;
    b.norms_and_residuals = 2.0 * t * d + 2.0 * 8.0 * t * d;
    est.blocks.push_back(b);
  }
  double pooled_width = d;
  if (cfg.use_hopfield_pool) {
    const double p = static_cast<double>(cfg.pool_num_heads);
    const double kv = cfg.tie_value_to_key ? 1.0 : 2.0;
    est.pooling = kv * matmul_flops(t, d, d) + matmul_flops(p, d, d) +
                  steps * (matmul_flops(p, d, t) + 5.0 * h * p * t + matmul_flops(p, t, d));
    pooled_width = p * d;
  }
  est.classifier = matmul_flops(1.0, pooled_width, static_cast<double>(cfg.n_classes)) +
                   static_cast<double>(cfg.n_classes);
  est.forward_flops = est.embedding + est.pooling + est.classifier;
  for (const BlockFlops& b : est.blocks) est.forward_flops += b.total();
  return est;
}

void to_json(nlohmann::json& j, const FlopsEstimate& f) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const BlockFlops& b : f.blocks) {
    blocks.push_back({{"kind", b.kind == BlockKind::kHopfield ? "hopfield" : "attention"},
                      {"projections", b.projections},
                      {"scores", b.scores},
                      {"softmax", b.softmax},
                      {"mixing", b.mixing},
                      {"feed_forward", b.feed_forward},
                      {"norms_and_residuals", b.norms_and_residuals},
                      {"total", b.total()}});
  }
  j = nlohmann::json{{"forward_flops", f.forward_flops},
                     {"embedding", f.embedding},
                     {"blocks", blocks},
                     {"pooling", f.pooling},
                     {"classifier", f.classifier}};
}

}  // namespace biasly::model
