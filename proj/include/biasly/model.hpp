#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "biasly/hopfield.hpp"
#include "biasly/tensor.hpp"
#include "json.hpp"

namespace biasly::model {

inline constexpr std::size_t kNumClasses = 6;

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t max_len = 128;
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_ff = 64;
  std::size_t num_hf_layers = 0;  // the last num_hf_layers blocks are Hopfield blocks
  bool use_hopfield_pool = false;
  std::size_t pool_num_heads = 1;
  std::size_t n_classes = kNumClasses;
  std::uint64_t seed = 0;

  bool tie_value_to_key = true;
  double hopfield_beta = 0.0;  // 0 selects 1/sqrt(d_head)
  std::size_t hopfield_update_steps = 3;
  double hopfield_update_tol = 1e-4;
  double init_scale = 0.02;

  void validate() const;  // throws InvalidArgument
  hopfield::HopfieldConfig hopfield_config() const;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

enum class BlockKind { kAttention, kHopfield };

struct EncoderBlock {
  BlockKind kind = BlockKind::kAttention;
  hopfield::HopfieldWeights mix;  // attention blocks never tie values
  Tensor ln1_gain, ln1_bias;
  Tensor ff_in, ff_in_bias, ff_out, ff_out_bias;
  Tensor ln2_gain, ln2_bias;
};

// Token ids for a padded batch, row-major [batch, length]. mask is nonzero
// for real tokens.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::size_t> ids;
  std::vector<std::uint8_t> mask;
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

class Model {
 public:
  // Deterministic initialization from cfg.seed.
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<EncoderBlock>& blocks() const { return blocks_; }

  // Logits [batch, n_classes]. Padded positions are excluded from every
  // attention, association and pooling softmax.
  Tensor forward(const TokenBatch& batch) const;

  // Unique trainable tensors in a fixed order; a tied matrix appears once.
  std::vector<NamedParam> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::size_t param_count() const;

  // Deep copy; the result shares no storage with this model.
  Model clone() const;
  // Overwrites parameter values by name. The source must name exactly this
  // model's parameters with identical shapes.
  void assign_parameters(const std::vector<NamedParam>& source);

 private:
  ModelConfig cfg_;
  Tensor token_embedding_, position_embedding_, embed_ln_gain_, embed_ln_bias_;
  std::vector<EncoderBlock> blocks_;
  hopfield::PoolingWeights pooling_;  // defined only with use_hopfield_pool
  Tensor classifier_, classifier_bias_;
};

inline Model build(const ModelConfig& cfg) { return Model(cfg); }
inline std::size_t param_count(const Model& m) { return m.param_count(); }

// Softmax over the logits of each row.
Tensor predict_proba(const Model& model, const TokenBatch& batch);

// Analytic forward-pass operation counts, per sample at a given sequence
// length. A matmul of [m,k] x [k,n] counts 2*m*k*n. Elementwise work counts
// per element: add 1, softmax 5, layer norm 8, gelu 10. Hopfield blocks are
// charged for the full update_steps budget (an upper bound when early
// stopping kicks in). A tied value projection is not recomputed.
struct BlockFlops {
  BlockKind kind = BlockKind::kAttention;
  double projections = 0;   // Q/K/V/O matmuls
  double scores = 0;        // Q K^T over all association steps
  double softmax = 0;
  double mixing = 0;        // probability-weighted sums over stored rows
  double feed_forward = 0;
  double norms_and_residuals = 0;
  double total() const {
    return projections + scores + softmax + mixing + feed_forward + norms_and_residuals;
  }
};

struct FlopsEstimate {
  double embedding = 0;
  std::vector<BlockFlops> blocks;
  double pooling = 0;
  double classifier = 0;
  double forward_flops = 0;
};

inline double matmul_flops(double m, double k, double n) { return 2.0 * m * k * n; }

FlopsEstimate flops_estimate(const ModelConfig& cfg, std::size_t seq_len);
void to_json(nlohmann::json& j, const FlopsEstimate& f);

}  // namespace biasly::model
