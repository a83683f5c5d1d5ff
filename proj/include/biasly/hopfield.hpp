#pragma once

#include <cstddef>
#include <optional>

#include "biasly/ops.hpp"
#include "biasly/tensor.hpp"

namespace biasly::hopfield {

struct HopfieldConfig {
  std::size_t d_model = 32;
  std::size_t n_heads = 2;
  // Inverse temperature; unset means 1/sqrt(d_head).
  std::optional<double> beta;
  // Association steps in total. The state is updated update_steps-1 times
  // before the final retrieval; update_steps == 1 is exactly attention.
  std::size_t update_steps = 3;
  double update_tol = 1e-4;
  bool tie_value_to_key = true;

  std::size_t d_head() const { return d_model / n_heads; }
  double effective_beta() const;
  void validate() const;  // throws InvalidArgument
};

// Projection matrices, each [d_model, d_model]. When tied, `value` is the
// same tensor (same storage) as `key`.
struct HopfieldWeights {
  Tensor query, key, value, out;

  bool tied() const { return value.same_storage(key); }
  std::size_t param_count() const;
};

struct PoolingWeights {
  Tensor state_patterns;  // [pool_heads, d_model], learnable queries
  Tensor key, value, out;

  std::size_t pool_heads() const { return state_patterns.dim(0); }
  bool tied() const { return value.same_storage(key); }
  std::size_t param_count() const;
};

// Initializers draw N(0, scale^2) from `seed`. Weights are leaves with
// requires_grad set.
HopfieldWeights init_hopfield_weights(const HopfieldConfig& cfg, unsigned long long seed,
                                      double scale = 0.02);
PoolingWeights init_pooling_weights(const HopfieldConfig& cfg, std::size_t pool_heads,
                                    unsigned long long seed, double scale = 0.02);

struct AssociationResult {
  Tensor output;                 // [batch*t_r, d_model]
  std::size_t updates = 0;       // state updates actually performed
  double last_change = 0.0;      // max-abs change of the last update
};

// Batched association. `state` is [batch*t_r, d_model] and `stored` is
// [batch*t_y, d_model]; `stored_mask` (batch*t_y entries, nonzero = keep) hides
// padded stored patterns. Per head: Q = R W_Q, K = Y W_K, V = Y W_V; the state
// is iterated Q <- softmax(beta Q K^T) K until the max-abs change drops below
// update_tol or the step budget runs out, then output = softmax(beta Q K^T) V,
// with heads concatenated and projected by W_O. Every step stays in the graph.
AssociationResult associate(const Tensor& state, const Tensor& stored, std::size_t batch,
                            const HopfieldWeights& w, const HopfieldConfig& cfg,
                            std::span<const std::uint8_t> stored_mask = {});

// Single-sequence form: R [t_r, d_model], Y [t_y, d_model].
Tensor hopfield_associate(const Tensor& state, const Tensor& stored, const HopfieldWeights& w,
                          const HopfieldConfig& cfg);

// Learnable state patterns associate over each sequence of `stored`
// ([batch*t_y, d_model]); result is [batch, pool_heads*d_model].
Tensor pool(const Tensor& stored, std::size_t batch, const PoolingWeights& w,
            const HopfieldConfig& cfg, std::span<const std::uint8_t> stored_mask = {});

// Single-sequence form: Y [t_y, d_model] -> [pool_heads*d_model].
Tensor hopfield_pool(const Tensor& stored, const PoolingWeights& w, const HopfieldConfig& cfg);

// Row-wise association weights softmax(beta * R K^T) for plain matrices; used
// to inspect row-stochasticity.
Tensor association_matrix(const Tensor& state, const Tensor& keys, double beta);

// Untracked fixed-point retrieval with identity projections:
// xi <- Y^T softmax(beta * Y xi), for each row of `state`.
struct RetrievalResult {
  Tensor retrieved;  // [t_r, d]
  std::size_t iterations = 0;
  double last_change = 0.0;
  bool converged = false;
};
RetrievalResult retrieve(const Tensor& state, const Tensor& stored, double beta,
                         std::size_t max_steps, double tol);

// softmax(Q K^T / sqrt(d_head)) V for single-head matrices Q [t_q,d],
// K [t_k,d], V [t_k,d_v]. Plain loops, no graph; a test oracle.
Tensor attention_reference(const Tensor& q, const Tensor& k, const Tensor& v);

}  // namespace biasly::hopfield
