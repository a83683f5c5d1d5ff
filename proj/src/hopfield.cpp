#include "biasly/hopfield.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "biasly/error.hpp"

namespace biasly::hopfield {

double HopfieldConfig::effective_beta() const {
  return beta.value_or(1.0 / std::sqrt(static_cast<double>(d_head())));
}

void HopfieldConfig::validate() const {
  if (d_model == 0 || n_heads == 0) throw InvalidArgument("hopfield: d_model and n_heads must be positive");
  if (d_model % n_heads != 0) {
    throw InvalidArgument("hopfield: n_heads " + std::to_string(n_heads) +
                          " does not divide d_model " + std::to_string(d_model));
  }
  if (update_steps < 1) throw InvalidArgument("hopfield: update_steps must be >= 1");
  if (!(update_tol > 0.0)) throw InvalidArgument("hopfield: update_tol must be positive");
  if (beta && !(*beta > 0.0)) throw InvalidArgument("hopfield: beta must be positive");
}

std::size_t HopfieldWeights::param_count() const {
  return query.size() + key.size() + (tied() ? 0 : value.size()) + out.size();
}

std::size_t PoolingWeights::param_count() const {
  return state_patterns.size() + key.size() + (tied() ? 0 : value.size()) + out.size();
}

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> data(rows * cols);
  for (double& v : data) v = normal(rng);
  return Tensor({rows, cols}, std::move(data), true);
}

void check_width(const Tensor& t, std::size_t d_model, const char* what) {
  if (t.rank() != 2 || t.dim(1) != d_model) {
    throw ShapeError(std::string("hopfield: ") + what + " has shape " + shape_string(t.shape()) +
                     ", expected [*, " + std::to_string(d_model) + "]");
  }
}

KeyMask expand_mask(std::span<const std::uint8_t> mask, std::size_t batch, std::size_t heads,
                    std::size_t t_y) {
  if (mask.empty()) return {};
  if (mask.size() != batch * t_y) {
    throw ShapeError("hopfield: stored mask has " + std::to_string(mask.size()) +
                     " entries, expected " + std::to_string(batch * t_y));
  }
  KeyMask out;
  out.reserve(batch * heads * t_y);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      out.insert(out.end(), mask.begin() + b * t_y, mask.begin() + (b + 1) * t_y);
  return out;
}

// Core association once the state has been projected into key space.
AssociationResult associate_projected(const Tensor& query, const Tensor& stored,
                                      std::size_t batch, const Tensor& w_key,
                                      const Tensor& w_value, const Tensor& w_out,
                                      const HopfieldConfig& cfg,
                                      std::span<const std::uint8_t> stored_mask) {
  const std::size_t t_r = query.dim(0) / batch;
  const std::size_t t_y = stored.dim(0) / batch;
  if (t_y == 0 || stored.dim(0) % batch != 0 || query.dim(0) % batch != 0) {
    throw ShapeError("hopfield: state/stored rows do not divide into the batch");
  }
  const std::size_t heads = cfg.n_heads;
  const double beta = cfg.effective_beta();
  const KeyMask mask = expand_mask(stored_mask, batch, heads, t_y);

  const bool tied = w_value.same_storage(w_key);
  Tensor keys = split_heads(matmul(stored, w_key), batch, t_y, heads);
  Tensor values = tied ? keys : split_heads(matmul(stored, w_value), batch, t_y, heads);
  Tensor q = split_heads(query, batch, t_r, heads);

  AssociationResult result;
  for (std::size_t step = 1; step < cfg.update_steps; ++step) {
    Tensor next = matmul(softmax_rows(matmul_nt(q, keys), beta, mask), keys);
    result.last_change = max_abs_diff(next.data(), q.data());
    result.updates += 1;
    q = next;
    if (result.last_change < cfg.update_tol) break;
  }
  Tensor retrieved = matmul(softmax_rows(matmul_nt(q, keys), beta, mask), values);
  result.output = matmul(merge_heads(retrieved, batch, t_r, heads), w_out);
  return result;
}

}  // namespace

HopfieldWeights init_hopfield_weights(const HopfieldConfig& cfg, unsigned long long seed,
                                      double scale) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = cfg.d_model;
  HopfieldWeights w;
  w.query = random_matrix(d, d, rng, scale);
  w.key = random_matrix(d, d, rng, scale);
  w.value = cfg.tie_value_to_key ? w.key : random_matrix(d, d, rng, scale);
  w.out = random_matrix(d, d, rng, scale);
  return w;
}

PoolingWeights init_pooling_weights(const HopfieldConfig& cfg, std::size_t pool_heads,
                                    unsigned long long seed, double scale) {
  cfg.validate();
  if (pool_heads == 0) throw InvalidArgument("hopfield: pool_num_heads must be >= 1");
  std::mt19937_64 rng(seed);
  const std::size_t d = cfg.d_model;
  PoolingWeights w;
  w.state_patterns = random_matrix(pool_heads, d, rng, scale);
  w.key = random_matrix(d, d, rng, scale);
  w.value = cfg.tie_value_to_key ? w.key : random_matrix(d, d, rng, scale);
  w.out = random_matrix(d, d, rng, scale);
  return w;
}

AssociationResult associate(const Tensor& state, const Tensor& stored, std::size_t batch,
                            const HopfieldWeights& w, const HopfieldConfig& cfg,
                            std::span<const std::uint8_t> stored_mask) {
  cfg.validate();
  if (batch == 0) throw InvalidArgument("hopfield: batch must be positive");
  check_width(state, cfg.d_model, "state");
  check_width(stored, cfg.d_model, "stored");
  return associate_projected(matmul(state, w.query), stored, batch, w.key, w.value, w.out, cfg,
                             stored_mask);
}

Tensor hopfield_associate(const Tensor& state, const Tensor& stored, const HopfieldWeights& w,
                          const HopfieldConfig& cfg) {
  return associate(state, stored, 1, w, cfg).output;
}

Tensor pool(const Tensor& stored, std::size_t batch, const PoolingWeights& w,
            const HopfieldConfig& cfg, std::span<const std::uint8_t> stored_mask) {
  cfg.validate();
  if (batch == 0) throw InvalidArgument("hopfield: batch must be positive");
  check_width(stored, cfg.d_model, "stored");
  check_width(w.state_patterns, cfg.d_model, "state patterns");
  const std::size_t heads = w.pool_heads();
  Tensor queries = repeat_rows(w.state_patterns, batch);
  AssociationResult r =
      associate_projected(queries, stored, batch, w.key, w.value, w.out, cfg, stored_mask);
  return reshape(r.output, {batch, heads * cfg.d_model});
}

Tensor hopfield_pool(const Tensor& stored, const PoolingWeights& w, const HopfieldConfig& cfg) {
  Tensor pooled = pool(stored, 1, w, cfg);
  return reshape(pooled, {pooled.size()});
}

Tensor association_matrix(const Tensor& state, const Tensor& keys, double beta) {
  return softmax_rows(matmul_nt(state, keys), beta);
}

RetrievalResult retrieve(const Tensor& state, const Tensor& stored, double beta,
                         std::size_t max_steps, double tol) {
  if (stored.rank() != 2 || state.rank() != 2 || stored.dim(1) != state.dim(1)) {
    throw ShapeError("retrieve: state and stored patterns must share width");
  }
  const std::size_t n = stored.dim(0);
  const std::size_t d = stored.dim(1);
  const std::size_t rows = state.dim(0);
  auto y = stored.data();
  std::vector<double> xi(state.data().begin(), state.data().end());
  std::vector<double> next(xi.size());
  std::vector<double> weights(n);

  RetrievalResult result;
  while (result.iterations < max_steps) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* cur = xi.data() + r * d;
      double mx = -INFINITY;
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += y[i * d + j] * cur[j];
        weights[i] = beta * s;
        mx = std::max(mx, weights[i]);
      }
      double z = 0.0;
      for (double& w : weights) {
        w = std::exp(w - mx);
        z += w;
      }
      double* out = next.data() + r * d;
      std::fill(out, out + d, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[j] += weights[i] / z * y[i * d + j];
    }
    result.last_change = max_abs_diff(next, xi);
    xi.swap(next);
    ++result.iterations;
    if (result.last_change < tol) {
      result.converged = true;
      break;
    }
  }
  result.retrieved = Tensor(state.shape(), std::move(xi));
  return result;
}

Tensor attention_reference(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) ||
      k.dim(0) != v.dim(0)) {
    throw ShapeError("attention_reference: incompatible shapes " + shape_string(q.shape()) +
                     ", " + shape_string(k.shape()) + ", " + shape_string(v.shape()));
  }
  const std::size_t tq = q.dim(0), tk = k.dim(0), d = q.dim(1), dv = v.dim(1);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> out(tq * dv, 0.0);
  std::vector<double> scores(tk);
  for (std::size_t i = 0; i < tq; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < tk; ++j) {
      double s = 0.0;
      for (std::size_t e = 0; e < d; ++e) s += q.data()[i * d + e] * k.data()[j * d + e];
      scores[j] = s * inv_sqrt_d;
      mx = std::max(mx, scores[j]);
    }
    double z = 0.0;
    for (double& s : scores) {
      s = std::exp(s - mx);
      z += s;
    }
    for (std::size_t j = 0; j < tk; ++j)
      for (std::size_t e = 0; e < dv; ++e) out[i * dv + e] += scores[j] / z * v.data()[j * dv + e];
  }
  return Tensor({tq, dv}, std::move(out));
}

}  // namespace biasly::hopfield
