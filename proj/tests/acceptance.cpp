// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "biasly/corpus.hpp"
#include "biasly/gradcheck.hpp"
#include "biasly/harness.hpp"
#include "biasly/hopfield.hpp"
#include "biasly/labels.hpp"
#include "biasly/metrics.hpp"
#include "biasly/model.hpp"
#include "biasly/ops.hpp"
#include "biasly/synthetic.hpp"

using namespace biasly;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome fail(const std::string& why) { return {false, why}; }

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double sd = 1.0, bool grad = false) {
  std::normal_distribution<double> normal(0.0, sd);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = normal(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

// --- 1 ------------------------------------------------------------------------

Outcome soft_label_fixture() {
  const auto p = labels::soft_label({{4, 4}, {3, 3}, {2, 5}});
  const std::array<double, 6> rounded = {0, 0, 0.4167, 0.25, 0.3333, 0};
  const std::array<double, 6> exact = {0, 0, 5.0 / 12, 3.0 / 12, 4.0 / 12, 0};
  double worst = 0.0, worst_exact = 0.0;
  for (std::size_t c = 0; c < 6; ++c) {
    worst = std::max(worst, std::abs(p.probs[c] - rounded[c]));
    worst_exact = std::max(worst_exact, std::abs(p.probs[c] - exact[c]));
  }
  const bool ok = worst <= 1e-4 && worst_exact <= 1e-15;
  return {ok, "max |diff| " + fmt(worst) + " vs rounded, " + fmt(worst_exact) + " vs exact"};
}

// --- 2 ------------------------------------------------------------------------

Outcome table_arithmetic() {
  const double hbert = metrics::mean_average_precision({0.1195, 0.1111, 0.2132, 0.9607, 0.5049, 0.1914});
  const double baseline =
      metrics::mean_average_precision({0.2205, 0.0967, 0.1344, 0.9564, 0.1103, 0.2340});
  const bool ok = std::abs(hbert - 0.3501) <= 5e-4 && std::abs(baseline - 0.2921) <= 5e-4 &&
                  std::abs(baseline - 0.29355) > 1e-3;
  return {ok, "hBERT mAP " + fmt(hbert) + ", baseline mAP " + fmt(baseline) +
                  " (reported 0.29355 does not follow from its per-class APs)"};
}

// --- 3 ------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t checks = 0;
  std::string failed;
  auto record = [&](const std::string& name, const GradCheckReport& r) {
    ++checks;
    worst = std::max(worst, r.max_rel_error);
    if (!r.passed && failed.empty()) failed = name + " rel err " + fmt(r.max_rel_error);
  };

  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(500 + seed);
    const Tensor probe = random_tensor({3, 4}, rng);
    auto weighted = [&](const Tensor& t) { return sum(mul(t, probe)); };
    const Tensor w = random_tensor({5, 4}, rng);
    record("matmul", grad_check([&](const Tensor& x) { return weighted(matmul(x, w)); },
                                random_tensor({3, 5}, rng)));
    record("softmax", grad_check([&](const Tensor& x) { return weighted(softmax_rows(x, 0.8)); },
                                 random_tensor({3, 4}, rng)));
    Tensor x = random_tensor({3, 4}, rng, 1.0, true);
    Tensor gain = random_tensor({4}, rng, 1.0, true), bias = random_tensor({4}, rng, 1.0, true);
    record("layer_norm",
           grad_check_params([&] { return weighted(layer_norm(x, gain, bias)); }, {x, gain, bias}));
    record("gelu", grad_check([&](const Tensor& t) { return weighted(gelu(t)); },
                              random_tensor({3, 4}, rng, 1.5)));

    for (bool tied : {true, false}) {
      hopfield::HopfieldConfig cfg;
      cfg.d_model = 4;
      cfg.n_heads = 2;
      cfg.update_steps = 3;
      cfg.tie_value_to_key = tied;
      auto hw = hopfield::init_hopfield_weights(cfg, seed, 0.6);
      Tensor r = random_tensor({3, 4}, rng, 1.0, true), y = random_tensor({4, 4}, rng, 1.0, true);
      std::vector<Tensor> inputs = {r, y, hw.query, hw.key, hw.out};
      if (!tied) inputs.push_back(hw.value);
      record(tied ? "association (tied)" : "association (untied)",
             grad_check_params([&] { return weighted(hopfield::hopfield_associate(r, y, hw, cfg)); },
                               inputs));
    }

    hopfield::HopfieldConfig pcfg;
    pcfg.d_model = 4;
    pcfg.n_heads = 2;
    auto pw = hopfield::init_pooling_weights(pcfg, 2, seed, 0.6);
    Tensor ys = random_tensor({5, 4}, rng, 1.0, true);
    const Tensor pool_probe = random_tensor({8}, rng);
    record("pooling", grad_check_params(
                          [&] { return sum(mul(hopfield::hopfield_pool(ys, pw, pcfg), pool_probe)); },
                          {ys, pw.state_patterns, pw.key, pw.out}));

    model::ModelConfig mc;
    mc.vocab_size = 12;
    mc.max_len = 4;
    mc.d_model = 8;
    mc.n_layers = 2;
    mc.n_heads = 2;
    mc.d_ff = 8;
    mc.num_hf_layers = 1;
    mc.use_hopfield_pool = seed % 2 == 0;
    mc.seed = static_cast<std::uint64_t>(seed);
    mc.init_scale = 0.3;
    model::Model m(mc);
    model::TokenBatch batch{2, 4, {}, {1, 1, 1, 1, 1, 1, 1, 0}};
    std::uniform_int_distribution<std::size_t> tok(0, mc.vocab_size - 1);
    for (int i = 0; i < 8; ++i) batch.ids.push_back(tok(rng));
    const Tensor targets({2, 6}, {0, 0, 5.0 / 12, 0.25, 1.0 / 3, 0, 0, 1, 0, 0, 0, 0});
    record("tiny model", grad_check_params(
                             [&] {
                               return soft_cross_entropy(softmax_rows(m.forward(batch), 1.0), targets,
                                                         labels::kLossEps);
                             },
                             m.parameters()));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ok = failed.empty() && secs < 120.0;
  std::string detail = std::to_string(checks) + " checks over 10 seeds, worst rel err " + fmt(worst, 3) +
                       ", " + fmt(secs, 3) + " s";
  if (!failed.empty()) detail += "; first failure: " + failed;
  return {ok, detail};
}

// --- 4 ------------------------------------------------------------------------

Tensor columns(const Tensor& m, std::size_t start, std::size_t width) {
  std::vector<double> out;
  for (std::size_t i = 0; i < m.dim(0); ++i)
    for (std::size_t j = 0; j < width; ++j) out.push_back(m.at(i, start + j));
  return Tensor({m.dim(0), width}, out);
}

Outcome attention_equivalence() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t heads = 1 + static_cast<std::size_t>(trial % 3);
    const std::size_t d = heads * (2 + static_cast<std::size_t>(trial % 4));
    const std::size_t tr = 1 + rng() % 6, ty = 1 + rng() % 7;
    hopfield::HopfieldConfig cfg;
    cfg.d_model = d;
    cfg.n_heads = heads;
    cfg.update_steps = 1;
    cfg.tie_value_to_key = false;
    auto w = hopfield::init_hopfield_weights(cfg, 1000 + trial, 0.5);
    const Tensor r = random_tensor({tr, d}, rng), y = random_tensor({ty, d}, rng);
    const Tensor got = hopfield::hopfield_associate(r, y, w, cfg);

    const std::size_t dh = d / heads;
    const Tensor q = matmul(r, w.query), k = matmul(y, w.key), v = matmul(y, w.value);
    std::vector<double> concat(tr * d);
    for (std::size_t h = 0; h < heads; ++h) {
      const Tensor o = hopfield::attention_reference(columns(q, h * dh, dh), columns(k, h * dh, dh),
                                                     columns(v, h * dh, dh));
      for (std::size_t i = 0; i < tr; ++i)
        for (std::size_t j = 0; j < dh; ++j) concat[i * d + h * dh + j] = o.at(i, j);
    }
    const Tensor want = matmul(Tensor({tr, d}, concat), w.out);
    worst = std::max(worst, max_abs_diff(got.data(), want.data()));
  }
  return {worst <= 1e-12, "100 instances, max |diff| " + fmt(worst, 3)};
}

// --- 5 ------------------------------------------------------------------------

Outcome pooling_permutation() {
  std::mt19937_64 rng(99);
  hopfield::HopfieldConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  auto w = hopfield::init_pooling_weights(cfg, 2, 17, 0.5);
  const std::size_t t = 9;
  const Tensor y = random_tensor({t, 8}, rng);
  const Tensor base = hopfield::hopfield_pool(y, w, cfg);
  std::vector<std::size_t> order(t);
  std::iota(order.begin(), order.end(), 0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    const Tensor permuted = gather_rows(y, order);
    worst = std::max(worst, max_abs_diff(base.data(), hopfield::hopfield_pool(permuted, w, cfg).data()));
  }
  return {worst < 1e-10, "100 permutations, max |diff| " + fmt(worst, 3)};
}

// --- 6 ------------------------------------------------------------------------

std::size_t closed_form_params(const model::ModelConfig& c) {
  const std::size_t d = c.d_model, f = c.d_ff;
  std::size_t n = c.vocab_size * d + c.max_len * d + 2 * d;
  const std::size_t rest = d * f + f + f * d + d + 4 * d;
  for (std::size_t i = 0; i < c.n_layers; ++i) {
    const bool hf = i >= c.n_layers - c.num_hf_layers;
    n += (hf && c.tie_value_to_key ? 3 : 4) * d * d + rest;
  }
  const std::size_t features = c.use_hopfield_pool ? c.pool_num_heads * d : d;
  if (c.use_hopfield_pool) n += c.pool_num_heads * d + (c.tie_value_to_key ? 2 : 3) * d * d;
  return n + features * c.n_classes + c.n_classes;
}

Outcome parameter_reduction() {
  std::size_t configs = 0;
  for (std::size_t d : {8, 16, 32, 64}) {
    for (std::size_t layers : {1, 2, 4}) {
      for (std::size_t x = 1; x <= layers; ++x) {
        model::ModelConfig base;
        base.vocab_size = 50;
        base.max_len = 16;
        base.d_model = d;
        base.n_layers = layers;
        base.n_heads = 2;
        base.d_ff = 2 * d;
        model::ModelConfig hb = base;
        hb.num_hf_layers = x;
        hb.tie_value_to_key = true;
        const std::size_t pb = model::Model(base).param_count(), ph = model::Model(hb).param_count();
        if (pb - ph != d * d * x) {
          return fail("d=" + std::to_string(d) + " L=" + std::to_string(layers) + " X=" + std::to_string(x) +
                      ": difference " + std::to_string(pb - ph));
        }
        if (pb != closed_form_params(base) || ph != closed_form_params(hb)) {
          return fail("closed-form count disagrees at d=" + std::to_string(d));
        }
        ++configs;
      }
    }
  }
  return {true, std::to_string(configs) + " configurations, difference exactly d_model^2 * X"};
}

// --- 7 ------------------------------------------------------------------------

bool outranks(const metrics::PredictionRecord& a, const metrics::PredictionRecord& b, std::size_t c) {
  return a.probs[c] > b.probs[c] || (a.probs[c] == b.probs[c] && a.id < b.id);
}

std::optional<double> naive_ap(const std::vector<metrics::PredictionRecord>& recs, std::size_t c,
                               const metrics::Relevance& rel) {
  std::vector<const metrics::PredictionRecord*> by_rank(recs.size());
  for (const auto& r : recs) {
    std::size_t rank = 0;
    for (const auto& o : recs) rank += &o != &r && outranks(o, r, c);
    by_rank[rank] = &r;
  }
  double total = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (!rel.relevant(*by_rank[i], c)) continue;
    std::size_t hits = 0;
    for (std::size_t j = 0; j <= i; ++j) hits += rel.relevant(*by_rank[j], c);
    total += static_cast<double>(hits) / static_cast<double>(i + 1);
    ++positives;
  }
  if (positives == 0) return std::nullopt;
  return total / static_cast<double>(positives);
}

std::set<std::size_t> naive_topk(const metrics::Probs& p, std::size_t k) {
  std::set<std::size_t> out;
  for (std::size_t c = 0; c < 6; ++c) {
    std::size_t better = 0;
    for (std::size_t j = 0; j < 6; ++j) better += p[j] > p[c] || (p[j] == p[c] && j < c);
    if (better < k) out.insert(c);
  }
  return out;
}

Outcome metric_oracle() {
  std::mt19937_64 rng(4242);
  std::uniform_int_distribution<int> count(1, 4), score(0, 5), conf(1, 5), step(0, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t comparisons = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 1 + rng() % 20;
    const bool coarse = inst % 2 == 0;
    std::vector<metrics::PredictionRecord> recs;
    for (std::size_t i = 0; i < n; ++i) {
      metrics::Probs p{};
      double total = 0.0;
      for (double& v : p) total += v = coarse ? step(rng) + 0.5 : u(rng);
      for (double& v : p) v /= total;
      std::vector<labels::Annotation> ann(static_cast<std::size_t>(count(rng)));
      for (auto& a : ann) a = {score(rng), static_cast<double>(conf(rng))};
      recs.push_back(metrics::make_record("r" + std::to_string(100 - i), p, labels::soft_label(ann)));
    }
    for (auto mode : {metrics::Mode::kMulticlass, metrics::Mode::kMultilabel}) {
      const auto rep = metrics::compute_report(recs, mode);
      const metrics::Relevance rel{mode, 3};
      double ap_sum = 0.0;
      std::size_t ap_n = 0;
      for (std::size_t c = 0; c < 6; ++c) {
        const auto want = naive_ap(recs, c, rel);
        if (want != rep.ap_per_class[c]) return fail("AP mismatch, instance " + std::to_string(inst));
        if (want) ap_sum += *want, ++ap_n;
        ++comparisons;
      }
      if (ap_n > 0 && rep.map != ap_sum / static_cast<double>(ap_n)) return fail("mAP mismatch");
      double prev = -1.0;
      for (std::size_t k = 1; k <= 3; ++k) {
        std::size_t hits = 0, tp = 0, fp = 0, fn = 0, iou60 = 0;
        for (const auto& r : recs) {
          const auto pred = naive_topk(r.probs, k);
          const std::set<std::size_t> tgt(r.target_sets.at(k).begin(), r.target_sets.at(k).end());
          hits += pred.count(r.target);
          std::size_t inter = 0, uni = 0;
          for (std::size_t c = 0; c < 6; ++c) {
            const bool a = pred.count(c), b = tgt.count(c);
            tp += a && b, fp += a && !b, fn += !a && b;
            inter += a && b, uni += a || b;
          }
          iou60 += uni == 0 ? 60 : 60 * inter / uni;
        }
        const double acc = static_cast<double>(hits) / static_cast<double>(n);
        const double denom = static_cast<double>(2 * tp + fp + fn);
        const double f1 = denom == 0.0 ? 1.0 : 2.0 * static_cast<double>(tp) / denom;
        const double iou = static_cast<double>(iou60) / static_cast<double>(60 * n);
        if (rep.topk_accuracy.at(k) != acc) return fail("top-k mismatch");
        if (rep.f1_at_k.at(k) != f1) return fail("F1 mismatch");
        if (rep.iou_at_k.at(k) != iou) return fail("IoU mismatch");
        if (acc < prev) return fail("top-k accuracy not monotone");
        prev = acc;
        comparisons += 3;
      }
    }
  }
  return {true, "200 instances, " + std::to_string(comparisons) + " exact comparisons, top-k monotone"};
}

// --- 8 ------------------------------------------------------------------------

Outcome soft_ce_properties() {
  std::mt19937_64 rng(808);
  std::uniform_int_distribution<int> count(1, 6), score(0, 5), conf(1, 5);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  const std::array<double, 6> uniform = {1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6};
  double worst_uniform = 0.0, min_gap = 1e300;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<labels::Annotation> ann(static_cast<std::size_t>(count(rng)));
    for (auto& a : ann) a = {score(rng), static_cast<double>(conf(rng))};
    const auto p = labels::soft_label(ann);
    worst_uniform = std::max(worst_uniform, std::abs(labels::soft_cross_entropy(p, uniform) - std::log(6.0)));
    std::array<double, 6> q{};
    double total = 0.0;
    for (double& v : q) total += v = u(rng);
    for (double& v : q) v /= total;
    double entropy = 0.0;
    for (double pc : p.probs)
      if (pc > 0) entropy -= pc * std::log(pc);
    min_gap = std::min(min_gap, labels::soft_cross_entropy(p, q) - entropy);
  }
  const bool ok = worst_uniform <= 1e-6 && min_gap >= -6 * labels::kLossEps;
  return {ok, "|uniform loss - ln 6| <= " + fmt(worst_uniform, 3) + ", min(CE - H) = " + fmt(min_gap, 3)};
}

// --- 9 ------------------------------------------------------------------------

corpus::Vocab vocab_for(const std::vector<labels::AnnotatedSample>& samples) {
  std::vector<std::string> texts;
  for (const auto& s : samples) texts.push_back(corpus::preprocess(s.text));
  return corpus::Vocab::build(texts);
}

model::ModelConfig toy_model(std::size_t vocab) {
  model::ModelConfig cfg;
  cfg.vocab_size = vocab;
  cfg.max_len = 32;
  cfg.d_model = 32;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_ff = 64;
  cfg.num_hf_layers = 1;
  cfg.use_hopfield_pool = true;
  cfg.pool_num_heads = 2;
  cfg.seed = 1;
  return cfg;
}

Outcome toy_training() {
  const auto start = std::chrono::steady_clock::now();
  auto train_s = synthetic::make_planted_samples(1000, labels::Source::kFoxNews, 21, {}, "f");
  auto more = synthetic::make_planted_samples(1000, labels::Source::kBreitbart, 22, {}, "b");
  train_s.insert(train_s.end(), more.begin(), more.end());
  const auto val_s = synthetic::make_planted_samples(200, labels::Source::kFoxNews, 23, {}, "v");
  const auto test_s = synthetic::make_planted_samples(400, labels::Source::kYouTube, 24, {}, "y");
  const corpus::Vocab vocab = vocab_for(train_s);
  const auto cfg = toy_model(vocab.size());
  const auto train_set = harness::encode(train_s, vocab, cfg.max_len);
  const auto val_set = harness::encode(val_s, vocab, cfg.max_len);
  const auto test_set = harness::encode(test_s, vocab, cfg.max_len);
  harness::TrainConfig tc;
  tc.lr = 3e-3;
  tc.epochs = 5;
  tc.batch_size = 32;
  tc.seed = 2;
  const auto result = harness::train(cfg, tc, train_set, val_set);
  const auto report = harness::evaluate(result.model, test_set, metrics::Mode::kMulticlass);
  const double top1 = report.topk_accuracy.at(1);
  const double train_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  synthetic::PlantedOptions one_hot;
  one_hot.one_hot = true;
  const auto batch_s = synthetic::make_planted_samples(32, labels::Source::kSynthetic, 11, one_hot);
  const corpus::Vocab bv = vocab_for(batch_s);
  const auto batch = harness::encode(batch_s, bv, 32);
  model::ModelConfig tiny;
  tiny.vocab_size = bv.size();
  tiny.max_len = 32;
  tiny.d_model = 16;
  tiny.n_layers = 2;
  tiny.n_heads = 2;
  tiny.d_ff = 32;
  tiny.num_hf_layers = 1;
  tiny.use_hopfield_pool = true;
  tiny.seed = 3;
  model::Model m(tiny);
  std::vector<Tensor> params = m.parameters();
  AdamState adam = make_adam_state(params, 3e-3);
  std::vector<std::size_t> idx(32);
  std::iota(idx.begin(), idx.end(), 0);
  double loss = 0.0;
  std::size_t steps = 0;
  while (steps < 1000) {
    loss = harness::train_step(m, params, adam, batch, idx, labels::kLossEps);
    ++steps;
    if (loss < 0.05) break;
  }
  const bool ok = top1 >= 0.90 && train_secs < 600.0 && loss < 0.05;
  return {ok, "top-1 " + fmt(top1, 4) + " on 400 held-out after 5 epochs (" + fmt(train_secs, 3) +
                  " s); single-batch loss " + fmt(loss, 3) + " after " + std::to_string(steps) + " steps"};
}

// --- 10 -----------------------------------------------------------------------

Outcome curation_pipeline() {
  const auto fx = synthetic::make_comment_fixture(1000, 40, 31);
  corpus::CurationConfig cfg;
  cfg.racial_terms = fx.racial_terms;
  cfg.seed = 5;

  double max_sent = 0.0, max_hate = 0.0;
  for (const auto& [_, v] : fx.sentiment.entries) max_sent = std::max(max_sent, std::abs(v));
  for (const auto& [_, v] : fx.hate.entries) max_hate = std::max(max_hate, std::abs(v));
  std::vector<std::pair<double, std::string>> oracle;
  for (const auto& c : fx.comments) {
    const auto tokens = corpus::split_tokens(corpus::preprocess(c.text));
    bool tagged = false;
    double total = 0.0;
    for (const auto& tok : tokens) {
      const auto key = corpus::lookup_key(tok);
      tagged = tagged || fx.racial_terms.count(key);
      if (auto it = fx.sentiment.entries.find(key); it != fx.sentiment.entries.end()) total += it->second;
      if (auto it = fx.hate.entries.find(key); it != fx.hate.entries.end())
        total += it->second * max_sent / max_hate;
    }
    const double score = tokens.empty() ? 0.0 : total / std::sqrt(static_cast<double>(tokens.size()));
    if (tagged) oracle.push_back({score, c.id});
  }
  std::sort(oracle.begin(), oracle.end());
  oracle.resize(static_cast<std::size_t>(std::floor(0.2 * static_cast<double>(oracle.size()))));

  const auto adjusted = corpus::adjust_hate_lexicon(fx.hate, fx.sentiment);
  const auto picked = corpus::select_candidates(corpus::score_comments(fx.comments, fx.sentiment, adjusted), cfg);
  if (picked.size() != oracle.size()) return fail("candidate count differs from the sort oracle");
  for (std::size_t i = 0; i < picked.size(); ++i) {
    if (picked[i].comment.id != oracle[i].second || std::abs(picked[i].score - oracle[i].first) > 1e-12)
      return fail("candidate " + std::to_string(i) + " differs from the sort oracle");
  }

  const auto r = corpus::curate(fx.comments, fx.sentiment, fx.hate, cfg);
  if (r.candidates.size() + r.dropped.size() != oracle.size()) return fail("matched + dropped != candidates");
  if (r.controls.size() != r.candidates.size()) return fail("controls do not pair with candidates");
  if (r.dropped.size() > r.warnings.size()) return fail("dropped candidates without warnings");
  std::set<std::string> cand_ids;
  for (const auto& c : r.candidates) cand_ids.insert(c.comment.id);
  std::size_t cand_in_samples = 0;
  for (const auto& s : r.samples) cand_in_samples += cand_ids.count(s.id);
  if (r.samples.size() != 2 * r.candidates.size() || 2 * cand_in_samples != r.samples.size())
    return fail("curated set is not half candidates");

  std::set<std::string> youtube_ids;
  for (const auto& c : fx.comments)
    if (c.source == labels::Source::kYouTube) youtube_ids.insert(c.id);
  const auto splits = corpus::split_dataset(r.samples, 7);
  std::size_t yt_total = 0;
  for (const auto& s : r.samples) yt_total += youtube_ids.count(s.id);
  for (const auto& s : splits.test)
    if (s.source != labels::Source::kYouTube) return fail("non-YouTube sample in test split");
  for (const auto* part : {&splits.train, &splits.validation})
    for (const auto& s : *part)
      if (s.source == labels::Source::kYouTube) return fail("YouTube sample outside the test split");
  if (splits.test.size() != yt_total) return fail("test split misses YouTube samples");

  const auto again = corpus::curate(fx.comments, fx.sentiment, fx.hate, cfg);
  const auto splits_again = corpus::split_dataset(again.samples, 7);
  auto ids = [](const std::vector<labels::AnnotatedSample>& v) {
    std::vector<std::string> out;
    for (const auto& s : v) out.push_back(s.id);
    return out;
  };
  if (ids(again.samples) != ids(r.samples) || ids(splits_again.train) != ids(splits.train) ||
      ids(splits_again.validation) != ids(splits.validation) || ids(splits_again.test) != ids(splits.test))
    return fail("pipeline not deterministic under seed");

  return {true, std::to_string(oracle.size()) + " candidates match the sort oracle, " +
                    std::to_string(r.dropped.size()) + " dropped with warnings, " +
                    std::to_string(r.samples.size()) + " curated, test split " +
                    std::to_string(splits.test.size()) + " YouTube samples"};
}

// --- 11 -----------------------------------------------------------------------

Outcome search_front() {
  const auto start = std::chrono::steady_clock::now();
  auto train_s = synthetic::make_planted_samples(400, labels::Source::kFoxNews, 41, {}, "f");
  const auto val_s = synthetic::make_planted_samples(100, labels::Source::kBreitbart, 42, {}, "b");
  const corpus::Vocab vocab = vocab_for(train_s);
  auto base = toy_model(vocab.size());
  base.use_hopfield_pool = false;
  base.num_hf_layers = 0;
  const auto train_set = harness::encode(train_s, vocab, base.max_len);
  const auto val_set = harness::encode(val_s, vocab, base.max_len);
  harness::TrainConfig tc;
  tc.epochs = 5;
  tc.seed = 3;
  const harness::SearchSpace space;
  const auto a = harness::search(base, tc, space, 10, 77, train_set, val_set);
  const auto b = harness::search(base, tc, space, 10, 77, train_set, val_set);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (a.trials.size() != 10) return fail("expected 10 trials");
  std::vector<std::size_t> oracle;
  for (const auto& t : a.trials) {
    bool dominated = false;
    for (const auto& o : a.trials) {
      const auto& x = o.objectives;
      const auto& y = t.objectives;
      const bool no_worse = x.val_loss <= y.val_loss && x.flops <= y.flops && x.map >= y.map && x.iou1 >= y.iou1;
      const bool better = x.val_loss < y.val_loss || x.flops < y.flops || x.map > y.map || x.iou1 > y.iou1;
      dominated = dominated || (no_worse && better);
    }
    if (!dominated) oracle.push_back(t.trial_id);
  }
  std::sort(oracle.begin(), oracle.end());
  std::vector<std::size_t> front;
  for (const auto& m : a.front.members) front.push_back(m.trial_id);
  if (front != oracle) return fail("front differs from the pairwise dominance oracle");

  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    const auto &x = a.trials[i], &y = b.trials[i];
    if (x.params.lr != y.params.lr || x.params.num_hf_layers != y.params.num_hf_layers ||
        x.params.use_hopfield_pool != y.params.use_hopfield_pool ||
        x.params.pool_num_heads != y.params.pool_num_heads || x.objectives.val_loss != y.objectives.val_loss ||
        x.objectives.flops != y.objectives.flops || x.objectives.map != y.objectives.map ||
        x.objectives.iou1 != y.objectives.iou1)
      return fail("search not deterministic under seed (trial " + std::to_string(i) + ")");
  }
  if (a.selected_trial != b.selected_trial) return fail("selected trial differs between runs");
  const bool ok = secs < 1800.0;
  return {ok, "front {" + [&] {
    std::string s;
    for (std::size_t id : front) s += (s.empty() ? "" : ",") + std::to_string(id);
    return s;
  }() + "} matches the oracle, selected trial " + std::to_string(a.selected_trial) +
              ", identical rerun, " + fmt(secs, 3) + " s for both runs"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"soft-label worked example", soft_label_fixture},
      {"table mAP arithmetic", table_arithmetic},
      {"gradient suite", gradient_suite},
      {"one-step Hopfield equals attention", attention_equivalence},
      {"pooling permutation invariance", pooling_permutation},
      {"parameter reduction d_model^2 * X", parameter_reduction},
      {"metric oracle equivalence", metric_oracle},
      {"soft cross-entropy properties", soft_ce_properties},
      {"end-to-end toy training", toy_training},
      {"curation pipeline", curation_pipeline},
      {"search and Pareto front", search_front},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size()
            << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
