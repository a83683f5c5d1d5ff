#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "biasly/checkpoint.hpp"
#include "biasly/error.hpp"
#include "biasly/gradcheck.hpp"
#include "biasly/model.hpp"
#include "biasly/ops.hpp"

namespace biasly::model {
namespace {

ModelConfig small_config(std::size_t layers = 2, std::size_t hf = 1, bool pool = true) {
  ModelConfig cfg;
  cfg.vocab_size = 20;
  cfg.max_len = 16;
  cfg.d_model = 8;
  cfg.n_layers = layers;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.num_hf_layers = hf;
  cfg.use_hopfield_pool = pool;
  cfg.pool_num_heads = 2;
  cfg.seed = 7;
  return cfg;
}

TokenBatch random_batch(std::size_t b, std::size_t t, std::size_t vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> tok(0, vocab - 1);
  TokenBatch batch{b, t, std::vector<std::size_t>(b * t), std::vector<std::uint8_t>(b * t, 1)};
  for (auto& id : batch.ids) id = tok(rng);
  return batch;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

std::vector<std::string> vocab_of(std::size_t n) {
  std::vector<std::string> v = {"[PAD]", "[UNK]", "[CLS]"};
  while (v.size() < n) v.push_back("w" + std::to_string(v.size()));
  return v;
}

TEST(ModelConfig, Validation) {
  ModelConfig cfg = small_config();
  EXPECT_NO_THROW(cfg.validate());
  cfg.num_hf_layers = 3;
  EXPECT_THROW(build(cfg), InvalidArgument);
  cfg = small_config();
  cfg.d_model = 0;
  EXPECT_THROW(build(cfg), InvalidArgument);
  cfg = small_config();
  cfg.n_classes = 5;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = small_config();
  cfg.n_heads = 3;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(ModelConfig, JsonRoundTripAndUnknownFields) {
  ModelConfig cfg = small_config();
  cfg.hopfield_beta = 0.7;
  nlohmann::json j = cfg;
  ModelConfig back = j.get<ModelConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  j["bogus"] = 1;
  EXPECT_THROW(j.get<ModelConfig>(), SchemaError);
}

TEST(Build, BlockKinds) {
  Model baseline(small_config(3, 0, false));
  for (const auto& b : baseline.blocks()) EXPECT_EQ(b.kind, BlockKind::kAttention);

  Model mixed(small_config(3, 2, true));
  EXPECT_EQ(mixed.blocks()[0].kind, BlockKind::kAttention);
  EXPECT_EQ(mixed.blocks()[1].kind, BlockKind::kHopfield);
  EXPECT_EQ(mixed.blocks()[2].kind, BlockKind::kHopfield);
  EXPECT_TRUE(mixed.blocks()[2].mix.tied());
  EXPECT_FALSE(mixed.blocks()[0].mix.tied());

  Model all(small_config(2, 2, true));
  for (const auto& b : all.blocks()) EXPECT_EQ(b.kind, BlockKind::kHopfield);
}

TEST(Build, SameSeedSameParameters) {
  Model a(small_config()), b(small_config());
  auto pa = a.named_parameters(), pb = b.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_EQ(values(pa[i].tensor), values(pb[i].tensor));
  }
  ModelConfig other = small_config();
  other.seed = 8;
  EXPECT_NE(values(Model(other).parameters()[0]), values(a.parameters()[0]));
}

TEST(Forward, ShapeForEveryConfig) {
  std::mt19937_64 rng(1);
  for (std::size_t hf = 0; hf <= 2; ++hf) {
    for (bool pool : {false, true}) {
      ModelConfig cfg = small_config(2, hf, pool);
      Tensor logits = Model(cfg).forward(random_batch(2, 16, cfg.vocab_size, rng));
      EXPECT_EQ(logits.shape(), (Shape{2, 6}));
      for (double v : logits.data()) EXPECT_TRUE(std::isfinite(v));
    }
  }
}

TEST(Forward, IdenticalRowsGiveIdenticalLogits) {
  std::mt19937_64 rng(2);
  TokenBatch one = random_batch(1, 10, 20, rng);
  TokenBatch two{2, 10, one.ids, one.mask};
  two.ids.insert(two.ids.end(), one.ids.begin(), one.ids.end());
  two.mask.insert(two.mask.end(), one.mask.begin(), one.mask.end());
  Tensor logits = Model(small_config()).forward(two);
  for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(logits.at(0, c), logits.at(1, c));
}

TEST(Forward, PaddingMatchesUnpaddedSequence) {
  for (std::size_t hf = 0; hf <= 2; ++hf) {
    for (bool pool : {false, true}) {
      Model m(small_config(2, hf, pool));
      TokenBatch padded{1, 12, std::vector<std::size_t>(12, 0), std::vector<std::uint8_t>(12, 0)};
      padded.ids[0] = 5;
      padded.mask[0] = 1;
      for (std::size_t j = 1; j < 12; ++j) padded.ids[j] = j;  // garbage under the mask
      TokenBatch single{1, 1, {5}, {1}};
      EXPECT_LE(max_abs_diff(m.forward(padded).data(), m.forward(single).data()), 1e-8)
          << "hf=" << hf << " pool=" << pool;
    }
  }
}

TEST(Forward, RejectsInvalidInput) {
  Model m(small_config());
  EXPECT_THROW(m.forward(TokenBatch{1, 2, {1, 20}, {1, 1}}), InvalidArgument);
  EXPECT_THROW(m.forward(TokenBatch{1, 17, std::vector<std::size_t>(17, 1), std::vector<std::uint8_t>(17, 1)}),
               InvalidArgument);
  EXPECT_THROW(m.forward(TokenBatch{1, 2, {1, 2}, {0, 0}}), InvalidArgument);
}

TEST(Forward, TokenOrderMatters) {
  std::mt19937_64 rng(3);
  int changed = 0;
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig cfg = small_config(2, trial % 3, trial % 2 == 0);
    cfg.seed = trial;
    cfg.init_scale = 0.3;
    Model m(cfg);
    TokenBatch batch = random_batch(1, 6, cfg.vocab_size, rng);
    batch.ids[1] = 3;
    batch.ids[4] = 11;
    TokenBatch swapped = batch;
    std::swap(swapped.ids[1], swapped.ids[4]);
    if (max_abs_diff(m.forward(batch).data(), m.forward(swapped).data()) > 1e-9) ++changed;
  }
  EXPECT_EQ(changed, 20);
}

TEST(Forward, ProbabilitiesSumToOne) {
  std::mt19937_64 rng(4);
  Tensor p = predict_proba(Model(small_config()), random_batch(3, 5, 20, rng));
  for (std::size_t r = 0; r < 3; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 6; ++c) total += p.at(r, c);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(ParamCount, TiedHopfieldSavesSquarePerLayer) {
  for (std::size_t d : {8u, 16u, 32u}) {
    for (std::size_t layers : {2u, 3u}) {
      ModelConfig base = small_config(layers, 0, false);
      base.d_model = d;
      base.d_ff = 2 * d;
      const std::size_t baseline = param_count(build(base));
      for (std::size_t x = 1; x <= layers; ++x) {
        ModelConfig h = base;
        h.num_hf_layers = x;
        EXPECT_EQ(baseline - param_count(build(h)), d * d * x);
      }
    }
  }
}

TEST(ParamCount, ClosedForm) {
  const ModelConfig cfg = small_config(2, 1, true);
  const std::size_t d = cfg.d_model, f = cfg.d_ff, v = cfg.vocab_size, t = cfg.max_len;
  const std::size_t embed = v * d + t * d + 2 * d;
  const std::size_t ff_ln = d * f + f + f * d + d + 4 * d;
  const std::size_t attention = 4 * d * d + ff_ln, hopfield = 3 * d * d + ff_ln;
  const std::size_t pool = cfg.pool_num_heads * d + 2 * d * d;
  const std::size_t head = cfg.pool_num_heads * d * 6 + 6;
  Model m(cfg);
  EXPECT_EQ(m.param_count(), embed + attention + hopfield + pool + head);

  std::size_t summed = 0;
  for (const auto& p : m.parameters()) summed += p.size();
  EXPECT_EQ(summed, m.param_count());

  std::mt19937_64 rng(5);
  m.forward(random_batch(2, 4, v, rng));
  EXPECT_EQ(m.param_count(), embed + attention + hopfield + pool + head);
}

TEST(ParamCount, BaselineEqualsZeroHopfieldLayers) {
  EXPECT_EQ(param_count(build(small_config(2, 0, false))), param_count(build(small_config(2, 0, false))));
  auto names = build(small_config(2, 1, false)).named_parameters();
  for (const auto& p : names) EXPECT_EQ(p.name.find("block1.mix.value"), std::string::npos);
}

TEST(Flops, MatmulCount) { EXPECT_EQ(matmul_flops(16, 8, 16), 4096.0); }

TEST(Flops, ScoresScaleQuadratically) {
  ModelConfig cfg = small_config(2, 0, false);
  FlopsEstimate a = flops_estimate(cfg, 4), b = flops_estimate(cfg, 8);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(b.blocks[i].scores, 4.0 * a.blocks[i].scores);
    EXPECT_EQ(b.blocks[i].mixing, 4.0 * a.blocks[i].mixing);
  }
  EXPECT_EQ(a.blocks[0].scores, 2.0 * 4 * 4 * cfg.d_model);
}

TEST(Flops, MoreStepsCostMore) {
  ModelConfig one = small_config(2, 1, true);
  one.hopfield_update_steps = 1;
  ModelConfig three = one;
  three.hopfield_update_steps = 3;
  FlopsEstimate f1 = flops_estimate(one, 8), f3 = flops_estimate(three, 8);
  EXPECT_GT(f3.blocks[1].total(), f1.blocks[1].total());
  EXPECT_GE(f3.forward_flops, f1.forward_flops);
  EXPECT_EQ(f3.blocks[0].total(), f1.blocks[0].total());
}

TEST(Flops, AdditiveAndNonNegative) {
  FlopsEstimate f = flops_estimate(small_config(3, 2, true), 10);
  double total = f.embedding + f.pooling + f.classifier;
  for (const auto& b : f.blocks) {
    EXPECT_GE(b.total(), 0.0);
    total += b.total();
  }
  EXPECT_DOUBLE_EQ(f.forward_flops, total);
  EXPECT_THROW(flops_estimate(small_config(), 17), InvalidArgument);
  nlohmann::json j = f;
  EXPECT_EQ(j["blocks"].size(), 3u);
}

class TinyModelGradients : public ::testing::TestWithParam<int> {};

TEST_P(TinyModelGradients, EndToEnd) {
  const int seed = GetParam();
  ModelConfig cfg;
  cfg.vocab_size = 12;
  cfg.max_len = 4;
  cfg.d_model = 8;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_ff = 8;
  cfg.num_hf_layers = 1;
  cfg.use_hopfield_pool = seed % 2 == 0;
  cfg.seed = seed;
  cfg.init_scale = 0.3;
  Model m(cfg);
  std::mt19937_64 rng(seed);
  TokenBatch batch = random_batch(2, 4, cfg.vocab_size, rng);
  batch.mask[7] = 0;
  Tensor targets({2, 6}, {0, 0, 5.0 / 12, 0.25, 1.0 / 3, 0, 0, 1, 0, 0, 0, 0});
  auto report = grad_check_params(
      [&] { return soft_cross_entropy(softmax_rows(m.forward(batch), 1.0), targets, 1e-8); },
      m.parameters());
  EXPECT_TRUE(report.passed) << "rel err " << report.max_rel_error << " at " << report.worst_index;
}

INSTANTIATE_TEST_SUITE_P(Seeds, TinyModelGradients, ::testing::Range(0, 10));

TEST(Clone, IndependentStorage) {
  Model a(small_config());
  Model b = a.clone();
  b.parameters()[0].mutable_data()[0] += 1.0;
  EXPECT_NE(a.parameters()[0][0], b.parameters()[0][0]);
  EXPECT_TRUE(b.blocks()[1].mix.tied());
}

TEST(Checkpoint, BitExactRoundTrip) {
  Model m(small_config(2, 1, true));
  Checkpoint ckpt = make_checkpoint(m, vocab_of(20), {{"epoch", 3}});
  const std::string bytes = encode_checkpoint(ckpt);
  EXPECT_EQ(bytes.substr(0, 8), "BIASLYCK");
  Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  EXPECT_EQ(back.vocab, ckpt.vocab);
  EXPECT_EQ(back.meta["epoch"], 3);

  Model restored = restore_model(back);
  auto pa = m.named_parameters(), pb = restored.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(values(pa[i].tensor), values(pb[i].tensor));
  EXPECT_TRUE(restored.blocks()[1].mix.tied());

  std::mt19937_64 rng(9);
  TokenBatch batch = random_batch(2, 5, 20, rng);
  EXPECT_EQ(values(m.forward(batch)), values(restored.forward(batch)));
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "biasly_model_test.ckpt";
  Model m(small_config());
  save_checkpoint(path.string(), make_checkpoint(m, vocab_of(20)));
  Model restored = restore_model(load_checkpoint(path.string()));
  EXPECT_EQ(values(m.parameters()[3]), values(restored.parameters()[3]));
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path.string()), IoError);
}

TEST(Checkpoint, CorruptInputRejected) {
  std::string bytes = encode_checkpoint(make_checkpoint(Model(small_config()), vocab_of(20)));
  EXPECT_THROW(decode_checkpoint("NOTACKPT"), SchemaError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), SchemaError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), SchemaError);
  std::string bad_version = bytes;
  bad_version[8] = 9;
  EXPECT_THROW(decode_checkpoint(bad_version), SchemaError);
  EXPECT_THROW(make_checkpoint(Model(small_config()), vocab_of(4)), InvalidArgument);
}

}  // namespace
}  // namespace biasly::model
