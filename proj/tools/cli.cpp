#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "biasly/checkpoint.hpp"
#include "biasly/corpus.hpp"
#include "biasly/error.hpp"
#include "biasly/harness.hpp"
#include "biasly/labels.hpp"
#include "biasly/metrics.hpp"
#include "biasly/model.hpp"
#include "biasly/synthetic.hpp"
#include "json.hpp"

namespace biasly::cli {
namespace {

using nlohmann::json;

struct DataOptions {
  std::size_t min_count = 1;
  std::size_t max_vocab = 0;
  double val_fraction = 0.1;
  std::optional<double> cv_threshold;
};

struct CurationOptions {
  double bottom_fraction = 0.2;
  bool per_source = false;
  std::uint64_t seed = 0;
};

struct SearchOptions {
  harness::SearchSpace space;
  std::size_t n_trials = 10;
  std::uint64_t seed = 0;
};

struct EvalOptions {
  metrics::Mode mode = metrics::Mode::kMulticlass;
  std::vector<std::size_t> ks = {1, 2, 3};
};

struct Config {
  model::ModelConfig model;
  harness::TrainConfig train;
  DataOptions data;
  CurationOptions curation;
  SearchOptions search;
  EvalOptions eval;
};

void check_keys(const json& j, const std::string& section, const std::set<std::string>& known) {
  if (!j.is_object()) throw SchemaError("config: '" + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw SchemaError("config: unknown field '" + section + "." + key + "'");
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& dst) {
  if (j.contains(key)) j.at(key).get_to(dst);
}

Config parse_config(const json& root) {
  Config c;
  check_keys(root, "<root>", {"model", "train", "data", "curation", "search", "eval"});
  try {
    if (root.contains("model")) root.at("model").get_to(c.model);
    if (root.contains("train")) root.at("train").get_to(c.train);
    if (root.contains("data")) {
      const json& d = root.at("data");
      check_keys(d, "data", {"min_count", "max_vocab", "val_fraction", "cv_threshold"});
      read_field(d, "min_count", c.data.min_count);
      read_field(d, "max_vocab", c.data.max_vocab);
      read_field(d, "val_fraction", c.data.val_fraction);
      if (d.contains("cv_threshold") && !d.at("cv_threshold").is_null()) {
        c.data.cv_threshold = d.at("cv_threshold").get<double>();
      }
    }
    if (root.contains("curation")) {
      const json& d = root.at("curation");
      check_keys(d, "curation", {"bottom_fraction", "per_source", "seed"});
      read_field(d, "bottom_fraction", c.curation.bottom_fraction);
      read_field(d, "per_source", c.curation.per_source);
      read_field(d, "seed", c.curation.seed);
    }
    if (root.contains("search")) {
      const json& d = root.at("search");
      check_keys(d, "search", {"lr_min", "lr_max", "max_hf_layers", "pool_heads", "flops_seq_len",
                               "n_trials", "seed"});
      read_field(d, "lr_min", c.search.space.lr_min);
      read_field(d, "lr_max", c.search.space.lr_max);
      read_field(d, "max_hf_layers", c.search.space.max_hf_layers);
      read_field(d, "pool_heads", c.search.space.pool_heads);
      read_field(d, "flops_seq_len", c.search.space.flops_seq_len);
      read_field(d, "n_trials", c.search.n_trials);
      read_field(d, "seed", c.search.seed);
    }
    if (root.contains("eval")) {
      const json& d = root.at("eval");
      check_keys(d, "eval", {"mode", "ks"});
      if (d.contains("mode")) c.eval.mode = metrics::parse_mode(d.at("mode").get<std::string>());
      read_field(d, "ks", c.eval.ks);
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("config: ") + e.what());
  }
  return c;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  return out;
}

Config load_config(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in = open_in(path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("config '" + path + "': " + e.what());
  }
  return parse_config(root);
}

std::vector<labels::AnnotatedSample> load_samples(const std::string& path, bool require_annotations) {
  std::ifstream in = open_in(path);
  return labels::read_samples(in, require_annotations);
}

void save_samples(const std::string& path, const std::vector<labels::AnnotatedSample>& samples) {
  std::ofstream out = open_out(path);
  labels::write_samples(out, samples);
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<corpus::RawComment> load_comments(const std::string& path) {
  std::ifstream in = open_in(path);
  return corpus::read_comments(in);
}

std::set<std::string> load_terms(const std::string& path) {
  std::ifstream in = open_in(path);
  std::set<std::string> terms;
  std::string line;
  while (std::getline(in, line)) {
    for (const auto& t : corpus::split_tokens(corpus::preprocess(line))) {
      if (!t.empty() && t[0] != '#') terms.insert(t);
    }
  }
  return terms;
}

json probs_json(const std::array<double, labels::kNumClasses>& p) {
  return json(std::vector<double>(p.begin(), p.end()));
}

// Every option of every subcommand. A value counts as an override only when
// its flag was given on the command line.
struct Args {
  std::string config;
  std::string input, out, out_dir, comments, sentiment, hate, terms;
  std::string train, val, checkpoint, data, mode, format = "json", kind = "comments";
  std::string source = "FoxNews", id_prefix = "s";
  std::vector<std::string> texts;
  std::vector<std::size_t> ks;
  double bottom_fraction = 0.0, val_fraction = 0.0, cv_threshold = 0.0, lr = 0.0;
  std::uint64_t seed = 0;
  std::size_t n = 0, articles = 20, epochs = 0, batch_size = 0, trials = 0, seq_len = 0;
  std::size_t d_model = 0, layers = 0, heads = 0, d_ff = 0, hf_layers = 0, pool_heads = 0;
  std::size_t max_len = 0, vocab_size = 0, min_count = 0;
  bool pool = false, per_source = false, one_hot = false, verbose = false;
};

bool given(const CLI::App* app, const std::string& name) {
  try {
    return app->get_option(name)->count() > 0;
  } catch (const CLI::OptionNotFound&) {
    return false;
  }
}

void apply_model_flags(const CLI::App* app, const Args& a, model::ModelConfig& m) {
  if (given(app, "--d-model")) m.d_model = a.d_model;
  if (given(app, "--layers")) m.n_layers = a.layers;
  if (given(app, "--heads")) m.n_heads = a.heads;
  if (given(app, "--d-ff")) m.d_ff = a.d_ff;
  if (given(app, "--hf-layers")) m.num_hf_layers = a.hf_layers;
  if (given(app, "--pool")) m.use_hopfield_pool = a.pool;
  if (given(app, "--pool-heads")) m.pool_num_heads = a.pool_heads;
  if (given(app, "--max-len")) m.max_len = a.max_len;
}

void apply_train_flags(const CLI::App* app, const Args& a, harness::TrainConfig& t) {
  if (given(app, "--lr")) t.lr = a.lr;
  if (given(app, "--epochs")) t.epochs = a.epochs;
  if (given(app, "--batch-size")) t.batch_size = a.batch_size;
  if (given(app, "--seed")) t.seed = a.seed;
}

void add_model_flags(CLI::App* sub, Args& a) {
  sub->add_option("--d-model", a.d_model, "Hidden size");
  sub->add_option("--layers", a.layers, "Encoder blocks");
  sub->add_option("--heads", a.heads, "Heads per block");
  sub->add_option("--d-ff", a.d_ff, "Feed-forward width");
  sub->add_option("--hf-layers", a.hf_layers, "Trailing blocks using Hopfield association");
  sub->add_flag("--pool,!--no-pool", a.pool, "Hopfield pooling head");
  sub->add_option("--pool-heads", a.pool_heads, "Pooling heads");
  sub->add_option("--max-len", a.max_len, "Tokens per sample including [CLS]");
}

void add_train_flags(CLI::App* sub, Args& a) {
  sub->add_option("--lr", a.lr, "Adam learning rate");
  sub->add_option("--epochs", a.epochs, "Training epochs");
  sub->add_option("--batch-size", a.batch_size, "Minibatch size");
  sub->add_option("--seed", a.seed, "Seed");
}

// --- subcommands -------------------------------------------------------------

void cmd_synth(const CLI::App* app, const Args& a, std::ostream& out) {
  if (a.kind == "comments") {
    if (a.out_dir.empty()) throw InvalidArgument("synth comments: --out-dir is required");
    const std::size_t n = given(app, "--n") ? a.n : 1000;
    auto fx = synthetic::make_comment_fixture(n, a.articles, a.seed);
    std::filesystem::create_directories(a.out_dir);
    const std::filesystem::path dir(a.out_dir);
    {
      std::ofstream f = open_out((dir / "comments.jsonl").string());
      corpus::write_comments(f, fx.comments);
    }
    {
      std::ofstream f = open_out((dir / "sentiment.tsv").string());
      corpus::write_lexicon(f, fx.sentiment);
    }
    {
      std::ofstream f = open_out((dir / "hate.tsv").string());
      corpus::write_lexicon(f, fx.hate);
    }
    {
      std::ofstream f = open_out((dir / "racial_terms.txt").string());
      for (const auto& t : fx.racial_terms) f << t << '\n';
    }
    out << json{{"comments", fx.comments.size()}, {"out_dir", a.out_dir}}.dump() << '\n';
  } else if (a.kind == "planted") {
    synthetic::PlantedOptions opts;
    opts.one_hot = a.one_hot;
    const std::size_t n = given(app, "--n") ? a.n : 200;
    auto samples = synthetic::make_planted_samples(n, labels::parse_source(a.source), a.seed, opts,
                                                   a.id_prefix);
    if (a.out.empty()) {
      labels::write_samples(out, samples);
    } else {
      save_samples(a.out, samples);
      out << json{{"samples", samples.size()}, {"out", a.out}}.dump() << '\n';
    }
  } else {
    throw InvalidArgument("synth: --kind must be 'comments' or 'planted'");
  }
}

void cmd_curate(const CLI::App* app, const Args& a, Config& c, std::ostream& out,
                std::ostream& err) {
  if (given(app, "--bottom-fraction")) c.curation.bottom_fraction = a.bottom_fraction;
  if (given(app, "--per-source")) c.curation.per_source = a.per_source;
  if (given(app, "--seed")) c.curation.seed = a.seed;
  corpus::CurationConfig cfg;
  cfg.bottom_fraction = c.curation.bottom_fraction;
  cfg.per_source = c.curation.per_source;
  cfg.seed = c.curation.seed;
  cfg.racial_terms = load_terms(a.terms);
  const auto comments = load_comments(a.comments);
  const auto sentiment = corpus::load_lexicon(a.sentiment, corpus::LexiconKind::kSentiment);
  const auto hate = corpus::load_lexicon(a.hate, corpus::LexiconKind::kHate);
  auto result = corpus::curate(comments, sentiment, hate, cfg);
  for (const auto& w : result.warnings) err << json{{"warning", w}}.dump() << '\n';
  if (!a.out.empty()) save_samples(a.out, result.samples);
  out << json{{"comments", comments.size()},
              {"candidates", result.candidates.size()},
              {"controls", result.controls.size()},
              {"dropped", result.dropped},
              {"samples", result.samples.size()}}
             .dump()
      << '\n';
}

void cmd_stats(const Args& a, std::ostream& out) {
  const auto comments = load_comments(a.comments);
  const auto sentiment = corpus::load_lexicon(a.sentiment, corpus::LexiconKind::kSentiment);
  const auto hate = corpus::load_lexicon(a.hate, corpus::LexiconKind::kHate);
  const auto adjusted = corpus::adjust_hate_lexicon(hate, sentiment);
  const auto stats = corpus::corpus_stats(corpus::score_comments(comments, sentiment, adjusted));
  if (a.format == "table") {
    out << stats.render_table();
  } else if (a.format == "json") {
    out << stats.to_json().dump() << '\n';
  } else {
    throw InvalidArgument("stats: --format must be 'table' or 'json'");
  }
}

void cmd_aggregate(const CLI::App* app, const Args& a, Config& c, std::ostream& out,
                   std::ostream& err) {
  if (given(app, "--cv-threshold")) c.data.cv_threshold = a.cv_threshold;
  const auto samples = load_samples(a.input, true);
  const auto filtered = c.data.cv_threshold ? labels::cv_filter(samples, *c.data.cv_threshold)
                                            : labels::cv_filter(samples);
  for (const auto& s : filtered.retained) {
    out << json{{"id", s.id}, {"probs", probs_json(labels::soft_label(s.annotations).probs)}}.dump()
        << '\n';
  }
  if (!a.out.empty()) save_samples(a.out, filtered.retained);
  err << json{{"summary",
               {{"samples", samples.size()},
                {"retained", filtered.retained.size()},
                {"dropped_fraction", filtered.dropped_fraction},
                {"passed_through", filtered.passed_through}}}}
             .dump()
      << '\n';
}

void cmd_split(const CLI::App* app, const Args& a, Config& c, std::ostream& out) {
  if (given(app, "--val-fraction")) c.data.val_fraction = a.val_fraction;
  if (a.out_dir.empty()) throw InvalidArgument("split: --out-dir is required");
  const auto samples = load_samples(a.input, false);
  const auto splits = corpus::split_dataset(samples, a.seed, c.data.val_fraction);
  std::filesystem::create_directories(a.out_dir);
  const std::filesystem::path dir(a.out_dir);
  save_samples((dir / "train.jsonl").string(), splits.train);
  save_samples((dir / "validation.jsonl").string(), splits.validation);
  save_samples((dir / "test.jsonl").string(), splits.test);
  out << json{{"train", splits.train.size()},
              {"validation", splits.validation.size()},
              {"test", splits.test.size()}}
             .dump()
      << '\n';
}

corpus::Vocab build_vocab(const std::vector<labels::AnnotatedSample>& samples, const DataOptions& d) {
  std::vector<std::string> texts;
  texts.reserve(samples.size());
  for (const auto& s : samples) texts.push_back(corpus::preprocess(s.text));
  return corpus::Vocab::build(texts, d.min_count, d.max_vocab);
}

void cmd_train(const CLI::App* app, const Args& a, Config& c, std::ostream& out) {
  apply_model_flags(app, a, c.model);
  apply_train_flags(app, a, c.train);
  if (given(app, "--min-count")) c.data.min_count = a.min_count;
  if (given(app, "--checkpoint")) c.train.checkpoint_path = a.checkpoint;
  if (c.train.checkpoint_path.empty()) throw InvalidArgument("train: --checkpoint is required");
  const auto train_samples = load_samples(a.train, true);
  const auto val_samples = load_samples(a.val, true);
  const corpus::Vocab vocab = build_vocab(train_samples, c.data);
  c.model.vocab_size = vocab.size();
  const auto train_set = harness::encode(train_samples, vocab, c.model.max_len);
  const auto val_set = harness::encode(val_samples, vocab, c.model.max_len);
  const auto result = harness::train(c.model, c.train, train_set, val_set, &vocab);
  for (const auto& e : result.history) {
    out << json{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}}.dump()
        << '\n';
  }
  out << json{{"best_epoch", result.best_epoch},
              {"best_val_loss", result.best_val_loss},
              {"param_count", result.model.param_count()},
              {"vocab_size", vocab.size()},
              {"checkpoint", c.train.checkpoint_path}}
             .dump()
      << '\n';
}

struct Restored {
  model::Model model;
  corpus::Vocab vocab;
};

Restored restore(const std::string& path) {
  const auto ckpt = model::load_checkpoint(path);
  corpus::Vocab vocab(ckpt.vocab);
  if (vocab.size() != ckpt.config.vocab_size) {
    throw SchemaError("checkpoint vocab has " + std::to_string(vocab.size()) +
                      " tokens but the model expects " + std::to_string(ckpt.config.vocab_size));
  }
  return {model::restore_model(ckpt), std::move(vocab)};
}

void cmd_evaluate(const CLI::App* app, const Args& a, Config& c, std::ostream& out) {
  if (given(app, "--mode")) c.eval.mode = metrics::parse_mode(a.mode);
  if (given(app, "--k")) c.eval.ks = a.ks;
  const Restored r = restore(a.checkpoint);
  const auto data = harness::encode(load_samples(a.data, true), r.vocab, r.model.config().max_len);
  const auto report = harness::evaluate(r.model, data, c.eval.mode, c.eval.ks, c.train.loss_eps);
  if (a.format == "csv") {
    out << report.csv_header() << '\n' << report.csv_row() << '\n';
  } else if (a.format == "json") {
    out << report.to_json().dump() << '\n';
  } else {
    throw InvalidArgument("evaluate: --format must be 'csv' or 'json'");
  }
}

void cmd_score(const Args& a, std::ostream& out) {
  const Restored r = restore(a.checkpoint);
  std::vector<labels::AnnotatedSample> items;
  if (!a.input.empty()) {
    std::ifstream in = open_in(a.input);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const json j = json::parse(line);
        labels::AnnotatedSample s;
        s.text = j.at("text").get<std::string>();
        s.id = j.contains("id") ? j.at("id").get<std::string>() : std::to_string(items.size());
        items.push_back(std::move(s));
      } catch (const json::exception& e) {
        throw SchemaError("score input line " + std::to_string(lineno) + ": " + e.what());
      }
    }
  }
  for (const auto& t : a.texts) {
    labels::AnnotatedSample s;
    s.id = std::to_string(items.size());
    s.text = t;
    items.push_back(std::move(s));
  }
  if (items.empty()) throw InvalidArgument("score: give --input or at least one --text");
  harness::Dataset data;
  for (const auto& s : items) {
    data.push_back({s.id, corpus::tokenize(corpus::preprocess(s.text), r.vocab, r.model.config().max_len), {}});
  }
  const auto probs = harness::predict(r.model, data);
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << json{{"id", data[i].id},
                {"probs", probs_json(probs[i])},
                {"predicted", metrics::top_k_classes(probs[i], 1).front()}}
               .dump()
        << '\n';
  }
}

void cmd_search(const CLI::App* app, const Args& a, Config& c, std::ostream& out,
                std::ostream& err) {
  apply_model_flags(app, a, c.model);
  apply_train_flags(app, a, c.train);
  if (given(app, "--trials")) c.search.n_trials = a.trials;
  if (given(app, "--seed")) c.search.seed = a.seed;
  c.train.checkpoint_path.clear();
  const auto train_samples = load_samples(a.train, true);
  const auto val_samples = load_samples(a.val, true);
  const corpus::Vocab vocab = build_vocab(train_samples, c.data);
  c.model.vocab_size = vocab.size();
  const auto train_set = harness::encode(train_samples, vocab, c.model.max_len);
  const auto val_set = harness::encode(val_samples, vocab, c.model.max_len);
  auto progress = [&](const harness::TrialResult& t) {
    if (a.verbose) err << json{{"trial", harness::to_json(t)}}.dump() << '\n';
  };
  const auto result = harness::search(c.model, c.train, c.search.space, c.search.n_trials,
                                      c.search.seed, train_set, val_set, progress);
  const std::string text = harness::to_json(result).dump(2);
  if (a.out.empty()) {
    out << text << '\n';
  } else {
    std::ofstream f = open_out(a.out);
    f << text << '\n';
    out << json{{"trials", result.trials.size()},
                {"front", result.front.members.size()},
                {"selected_trial", result.selected_trial},
                {"out", a.out}}
               .dump()
        << '\n';
  }
}

void cmd_flops(const CLI::App* app, const Args& a, Config& c, std::ostream& out) {
  apply_model_flags(app, a, c.model);
  if (given(app, "--vocab-size")) c.model.vocab_size = a.vocab_size;
  const bool have_vocab = c.model.vocab_size > 0;
  if (!have_vocab) c.model.vocab_size = 1;
  const std::size_t seq_len = given(app, "--seq-len") ? a.seq_len : c.model.max_len;
  json j = model::flops_estimate(c.model, seq_len);
  j["seq_len"] = seq_len;
  if (have_vocab) j["param_count"] = model::Model(c.model).param_count();
  out << j.dump() << '\n';
}

int report(std::ostream& err, int code, const std::string& kind, const std::string& message) {
  err << json{{"error", {{"code", code}, {"kind", kind}, {"message", message}}}}.dump() << '\n';
  return code;
}

int code_for(const Error& e) {
  if (dynamic_cast<const IoError*>(&e)) return kIo;
  if (dynamic_cast<const SchemaError*>(&e)) return kSchema;
  if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
  if (dynamic_cast<const InvalidArgument*>(&e) || dynamic_cast<const ShapeError*>(&e)) {
    return kInvalidArgument;
  }
  return kFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hopfield-encoder bias classification pipeline", "biasly"};
  app.require_subcommand(1);
  Args a;

  auto* synth = app.add_subcommand("synth", "Write seeded synthetic comments or labeled samples");
  synth->add_option("--kind", a.kind, "comments | planted")->check(CLI::IsMember({"comments", "planted"}));
  synth->add_option("--n", a.n, "Number of comments or samples");
  synth->add_option("--articles", a.articles, "Articles the comments spread over");
  synth->add_option("--seed", a.seed, "Seed");
  synth->add_option("--source", a.source, "Source of planted samples");
  synth->add_option("--id-prefix", a.id_prefix, "Id prefix of planted samples");
  synth->add_flag("--one-hot", a.one_hot, "Single confident annotator per planted sample");
  synth->add_option("--out-dir", a.out_dir, "Directory for the comment fixture");
  synth->add_option("--out", a.out, "Planted samples file (stdout when omitted)");

  auto* curate = app.add_subcommand("curate", "Select low-sentiment candidates and matched controls");
  curate->add_option("--config", a.config, "JSON config");
  curate->add_option("--comments", a.comments, "Comments JSON-lines")->required();
  curate->add_option("--sentiment", a.sentiment, "Sentiment lexicon TSV")->required();
  curate->add_option("--hate", a.hate, "Hate lexicon TSV")->required();
  curate->add_option("--terms", a.terms, "Group-reference terms, one per line")->required();
  curate->add_option("--bottom-fraction", a.bottom_fraction, "Fraction of lowest scores kept");
  curate->add_flag("--per-source", a.per_source, "Take the bottom fraction within each source");
  curate->add_option("--seed", a.seed, "Control sampling seed");
  curate->add_option("--out", a.out, "Curated samples JSON-lines");

  auto* stats = app.add_subcommand("stats", "Sentiment score summary per source");
  stats->add_option("--comments", a.comments, "Comments JSON-lines")->required();
  stats->add_option("--sentiment", a.sentiment, "Sentiment lexicon TSV")->required();
  stats->add_option("--hate", a.hate, "Hate lexicon TSV")->required();
  stats->add_option("--format", a.format, "table | json");

  auto* aggregate = app.add_subcommand("aggregate", "Soft labels from annotations, with CV filter");
  aggregate->add_option("--config", a.config, "JSON config");
  aggregate->add_option("--input", a.input, "Annotated samples JSON-lines")->required();
  aggregate->add_option("--cv-threshold", a.cv_threshold, "Drop samples with larger score CV");
  aggregate->add_option("--out", a.out, "Retained samples JSON-lines");

  auto* split = app.add_subcommand("split", "Train/validation/test split (test = YouTube)");
  split->add_option("--config", a.config, "JSON config");
  split->add_option("--input", a.input, "Samples JSON-lines")->required();
  split->add_option("--seed", a.seed, "Validation draw seed");
  split->add_option("--val-fraction", a.val_fraction, "Validation share of the news samples");
  split->add_option("--out-dir", a.out_dir, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a model and save the best checkpoint");
  train->add_option("--config", a.config, "JSON config");
  train->add_option("--train", a.train, "Training samples")->required();
  train->add_option("--val", a.val, "Validation samples")->required();
  train->add_option("--checkpoint", a.checkpoint, "Checkpoint path");
  train->add_option("--min-count", a.min_count, "Minimum token count for the vocabulary");
  add_model_flags(train, a);
  add_train_flags(train, a);

  auto* evaluate = app.add_subcommand("evaluate", "Metric report of a checkpoint on a dataset");
  evaluate->add_option("--config", a.config, "JSON config");
  evaluate->add_option("--checkpoint", a.checkpoint, "Checkpoint path")->required();
  evaluate->add_option("--data", a.data, "Annotated samples")->required();
  evaluate->add_option("--mode", a.mode, "multiclass | multilabel");
  evaluate->add_option("--k", a.ks, "k values")->delimiter(',');
  evaluate->add_option("--format", a.format, "csv | json");

  auto* search = app.add_subcommand("search", "Seeded hyperparameter search with Pareto report");
  search->add_option("--config", a.config, "JSON config");
  search->add_option("--train", a.train, "Training samples")->required();
  search->add_option("--val", a.val, "Validation samples")->required();
  search->add_option("--trials", a.trials, "Number of trials");
  search->add_option("--out", a.out, "Result JSON file (stdout when omitted)");
  search->add_flag("--verbose", a.verbose, "Print each finished trial to stderr");
  add_model_flags(search, a);
  add_train_flags(search, a);

  auto* score = app.add_subcommand("score", "Class probabilities for raw texts");
  score->add_option("--checkpoint", a.checkpoint, "Checkpoint path")->required();
  score->add_option("--input", a.input, "JSON-lines with 'text' and optional 'id'");
  score->add_option("--text", a.texts, "Text to score (repeatable)");

  auto* flops = app.add_subcommand("flops", "Analytic forward FLOPs of a model config");
  flops->add_option("--config", a.config, "JSON config");
  flops->add_option("--seq-len", a.seq_len, "Sequence length (default max_len)");
  flops->add_option("--vocab-size", a.vocab_size, "Vocabulary size, enables param_count");
  add_model_flags(flops, a);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    return report(err, kUsage, "usage", e.what());
  }

  try {
    Config c = load_config(a.config);
    if (synth->parsed()) cmd_synth(synth, a, out);
    else if (curate->parsed()) cmd_curate(curate, a, c, out, err);
    else if (stats->parsed()) cmd_stats(a, out);
    else if (aggregate->parsed()) cmd_aggregate(aggregate, a, c, out, err);
    else if (split->parsed()) cmd_split(split, a, c, out);
    else if (train->parsed()) cmd_train(train, a, c, out);
    else if (evaluate->parsed()) cmd_evaluate(evaluate, a, c, out);
    else if (search->parsed()) cmd_search(search, a, c, out, err);
    else if (score->parsed()) cmd_score(a, out);
    else if (flops->parsed()) cmd_flops(flops, a, c, out);
    return kOk;
  } catch (const Error& e) {
    return report(err, code_for(e), e.kind(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return report(err, kIo, "io", e.what());
  } catch (const std::exception& e) {
    return report(err, kFailure, "error", e.what());
  }
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace biasly::cli
