#include "biasly/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <regex>
#include <sstream>

#include "biasly/error.hpp"

namespace biasly::corpus {

double Lexicon::max_abs_weight() const {
  double m = 0.0;
  for (const auto& [_, w] : entries) m = std::max(m, std::abs(w));
  return m;
}

namespace {
std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}
}  // namespace

Lexicon read_lexicon(std::istream& in, LexiconKind kind) {
  Lexicon lex;
  lex.kind = kind;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw SchemaError("lexicon line " + std::to_string(line_no) + ": expected term<TAB>weight");
    }
    const std::string term = lowercase(line.substr(0, tab));
    double weight = 0.0;
    try {
      std::size_t used = 0;
      weight = std::stod(line.substr(tab + 1), &used);
    } catch (const std::exception&) {
      throw SchemaError("lexicon line " + std::to_string(line_no) + ": bad weight");
    }
    if (term.empty() || !std::isfinite(weight)) {
      throw SchemaError("lexicon line " + std::to_string(line_no) + ": empty term or non-finite weight");
    }
    if (!lex.entries.emplace(term, weight).second) {
      throw SchemaError("lexicon line " + std::to_string(line_no) + ": duplicate term '" + term + "'");
    }
  }
  return lex;
}

Lexicon load_lexicon(const std::string& path, LexiconKind kind) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read lexicon '" + path + "'");
  return read_lexicon(in, kind);
}

void write_lexicon(std::ostream& out, const Lexicon& lex) {
  out << std::setprecision(17);
  for (const auto& [term, w] : lex.entries) out << term << '\t' << w << '\n';
}

void CurationConfig::validate() const {
  if (!(bottom_fraction > 0.0 && bottom_fraction < 1.0)) {
    throw InvalidArgument("curation: bottom_fraction must be in (0, 1)");
  }
}

std::string preprocess(const std::string& text) {
  static const std::regex kMention(R"(@\w+)");
  static const std::regex kUrl(R"((https?://|www\.)\S+)", std::regex::icase);
  std::string s = std::regex_replace(text, kUrl, " ");
  s = std::regex_replace(s, kMention, " ");
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string lookup_key(const std::string& token) {
  std::size_t b = 0, e = token.size();
  while (b < e && std::ispunct(static_cast<unsigned char>(token[b]))) ++b;
  while (e > b && std::ispunct(static_cast<unsigned char>(token[e - 1]))) --e;
  return token.substr(b, e - b);
}

Lexicon adjust_hate_lexicon(const Lexicon& hate, const Lexicon& sentiment) {
  if (hate.entries.empty() || sentiment.entries.empty()) {
    throw InvalidArgument("adjust_hate_lexicon: both lexicons must be non-empty");
  }
  const double hate_max = hate.max_abs_weight();
  Lexicon out = hate;
  if (hate_max == 0.0) return out;
  const double factor = sentiment.max_abs_weight() / hate_max;
  for (auto& [_, w] : out.entries) w *= factor;
  return out;
}

double sentiment_score(const std::string& preprocessed_text, const Lexicon& sentiment,
                       const Lexicon& hate_adjusted, std::vector<std::string>* warnings) {
  const std::vector<std::string> tokens = split_tokens(preprocessed_text);
  if (tokens.empty()) {
    if (warnings) warnings->push_back("empty text after preprocessing scored 0");
    return 0.0;
  }
  double total = 0.0;
  for (const std::string& tok : tokens) {
    const std::string key = lookup_key(tok);
    if (auto it = sentiment.entries.find(key); it != sentiment.entries.end()) total += it->second;
    if (auto it = hate_adjusted.entries.find(key); it != hate_adjusted.entries.end()) total += it->second;
  }
  return total / std::sqrt(static_cast<double>(tokens.size()));
}

std::vector<ScoredComment> score_comments(const std::vector<RawComment>& comments,
                                          const Lexicon& sentiment, const Lexicon& hate_adjusted,
                                          std::vector<std::string>* warnings) {
  std::vector<ScoredComment> out;
  out.reserve(comments.size());
  for (const RawComment& c : comments) {
    std::vector<std::string> local;
    const double s = sentiment_score(preprocess(c.text), sentiment, hate_adjusted, &local);
    if (warnings) {
      for (const auto& w : local) warnings->push_back("comment '" + c.id + "': " + w);
    }
    out.push_back({c, s});
  }
  return out;
}

bool contains_racial_term(const std::string& preprocessed_text, const std::set<std::string>& terms) {
  for (const std::string& tok : split_tokens(preprocessed_text)) {
    if (terms.count(lookup_key(tok))) return true;
  }
  return false;
}

namespace {
bool score_then_id(const ScoredComment& a, const ScoredComment& b) {
  if (a.score != b.score) return a.score < b.score;
  return a.comment.id < b.comment.id;
}

std::vector<ScoredComment> bottom_slice(std::vector<ScoredComment> pool, double fraction) {
  const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(pool.size())));
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(),
                    score_then_id);
  pool.resize(keep);
  return pool;
}
}  // namespace

std::vector<ScoredComment> select_candidates(const std::vector<ScoredComment>& scored,
                                             const CurationConfig& cfg) {
  cfg.validate();
  std::vector<ScoredComment> filtered;
  for (const ScoredComment& s : scored) {
    if (contains_racial_term(preprocess(s.comment.text), cfg.racial_terms)) filtered.push_back(s);
  }
  if (filtered.empty()) throw InvalidArgument("select_candidates: no comment contains a racial term");
  if (!cfg.per_source) return bottom_slice(std::move(filtered), cfg.bottom_fraction);

  std::map<Source, std::vector<ScoredComment>> by_source;
  for (auto& s : filtered) by_source[s.comment.source].push_back(std::move(s));
  std::vector<ScoredComment> out;
  for (auto& [_, group] : by_source) {
    auto part = bottom_slice(std::move(group), cfg.bottom_fraction);
    out.insert(out.end(), part.begin(), part.end());
  }
  std::sort(out.begin(), out.end(), score_then_id);
  return out;
}

ControlMatch match_controls(const std::vector<ScoredComment>& candidates,
                            const std::vector<ScoredComment>& pool, std::uint64_t seed) {
  std::set<std::string> candidate_ids;
  for (const auto& c : candidates) candidate_ids.insert(c.comment.id);

  std::map<std::string, std::vector<const ScoredComment*>> by_article;
  std::vector<const ScoredComment*> sorted_pool;
  for (const auto& p : pool) sorted_pool.push_back(&p);
  std::sort(sorted_pool.begin(), sorted_pool.end(),
            [](const ScoredComment* a, const ScoredComment* b) { return a->comment.id < b->comment.id; });
  for (const ScoredComment* p : sorted_pool) {
    if (!candidate_ids.count(p->comment.id)) by_article[p->comment.article_id].push_back(p);
  }

  std::vector<const ScoredComment*> order;
  for (const auto& c : candidates) order.push_back(&c);
  std::sort(order.begin(), order.end(),
            [](const ScoredComment* a, const ScoredComment* b) { return a->comment.id < b->comment.id; });

  std::mt19937_64 rng(seed);
  ControlMatch out;
  for (const ScoredComment* cand : order) {
    auto& eligible = by_article[cand->comment.article_id];
    if (eligible.empty()) {
      out.dropped.push_back(cand->comment.id);
      out.warnings.push_back("candidate '" + cand->comment.id + "' has no eligible control in article '" +
                             cand->comment.article_id + "'; dropped");
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
    const std::size_t i = pick(rng);
    out.candidates.push_back(*cand);
    out.controls.push_back(*eligible[i]);
    eligible.erase(eligible.begin() + static_cast<std::ptrdiff_t>(i));
  }
  return out;
}

CurationResult curate(const std::vector<RawComment>& comments, const Lexicon& sentiment,
                      const Lexicon& hate, const CurationConfig& cfg) {
  CurationResult result;
  const Lexicon hate_adjusted = adjust_hate_lexicon(hate, sentiment);
  const auto scored = score_comments(comments, sentiment, hate_adjusted, &result.warnings);
  const auto selected = select_candidates(scored, cfg);
  ControlMatch match = match_controls(selected, scored, cfg.seed);
  result.candidates = std::move(match.candidates);
  result.controls = std::move(match.controls);
  result.dropped = std::move(match.dropped);
  result.warnings.insert(result.warnings.end(), match.warnings.begin(), match.warnings.end());
  for (const auto* group : {&result.candidates, &result.controls}) {
    for (const ScoredComment& s : *group) {
      labels::AnnotatedSample sample;
      sample.id = s.comment.id;
      sample.text = s.comment.text;
      sample.source = s.comment.source;
      result.samples.push_back(std::move(sample));
    }
  }
  return result;
}

Splits split_dataset(const std::vector<labels::AnnotatedSample>& samples, std::uint64_t seed,
                     double val_fraction) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw InvalidArgument("split_dataset: val_fraction must be in [0, 1)");
  }
  Splits s;
  std::vector<std::size_t> news;  // FoxNews + Breitbart indices
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Source src = samples[i].source;
    if (src == Source::kYouTube) {
      s.test.push_back(samples[i]);
    } else if (src == Source::kFoxNews || src == Source::kBreitbart) {
      news.push_back(i);
    }
  }
  std::mt19937_64 rng(seed);
  std::shuffle(news.begin(), news.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(news.size())));
  std::vector<bool> in_val(samples.size(), false);
  for (std::size_t i = 0; i < n_val; ++i) in_val[news[i]] = true;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].source == Source::kYouTube) continue;
    (in_val[i] ? s.validation : s.train).push_back(samples[i]);
  }
  if (s.train.empty()) throw InvalidArgument("split_dataset: train split is empty");
  if (s.validation.empty()) throw InvalidArgument("split_dataset: validation split is empty");
  if (s.test.empty()) throw InvalidArgument("split_dataset: test split is empty");
  return s;
}

Vocab::Vocab() : Vocab(std::vector<std::string>{kPad, kUnk, kCls}) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw SchemaError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }
  for (const char* special : {kPad, kUnk, kCls}) {
    if (!index_.count(special)) throw SchemaError(std::string("vocabulary: missing ") + special);
  }
  pad_ = index_.at(kPad);
  unk_ = index_.at(kUnk);
  cls_ = index_.at(kCls);
}

Vocab Vocab::build(const std::vector<std::string>& preprocessed_texts, std::size_t min_count,
                   std::size_t max_size) {
  std::map<std::string, std::size_t> counts;
  for (const auto& text : preprocessed_texts) {
    for (const auto& tok : split_tokens(text)) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (n >= min_count && tok != kPad && tok != kUnk && tok != kCls) ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = {kPad, kUnk, kCls};
  for (const auto& [tok, _] : ranked) {
    if (max_size && tokens.size() >= max_size) break;
    tokens.push_back(tok);
  }
  return Vocab(std::move(tokens));
}

std::size_t Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? unk_ : it->second;
}

Encoded tokenize(const std::string& text, const Vocab& vocab, std::size_t max_len) {
  if (max_len == 0) throw InvalidArgument("tokenize: max_len must be positive");
  Encoded e;
  e.ids.assign(max_len, vocab.pad_id());
  e.mask.assign(max_len, 0);
  e.ids[0] = vocab.cls_id();
  e.mask[0] = 1;
  e.length = 1;
  for (const auto& tok : split_tokens(text)) {
    if (e.length == max_len) break;
    e.ids[e.length] = vocab.id(tok);
    e.mask[e.length] = 1;
    ++e.length;
  }
  return e;
}

ScoreSummary summarize(std::vector<double> scores) {
  ScoreSummary s;
  s.count = scores.size();
  if (scores.empty()) return s;
  std::sort(scores.begin(), scores.end());
  double total = 0.0;
  std::size_t negative = 0;
  for (double v : scores) {
    total += v;
    negative += v < 0.0 ? 1 : 0;
  }
  const std::size_t n = scores.size();
  s.mean = total / static_cast<double>(n);
  s.median = n % 2 ? scores[n / 2] : 0.5 * (scores[n / 2 - 1] + scores[n / 2]);
  s.min = scores.front();
  s.max = scores.back();
  s.percent_negative = 100.0 * static_cast<double>(negative) / static_cast<double>(n);
  return s;
}

CorpusStats corpus_stats(const std::vector<ScoredComment>& scored) {
  if (scored.empty()) throw InvalidArgument("corpus_stats: no comments");
  CorpusStats stats;
  std::vector<double> all;
  std::map<std::string, std::vector<double>> by_source;
  for (const auto& s : scored) {
    all.push_back(s.score);
    by_source[labels::to_string(s.comment.source)].push_back(s.score);
  }
  stats.overall = summarize(std::move(all));
  for (auto& [src, v] : by_source) stats.per_source[src] = summarize(std::move(v));
  return stats;
}

namespace {
nlohmann::json summary_json(const ScoreSummary& s) {
  return {{"count", s.count},   {"percent_negative", s.percent_negative},
          {"mean", s.mean},     {"median", s.median},
          {"min", s.min},       {"max", s.max}};
}
}  // namespace

nlohmann::json CorpusStats::to_json() const {
  nlohmann::json j;
  j["overall"] = summary_json(overall);
  j["per_source"] = nlohmann::json::object();
  for (const auto& [src, s] : per_source) j["per_source"][src] = summary_json(s);
  return j;
}

std::string CorpusStats::render_table() const {
  auto fixed = [](double v, int precision) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
  };
  std::ostringstream os;
  os << std::left << std::setw(10) << "source" << std::right << std::setw(9) << "count"
     << std::setw(12) << "% negative" << std::setw(10) << "mean" << std::setw(10) << "median"
     << std::setw(22) << "range" << '\n';
  auto row = [&](const std::string& name, const ScoreSummary& s) {
    os << std::left << std::setw(10) << name << std::right << std::setw(9) << s.count
       << std::setw(12) << fixed(s.percent_negative, 2) << std::setw(10) << fixed(s.mean, 4)
       << std::setw(10) << fixed(s.median, 4) << std::setw(22)
       << ("[" + fixed(s.min, 4) + ", " + fixed(s.max, 4) + "]") << '\n';
  };
  for (const auto& [src, s] : per_source) row(src, s);
  row("overall", overall);
  return os.str();
}

std::vector<RawComment> read_comments(std::istream& in) {
  std::vector<RawComment> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RawComment c;
      c.id = j.at("id").get<std::string>();
      c.source = labels::parse_source(j.at("source").get<std::string>());
      c.article_id = j.at("article_id").get<std::string>();
      c.text = j.at("text").get<std::string>();
      if (c.text.empty()) throw SchemaError("empty text");
      if (c.article_id.empty()) throw SchemaError("empty article_id");
      out.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("comments line " + std::to_string(line_no) + ": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError("comments line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_comments(std::ostream& out, const std::vector<RawComment>& comments) {
  for (const auto& c : comments) {
    out << nlohmann::json{{"id", c.id},
                          {"source", labels::to_string(c.source)},
                          {"article_id", c.article_id},
                          {"text", c.text}}
               .dump()
        << '\n';
  }
}

}  // namespace biasly::corpus
