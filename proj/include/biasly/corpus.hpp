#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "biasly/labels.hpp"
#include "json.hpp"

namespace biasly::corpus {

using labels::Source;

struct RawComment {
  std::string id;
  Source source = Source::kSynthetic;
  std::string article_id;
  std::string text;
};

enum class LexiconKind { kSentiment, kHate };

struct Lexicon {
  LexiconKind kind = LexiconKind::kSentiment;
  std::map<std::string, double> entries;  // lowercased term -> signed weight

  double max_abs_weight() const;
};

// TSV, one "term<TAB>weight" per line; '#' starts a comment line. Terms are
// lowercased; a repeated term is a SchemaError.
Lexicon read_lexicon(std::istream& in, LexiconKind kind);
Lexicon load_lexicon(const std::string& path, LexiconKind kind);
void write_lexicon(std::ostream& out, const Lexicon& lex);

struct CurationConfig {
  double bottom_fraction = 0.2;
  std::set<std::string> racial_terms;  // lowercased
  std::uint64_t seed = 0;
  // Bottom fraction taken within each source instead of over the whole pool.
  bool per_source = false;

  void validate() const;
};

// Drops @-mentions and URLs, lowercases, collapses whitespace.
std::string preprocess(const std::string& text);

// Whitespace tokens of already preprocessed text.
std::vector<std::string> split_tokens(const std::string& text);

// Token as used for lexicon and term lookup: surrounding ASCII punctuation
// stripped ("bad!" matches "bad").
std::string lookup_key(const std::string& token);

// Scales every hate weight by max|sentiment| / max|hate| so both tables
// share the same largest magnitude.
Lexicon adjust_hate_lexicon(const Lexicon& hate, const Lexicon& sentiment);

// (sum of matched weights from both tables) / sqrt(token count). Empty text
// scores 0 and appends a warning when `warnings` is given.
double sentiment_score(const std::string& preprocessed_text, const Lexicon& sentiment,
                       const Lexicon& hate_adjusted, std::vector<std::string>* warnings = nullptr);

struct ScoredComment {
  RawComment comment;
  double score = 0.0;
};

std::vector<ScoredComment> score_comments(const std::vector<RawComment>& comments,
                                          const Lexicon& sentiment, const Lexicon& hate_adjusted,
                                          std::vector<std::string>* warnings = nullptr);

bool contains_racial_term(const std::string& preprocessed_text, const std::set<std::string>& terms);

// Comments mentioning a racial term, then the floor(bottom_fraction * n)
// lowest scores (ties by id), ascending. Throws when no comment mentions a term.
std::vector<ScoredComment> select_candidates(const std::vector<ScoredComment>& scored,
                                             const CurationConfig& cfg);

struct ControlMatch {
  std::vector<ScoredComment> candidates;  // candidates that found a control
  std::vector<ScoredComment> controls;    // controls[i] pairs with candidates[i]
  std::vector<std::string> dropped;       // candidate ids without an eligible control
  std::vector<std::string> warnings;
};

// For each candidate (in id order) draws one unused comment from `pool` with
// the same article_id, uniformly under `seed`. Pool members that are also
// candidates are never drawn.
ControlMatch match_controls(const std::vector<ScoredComment>& candidates,
                            const std::vector<ScoredComment>& pool, std::uint64_t seed);

struct CurationResult {
  std::vector<ScoredComment> candidates;
  std::vector<ScoredComment> controls;
  std::vector<std::string> dropped;
  std::vector<std::string> warnings;
  // Candidates then controls as annotated samples with no annotations yet.
  std::vector<labels::AnnotatedSample> samples;
};

CurationResult curate(const std::vector<RawComment>& comments, const Lexicon& sentiment,
                      const Lexicon& hate, const CurationConfig& cfg);

struct Splits {
  std::vector<labels::AnnotatedSample> train, validation, test;
};

// test = every YouTube sample; validation = round(val_fraction * n) seeded
// draw from FoxNews + Breitbart; train = everything else.
Splits split_dataset(const std::vector<labels::AnnotatedSample>& samples, std::uint64_t seed,
                     double val_fraction = 0.1);

class Vocab {
 public:
  static constexpr const char* kPad = "[PAD]";
  static constexpr const char* kUnk = "[UNK]";
  static constexpr const char* kCls = "[CLS]";

  Vocab();  // the three special tokens only
  explicit Vocab(std::vector<std::string> tokens);  // must contain the specials

  // Specials first, then tokens by descending frequency, ties alphabetical.
  static Vocab build(const std::vector<std::string>& preprocessed_texts, std::size_t min_count = 1,
                     std::size_t max_size = 0);

  std::size_t size() const { return tokens_.size(); }
  std::size_t id(const std::string& token) const;  // [UNK] id when absent
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t pad_id() const { return pad_; }
  std::size_t unk_id() const { return unk_; }
  std::size_t cls_id() const { return cls_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
  std::size_t pad_ = 0, unk_ = 0, cls_ = 0;
};

struct Encoded {
  std::vector<std::size_t> ids;   // exactly max_len entries
  std::vector<std::uint8_t> mask; // 1 for [CLS] and real tokens
  std::size_t length = 0;         // number of unmasked positions
};

// [CLS] + whitespace tokens, unknown -> [UNK], truncated to max_len, padded.
Encoded tokenize(const std::string& text, const Vocab& vocab, std::size_t max_len);

struct ScoreSummary {
  std::size_t count = 0;
  double percent_negative = 0.0;
  double mean = 0.0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct CorpusStats {
  ScoreSummary overall;
  std::map<std::string, ScoreSummary> per_source;

  nlohmann::json to_json() const;
  std::string render_table() const;
};

ScoreSummary summarize(std::vector<double> scores);
CorpusStats corpus_stats(const std::vector<ScoredComment>& scored);

// JSON-lines {id, source, article_id, text}
std::vector<RawComment> read_comments(std::istream& in);
void write_comments(std::ostream& out, const std::vector<RawComment>& comments);

}  // namespace biasly::corpus
