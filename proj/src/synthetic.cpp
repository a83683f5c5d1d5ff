#include "biasly/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <random>

#include "biasly/error.hpp"

namespace biasly::synthetic {
namespace {

const std::vector<std::string> kPositive = {"good", "great", "kind", "fair", "honest",
                                            "respect", "love", "peaceful", "thanks", "welcome"};
const std::vector<std::string> kNegative = {"bad",   "awful", "angry", "terrible", "worse",
                                            "hate",  "ugly",  "stupid", "lazy",    "disgusting"};
const std::vector<std::string> kHate = {"slurone", "slurtwo", "slurthree", "slurfour", "slurfive"};
const std::vector<std::string> kGroups = {"immigrants", "asians", "blacks", "whites",
                                          "latinos",    "arabs",  "jews",   "africans"};
const std::vector<std::string> kClassNames = {"alpha", "beta", "gamma", "delta", "epsilon", "zeta"};

std::string filler_word(std::size_t i) { return "w" + std::to_string(i); }

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

}  // namespace

CommentFixture make_comment_fixture(std::size_t n_comments, std::size_t n_articles,
                                    std::uint64_t seed) {
  if (n_articles == 0) throw InvalidArgument("synthetic: need at least one article");
  std::mt19937_64 rng(seed);
  CommentFixture f;
  f.sentiment.kind = corpus::LexiconKind::kSentiment;
  f.hate.kind = corpus::LexiconKind::kHate;
  std::uniform_real_distribution<double> weight(0.25, 1.0);
  for (const auto& w : kPositive) f.sentiment.entries[w] = weight(rng);
  for (const auto& w : kNegative) f.sentiment.entries[w] = -weight(rng);
  std::uniform_real_distribution<double> hate_weight(1.0, 4.0);
  for (const auto& w : kHate) f.hate.entries[w] = -hate_weight(rng);
  f.racial_terms.insert(kGroups.begin(), kGroups.end());

  const std::vector<labels::Source> sources = {labels::Source::kFoxNews, labels::Source::kBreitbart,
                                               labels::Source::kYouTube};
  std::uniform_int_distribution<std::size_t> article(0, n_articles - 1);
  std::uniform_int_distribution<std::size_t> length(5, 14);
  std::uniform_int_distribution<std::size_t> filler(0, 299);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n_comments; ++i) {
    corpus::RawComment c;
    char id[32];
    std::snprintf(id, sizeof(id), "c%06zu", i);
    c.id = id;
    const std::size_t a = article(rng);
    c.article_id = "a" + std::to_string(a);
    c.source = sources[a % sources.size()];
    const double negativity = u(rng);
    std::string text;
    if (u(rng) < 0.15) text += "@user" + std::to_string(filler(rng)) + " ";
    const std::size_t n = length(rng);
    for (std::size_t t = 0; t < n; ++t) {
      const double r = u(rng);
      std::string tok;
      if (r < 0.12) {
        tok = pick(kGroups, rng);
      } else if (r < 0.30) {
        tok = u(rng) < negativity ? pick(kNegative, rng) : pick(kPositive, rng);
      } else if (r < 0.34 && negativity > 0.7) {
        tok = pick(kHate, rng);
      } else {
        tok = filler_word(filler(rng));
      }
      if (u(rng) < 0.1) tok[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(tok[0])));
      if (u(rng) < 0.08) tok += "!";
      text += tok + (u(rng) < 0.05 ? "  " : " ");
    }
    if (u(rng) < 0.1) text += "https://example.org/p" + std::to_string(i);
    c.text = text;
    f.comments.push_back(std::move(c));
  }
  return f;
}

std::string class_marker(std::size_t cls, std::size_t i) {
  return kClassNames.at(cls) + std::to_string(i);
}

std::vector<labels::AnnotatedSample> make_planted_samples(std::size_t n, labels::Source source,
                                                          std::uint64_t seed,
                                                          const PlantedOptions& opts,
                                                          const std::string& id_prefix) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> cls_dist(0, labels::kNumClasses - 1);
  std::uniform_int_distribution<std::size_t> filler_len(opts.min_filler, opts.max_filler);
  std::uniform_int_distribution<std::size_t> filler(0, opts.filler_vocab - 1);
  std::uniform_int_distribution<std::size_t> marker(0, kMarkersPerClass - 1);
  std::uniform_int_distribution<int> high_conf(3, 5);
  std::uniform_int_distribution<int> low_conf(1, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  std::vector<labels::AnnotatedSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = cls_dist(rng);
    std::vector<std::string> words;
    const std::size_t len = filler_len(rng);
    for (std::size_t t = 0; t < len; ++t) words.push_back(filler_word(filler(rng)));
    const std::size_t n_markers = u(rng) < 0.5 ? 1 : 2;
    for (std::size_t m = 0; m < n_markers; ++m) {
      std::uniform_int_distribution<std::size_t> pos(0, words.size());
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(pos(rng)), class_marker(cls, marker(rng)));
    }
    labels::AnnotatedSample s;
    s.id = id_prefix + std::to_string(i);
    s.source = source;
    for (const auto& w : words) s.text += (s.text.empty() ? "" : " ") + w;
    const int score = static_cast<int>(cls);
    if (opts.one_hot) {
      s.annotations.push_back({score, static_cast<double>(high_conf(rng))});
    } else {
      s.annotations.push_back({score, static_cast<double>(high_conf(rng))});
      s.annotations.push_back({score, static_cast<double>(high_conf(rng))});
      for (std::size_t a = 2; a < opts.annotators; ++a) {
        int vote = score;
        if (u(rng) < 0.4) vote = std::clamp(score + (u(rng) < 0.5 ? -1 : 1), 0, 5);
        s.annotations.push_back({vote, static_cast<double>(low_conf(rng))});
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace biasly::synthetic
