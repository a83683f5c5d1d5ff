#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "biasly/corpus.hpp"
#include "biasly/labels.hpp"

// Seeded synthetic fixtures standing in for the real (licensed) corpus and
// lexicons. Used by the tests, the acceptance suite and `biasly synth`.
namespace biasly::synthetic {

struct CommentFixture {
  std::vector<corpus::RawComment> comments;
  corpus::Lexicon sentiment;
  corpus::Lexicon hate;
  std::set<std::string> racial_terms;
};

// Comments spread over FoxNews, Breitbart and YouTube articles, built from
// filler words, sentiment words, hate terms, group-reference terms, mentions
// and URLs.
CommentFixture make_comment_fixture(std::size_t n_comments, std::size_t n_articles,
                                    std::uint64_t seed);

// Marker token i of class c, e.g. "zeta3".
std::string class_marker(std::size_t cls, std::size_t i);
inline constexpr std::size_t kMarkersPerClass = 4;

struct PlantedOptions {
  std::size_t min_filler = 6;
  std::size_t max_filler = 12;
  std::size_t filler_vocab = 200;
  std::size_t annotators = 3;
  bool one_hot = false;  // a single confident annotator per sample
};

// Samples whose bias score is given by planted class-marker tokens. With
// three annotators, two always vote for the planted class, so the soft
// label's argmax equals it.
std::vector<labels::AnnotatedSample> make_planted_samples(std::size_t n, labels::Source source,
                                                          std::uint64_t seed,
                                                          const PlantedOptions& opts = {},
                                                          const std::string& id_prefix = "s");

}  // namespace biasly::synthetic
