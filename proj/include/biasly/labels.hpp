#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

namespace biasly::labels {

inline constexpr std::size_t kNumClasses = 6;
inline constexpr double kLossEps = 1e-8;

enum class Source { kFoxNews, kBreitbart, kYouTube, kSynthetic };

std::string to_string(Source s);
Source parse_source(const std::string& s);  // throws SchemaError

// One annotator's rating: bias score 0..5 and a positive confidence.
struct Annotation {
  int bias_score = 0;
  double confidence = 1.0;
};

struct AnnotatedSample {
  std::string id;
  std::string text;
  Source source = Source::kSynthetic;
  std::vector<Annotation> annotations;
};

struct SoftLabel {
  std::array<double, kNumClasses> probs{};
};

// Annotator confidences normalized by their total and accumulated onto the
// voted classes. Colliding votes add up.
SoftLabel soft_label(const std::vector<Annotation>& annotations);

// Sample standard deviation (n-1) over the mean.
double cv(const std::vector<double>& values);

struct CvFilterResult {
  std::vector<AnnotatedSample> retained;
  double dropped_fraction = 0.0;
  std::size_t passed_through = 0;  // single-annotation samples, CV undefined
};

// Keeps samples whose bias-score CV is <= threshold. Samples with a single
// annotation pass through untouched. Scores are non-negative, so a zero mean
// means every annotator said 0; that unanimous case counts as CV 0.
CvFilterResult cv_filter(const std::vector<AnnotatedSample>& samples,
                         double threshold = std::numeric_limits<double>::infinity());

// -sum_c p_c log(eps + q_c)
double soft_cross_entropy(const SoftLabel& p, const std::array<double, kNumClasses>& q,
                          double eps = kLossEps);

double batch_loss(const std::vector<SoftLabel>& targets,
                  const std::vector<std::array<double, kNumClasses>>& predictions,
                  double eps = kLossEps);

// argmax with ties going to the lowest index.
std::size_t multiclass_target(const SoftLabel& p);

struct MultilabelTarget {
  std::vector<std::size_t> classes;  // ascending
  // True when zero-probability classes had to be added to reach k.
  bool padded_with_zero = false;
};

// The k most probable classes (ties to the lower index).
MultilabelTarget multilabel_target(const SoftLabel& p, std::size_t k);

// JSON-lines annotated samples: {id, text, source, annotations: [{score, confidence}]}
// `require_annotations` rejects records with an empty annotation list.
std::vector<AnnotatedSample> read_samples(std::istream& in, bool require_annotations = true);
void write_samples(std::ostream& out, const std::vector<AnnotatedSample>& samples);
nlohmann::json sample_to_json(const AnnotatedSample& s);
AnnotatedSample sample_from_json(const nlohmann::json& j, bool require_annotations = true);

}  // namespace biasly::labels
