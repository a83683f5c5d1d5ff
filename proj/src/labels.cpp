#include "biasly/labels.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "biasly/error.hpp"

namespace biasly::labels {

std::string to_string(Source s) {
  switch (s) {
    case Source::kFoxNews: return "FoxNews";
    case Source::kBreitbart: return "Breitbart";
    case Source::kYouTube: return "YouTube";
    case Source::kSynthetic: return "Synthetic";
  }
  return "Synthetic";
}

Source parse_source(const std::string& s) {
  if (s == "FoxNews") return Source::kFoxNews;
  if (s == "Breitbart") return Source::kBreitbart;
  if (s == "YouTube") return Source::kYouTube;
  if (s == "Synthetic") return Source::kSynthetic;
  throw SchemaError("unknown source '" + s + "' (expected FoxNews, Breitbart, YouTube, Synthetic)");
}

namespace {
void check_annotation(const Annotation& a) {
  if (a.bias_score < 0 || a.bias_score >= static_cast<int>(kNumClasses)) {
    throw InvalidArgument("bias score " + std::to_string(a.bias_score) + " outside 0..5");
  }
  if (!(a.confidence > 0.0) || !std::isfinite(a.confidence)) {
    throw InvalidArgument("confidence must be positive and finite");
  }
}
}  // namespace

SoftLabel soft_label(const std::vector<Annotation>& annotations) {
  if (annotations.empty()) throw InvalidArgument("soft_label: no annotations");
  double total = 0.0;
  for (const Annotation& a : annotations) {
    check_annotation(a);
    total += a.confidence;
  }
  SoftLabel label;
  for (const Annotation& a : annotations) label.probs[a.bias_score] += a.confidence / total;
  return label;
}

double cv(const std::vector<double>& values) {
  if (values.size() < 2) throw InvalidArgument("cv: needs at least two values");
  const double n = static_cast<double>(values.size());
  const double mu = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (mu == 0.0) throw InvalidArgument("cv: undefined for zero mean");
  double ss = 0.0;
  for (double v : values) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / (n - 1.0)) / mu;
}

CvFilterResult cv_filter(const std::vector<AnnotatedSample>& samples, double threshold) {
  CvFilterResult result;
  for (const AnnotatedSample& s : samples) {
    if (s.annotations.size() < 2) {
      result.retained.push_back(s);
      ++result.passed_through;
      continue;
    }
    std::vector<double> scores;
    for (const Annotation& a : s.annotations) scores.push_back(a.bias_score);
    const bool unanimous_zero =
        std::all_of(scores.begin(), scores.end(), [](double v) { return v == 0.0; });
    const double value = unanimous_zero ? 0.0 : cv(scores);
    if (value <= threshold) result.retained.push_back(s);
  }
  if (!samples.empty()) {
    result.dropped_fraction = static_cast<double>(samples.size() - result.retained.size()) /
                              static_cast<double>(samples.size());
  }
  return result;
}

double soft_cross_entropy(const SoftLabel& p, const std::array<double, kNumClasses>& q,
                          double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("soft_cross_entropy: eps must be positive");
  double total = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (q[c] < 0.0) throw InvalidArgument("soft_cross_entropy: negative predicted probability");
    total -= p.probs[c] * std::log(eps + q[c]);
  }
  return total;
}

double batch_loss(const std::vector<SoftLabel>& targets,
                  const std::vector<std::array<double, kNumClasses>>& predictions, double eps) {
  if (targets.empty()) throw InvalidArgument("batch_loss: empty batch");
  if (targets.size() != predictions.size()) {
    throw InvalidArgument("batch_loss: " + std::to_string(targets.size()) + " targets vs " +
                          std::to_string(predictions.size()) + " predictions");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    total += soft_cross_entropy(targets[i], predictions[i], eps);
  }
  return total / static_cast<double>(targets.size());
}

std::size_t multiclass_target(const SoftLabel& p) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumClasses; ++c) {
    if (p.probs[c] > p.probs[best]) best = c;
  }
  return best;
}

MultilabelTarget multilabel_target(const SoftLabel& p, std::size_t k) {
  if (k < 1 || k > kNumClasses) throw InvalidArgument("multilabel_target: k must be in 1..6");
  std::array<std::size_t, kNumClasses> order;
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p.probs[a] > p.probs[b]; });
  MultilabelTarget t;
  for (std::size_t i = 0; i < k; ++i) {
    t.classes.push_back(order[i]);
    if (p.probs[order[i]] <= 0.0) t.padded_with_zero = true;
  }
  std::sort(t.classes.begin(), t.classes.end());
  return t;
}

nlohmann::json sample_to_json(const AnnotatedSample& s) {
  nlohmann::json anns = nlohmann::json::array();
  for (const Annotation& a : s.annotations) {
    anns.push_back({{"score", a.bias_score}, {"confidence", a.confidence}});
  }
  return {{"id", s.id}, {"text", s.text}, {"source", to_string(s.source)}, {"annotations", anns}};
}

AnnotatedSample sample_from_json(const nlohmann::json& j, bool require_annotations) {
  AnnotatedSample s;
  try {
    s.id = j.at("id").get<std::string>();
    s.text = j.at("text").get<std::string>();
    s.source = parse_source(j.at("source").get<std::string>());
    for (const auto& a : j.value("annotations", nlohmann::json::array())) {
      Annotation ann;
      ann.bias_score = a.at("score").get<int>();
      ann.confidence = a.at("confidence").get<double>();
      s.annotations.push_back(ann);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("annotated sample: ") + e.what());
  }
  if (s.text.empty()) throw SchemaError("annotated sample '" + s.id + "': empty text");
  if (require_annotations && s.annotations.empty()) {
    throw SchemaError("annotated sample '" + s.id + "': no annotations");
  }
  for (const Annotation& a : s.annotations) {
    try {
      check_annotation(a);
    } catch (const InvalidArgument& e) {
      throw SchemaError("annotated sample '" + s.id + "': " + e.what());
    }
  }
  return s;
}

std::vector<AnnotatedSample> read_samples(std::istream& in, bool require_annotations) {
  std::vector<AnnotatedSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      out.push_back(sample_from_json(j, require_annotations));
    } catch (const SchemaError& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_samples(std::ostream& out, const std::vector<AnnotatedSample>& samples) {
  for (const AnnotatedSample& s : samples) out << sample_to_json(s).dump() << '\n';
}

}  // namespace biasly::labels
