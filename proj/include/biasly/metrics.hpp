#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "biasly/labels.hpp"
#include "json.hpp"

namespace biasly::metrics {

inline constexpr std::size_t kNumClasses = labels::kNumClasses;
using Probs = std::array<double, kNumClasses>;
using ClassSet = std::vector<std::size_t>;  // ascending, no duplicates

struct PredictionRecord {
  std::string id;
  Probs probs{};
  std::size_t target = 0;                        // multiclass target
  std::map<std::size_t, ClassSet> target_sets;   // k -> multilabel target set
};

enum class Mode { kMulticlass, kMultilabel };
std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

// What counts as a positive for class c when computing AP: the multiclass
// target, or membership in the top-k target set.
struct Relevance {
  Mode mode = Mode::kMulticlass;
  std::size_t k = 1;
  bool relevant(const PredictionRecord& r, std::size_t c) const;
};

// Records ranked by probs[c] descending (ties by id ascending);
// AP = sum over ranks of precision@rank * rel(rank) / positives.
// nullopt when the class has no positives.
std::optional<double> average_precision(const std::vector<PredictionRecord>& records,
                                        std::size_t c, const Relevance& rel = {});

// Same quantity from an already-ranked relevance list.
std::optional<double> average_precision_ranked(const std::vector<bool>& ranked_relevance);

// Mean over the classes that have a value; throws when none do.
double mean_average_precision(const std::vector<std::optional<double>>& ap_per_class);

// The k highest-probability classes, ties to the lower index, ascending.
ClassSet top_k_classes(const Probs& probs, std::size_t k);

double topk_accuracy(const std::vector<PredictionRecord>& records, std::size_t k);

// Micro-averaged F1: TP/FP/FN pooled over all records, then 2TP/(2TP+FP+FN).
double f1_from_sets(const std::vector<ClassSet>& predicted, const std::vector<ClassSet>& target);
// Mean per-record Jaccard index.
double iou_from_sets(const std::vector<ClassSet>& predicted, const std::vector<ClassSet>& target);

double f1_at_k(const std::vector<PredictionRecord>& records, std::size_t k);
double iou_at_k(const std::vector<PredictionRecord>& records, std::size_t k);

struct MetricsReport {
  Mode mode = Mode::kMulticlass;
  std::size_t n_records = 0;
  std::array<std::optional<double>, kNumClasses> ap_per_class{};
  double map = 0.0;
  std::vector<std::size_t> ks;
  std::map<std::size_t, double> topk_accuracy;
  std::map<std::size_t, double> f1_at_k;
  std::map<std::size_t, double> iou_at_k;
  std::vector<std::size_t> skipped_classes;
  std::optional<double> loss;

  // Column order: top{k}_acc..., map, f1@{k}..., iou@{k}..., ap_0..ap_5,
  // skipped, n, loss. Skipped APs and a missing loss are empty cells.
  std::vector<std::string> csv_columns() const;
  std::string csv_header() const;
  std::string csv_row() const;
  nlohmann::json to_json() const;
};

// Computes every metric for k in `ks`. In multilabel mode AP relevance uses
// the target set at the largest k.
MetricsReport compute_report(const std::vector<PredictionRecord>& records, Mode mode,
                             const std::vector<std::size_t>& ks = {1, 2, 3});

// Fills target and target_sets from a soft label. Target sets drop classes
// with zero probability, so they may hold fewer than k entries.
PredictionRecord make_record(std::string id, const Probs& probs, const labels::SoftLabel& label,
                             const std::vector<std::size_t>& ks = {1, 2, 3});

}  // namespace biasly::metrics
