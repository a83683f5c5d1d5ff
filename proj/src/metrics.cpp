#include "biasly/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "biasly/error.hpp"

namespace biasly::metrics {

std::string to_string(Mode m) { return m == Mode::kMulticlass ? "multiclass" : "multilabel"; }

Mode parse_mode(const std::string& s) {
  if (s == "multiclass") return Mode::kMulticlass;
  if (s == "multilabel") return Mode::kMultilabel;
  throw InvalidArgument("unknown evaluation mode '" + s + "'");
}

namespace {

void check_k(std::size_t k) {
  if (k < 1 || k > kNumClasses) throw InvalidArgument("k must be in 1..6, got " + std::to_string(k));
}

const ClassSet& target_set(const PredictionRecord& r, std::size_t k) {
  auto it = r.target_sets.find(k);
  if (it == r.target_sets.end()) {
    throw InvalidArgument("record '" + r.id + "' has no target set for k=" + std::to_string(k));
  }
  return it->second;
}

std::size_t intersection_size(const ClassSet& a, const ClassSet& b) {
  std::size_t n = 0;
  for (std::size_t x : a) n += std::binary_search(b.begin(), b.end(), x) ? 1 : 0;
  return n;
}

}  // namespace

bool Relevance::relevant(const PredictionRecord& r, std::size_t c) const {
  if (mode == Mode::kMulticlass) return r.target == c;
  const ClassSet& s = target_set(r, k);
  return std::binary_search(s.begin(), s.end(), c);
}

std::optional<double> average_precision_ranked(const std::vector<bool>& ranked_relevance) {
  double hits = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < ranked_relevance.size(); ++i) {
    if (!ranked_relevance[i]) continue;
    hits += 1.0;
    total += hits / static_cast<double>(i + 1);
  }
  if (hits == 0.0) return std::nullopt;
  return total / hits;
}

std::optional<double> average_precision(const std::vector<PredictionRecord>& records,
                                        std::size_t c, const Relevance& rel) {
  if (records.empty()) throw InvalidArgument("average_precision: no records");
  if (c >= kNumClasses) throw InvalidArgument("average_precision: class out of range");
  std::vector<const PredictionRecord*> ranked;
  for (const auto& r : records) ranked.push_back(&r);
  std::sort(ranked.begin(), ranked.end(), [c](const PredictionRecord* a, const PredictionRecord* b) {
    if (a->probs[c] != b->probs[c]) return a->probs[c] > b->probs[c];
    return a->id < b->id;
  });
  std::vector<bool> relevance;
  for (const PredictionRecord* r : ranked) relevance.push_back(rel.relevant(*r, c));
  return average_precision_ranked(relevance);
}

double mean_average_precision(const std::vector<std::optional<double>>& ap_per_class) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& ap : ap_per_class) {
    if (ap) {
      total += *ap;
      ++n;
    }
  }
  if (n == 0) throw InvalidArgument("mean_average_precision: every class was skipped");
  return total / static_cast<double>(n);
}

ClassSet top_k_classes(const Probs& probs, std::size_t k) {
  check_k(k);
  std::array<std::size_t, kNumClasses> order;
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  ClassSet out(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(out.begin(), out.end());
  return out;
}

double topk_accuracy(const std::vector<PredictionRecord>& records, std::size_t k) {
  check_k(k);
  if (records.empty()) throw InvalidArgument("topk_accuracy: no records");
  std::size_t hits = 0;
  for (const auto& r : records) {
    const ClassSet top = top_k_classes(r.probs, k);
    hits += std::binary_search(top.begin(), top.end(), r.target) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double f1_from_sets(const std::vector<ClassSet>& predicted, const std::vector<ClassSet>& target) {
  if (predicted.size() != target.size()) throw InvalidArgument("f1: set counts differ");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const std::size_t inter = intersection_size(predicted[i], target[i]);
    tp += inter;
    fp += predicted[i].size() - inter;
    fn += target[i].size() - inter;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  if (denom == 0) return 1.0;  // nothing predicted and nothing expected
  return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double iou_from_sets(const std::vector<ClassSet>& predicted, const std::vector<ClassSet>& target) {
  if (predicted.size() != target.size()) throw InvalidArgument("iou: set counts differ");
  if (predicted.empty()) throw InvalidArgument("iou: no records");
  // Every union has at most six classes, so each ratio is an exact multiple
  // of 1/60; summing those integers keeps the mean independent of order.
  constexpr std::uint64_t kCommon = 60;
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    for (const auto* set : {&predicted[i], &target[i]})
      for (std::size_t c : *set)
        if (c >= kNumClasses) throw InvalidArgument("iou: class index out of range");
    const std::size_t inter = intersection_size(predicted[i], target[i]);
    const std::size_t uni = predicted[i].size() + target[i].size() - inter;
    total += uni == 0 ? kCommon : kCommon * inter / uni;
  }
  return static_cast<double>(total) / static_cast<double>(kCommon * predicted.size());
}

namespace {
std::pair<std::vector<ClassSet>, std::vector<ClassSet>> sets_at_k(
    const std::vector<PredictionRecord>& records, std::size_t k) {
  check_k(k);
  std::vector<ClassSet> pred, tgt;
  for (const auto& r : records) {
    pred.push_back(top_k_classes(r.probs, k));
    tgt.push_back(target_set(r, k));
  }
  return {std::move(pred), std::move(tgt)};
}
}  // namespace

double f1_at_k(const std::vector<PredictionRecord>& records, std::size_t k) {
  auto [pred, tgt] = sets_at_k(records, k);
  return f1_from_sets(pred, tgt);
}

double iou_at_k(const std::vector<PredictionRecord>& records, std::size_t k) {
  auto [pred, tgt] = sets_at_k(records, k);
  return iou_from_sets(pred, tgt);
}

MetricsReport compute_report(const std::vector<PredictionRecord>& records, Mode mode,
                             const std::vector<std::size_t>& ks) {
  if (records.empty()) throw InvalidArgument("compute_report: no records");
  if (ks.empty()) throw InvalidArgument("compute_report: empty k list");
  MetricsReport rep;
  rep.mode = mode;
  rep.n_records = records.size();
  rep.ks = ks;
  std::sort(rep.ks.begin(), rep.ks.end());
  rep.ks.erase(std::unique(rep.ks.begin(), rep.ks.end()), rep.ks.end());
  const Relevance rel{mode, rep.ks.back()};
  std::vector<std::optional<double>> aps;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    rep.ap_per_class[c] = average_precision(records, c, rel);
    if (!rep.ap_per_class[c]) rep.skipped_classes.push_back(c);
    aps.push_back(rep.ap_per_class[c]);
  }
  rep.map = mean_average_precision(aps);
  for (std::size_t k : rep.ks) {
    rep.topk_accuracy[k] = topk_accuracy(records, k);
    rep.f1_at_k[k] = f1_at_k(records, k);
    rep.iou_at_k[k] = iou_at_k(records, k);
  }
  return rep;
}

PredictionRecord make_record(std::string id, const Probs& probs, const labels::SoftLabel& label,
                             const std::vector<std::size_t>& ks) {
  PredictionRecord r;
  r.id = std::move(id);
  r.probs = probs;
  r.target = labels::multiclass_target(label);
  for (std::size_t k : ks) {
    ClassSet set;
    for (std::size_t c : labels::multilabel_target(label, k).classes) {
      if (label.probs[c] > 0.0) set.push_back(c);
    }
    r.target_sets[k] = std::move(set);
  }
  return r;
}

std::vector<std::string> MetricsReport::csv_columns() const {
  std::vector<std::string> cols;
  for (std::size_t k : ks) cols.push_back("top" + std::to_string(k) + "_acc");
  cols.push_back("map");
  for (std::size_t k : ks) cols.push_back("f1@" + std::to_string(k));
  for (std::size_t k : ks) cols.push_back("iou@" + std::to_string(k));
  for (std::size_t c = 0; c < kNumClasses; ++c) cols.push_back("ap_" + std::to_string(c));
  cols.push_back("skipped");
  cols.push_back("n");
  cols.push_back("loss");
  return cols;
}

std::string MetricsReport::csv_header() const {
  std::string out;
  for (const auto& c : csv_columns()) out += (out.empty() ? "" : ",") + c;
  return out;
}

namespace {
std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}
}  // namespace

std::string MetricsReport::csv_row() const {
  std::vector<std::string> cells;
  for (std::size_t k : ks) cells.push_back(fmt(topk_accuracy.at(k)));
  cells.push_back(fmt(map));
  for (std::size_t k : ks) cells.push_back(fmt(f1_at_k.at(k)));
  for (std::size_t k : ks) cells.push_back(fmt(iou_at_k.at(k)));
  for (const auto& ap : ap_per_class) cells.push_back(ap ? fmt(*ap) : "");
  std::string skipped;
  for (std::size_t c : skipped_classes) skipped += (skipped.empty() ? "" : ";") + std::to_string(c);
  cells.push_back(skipped);
  cells.push_back(std::to_string(n_records));
  cells.push_back(loss ? fmt(*loss) : "");
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
  return out;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["mode"] = to_string(mode);
  j["n"] = n_records;
  nlohmann::json aps = nlohmann::json::array();
  for (const auto& ap : ap_per_class) aps.push_back(ap ? nlohmann::json(*ap) : nlohmann::json());
  j["ap_per_class"] = aps;
  j["map"] = map;
  for (std::size_t k : ks) {
    const std::string key = std::to_string(k);
    j["topk_accuracy"][key] = topk_accuracy.at(k);
    j["f1_at_k"][key] = f1_at_k.at(k);
    j["iou_at_k"][key] = iou_at_k.at(k);
  }
  j["skipped_classes"] = skipped_classes;
  j["loss"] = loss ? nlohmann::json(*loss) : nlohmann::json();
  return j;
}

}  // namespace biasly::metrics
