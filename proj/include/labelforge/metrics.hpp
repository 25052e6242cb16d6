#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "labelforge/corpus.hpp"

namespace labelforge {

/// A ratio whose denominator may be zero; empty means undefined.
using Rate = std::optional<double>;

enum class MetricsMode { exclusive, multilabel };

std::string_view to_string(MetricsMode m);
MetricsMode metrics_mode_from_string(std::string_view s);

using BitMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Truth and prediction bit vectors, one row per document.
class PredictionSet {
 public:
  PredictionSet(std::vector<LabelId> labels, std::vector<std::string> doc_ids, BitMatrix truth, BitMatrix pred);

  /// Rows from label lists; every label must belong to the taxonomy.
  static PredictionSet from_labels(const Taxonomy& taxonomy, const std::vector<std::string>& doc_ids,
                                   const std::vector<std::vector<LabelId>>& truth,
                                   const std::vector<std::vector<LabelId>>& pred);

  std::size_t n() const { return doc_ids_.size(); }
  std::size_t M() const { return labels_.size(); }
  const std::vector<LabelId>& labels() const { return labels_; }
  const std::vector<std::string>& doc_ids() const { return doc_ids_; }
  const BitMatrix& truth() const { return truth_; }
  const BitMatrix& pred() const { return pred_; }

  /// Throws ModeError unless every truth row has exactly one bit and every
  /// prediction row at most one (an empty prediction is "unparsed").
  void require_exclusive() const;

 private:
  std::vector<LabelId> labels_;
  std::vector<std::string> doc_ids_;
  BitMatrix truth_;
  BitMatrix pred_;
};

/// Per-class TP/FP/FN/TN tallies.
struct ClassCounts {
  Eigen::VectorXi tp, fp, fn, tn;
  std::size_t n = 0;

  std::size_t classes() const { return static_cast<std::size_t>(tp.size()); }
  int support(std::size_t j) const { return tp(j) + fn(j); }
};

/// M x (M+1) counts: rows are the true class, columns the predicted class,
/// and the last column holds rows whose prediction was unparseable.
struct ConfusionMatrix {
  Eigen::MatrixXi counts;
  std::size_t n = 0;

  std::size_t classes() const { return static_cast<std::size_t>(counts.rows()); }
  Eigen::MatrixXi square() const { return counts.leftCols(counts.rows()); }
  int unparsed() const { return counts.col(counts.cols() - 1).sum(); }
  ClassCounts class_counts() const;
};

ConfusionMatrix confusion_matrix(const PredictionSet& ps);
/// Works in either mode; exclusive input gives the same tallies as the
/// confusion matrix.
ClassCounts class_counts(const PredictionSet& ps);

Rate accuracy(const PredictionSet& ps);
Rate accuracy(const ConfusionMatrix& cm);

Rate precision(const ClassCounts& c, std::size_t j);
Rate recall(const ClassCounts& c, std::size_t j);
Rate specificity(const ClassCounts& c, std::size_t j);
Rate balanced_accuracy(const ClassCounts& c, std::size_t j);
/// 2TP / (2TP + FP + FN): zero when precision + recall is zero, undefined
/// only for a class absent from both truth and predictions.
Rate f1(const ClassCounts& c, std::size_t j);

/// Mean over classes where the value is defined, with the count excluded.
struct Aggregate {
  Rate value;
  std::size_t excluded = 0;
};

Aggregate macro_precision(const ClassCounts& c);
Aggregate macro_recall(const ClassCounts& c);
Aggregate macro_specificity(const ClassCounts& c);
Aggregate macro_balanced_accuracy(const ClassCounts& c);
Aggregate macro_f1(const ClassCounts& c);
/// F1 weighted by true-class support.
Rate weighted_f1(const ClassCounts& c);

Rate hamming_loss(const PredictionSet& ps);
Eigen::VectorXd hamming_per_doc(const PredictionSet& ps);

enum class JaccardVariant {
  /// |truth ∩ pred| / |truth ∪ pred|, with empty/empty scoring 1.
  standard,
  /// |truth ∩ pred| / M.
  over_m,
};

Rate jaccard(const PredictionSet& ps, JaccardVariant variant);

/// Share of documents where truth and prediction overlap; an empty truth
/// only counts when the prediction is empty too.
Rate at_least_one_correct(const PredictionSet& ps);

/// Documents tallied by (true set size, predicted set size), indexes 0..M.
/// `size_pairs` counts size pairs regardless of content; `exact` counts the
/// documents on the diagonal whose sets are identical.
struct CountCrosstab {
  Eigen::MatrixXi size_pairs;
  Eigen::VectorXi exact;
  std::size_t n = 0;

  /// Percentage for a cell: exact matches on the diagonal, size pairs off it.
  Rate percent(std::size_t truth_size, std::size_t pred_size) const;
  int cell(std::size_t truth_size, std::size_t pred_size) const;
  int exact_matches() const { return exact.sum(); }
  Rate exact_match_accuracy() const;
};

CountCrosstab exact_count_crosstab(const PredictionSet& ps);

struct ClassMetrics {
  LabelId label;
  int support = 0;
  int tp = 0, fp = 0, fn = 0, tn = 0;
  Rate precision, recall, specificity, balanced_accuracy, f1;
};

struct MetricsReport {
  static constexpr int schema_version = 1;

  MetricsMode mode = MetricsMode::exclusive;
  std::size_t n = 0;
  std::size_t M = 0;
  Rate accuracy;
  int unparsed = 0;
  std::vector<ClassMetrics> per_class;
  Aggregate macro_precision, macro_recall, macro_specificity, macro_balanced_accuracy, macro_f1;
  Rate weighted_f1;
  Rate hamming_loss;
  Rate jaccard_standard, jaccard_over_m, at_least_one_correct;
  std::optional<ConfusionMatrix> confusion;
  std::optional<CountCrosstab> crosstab;
  std::vector<LabelId> labels;
  nlohmann::json metadata = nlohmann::json::object();

  nlohmann::json to_json() const;
  std::string to_markdown(const std::string& title = {}) const;
};

MetricsReport compute_report(const PredictionSet& ps, MetricsMode mode);

/// "74.8" style rendering of a rate as a one-decimal percentage.
std::string format_percent(const Rate& r);

}  // namespace labelforge
