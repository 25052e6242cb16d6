#include "labelforge/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "labelforge/error.hpp"

namespace labelforge {

using nlohmann::json;

std::string_view to_string(MetricsMode m) { return m == MetricsMode::exclusive ? "exclusive" : "multilabel"; }

MetricsMode metrics_mode_from_string(std::string_view s) {
  if (s == "exclusive") return MetricsMode::exclusive;
  if (s == "multilabel" || s == "multi-label" || s == "multi_label") return MetricsMode::multilabel;
  throw ModeError(fmt::format("unknown metrics mode '{}' (expected exclusive or multilabel)", s));
}

PredictionSet::PredictionSet(std::vector<LabelId> labels, std::vector<std::string> doc_ids, BitMatrix truth,
                             BitMatrix pred)
    : labels_(std::move(labels)), doc_ids_(std::move(doc_ids)), truth_(std::move(truth)), pred_(std::move(pred)) {
  const auto n = static_cast<Eigen::Index>(doc_ids_.size());
  const auto m = static_cast<Eigen::Index>(labels_.size());
  if (m < 2) throw ValidationError("prediction set needs at least 2 labels");
  if (truth_.rows() != n || pred_.rows() != n || truth_.cols() != m || pred_.cols() != m) {
    throw ValidationError(fmt::format("prediction set shape mismatch: {} docs x {} labels, truth {}x{}, pred {}x{}", n,
                                      m, truth_.rows(), truth_.cols(), pred_.rows(), pred_.cols()));
  }
  auto binary = [](const BitMatrix& b) { return ((b.array() == 0) || (b.array() == 1)).all(); };
  if (!binary(truth_) || !binary(pred_)) throw ValidationError("label vectors must be 0/1");
}

PredictionSet PredictionSet::from_labels(const Taxonomy& taxonomy, const std::vector<std::string>& doc_ids,
                                         const std::vector<std::vector<LabelId>>& truth,
                                         const std::vector<std::vector<LabelId>>& pred) {
  if (truth.size() != doc_ids.size() || pred.size() != doc_ids.size()) {
    throw ValidationError("one truth and one prediction list per document required");
  }
  const auto n = static_cast<Eigen::Index>(doc_ids.size());
  const auto m = static_cast<Eigen::Index>(taxonomy.size());
  BitMatrix t = BitMatrix::Zero(n, m);
  BitMatrix p = BitMatrix::Zero(n, m);
  auto fill = [&](BitMatrix& b, Eigen::Index row, const std::vector<LabelId>& ids) {
    for (const auto& id : ids) {
      auto idx = taxonomy.index_of(id);
      if (!idx) throw ValidationError(fmt::format("document '{}': unknown label '{}'", doc_ids[row], id));
      b(row, static_cast<Eigen::Index>(*idx)) = 1;
    }
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    fill(t, i, truth[i]);
    fill(p, i, pred[i]);
  }
  std::vector<LabelId> labels;
  for (const auto& l : taxonomy.labels()) labels.push_back(l.id);
  return PredictionSet(std::move(labels), doc_ids, std::move(t), std::move(p));
}

void PredictionSet::require_exclusive() const {
  const Eigen::VectorXi t = truth_.rowwise().sum();
  const Eigen::VectorXi p = pred_.rowwise().sum();
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    if (t(i) != 1) {
      throw ModeError(fmt::format("exclusive metrics need exactly one true label; document '{}' has {}",
                                  doc_ids_[i], t(i)));
    }
    if (p(i) > 1) {
      throw ModeError(
          fmt::format("exclusive metrics need at most one predicted label; document '{}' has {}", doc_ids_[i], p(i)));
    }
  }
}

ClassCounts ConfusionMatrix::class_counts() const {
  const auto m = counts.rows();
  ClassCounts c;
  c.n = n;
  const Eigen::VectorXi diag = counts.leftCols(m).diagonal();
  c.tp = diag;
  c.fp = counts.leftCols(m).colwise().sum().transpose() - diag;
  c.fn = counts.rowwise().sum() - diag;
  c.tn = Eigen::VectorXi::Constant(m, static_cast<int>(n)) - c.tp - c.fp - c.fn;
  return c;
}

ConfusionMatrix confusion_matrix(const PredictionSet& ps) {
  ps.require_exclusive();
  const auto m = static_cast<Eigen::Index>(ps.M());
  ConfusionMatrix cm;
  cm.n = ps.n();
  cm.counts = Eigen::MatrixXi::Zero(m, m + 1);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(ps.n()); ++i) {
    Eigen::Index t = 0;
    ps.truth().row(i).maxCoeff(&t);
    Eigen::Index p = m;
    if (ps.pred().row(i).sum() == 1) ps.pred().row(i).maxCoeff(&p);
    cm.counts(t, p) += 1;
  }
  return cm;
}

ClassCounts class_counts(const PredictionSet& ps) {
  ClassCounts c;
  c.n = ps.n();
  const auto& t = ps.truth();
  const auto& p = ps.pred();
  c.tp = (t.array() * p.array()).colwise().sum().transpose();
  c.fp = ((1 - t.array()) * p.array()).colwise().sum().transpose();
  c.fn = (t.array() * (1 - p.array())).colwise().sum().transpose();
  c.tn = ((1 - t.array()) * (1 - p.array())).colwise().sum().transpose();
  return c;
}

namespace {

Rate ratio(long num, long den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

template <typename F>
Aggregate macro(const ClassCounts& c, F per_class) {
  Aggregate a;
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t j = 0; j < c.classes(); ++j) {
    if (auto v = per_class(c, j)) {
      sum += *v;
      ++defined;
    } else {
      ++a.excluded;
    }
  }
  if (defined > 0) a.value = sum / static_cast<double>(defined);
  return a;
}

}  // namespace

Rate accuracy(const ConfusionMatrix& cm) { return ratio(cm.counts.leftCols(cm.counts.rows()).trace(), cm.n); }

Rate accuracy(const PredictionSet& ps) { return accuracy(confusion_matrix(ps)); }

Rate precision(const ClassCounts& c, std::size_t j) { return ratio(c.tp(j), c.tp(j) + c.fp(j)); }
Rate recall(const ClassCounts& c, std::size_t j) { return ratio(c.tp(j), c.tp(j) + c.fn(j)); }
Rate specificity(const ClassCounts& c, std::size_t j) { return ratio(c.tn(j), c.tn(j) + c.fp(j)); }

Rate balanced_accuracy(const ClassCounts& c, std::size_t j) {
  auto s = recall(c, j);
  auto sp = specificity(c, j);
  if (!s || !sp) return std::nullopt;
  return (*s + *sp) / 2.0;
}

Rate f1(const ClassCounts& c, std::size_t j) { return ratio(2L * c.tp(j), 2L * c.tp(j) + c.fp(j) + c.fn(j)); }

Aggregate macro_precision(const ClassCounts& c) { return macro(c, precision); }
Aggregate macro_recall(const ClassCounts& c) { return macro(c, recall); }
Aggregate macro_specificity(const ClassCounts& c) { return macro(c, specificity); }
Aggregate macro_balanced_accuracy(const ClassCounts& c) { return macro(c, balanced_accuracy); }
Aggregate macro_f1(const ClassCounts& c) { return macro(c, f1); }

Rate weighted_f1(const ClassCounts& c) {
  double sum = 0.0;
  long weight = 0;
  for (std::size_t j = 0; j < c.classes(); ++j) {
    auto v = f1(c, j);
    if (!v) continue;
    sum += *v * c.support(j);
    weight += c.support(j);
  }
  if (weight == 0) return std::nullopt;
  return sum / static_cast<double>(weight);
}

Rate hamming_loss(const PredictionSet& ps) {
  const long mismatches = (ps.truth().array() != ps.pred().array()).count();
  return ratio(mismatches, static_cast<long>(ps.n() * ps.M()));
}

Eigen::VectorXd hamming_per_doc(const PredictionSet& ps) {
  return (ps.truth().array() != ps.pred().array()).cast<double>().rowwise().sum() / static_cast<double>(ps.M());
}

Rate jaccard(const PredictionSet& ps, JaccardVariant variant) {
  if (ps.n() == 0) return std::nullopt;
  const Eigen::VectorXi inter = (ps.truth().array() * ps.pred().array()).rowwise().sum();
  if (variant == JaccardVariant::over_m) {
    return static_cast<double>(inter.sum()) / static_cast<double>(ps.n() * ps.M());
  }
  const Eigen::VectorXi uni = (ps.truth().array() + ps.pred().array() > 0).cast<int>().rowwise().sum();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < inter.size(); ++i) {
    sum += uni(i) == 0 ? 1.0 : static_cast<double>(inter(i)) / static_cast<double>(uni(i));
  }
  return sum / static_cast<double>(ps.n());
}

Rate at_least_one_correct(const PredictionSet& ps) {
  const Eigen::VectorXi inter = (ps.truth().array() * ps.pred().array()).rowwise().sum();
  const Eigen::VectorXi t = ps.truth().rowwise().sum();
  const Eigen::VectorXi p = ps.pred().rowwise().sum();
  long hits = 0;
  for (Eigen::Index i = 0; i < inter.size(); ++i) {
    if (inter(i) > 0 || (t(i) == 0 && p(i) == 0)) ++hits;
  }
  return ratio(hits, static_cast<long>(ps.n()));
}

int CountCrosstab::cell(std::size_t truth_size, std::size_t pred_size) const {
  const auto r = static_cast<Eigen::Index>(truth_size);
  const auto c = static_cast<Eigen::Index>(pred_size);
  if (r >= size_pairs.rows() || c >= size_pairs.cols()) return 0;
  return r == c ? exact(r) : size_pairs(r, c);
}

Rate CountCrosstab::percent(std::size_t truth_size, std::size_t pred_size) const {
  if (n == 0) return std::nullopt;
  return 100.0 * cell(truth_size, pred_size) / static_cast<double>(n);
}

Rate CountCrosstab::exact_match_accuracy() const { return ratio(exact_matches(), static_cast<long>(n)); }

CountCrosstab exact_count_crosstab(const PredictionSet& ps) {
  const auto m = static_cast<Eigen::Index>(ps.M());
  CountCrosstab x;
  x.n = ps.n();
  x.size_pairs = Eigen::MatrixXi::Zero(m + 1, m + 1);
  x.exact = Eigen::VectorXi::Zero(m + 1);
  const Eigen::VectorXi t = ps.truth().rowwise().sum();
  const Eigen::VectorXi p = ps.pred().rowwise().sum();
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    x.size_pairs(t(i), p(i)) += 1;
    if (ps.truth().row(i) == ps.pred().row(i)) x.exact(t(i)) += 1;
  }
  return x;
}

MetricsReport compute_report(const PredictionSet& ps, MetricsMode mode) {
  MetricsReport r;
  r.mode = mode;
  r.n = ps.n();
  r.M = ps.M();
  r.labels = ps.labels();
  ClassCounts c;
  if (mode == MetricsMode::exclusive) {
    r.confusion = confusion_matrix(ps);
    r.accuracy = accuracy(*r.confusion);
    r.unparsed = r.confusion->unparsed();
    c = r.confusion->class_counts();
  } else {
    c = class_counts(ps);
    r.jaccard_standard = jaccard(ps, JaccardVariant::standard);
    r.jaccard_over_m = jaccard(ps, JaccardVariant::over_m);
    r.at_least_one_correct = at_least_one_correct(ps);
    r.crosstab = exact_count_crosstab(ps);
  }
  r.hamming_loss = hamming_loss(ps);
  for (std::size_t j = 0; j < c.classes(); ++j) {
    r.per_class.push_back({ps.labels()[j], c.support(j), c.tp(j), c.fp(j), c.fn(j), c.tn(j), precision(c, j),
                           recall(c, j), specificity(c, j), balanced_accuracy(c, j), f1(c, j)});
  }
  r.macro_precision = macro_precision(c);
  r.macro_recall = macro_recall(c);
  r.macro_specificity = macro_specificity(c);
  r.macro_balanced_accuracy = macro_balanced_accuracy(c);
  r.macro_f1 = macro_f1(c);
  r.weighted_f1 = weighted_f1(c);
  return r;
}

std::string format_percent(const Rate& r) {
  if (!r) return "n/a";
  return fmt::format("{:.1f}", *r * 100.0);
}

namespace {

json rate_json(const Rate& r) { return r ? json(*r) : json(nullptr); }

json aggregate_json(const Aggregate& a) { return {{"value", rate_json(a.value)}, {"excluded_classes", a.excluded}}; }

json matrix_json(const Eigen::MatrixXi& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string pct_cell(const Rate& r) { return r ? fmt::format("{:.1f}", *r) : "n/a"; }

}  // namespace

json MetricsReport::to_json() const {
  json j{{"schema_version", schema_version}, {"mode", to_string(mode)}, {"n", n},
         {"M", M},                           {"labels", labels},        {"metadata", metadata}};
  j["accuracy"] = rate_json(accuracy);
  j["unparsed"] = unparsed;
  j["macro"] = {{"precision", aggregate_json(macro_precision)},
                {"recall", aggregate_json(macro_recall)},
                {"sensitivity", aggregate_json(macro_recall)},
                {"specificity", aggregate_json(macro_specificity)},
                {"balanced_accuracy", aggregate_json(macro_balanced_accuracy)},
                {"f1", aggregate_json(macro_f1)}};
  j["weighted_f1"] = rate_json(weighted_f1);
  j["hamming_loss"] = rate_json(hamming_loss);
  json pc = json::array();
  for (const auto& c : per_class) {
    pc.push_back({{"label", c.label},
                  {"support", c.support},
                  {"tp", c.tp},
                  {"fp", c.fp},
                  {"fn", c.fn},
                  {"tn", c.tn},
                  {"precision", rate_json(c.precision)},
                  {"recall", rate_json(c.recall)},
                  {"specificity", rate_json(c.specificity)},
                  {"balanced_accuracy", rate_json(c.balanced_accuracy)},
                  {"f1", rate_json(c.f1)}});
  }
  j["per_class"] = std::move(pc);
  if (mode == MetricsMode::multilabel) {
    j["jaccard"] = {{"standard", rate_json(jaccard_standard)}, {"over_m", rate_json(jaccard_over_m)}};
    j["at_least_one_correct"] = rate_json(at_least_one_correct);
  }
  if (confusion) {
    j["confusion_matrix"] = {{"counts", matrix_json(confusion->counts)},
                             {"columns", "labels followed by UNPARSED"}};
  }
  if (crosstab) {
    j["crosstab"] = {{"size_pairs", matrix_json(crosstab->size_pairs)},
                     {"exact", matrix_json(crosstab->exact)},
                     {"exact_match_accuracy", rate_json(crosstab->exact_match_accuracy())}};
  }
  return j;
}

std::string MetricsReport::to_markdown(const std::string& title) const {
  std::string out;
  if (!title.empty()) out += fmt::format("## {}\n\n", title);
  if (mode == MetricsMode::exclusive) {
    out += "| Size | Accuracy | F1 | Balanced Accuracy | Sensitivity | Specificity |\n";
    out += "|---:|---:|---:|---:|---:|---:|\n";
    out += fmt::format("| {} | {} | {} | {} | {} | {} |\n", n, format_percent(accuracy),
                       format_percent(macro_f1.value), format_percent(macro_balanced_accuracy.value),
                       format_percent(macro_recall.value), format_percent(macro_specificity.value));
    out += fmt::format("\nWeighted F1: {}. Unparsed predictions: {}.\n", format_percent(weighted_f1), unparsed);
  } else {
    out += "| Size | % at least one correct | Hamming loss | Jaccard | Jaccard (over M) |\n";
    out += "|---:|---:|---:|---:|---:|\n";
    out += fmt::format("| {} | {} | {} | {} | {} |\n", n, format_percent(at_least_one_correct),
                       format_percent(hamming_loss), format_percent(jaccard_standard), format_percent(jaccard_over_m));
  }
  std::size_t undefined = macro_balanced_accuracy.excluded;
  if (undefined > 0) out += fmt::format("\n{} classes excluded from macro averages (undefined).\n", undefined);

  out += "\n| Label | Support | Precision | Sensitivity | Specificity | Balanced Accuracy | F1 |\n";
  out += "|---|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& c : per_class) {
    out += fmt::format("| {} | {} | {} | {} | {} | {} | {} |\n", c.label, c.support, format_percent(c.precision),
                       format_percent(c.recall), format_percent(c.specificity), format_percent(c.balanced_accuracy),
                       format_percent(c.f1));
  }

  if (crosstab) {
    const std::size_t shown = std::min<std::size_t>(4, M);
    out += "\n| True \\ Predicted |";
    for (std::size_t c = 1; c <= shown; ++c) out += fmt::format(" {} |", c);
    out += "\n|---|";
    for (std::size_t c = 1; c <= shown; ++c) out += "---:|";
    out += "\n";
    for (std::size_t r = 1; r <= shown; ++r) {
      out += fmt::format("| {} |", r);
      for (std::size_t c = 1; c <= shown; ++c) out += fmt::format(" {} |", pct_cell(crosstab->percent(r, c)));
      out += "\n";
    }
    out += fmt::format("\nExact-match accuracy: {}%.\n", format_percent(crosstab->exact_match_accuracy()));
  }
  return out;
}

}  // namespace labelforge
