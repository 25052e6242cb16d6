#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "labelforge/corpus.hpp"

namespace labelforge {

enum class CoderRole { expert, trained, crowd };

struct Coder {
  std::string id;
  std::string display_name;
  CoderRole role = CoderRole::trained;
};

enum class AssignmentStatus { pending, submitted };

struct Assignment {
  std::string coder_id;
  std::string doc_id;
  AssignmentStatus status = AssignmentStatus::pending;
  std::string assigned_at;
};

enum class Decision { keep, reject };

std::string_view to_string(CoderRole r);
std::string_view to_string(AssignmentStatus s);
std::string_view to_string(Decision d);
CoderRole coder_role_from_string(std::string_view s);
Decision decision_from_string(std::string_view s);

using DecisionMap = std::map<LabelId, Decision>;

struct VerificationRecord {
  std::string id;
  std::string coder_id;
  std::string doc_id;
  DecisionMap decisions;
  /// The coder flagged that no candidate applies (all decisions are reject).
  bool none_apply = false;
  std::string submitted_at;
  /// Record this one corrects; records are never edited in place.
  std::optional<std::string> supersedes;

  std::vector<LabelId> kept() const;
  nlohmann::json to_json() const;
  static VerificationRecord from_json(const nlohmann::json& j);
};

enum class ResolutionPolicy { any_reject_drops, majority_reject_drops, unanimous_keep };

std::string_view to_string(ResolutionPolicy p);
ResolutionPolicy resolution_policy_from_string(std::string_view s);

struct ResolvedDocument {
  std::string doc_id;
  std::vector<LabelId> surviving_labels;
  ResolutionPolicy policy = ResolutionPolicy::any_reject_drops;
  std::vector<std::string> contributing_records;
  /// More than one survivor on an exclusive taxonomy; needs adjudication.
  bool conflict = false;

  nlohmann::json to_json(const std::string& text = {}) const;
  static ResolvedDocument from_json(const nlohmann::json& j);
};

/// Deterministic given the seed. ceil(overlap_fraction * n) randomly chosen
/// documents go to two coders, the rest to one; load is balanced by always
/// picking the least-loaded coders.
std::vector<Assignment> assign(std::span<const std::string> doc_ids, std::span<const Coder> coders,
                               double overlap_fraction, std::size_t per_coder_cap, std::uint64_t seed);
std::vector<Assignment> assign(const Corpus& corpus, std::span<const Coder> coders, double overlap_fraction,
                               std::size_t per_coder_cap, std::uint64_t seed);

/// Decisions must cover exactly the candidate set shown to the coder.
void validate_decisions(std::span<const LabelId> candidates, const DecisionMap& decisions, bool none_apply);

/// Applies a policy to the current (non-superseded) records of one document.
ResolvedDocument resolve_records(const std::string& doc_id, std::span<const LabelId> candidates,
                                 std::span<const VerificationRecord> records, ResolutionPolicy policy,
                                 const Taxonomy& taxonomy);

/// In-memory verification state: candidates, assignments and the
/// append-only review log. Thread-safe.
class ReviewBook {
 public:
  explicit ReviewBook(std::shared_ptr<const Taxonomy> taxonomy);

  void set_candidates(const std::string& doc_id, std::vector<LabelId> labels);
  std::vector<LabelId> candidates(const std::string& doc_id) const;
  void add_assignments(std::span<const Assignment> assignments);
  std::vector<Assignment> assignments() const;

  /// Throws ValidationError for partial decisions, ConflictError when the
  /// assignment was already submitted and `supersede` is false.
  VerificationRecord submit_review(const std::string& coder_id, const std::string& doc_id, DecisionMap decisions,
                                   bool none_apply = false, bool supersede = false);

  /// Throws NotReadyError while any assignment of the document is pending.
  ResolvedDocument resolve(const std::string& doc_id, ResolutionPolicy policy) const;

  /// Latest record per coder for the document.
  std::vector<VerificationRecord> current_records(const std::string& doc_id) const;
  std::vector<VerificationRecord> all_current_records() const;
  std::vector<VerificationRecord> log() const;

 private:
  std::shared_ptr<const Taxonomy> taxonomy_;
  mutable std::mutex mu_;
  std::map<std::string, std::vector<LabelId>> candidates_;
  std::map<std::pair<std::string, std::string>, Assignment> assignments_;  // (coder, doc)
  std::vector<VerificationRecord> log_;
  std::size_t next_id_ = 1;
};

// -------------------------------------------------------------- Reliability

struct KappaResult {
  /// Absent when chance agreement is total (degenerate marginals) or there
  /// is nothing to compare; `reason` says which.
  std::optional<double> kappa;
  double observed = 0.0;
  double expected = 0.0;
  std::size_t items = 0;
  std::string reason;

  bool defined() const { return kappa.has_value(); }
  std::optional<double> percent() const;
  nlohmann::json to_json() const;
};

/// Unweighted Cohen's kappa from a square agreement table (rows: rater A).
KappaResult cohen_kappa(const Eigen::MatrixXd& table);
KappaResult cohen_kappa(std::span<const std::string> rater_a, std::span<const std::string> rater_b);

/// Fleiss' kappa from an item x category count matrix; every row must sum
/// to the same number of raters r >= 2.
KappaResult fleiss_kappa(const Eigen::MatrixXi& counts);
/// One vector of category ratings per item. Items with a different rater
/// count than the first raise ValidationError naming them.
KappaResult fleiss_kappa(std::span<const std::string> item_ids, std::span<const std::vector<std::string>> ratings);

/// A coder's kept set reduced to one category: the label, "(none)" or
/// "(conflict)".
std::string reduce_to_category(const VerificationRecord& record);

/// Inter-coder agreement between two coders over documents both reviewed.
KappaResult cohen_kappa(std::span<const VerificationRecord> records, const std::string& coder_a,
                        const std::string& coder_b);

KappaResult fleiss_kappa(std::span<const VerificationRecord> records, std::span<const std::string> doc_ids);

struct LabelKappa {
  std::vector<std::pair<LabelId, KappaResult>> per_label;
  std::optional<double> macro;
  std::size_t undefined = 0;
};

/// Binary keep/reject agreement per candidate label, plus the macro average
/// over labels where kappa is defined.
LabelKappa per_label_kappa(std::span<const VerificationRecord> records, const std::string& coder_a,
                           const std::string& coder_b);

}  // namespace labelforge

namespace labelforge {

/// Agreement statistics over current review records: Cohen per coder pair
/// (plus per-label kappa on multi-label taxonomies) and Fleiss over the
/// documents sharing the most common rater count.
nlohmann::json reliability_report(std::span<const VerificationRecord> records, const Taxonomy& taxonomy);

}  // namespace labelforge
