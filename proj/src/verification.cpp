#include "labelforge/verification.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "labelforge/error.hpp"
#include "labelforge/util.hpp"

namespace labelforge {

using nlohmann::json;

std::string_view to_string(CoderRole r) {
  switch (r) {
    case CoderRole::expert: return "expert";
    case CoderRole::trained: return "trained";
    case CoderRole::crowd: return "crowd";
  }
  return "trained";
}

std::string_view to_string(AssignmentStatus s) { return s == AssignmentStatus::pending ? "pending" : "submitted"; }

std::string_view to_string(Decision d) { return d == Decision::keep ? "keep" : "reject"; }

CoderRole coder_role_from_string(std::string_view s) {
  if (s == "expert") return CoderRole::expert;
  if (s == "trained") return CoderRole::trained;
  if (s == "crowd") return CoderRole::crowd;
  throw ValidationError(fmt::format("unknown coder role '{}'", s));
}

Decision decision_from_string(std::string_view s) {
  if (s == "keep") return Decision::keep;
  if (s == "reject") return Decision::reject;
  throw ValidationError(fmt::format("unknown decision '{}' (expected keep or reject)", s));
}

std::string_view to_string(ResolutionPolicy p) {
  switch (p) {
    case ResolutionPolicy::any_reject_drops: return "any_reject_drops";
    case ResolutionPolicy::majority_reject_drops: return "majority_reject_drops";
    case ResolutionPolicy::unanimous_keep: return "unanimous_keep";
  }
  return "any_reject_drops";
}

ResolutionPolicy resolution_policy_from_string(std::string_view s) {
  if (s == "any_reject_drops") return ResolutionPolicy::any_reject_drops;
  if (s == "majority_reject_drops") return ResolutionPolicy::majority_reject_drops;
  if (s == "unanimous_keep") return ResolutionPolicy::unanimous_keep;
  throw ValidationError(fmt::format("unknown resolution policy '{}'", s));
}

std::vector<LabelId> VerificationRecord::kept() const {
  std::vector<LabelId> out;
  for (const auto& [label, d] : decisions) {
    if (d == Decision::keep) out.push_back(label);
  }
  return out;
}

json VerificationRecord::to_json() const {
  json d = json::object();
  for (const auto& [label, dec] : decisions) d[label] = to_string(dec);
  json j{{"id", id},       {"coder_id", coder_id},          {"doc_id", doc_id},
         {"decisions", d}, {"none_apply", none_apply},      {"submitted_at", submitted_at}};
  j["supersedes"] = supersedes ? json(*supersedes) : json(nullptr);
  return j;
}

VerificationRecord VerificationRecord::from_json(const json& j) {
  VerificationRecord r;
  r.id = j.value("id", std::string{});
  r.coder_id = j.at("coder_id").get<std::string>();
  r.doc_id = j.at("doc_id").get<std::string>();
  for (const auto& [label, dec] : j.at("decisions").items()) r.decisions[label] = decision_from_string(dec.get<std::string>());
  r.none_apply = j.value("none_apply", false);
  r.submitted_at = j.value("submitted_at", std::string{});
  if (j.contains("supersedes") && !j["supersedes"].is_null()) r.supersedes = j["supersedes"].get<std::string>();
  return r;
}

json ResolvedDocument::to_json(const std::string& text) const {
  json j{{"doc_id", doc_id},
         {"surviving_labels", surviving_labels},
         {"policy", to_string(policy)},
         {"records", contributing_records},
         {"conflict", conflict}};
  if (!text.empty()) j["text"] = text;
  return j;
}

ResolvedDocument ResolvedDocument::from_json(const json& j) {
  ResolvedDocument r;
  r.doc_id = j.at("doc_id").get<std::string>();
  r.surviving_labels = j.at("surviving_labels").get<std::vector<std::string>>();
  r.policy = resolution_policy_from_string(j.value("policy", std::string{"any_reject_drops"}));
  r.contributing_records = j.value("records", std::vector<std::string>{});
  r.conflict = j.value("conflict", false);
  return r;
}

// -------------------------------------------------------------- Assignment

std::vector<Assignment> assign(std::span<const std::string> doc_ids, std::span<const Coder> coders,
                               double overlap_fraction, std::size_t per_coder_cap, std::uint64_t seed) {
  if (coders.empty()) throw SizingError("assignment needs at least one coder");
  if (!(overlap_fraction >= 0.0 && overlap_fraction <= 1.0)) {
    throw ValidationError(fmt::format("overlap fraction must be in [0,1], got {}", overlap_fraction));
  }
  std::set<std::string> ids;
  for (const auto& c : coders) {
    if (!ids.insert(c.id).second) throw ValidationError(fmt::format("duplicate coder id '{}'", c.id));
  }
  const std::size_t n = doc_ids.size();
  const auto n_overlap =
      static_cast<std::size_t>(std::ceil(overlap_fraction * static_cast<double>(n) - 1e-9));
  if (n_overlap > 0 && coders.size() < 2) {
    throw SizingError(fmt::format("{} overlap documents need at least 2 coders, have 1", n_overlap));
  }
  const std::size_t slots = n + n_overlap;
  const std::size_t capacity = per_coder_cap * coders.size();
  if (capacity < slots) {
    throw SizingError(fmt::format("{} documents + {} overlap = {} slots, but {} coders x cap {} = {}", n, n_overlap,
                                  slots, coders.size(), per_coder_cap, capacity));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  SeededRng rng(seed);
  rng.shuffle(order);

  std::vector<std::size_t> load(coders.size(), 0);
  auto least_loaded = [&](std::optional<std::size_t> exclude) {
    std::size_t best = coders.size();
    for (std::size_t c = 0; c < coders.size(); ++c) {
      if (exclude && *exclude == c) continue;
      if (best == coders.size() || load[c] < load[best]) best = c;
    }
    return best;
  };

  const auto now = utc_timestamp();
  std::vector<Assignment> out;
  out.reserve(slots);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& doc = doc_ids[order[k]];
    const auto first = least_loaded(std::nullopt);
    ++load[first];
    out.push_back({coders[first].id, doc, AssignmentStatus::pending, now});
    if (k < n_overlap) {
      const auto second = least_loaded(first);
      ++load[second];
      out.push_back({coders[second].id, doc, AssignmentStatus::pending, now});
    }
  }
  for (std::size_t c = 0; c < coders.size(); ++c) {
    if (load[c] > per_coder_cap) throw SizingError(fmt::format("coder '{}' over cap", coders[c].id));
  }
  return out;
}

std::vector<Assignment> assign(const Corpus& corpus, std::span<const Coder> coders, double overlap_fraction,
                               std::size_t per_coder_cap, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(corpus.size());
  for (const auto& d : corpus.documents()) ids.push_back(d.id);
  return assign(ids, coders, overlap_fraction, per_coder_cap, seed);
}

// ------------------------------------------------------------------ Review

void validate_decisions(std::span<const LabelId> candidates, const DecisionMap& decisions, bool none_apply) {
  std::vector<std::string> missing;
  std::vector<std::string> extra;
  for (const auto& c : candidates) {
    if (!decisions.count(c)) missing.push_back(c);
  }
  const std::set<LabelId> shown(candidates.begin(), candidates.end());
  for (const auto& [label, d] : decisions) {
    if (!shown.count(label)) extra.push_back(label);
  }
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "decisions must cover exactly the candidates shown";
    if (!missing.empty()) msg += fmt::format("; missing: {}", fmt::join(missing, ", "));
    if (!extra.empty()) msg += fmt::format("; not candidates: {}", fmt::join(extra, ", "));
    throw ValidationError(msg);
  }
  if (none_apply) {
    for (const auto& [label, d] : decisions) {
      if (d == Decision::keep) throw ValidationError(fmt::format("none_apply set but '{}' is kept", label));
    }
  }
}

ResolvedDocument resolve_records(const std::string& doc_id, std::span<const LabelId> candidates,
                                 std::span<const VerificationRecord> records, ResolutionPolicy policy,
                                 const Taxonomy& taxonomy) {
  ResolvedDocument out;
  out.doc_id = doc_id;
  out.policy = policy;
  for (const auto& r : records) out.contributing_records.push_back(r.id);

  std::vector<LabelId> survivors;
  for (const auto& label : candidates) {
    std::size_t covering = 0;
    std::size_t rejects = 0;
    for (const auto& r : records) {
      auto it = r.decisions.find(label);
      if (it == r.decisions.end()) continue;
      ++covering;
      if (it->second == Decision::reject) ++rejects;
    }
    bool keep = false;
    switch (policy) {
      case ResolutionPolicy::any_reject_drops:
        keep = rejects == 0;
        break;
      case ResolutionPolicy::majority_reject_drops:
        keep = 2 * rejects <= covering;
        break;
      case ResolutionPolicy::unanimous_keep:
        // Every record must have explicitly kept it.
        keep = covering == records.size() && rejects == 0 && covering > 0;
        break;
    }
    if (keep) survivors.push_back(label);
  }
  out.surviving_labels = taxonomy.canonicalize(survivors);
  out.conflict = taxonomy.exclusive() && out.surviving_labels.size() > 1;
  return out;
}

ReviewBook::ReviewBook(std::shared_ptr<const Taxonomy> taxonomy) : taxonomy_(std::move(taxonomy)) {}

void ReviewBook::set_candidates(const std::string& doc_id, std::vector<LabelId> labels) {
  auto canon = taxonomy_->canonicalize(labels);
  std::lock_guard lock(mu_);
  candidates_[doc_id] = std::move(canon);
}

std::vector<LabelId> ReviewBook::candidates(const std::string& doc_id) const {
  std::lock_guard lock(mu_);
  auto it = candidates_.find(doc_id);
  return it == candidates_.end() ? std::vector<LabelId>{} : it->second;
}

void ReviewBook::add_assignments(std::span<const Assignment> assignments) {
  std::lock_guard lock(mu_);
  for (const auto& a : assignments) {
    if (!assignments_.emplace(std::pair{a.coder_id, a.doc_id}, a).second) {
      throw ConflictError(fmt::format("coder '{}' already assigned to '{}'", a.coder_id, a.doc_id));
    }
  }
}

std::vector<Assignment> ReviewBook::assignments() const {
  std::lock_guard lock(mu_);
  std::vector<Assignment> out;
  out.reserve(assignments_.size());
  for (const auto& [k, a] : assignments_) out.push_back(a);
  return out;
}

VerificationRecord ReviewBook::submit_review(const std::string& coder_id, const std::string& doc_id,
                                             DecisionMap decisions, bool none_apply, bool supersede) {
  std::lock_guard lock(mu_);
  auto it = assignments_.find({coder_id, doc_id});
  if (it == assignments_.end()) {
    throw ValidationError(fmt::format("coder '{}' has no assignment for '{}'", coder_id, doc_id));
  }
  const auto cand_it = candidates_.find(doc_id);
  const std::vector<LabelId> shown = cand_it == candidates_.end() ? std::vector<LabelId>{} : cand_it->second;
  if (none_apply && decisions.empty()) {
    for (const auto& c : shown) decisions[c] = Decision::reject;
  }
  validate_decisions(shown, decisions, none_apply);

  std::optional<std::string> previous;
  if (it->second.status == AssignmentStatus::submitted) {
    if (!supersede) {
      throw ConflictError(fmt::format("coder '{}' already submitted '{}'; resubmit as a superseding record",
                                      coder_id, doc_id));
    }
    for (auto r = log_.rbegin(); r != log_.rend(); ++r) {
      if (r->coder_id == coder_id && r->doc_id == doc_id) {
        previous = r->id;
        break;
      }
    }
  }
  VerificationRecord rec{fmt::format("r{}", next_id_++), coder_id, doc_id, std::move(decisions), none_apply,
                         utc_timestamp(), previous};
  log_.push_back(rec);
  it->second.status = AssignmentStatus::submitted;
  return rec;
}

namespace {

std::vector<VerificationRecord> latest_per_coder(std::span<const VerificationRecord> log, const std::string& doc_id) {
  std::map<std::string, const VerificationRecord*> latest;
  for (const auto& r : log) {
    if (r.doc_id == doc_id) latest[r.coder_id] = &r;
  }
  std::vector<VerificationRecord> out;
  for (const auto& [c, r] : latest) out.push_back(*r);
  return out;
}

}  // namespace

std::vector<VerificationRecord> ReviewBook::current_records(const std::string& doc_id) const {
  std::lock_guard lock(mu_);
  return latest_per_coder(log_, doc_id);
}

std::vector<VerificationRecord> ReviewBook::all_current_records() const {
  std::lock_guard lock(mu_);
  std::map<std::pair<std::string, std::string>, const VerificationRecord*> latest;
  for (const auto& r : log_) latest[{r.doc_id, r.coder_id}] = &r;
  std::vector<VerificationRecord> out;
  for (const auto& [k, r] : latest) out.push_back(*r);
  return out;
}

std::vector<VerificationRecord> ReviewBook::log() const {
  std::lock_guard lock(mu_);
  return log_;
}

ResolvedDocument ReviewBook::resolve(const std::string& doc_id, ResolutionPolicy policy) const {
  std::vector<LabelId> shown;
  std::vector<VerificationRecord> records;
  {
    std::lock_guard lock(mu_);
    std::vector<std::string> pending;
    bool any = false;
    for (const auto& [key, a] : assignments_) {
      if (a.doc_id != doc_id) continue;
      any = true;
      if (a.status == AssignmentStatus::pending) pending.push_back(a.coder_id);
    }
    if (!any) throw NotReadyError(fmt::format("document '{}' has no assignments", doc_id));
    if (!pending.empty()) {
      throw NotReadyError(fmt::format("document '{}' still pending for {}", doc_id, fmt::join(pending, ", ")));
    }
    if (auto it = candidates_.find(doc_id); it != candidates_.end()) shown = it->second;
    records = latest_per_coder(log_, doc_id);
  }
  return resolve_records(doc_id, shown, records, policy, *taxonomy_);
}

// -------------------------------------------------------------- Reliability

std::optional<double> KappaResult::percent() const {
  if (!kappa) return std::nullopt;
  return *kappa * 100.0;
}

json KappaResult::to_json() const {
  json j{{"defined", defined()}, {"observed", observed}, {"expected", expected}, {"items", items}};
  j["kappa"] = kappa ? json(*kappa) : json(nullptr);
  j["percent"] = kappa ? json(*kappa * 100.0) : json(nullptr);
  if (!reason.empty()) j["reason"] = reason;
  return j;
}

namespace {

// Chance agreement this close to 1 leaves kappa without a denominator.
constexpr double kDegenerate = 1e-12;

KappaResult finish_kappa(double p_o, double p_e, std::size_t items) {
  KappaResult r;
  r.observed = p_o;
  r.expected = p_e;
  r.items = items;
  if (p_e >= 1.0 - kDegenerate) {
    r.reason = "chance agreement is 1 (degenerate marginals)";
    return r;
  }
  r.kappa = std::clamp((p_o - p_e) / (1.0 - p_e), -1.0, 1.0);
  return r;
}

}  // namespace

KappaResult cohen_kappa(const Eigen::MatrixXd& table) {
  if (table.rows() != table.cols()) throw ValidationError("agreement table must be square");
  const double n = table.sum();
  if (n <= 0.0) {
    KappaResult r;
    r.reason = "no shared items";
    return r;
  }
  const double p_o = table.trace() / n;
  const Eigen::VectorXd rows = table.rowwise().sum() / n;
  const Eigen::VectorXd cols = table.colwise().sum().transpose() / n;
  return finish_kappa(p_o, rows.dot(cols), static_cast<std::size_t>(std::llround(n)));
}

KappaResult cohen_kappa(std::span<const std::string> rater_a, std::span<const std::string> rater_b) {
  if (rater_a.size() != rater_b.size()) throw ValidationError("raters must rate the same items");
  std::map<std::string, Eigen::Index> cats;
  for (const auto& c : rater_a) cats.emplace(c, 0);
  for (const auto& c : rater_b) cats.emplace(c, 0);
  Eigen::Index k = 0;
  for (auto& [c, idx] : cats) idx = k++;
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(k, k);
  for (std::size_t i = 0; i < rater_a.size(); ++i) table(cats[rater_a[i]], cats[rater_b[i]]) += 1.0;
  return cohen_kappa(table);
}

KappaResult fleiss_kappa(const Eigen::MatrixXi& counts) {
  const auto items = counts.rows();
  if (items == 0) {
    KappaResult r;
    r.reason = "no items";
    return r;
  }
  if ((counts.array() < 0).any()) throw ValidationError("rating counts must be non-negative");
  const Eigen::VectorXi per_item = counts.rowwise().sum();
  const int r = per_item(0);
  std::vector<std::string> offenders;
  for (Eigen::Index i = 0; i < items; ++i) {
    if (per_item(i) != r) offenders.push_back(fmt::format("item {} has {} ratings", i, per_item(i)));
  }
  if (!offenders.empty()) {
    throw ValidationError(fmt::format("unequal rater counts (expected {}): {}", r, fmt::join(offenders, "; ")));
  }
  if (r < 2) throw ValidationError(fmt::format("Fleiss kappa needs at least 2 ratings per item, got {}", r));

  const Eigen::MatrixXd c = counts.cast<double>();
  const double total = static_cast<double>(items) * r;
  const Eigen::VectorXd p_cat = c.colwise().sum().transpose() / total;
  const Eigen::VectorXd agreement =
      (c.array().square().rowwise().sum() - static_cast<double>(r)) / (static_cast<double>(r) * (r - 1));
  return finish_kappa(agreement.mean(), p_cat.squaredNorm(), static_cast<std::size_t>(items));
}

KappaResult fleiss_kappa(std::span<const std::string> item_ids, std::span<const std::vector<std::string>> ratings) {
  if (item_ids.size() != ratings.size()) throw ValidationError("one rating list per item required");
  if (ratings.empty()) return fleiss_kappa(Eigen::MatrixXi(0, 0));
  const auto r = ratings.front().size();
  std::vector<std::string> offenders;
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    if (ratings[i].size() != r) offenders.push_back(fmt::format("{} ({} raters)", item_ids[i], ratings[i].size()));
  }
  if (!offenders.empty()) {
    throw ValidationError(fmt::format("unequal rater counts (expected {}): {}", r, fmt::join(offenders, ", ")));
  }
  std::map<std::string, Eigen::Index> cats;
  for (const auto& item : ratings) {
    for (const auto& c : item) cats.emplace(c, 0);
  }
  Eigen::Index k = 0;
  for (auto& [c, idx] : cats) idx = k++;
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(ratings.size()), k);
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    for (const auto& c : ratings[i]) counts(static_cast<Eigen::Index>(i), cats[c]) += 1;
  }
  return fleiss_kappa(counts);
}

std::string reduce_to_category(const VerificationRecord& record) {
  const auto kept = record.kept();
  if (record.none_apply || kept.empty()) return "(none)";
  if (kept.size() > 1) return "(conflict)";
  return kept.front();
}

namespace {

std::map<std::string, const VerificationRecord*> latest_for_coder(std::span<const VerificationRecord> records,
                                                                  const std::string& coder) {
  std::map<std::string, const VerificationRecord*> out;
  for (const auto& r : records) {
    if (r.coder_id == coder) out[r.doc_id] = &r;
  }
  return out;
}

}  // namespace

KappaResult cohen_kappa(std::span<const VerificationRecord> records, const std::string& coder_a,
                        const std::string& coder_b) {
  const auto a = latest_for_coder(records, coder_a);
  const auto b = latest_for_coder(records, coder_b);
  std::vector<std::string> ra;
  std::vector<std::string> rb;
  for (const auto& [doc, rec] : a) {
    auto it = b.find(doc);
    if (it == b.end()) continue;
    ra.push_back(reduce_to_category(*rec));
    rb.push_back(reduce_to_category(*it->second));
  }
  return cohen_kappa(ra, rb);
}

KappaResult fleiss_kappa(std::span<const VerificationRecord> records, std::span<const std::string> doc_ids) {
  std::map<std::string, std::map<std::string, const VerificationRecord*>> by_doc;
  for (const auto& r : records) by_doc[r.doc_id][r.coder_id] = &r;
  std::vector<std::vector<std::string>> ratings;
  for (const auto& doc : doc_ids) {
    std::vector<std::string> item;
    for (const auto& [coder, rec] : by_doc[doc]) item.push_back(reduce_to_category(*rec));
    ratings.push_back(std::move(item));
  }
  return fleiss_kappa(doc_ids, ratings);
}

LabelKappa per_label_kappa(std::span<const VerificationRecord> records, const std::string& coder_a,
                           const std::string& coder_b) {
  const auto a = latest_for_coder(records, coder_a);
  const auto b = latest_for_coder(records, coder_b);
  std::map<LabelId, std::pair<std::vector<std::string>, std::vector<std::string>>> votes;
  for (const auto& [doc, ra] : a) {
    auto it = b.find(doc);
    if (it == b.end()) continue;
    for (const auto& [label, da] : ra->decisions) {
      auto db = it->second->decisions.find(label);
      if (db == it->second->decisions.end()) continue;
      votes[label].first.emplace_back(to_string(da));
      votes[label].second.emplace_back(to_string(db->second));
    }
  }
  LabelKappa out;
  double sum = 0.0;
  std::size_t defined = 0;
  for (const auto& [label, v] : votes) {
    auto k = cohen_kappa(v.first, v.second);
    if (k.defined()) {
      sum += *k.kappa;
      ++defined;
    } else {
      ++out.undefined;
    }
    out.per_label.emplace_back(label, std::move(k));
  }
  if (defined > 0) out.macro = sum / static_cast<double>(defined);
  return out;
}

}  // namespace labelforge

namespace labelforge {

json reliability_report(std::span<const VerificationRecord> records, const Taxonomy& taxonomy) {
  std::map<std::string, std::map<std::string, const VerificationRecord*>> by_doc;
  std::set<std::string> coders;
  for (const auto& r : records) {
    by_doc[r.doc_id][r.coder_id] = &r;
    coders.insert(r.coder_id);
  }
  json pairs = json::array();
  const std::vector<std::string> ids(coders.begin(), coders.end());
  for (std::size_t a = 0; a < ids.size(); ++a) {
    for (std::size_t b = a + 1; b < ids.size(); ++b) {
      std::size_t shared = 0;
      for (const auto& [doc, raters] : by_doc) shared += raters.count(ids[a]) && raters.count(ids[b]);
      if (shared == 0) continue;
      json p{{"coder_a", ids[a]}, {"coder_b", ids[b]}, {"shared_documents", shared}};
      p["cohen"] = cohen_kappa(records, ids[a], ids[b]).to_json();
      if (!taxonomy.exclusive()) {
        const auto lk = per_label_kappa(records, ids[a], ids[b]);
        json per = json::object();
        for (const auto& [label, k] : lk.per_label) per[label] = k.to_json();
        p["per_label"] = std::move(per);
        p["per_label_macro"] = lk.macro ? json(*lk.macro) : json(nullptr);
        p["per_label_undefined"] = lk.undefined;
      }
      pairs.push_back(std::move(p));
    }
  }

  // Fleiss needs a constant rater count; use the most common one among
  // documents rated at least twice.
  std::map<std::size_t, std::vector<std::string>> by_count;
  for (const auto& [doc, raters] : by_doc) {
    if (raters.size() >= 2) by_count[raters.size()].push_back(doc);
  }
  json fleiss = nullptr;
  if (!by_count.empty()) {
    auto best = std::max_element(by_count.begin(), by_count.end(),
                                 [](const auto& x, const auto& y) { return x.second.size() < y.second.size(); });
    fleiss = fleiss_kappa(records, best->second).to_json();
    fleiss["raters"] = best->first;
  }

  json overall;
  if (pairs.size() == 1) {
    overall = pairs.front()["cohen"];
    overall["statistic"] = "cohen";
  } else if (!fleiss.is_null()) {
    overall = fleiss;
    overall["statistic"] = "fleiss";
  } else {
    overall = KappaResult{std::nullopt, 0.0, 0.0, 0, "no overlapping reviews"}.to_json();
    overall["statistic"] = "none";
  }
  return {{"exclusive", taxonomy.exclusive()},
          {"coders", ids},
          {"overall", overall},
          {"pairs", pairs},
          {"fleiss", fleiss}};
}

}  // namespace labelforge
