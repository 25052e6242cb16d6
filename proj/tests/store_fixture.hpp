#pragma once

#include "labelforge/store.hpp"
#include "support.hpp"

namespace lf_test {

inline std::shared_ptr<const labelforge::Taxonomy> abc_taxonomy(bool exclusive = false) {
  return std::make_shared<const labelforge::Taxonomy>(
      "abc", std::vector<labelforge::Label>{{"a", "A", "", ""}, {"b", "B", "", ""}, {"c", "C", "", ""}}, exclusive);
}

/// Three documents, candidates {a, b} on each, coders x and y both
/// assigned every document. Returns the project id; tokens go to `tokens`.
inline std::string seed_review_project(labelforge::Store& store, std::map<std::string, std::string>& tokens,
                                       bool exclusive = false) {
  using namespace labelforge;
  auto tax = abc_taxonomy(exclusive);
  const auto project = store.create_project("demo", *tax);
  std::vector<Document> docs;
  std::vector<CrowdResult> crowd;
  for (int i = 0; i < 3; ++i) {
    const std::string id = "d" + std::to_string(i);
    docs.push_back({id, "text " + id, std::nullopt, ""});
    CrowdResult r;
    r.doc_id = id;
    for (const std::string l : {"a", "b"}) {
      r.candidates.push_back({id, l, {{"m/zero_shot", "m", StrategyKind::zero_shot, {}, false}}, ""});
    }
    crowd.push_back(r);
  }
  store.put_corpus(project, Corpus(tax, docs));
  store.put_candidates(project, crowd);
  std::vector<Assignment> as;
  for (const std::string c : {"x", "y"}) {
    tokens[c] = store.add_coder(project, {c, "Coder " + c, CoderRole::trained});
    for (const auto& d : docs) as.push_back({c, d.id, AssignmentStatus::pending, ""});
  }
  store.put_assignments(project, as);
  return project;
}

}  // namespace lf_test
