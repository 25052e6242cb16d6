#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "labelforge/corpus.hpp"
#include "labelforge/gateway.hpp"
#include "labelforge/strategies.hpp"
#include "labelforge/verification.hpp"

struct sqlite3;

namespace labelforge {

enum class Stage { ingested, crowd_done, verifying, resolved, exported, scaling };

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

struct ProjectInfo {
  std::string id;
  std::string name;
  Stage stage = Stage::ingested;
  int revision = 1;
  std::string taxonomy_name;
  std::string taxonomy_sha;
  std::size_t documents = 0;
  nlohmann::json config = nlohmann::json::object();
  std::string created_at;

  nlohmann::json to_json() const;
};

struct JobInfo {
  std::string id;
  std::string project_id;
  std::string kind;
  std::string status;
  nlohmann::json params = nlohmann::json::object();
  nlohmann::json progress = nlohmann::json::object();
  std::string created_at;
  std::string updated_at;

  nlohmann::json to_json() const;
};

struct CoderInfo {
  Coder coder;
  std::string project_id;
};

/// Embedded SQLite store. One connection, serialised by a mutex; every
/// multi-row write is a single transaction.
class Store {
 public:
  static constexpr int kSchemaVersion = 2;

  explicit Store(const std::filesystem::path& path);
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  /// Applies pending migrations and returns the resulting version. Refuses
  /// a store written by a newer release.
  int migrate();
  int version() const;

  // Projects
  std::string create_project(const std::string& name, const Taxonomy& taxonomy,
                             const nlohmann::json& config = nlohmann::json::object());
  std::vector<ProjectInfo> projects() const;
  ProjectInfo project(const std::string& id) const;
  /// Moves forward through the workflow; repeating the current stage bumps
  /// the revision, going back throws ConflictError.
  void advance_stage(const std::string& project_id, Stage stage, const nlohmann::json& snapshot = {});
  nlohmann::json stage_history(const std::string& project_id) const;
  std::shared_ptr<const Taxonomy> taxonomy(const std::string& project_id) const;

  // Documents
  void put_corpus(const std::string& project_id, const Corpus& corpus);
  Corpus corpus(const std::string& project_id) const;
  std::optional<Document> document(const std::string& project_id, const std::string& doc_id) const;

  // Candidates
  void put_candidates(const std::string& project_id, std::span<const CrowdResult> results);
  std::vector<CrowdResult> candidates(const std::string& project_id) const;
  std::optional<CrowdResult> candidates(const std::string& project_id, const std::string& doc_id) const;

  // Coders; the returned token is shown once and stored only as a hash.
  std::string add_coder(const std::string& project_id, const Coder& coder);
  std::optional<CoderInfo> coder_by_token(const std::string& token) const;
  std::vector<Coder> coders(const std::string& project_id) const;

  // Assignments
  void put_assignments(const std::string& project_id, std::span<const Assignment> assignments);
  std::vector<Assignment> assignments(const std::string& project_id,
                                      const std::optional<std::string>& coder_id = std::nullopt) const;

  /// Validates and records a review atomically. A repeated idempotency key
  /// returns the original record instead of writing a new one.
  VerificationRecord submit_review(const std::string& project_id, const std::string& coder_id,
                                   const std::string& doc_id, const DecisionMap& decisions, bool none_apply = false,
                                   bool supersede = false, const std::optional<std::string>& idempotency_key = {});
  std::vector<VerificationRecord> reviews(const std::string& project_id) const;
  /// Latest record per (document, coder).
  std::vector<VerificationRecord> current_reviews(const std::string& project_id) const;

  // Resolution
  std::vector<ResolvedDocument> resolve(const std::string& project_id, ResolutionPolicy policy);
  std::vector<ResolvedDocument> resolutions(const std::string& project_id) const;

  // Completions
  void put_completion(const CompletionRecord& record);
  std::size_t completion_count() const;

  // Jobs
  std::string create_job(const std::string& project_id, const std::string& kind, const nlohmann::json& params);
  void update_job(const std::string& job_id, const std::string& status, const nlohmann::json& progress);
  std::optional<JobInfo> job(const std::string& job_id) const;
  std::vector<JobInfo> jobs(const std::string& project_id) const;

  /// Per-coder completion and per-label survival statistics.
  nlohmann::json progress(const std::string& project_id) const;

 private:
  void exec(const std::string& sql) const;
  int version_unlocked() const;
  void require_project(const std::string& project_id) const;
  std::vector<VerificationRecord> reviews_unlocked(const std::string& project_id) const;
  std::vector<CrowdResult> candidates_unlocked(const std::string& project_id,
                                               const std::optional<std::string>& doc_id) const;

  sqlite3* db_ = nullptr;
  mutable std::recursive_mutex mu_;
};

}  // namespace labelforge
