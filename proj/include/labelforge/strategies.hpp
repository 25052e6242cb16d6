#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "labelforge/corpus.hpp"
#include "labelforge/gateway.hpp"

namespace labelforge {

enum class StrategyKind { zero_shot, direct, iterative };

std::string_view to_string(StrategyKind kind);
StrategyKind strategy_kind_from_string(std::string_view s);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::zero_shot;
  std::string backend;
  /// Run key used for provenance and resumption; defaults to "backend/kind".
  std::string name;
  /// Stage template. Empty selects the built-in default for the kind
  /// (zero_shot or multi_label, direct, iterative_subtopic).
  std::string template_id;
  std::string final_template_id = "iterative_final";
  bool force_final_choice = true;

  std::string key() const;
  nlohmann::json to_json() const;
  static StrategyConfig from_json(const nlohmann::json& j);
};

/// Throws StrategyError when the taxonomy cannot support the strategy.
void check_strategy(const StrategyConfig& config, const Taxonomy& taxonomy);

struct StrategyOutcome {
  ParsedLabels parsed;
  std::size_t calls = 0;
  std::vector<std::string> completion_refs;
  bool fallback = false;
  /// Macro areas that survived the per-area probing (iterative only).
  std::vector<LabelId> survivors;
  std::optional<std::string> failure;

  bool ok() const { return !failure.has_value(); }
};

StrategyOutcome classify_zero_shot(const Document& doc, const Taxonomy& taxonomy, const StrategyConfig& config,
                                   Completer& completer, const TemplateSet& templates);

/// One call over every subtopic; the answer is mapped to its macro area.
StrategyOutcome classify_direct(const Document& doc, const Taxonomy& taxonomy, const StrategyConfig& config,
                                Completer& completer, const TemplateSet& templates);

/// Per-macro subtopic-or-None probing, then one forced choice among the
/// surviving macro areas. K+1 calls on the happy path.
StrategyOutcome classify_iterative(const Document& doc, const Taxonomy& taxonomy, const StrategyConfig& config,
                                   Completer& completer, const TemplateSet& templates);

StrategyOutcome classify(const Document& doc, const Taxonomy& taxonomy, const StrategyConfig& config,
                         Completer& completer, const TemplateSet& templates);

// -------------------------------------------------------------------- Crowd

struct Provenance {
  std::string config;
  std::string backend;
  StrategyKind strategy = StrategyKind::zero_shot;
  std::vector<std::string> completion_refs;
  bool fallback = false;

  bool operator==(const Provenance&) const = default;
};

struct CandidateLabel {
  std::string doc_id;
  LabelId label;
  std::vector<Provenance> provenance;
  std::string first_seen;
};

struct CrowdFailure {
  std::string config;
  std::string backend;
  StrategyKind strategy = StrategyKind::zero_shot;
  std::string error;
};

struct CrowdResult {
  std::string doc_id;
  std::vector<CandidateLabel> candidates;
  std::vector<CrowdFailure> failures;

  std::vector<LabelId> labels() const;
  nlohmann::json to_json() const;
  static CrowdResult from_json(const nlohmann::json& j);
};

/// One executed (document, config) pair; the unit of resumption.
struct PairRecord {
  std::string doc_id;
  std::string config;
  std::string backend;
  StrategyKind strategy = StrategyKind::zero_shot;
  bool ok = false;
  /// A failure caused by backend unavailability; re-attempted on resume.
  bool retryable = false;
  std::vector<LabelId> labels;
  std::vector<std::string> completion_refs;
  bool fallback = false;
  std::string error;
  std::size_t calls = 0;
  std::string timestamp;

  nlohmann::json to_json() const;
  static PairRecord from_json(const nlohmann::json& j);
};

class PairJournal {
 public:
  explicit PairJournal(std::filesystem::path path);
  void append(const PairRecord& record);
  static std::vector<PairRecord> load(const std::filesystem::path& path);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

/// Unions pair records into per-document results: candidates deduplicated
/// by label in taxonomy order, provenance and failures ordered by config.
/// Documents without any record still get an (empty) result.
std::vector<CrowdResult> merge_pairs(const Corpus& corpus, std::span<const PairRecord> records);

struct CrowdOptions {
  std::size_t workers = 4;
  /// Pairs already journaled here are skipped; new pairs are appended.
  std::optional<std::filesystem::path> journal;
};

struct CrowdRun {
  std::vector<CrowdResult> results;
  std::size_t executed_pairs = 0;
  std::size_t skipped_pairs = 0;
  std::size_t calls = 0;
  bool halted = false;
  std::string halt_reason;
};

/// Runs every (document, config) pair. Per-pair failures are recorded, never
/// fatal; a document on which every config hits an unavailable backend stops
/// the run with `halted` set and its pairs left unjournaled.
CrowdRun run_crowd(const Corpus& corpus, std::span<const StrategyConfig> configs, Completer& completer,
                   const TemplateSet& templates, const CrowdOptions& options = {});

void write_crowd_jsonl(std::span<const CrowdResult> results, const std::filesystem::path& path);
std::vector<CrowdResult> read_crowd_jsonl(const std::filesystem::path& path);

}  // namespace labelforge
