#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "labelforge/corpus.hpp"
#include "labelforge/gateway.hpp"
#include "labelforge/metrics.hpp"
#include "labelforge/strategies.hpp"
#include "labelforge/verification.hpp"

namespace labelforge {

// ------------------------------------------------------------------- Export

struct FinetuneExample {
  std::string instruction;
  std::string input;
  std::string output;
  std::string doc_id;
  std::string taxonomy;
  std::string template_id;

  nlohmann::json to_json() const;
  static FinetuneExample from_json(const nlohmann::json& j);
};

struct ExportOptions {
  double ratio = 0.7;
  std::uint64_t seed = 1;
  /// Emit one example per (document, label) instead of one multi-label
  /// example per document.
  bool per_label_replication = false;
  /// Keep documents whose every candidate was rejected, with empty output.
  bool include_empty = false;
  bool stratify = false;
};

struct ExportManifest {
  std::size_t train_docs = 0;
  std::size_t test_docs = 0;
  std::size_t train_examples = 0;
  std::size_t test_examples = 0;
  std::size_t skipped_empty = 0;
  std::uint64_t seed = 0;
  double ratio = 0.0;
  bool per_label_replication = false;
  std::string taxonomy_sha;
  std::string template_id;
  std::string template_sha;
  std::string train_sha;
  std::string test_sha;
  std::string created_at;
  std::string tool_version;

  nlohmann::json to_json() const;
  static ExportManifest from_json(const nlohmann::json& j);
};

struct FinetuneExport {
  std::vector<FinetuneExample> train;
  std::vector<FinetuneExample> test;
  ExportManifest manifest;
};

/// Display names in taxonomy order joined by "; ".
std::string canonical_output(const std::vector<LabelId>& labels, const Taxonomy& taxonomy);
/// Inverse of canonical_output.
std::vector<LabelId> parse_canonical_output(const std::string& output, const Taxonomy& taxonomy);

/// The prompt the tuned model will see, with the document text left out.
std::string render_instruction(const PromptTemplate& tmpl, const Taxonomy& taxonomy);

/// Throws ExportError listing conflict-flagged or unknown documents.
FinetuneExport build_finetune_export(const Corpus& corpus, std::span<const ResolvedDocument> resolved,
                                     const PromptTemplate& tmpl, const ExportOptions& options);

/// Writes train.jsonl, test.jsonl and manifest.json under `dir`.
FinetuneExport export_finetune(const Corpus& corpus, std::span<const ResolvedDocument> resolved,
                               const PromptTemplate& tmpl, const ExportOptions& options,
                               const std::filesystem::path& dir);

std::string examples_jsonl(std::span<const FinetuneExample> examples);
std::vector<FinetuneExample> read_examples(const std::filesystem::path& path);

// -------------------------------------------------------------------- Scale

struct ScalePrediction {
  std::string doc_id;
  bool ok = false;
  std::vector<LabelId> labels;
  ParseStatus parse_status = ParseStatus::failed;
  std::string error;
  /// "parse" when the model answered but nothing matched, "request" when
  /// the backend refused the call.
  std::string failure_kind;
  std::vector<std::string> completion_refs;
  std::size_t calls = 0;
  std::size_t attempts = 0;
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;
  double cost = 0.0;

  nlohmann::json to_json() const;
  static ScalePrediction from_json(const nlohmann::json& j);
};

struct ScaleCheckpoint {
  std::string job_id;
  std::string corpus_sha;
  std::string backend;
  nlohmann::json strategy;
  /// Corpus position up to which every document has been visited.
  std::size_t cursor = 0;
  std::size_t done = 0;
  std::size_t failed = 0;
  std::size_t retried = 0;
  std::size_t probe_calls = 0;
  std::size_t probe_input_tokens = 0;
  std::size_t probe_output_tokens = 0;
  double probe_cost = 0.0;
  std::string status = "running";
  std::string updated_at;

  nlohmann::json to_json() const;
  static ScaleCheckpoint from_json(const nlohmann::json& j);
};

struct ScaleOptions {
  std::string job_id;
  /// Holds predictions.jsonl and checkpoint.json.
  std::filesystem::path dir;
  StrategyConfig strategy;
  std::size_t checkpoint_every = 100;
  std::size_t workers = 1;
  /// Per-document attempts for parse or request failures.
  std::size_t doc_attempts = 2;
  bool probe = true;
  /// Called under the writer lock after each prediction is appended.
  std::function<void(const ScalePrediction&)> on_prediction;
};

struct ScaleSummary {
  std::string job_id;
  std::size_t total = 0;
  std::size_t done = 0;
  std::size_t failed = 0;
  std::size_t pending = 0;
  std::size_t retried = 0;
  std::size_t processed_this_run = 0;
  std::size_t resumed_from = 0;
  std::size_t calls = 0;
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;
  double cost = 0.0;
  double elapsed_s = 0.0;
  double docs_per_sec = 0.0;
  double parse_failure_rate = 0.0;
  bool halted = false;
  std::string halt_reason;

  nlohmann::json to_json() const;
};

std::filesystem::path predictions_path(const std::filesystem::path& job_dir);
std::filesystem::path checkpoint_path(const std::filesystem::path& job_dir);

/// Reads predictions, keeping the first line per document and ignoring a
/// torn trailing line.
std::vector<ScalePrediction> read_predictions(const std::filesystem::path& path);

/// Classifies every document not yet in the job's output. Safe to call again
/// on the same directory after a crash or halt. A batch in which every
/// document hit an unavailable backend halts the job with state saved.
ScaleSummary run_scale(const Corpus& corpus, Completer& completer, const TemplateSet& templates,
                       const ScaleOptions& options);

// --------------------------------------------------------------- Evaluation

struct PredictionRow {
  std::string doc_id;
  std::vector<LabelId> labels;
};

/// {"id": ..., "labels": [...]} lines; labels may be ids or display names.
/// scale output (doc_id, ok) is accepted too.
std::vector<PredictionRow> read_prediction_rows(const std::filesystem::path& path, const Taxonomy& taxonomy);

/// Throws ValidationError listing prediction ids absent from the gold
/// corpus or gold documents without labels.
MetricsReport evaluate_run(std::span<const PredictionRow> predictions, const Corpus& gold,
                           std::optional<MetricsMode> mode = std::nullopt,
                           nlohmann::json metadata = nlohmann::json::object());

}  // namespace labelforge
