#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

namespace labelforge {

using LabelId = std::string;

/// A taxonomy member or a subtopic under a macro area. Subtopics usually
/// leave `description` empty.
struct Label {
  LabelId id;
  std::string name;
  std::string description;
  /// Optional display grouping (e.g. the six flourishing areas).
  std::string group;

  bool operator==(const Label&) const = default;
};

/// Label universe for one classification task.
///
/// Immutable after construction; `fingerprint()` pins the schema so that
/// labeled artifacts can refuse a taxonomy that changed underneath them.
class Taxonomy {
 public:
  Taxonomy(std::string name, std::vector<Label> labels, bool exclusive,
           std::optional<std::size_t> max_labels = std::nullopt,
           std::vector<std::pair<LabelId, std::vector<Label>>> hierarchy = {});

  const std::string& name() const { return name_; }
  const std::vector<Label>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  bool exclusive() const { return exclusive_; }
  std::optional<std::size_t> max_labels() const { return max_labels_; }

  bool hierarchical() const { return !hierarchy_.empty(); }
  /// Macro areas in taxonomy order, with their subtopics.
  const std::vector<std::pair<LabelId, std::vector<Label>>>& hierarchy() const { return hierarchy_; }
  const std::vector<Label>& subtopics(const LabelId& macro) const;
  std::vector<Label> macro_labels() const;
  /// Every subtopic across the hierarchy, macro order then subtopic order.
  std::vector<Label> all_subtopics() const;
  std::optional<LabelId> macro_of_subtopic(const LabelId& subtopic) const;

  std::optional<std::size_t> index_of(const LabelId& id) const;
  const Label& label(const LabelId& id) const;
  /// Resolves a label token by id first, then by exact display name.
  std::optional<LabelId> resolve(std::string_view token) const;

  /// Deduplicates and orders by taxonomy position. Throws on unknown ids.
  std::vector<LabelId> canonicalize(const std::vector<LabelId>& ids) const;

  nlohmann::json to_json() const;
  static Taxonomy from_json(const nlohmann::json& j);
  std::string fingerprint() const;

 private:
  std::string name_;
  std::vector<Label> labels_;
  bool exclusive_;
  std::optional<std::size_t> max_labels_;
  std::vector<std::pair<LabelId, std::vector<Label>>> hierarchy_;
  std::unordered_map<LabelId, std::size_t> index_;
  std::unordered_map<std::string, LabelId> by_name_;
  std::unordered_map<LabelId, LabelId> subtopic_parent_;
};

/// Parses a TOML file into the equivalent JSON tree.
nlohmann::json parse_toml_file(const std::filesystem::path& path);

/// Reads a TOML (`.toml`) or JSON taxonomy file.
Taxonomy load_taxonomy(const std::filesystem::path& path);

struct Document {
  std::string id;
  std::string text;
  /// Canonical (taxonomy-ordered) gold labels, when available.
  std::optional<std::vector<LabelId>> true_labels;
  std::string source;

  bool operator==(const Document&) const = default;
};

class Corpus {
 public:
  Corpus(std::shared_ptr<const Taxonomy> taxonomy, std::vector<Document> documents);

  const Taxonomy& taxonomy() const { return *taxonomy_; }
  std::shared_ptr<const Taxonomy> taxonomy_ptr() const { return taxonomy_; }
  const std::vector<Document>& documents() const { return documents_; }
  std::size_t size() const { return documents_.size(); }
  const Document* find(std::string_view id) const;

 private:
  std::shared_ptr<const Taxonomy> taxonomy_;
  std::vector<Document> documents_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

struct CsvMapping {
  std::string id_col = "id";
  std::string text_col = "text";
  std::optional<std::string> label_col;
  char label_delim = ';';
};

struct IngestResult {
  Corpus corpus;
  std::size_t dropped_empty = 0;
};

IngestResult ingest_csv(const std::filesystem::path& path, const CsvMapping& mapping,
                        std::shared_ptr<const Taxonomy> taxonomy);

IngestResult ingest_jsonl(const std::filesystem::path& path, std::shared_ptr<const Taxonomy> taxonomy);

/// Canonical on-disk form: one JSON document per line.
void write_jsonl(const Corpus& corpus, const std::filesystem::path& path);
nlohmann::json document_to_json(const Document& doc, const Taxonomy& taxonomy);

/// Splits into (train, test). Train receives floor(ratio * n) documents;
/// relative order of the input is preserved in both halves.
std::pair<Corpus, Corpus> split_train_test(const Corpus& corpus, double ratio, std::uint64_t seed,
                                           bool stratify_by_label = false);

/// Number of training documents for a split of n at the given ratio.
std::size_t train_size(std::size_t n, double ratio);

}  // namespace labelforge
