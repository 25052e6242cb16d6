#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "labelforge/corpus.hpp"

namespace labelforge {

// ----------------------------------------------------------------- Backends

struct RetryPolicy {
  unsigned max_attempts = 3;
  std::chrono::milliseconds backoff_base{250};
  std::chrono::milliseconds backoff_cap{8000};
};

struct Price {
  double per_input_token = 0.0;
  double per_output_token = 0.0;
};

/// Where to find the credential: the secret itself never lives in config.
struct AuthRef {
  std::string header = "Authorization";
  std::string env_var;
  std::string prefix = "Bearer ";
};

struct BackendConfig {
  std::string name;
  std::string base_url;
  std::string path = "/v1/chat/completions";
  std::string model;
  std::optional<AuthRef> auth;
  std::size_t max_concurrency = 1;
  std::chrono::milliseconds timeout{60000};
  RetryPolicy retry;
  std::optional<Price> price;
  double temperature = 0.0;
  /// Informational; tuned endpoints speak the same protocol.
  bool fine_tuned = false;

  void validate() const;
  static BackendConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct Message {
  std::string role;
  std::string content;

  bool operator==(const Message&) const = default;
};
using Messages = std::vector<Message>;

struct CompletionRecord {
  std::string id;
  std::string backend;
  std::string prompt_hash;
  std::string raw_text;
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;
  double latency_ms = 0.0;
  std::optional<double> cost;
  std::string timestamp;
  unsigned attempts = 1;

  nlohmann::json to_json() const;
  static CompletionRecord from_json(const nlohmann::json& j);
};

std::optional<double> completion_cost(const std::optional<Price>& price, std::size_t input_tokens,
                                      std::size_t output_tokens);

nlohmann::json chat_request(const BackendConfig& backend, const Messages& messages);

// ---------------------------------------------------------------- Transport

struct HttpReply {
  int status = 0;
  std::string body;
};

using HeaderList = std::vector<std::pair<std::string, std::string>>;

/// Sends one request body to a backend. Throws TransportFailure on
/// connection-level errors (refused, reset, timeout).
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpReply post(const BackendConfig& backend, const std::string& body, const HeaderList& headers) = 0;
};

std::shared_ptr<Transport> make_http_transport();

/// Adapts a callable; used for in-process mock backends.
class FunctionTransport final : public Transport {
 public:
  using Handler = std::function<HttpReply(const BackendConfig&, const std::string&, const HeaderList&)>;
  explicit FunctionTransport(Handler handler) : handler_(std::move(handler)) {}
  HttpReply post(const BackendConfig& backend, const std::string& body, const HeaderList& headers) override {
    return handler_(backend, body, headers);
  }

 private:
  Handler handler_;
};

/// Builds an OpenAI-style chat-completion response body.
std::string chat_response_body(std::string_view content, std::size_t prompt_tokens, std::size_t completion_tokens);

// ------------------------------------------------------------------ Journal

/// Append-only JSONL of completion records; safe under concurrent writers.
class CompletionJournal {
 public:
  explicit CompletionJournal(std::filesystem::path path);

  void append(const CompletionRecord& record);
  const std::filesystem::path& path() const { return path_; }

  /// Reads every complete line; a torn final line is ignored.
  static std::vector<CompletionRecord> load(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  std::mutex mu_;
  std::ofstream out_;
};

// ------------------------------------------------------------------ Gateway

/// Anything that can turn a rendered prompt into a journaled completion.
class Completer {
 public:
  virtual ~Completer() = default;
  virtual CompletionRecord complete(const std::string& backend, const Messages& messages) = 0;
};

class Gateway final : public Completer {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit Gateway(std::shared_ptr<Transport> transport, CompletionJournal* journal = nullptr,
                   Sleeper sleeper = {});

  void add_backend(BackendConfig config);
  bool has_backend(const std::string& name) const { return backends_.count(name) > 0; }
  const BackendConfig& backend(const std::string& name) const;

  /// Retries 429/5xx/transport failures with capped exponential backoff;
  /// other 4xx fail immediately, 401/403 as ConfigError.
  CompletionRecord complete(const std::string& backend, const Messages& messages) override;

  std::size_t calls() const { return calls_.load(); }

 private:
  struct Slot {
    BackendConfig config;
    std::unique_ptr<std::counting_semaphore<4096>> permits;
  };

  std::shared_ptr<Transport> transport_;
  CompletionJournal* journal_;
  Sleeper sleeper_;
  std::map<std::string, Slot> backends_;
  std::atomic<std::size_t> calls_{0};
};

// ------------------------------------------------------------------ Prompts

enum class LabelRendering { names, names_with_descriptions, numbered };

struct PromptTemplate {
  std::string id;
  std::string system;
  /// Placeholders: {text}, {labels}, {label_descriptions}. "{{" and "}}"
  /// produce literal braces.
  std::string user;
  LabelRendering render_labels_as = LabelRendering::names;

  std::string fingerprint() const;
  static PromptTemplate from_json(const nlohmann::json& j);
};

/// Substitutes placeholders in one template string. Unknown placeholders
/// throw TemplateError.
std::string render_string(std::string_view tmpl, const std::map<std::string, std::string>& vars);

std::string render_label_list(std::span<const Label> labels, LabelRendering mode);

/// Renders system + user messages. The system message is omitted when empty.
Messages render(const PromptTemplate& tmpl, const Document& doc, std::span<const Label> labels);

/// Built-in templates: zero_shot, multi_label, direct, iterative_subtopic,
/// iterative_final.
const std::vector<PromptTemplate>& builtin_templates();

class TemplateSet {
 public:
  TemplateSet();
  void add(PromptTemplate tmpl);
  const PromptTemplate& get(const std::string& id) const;

 private:
  std::map<std::string, PromptTemplate> templates_;
};

// ------------------------------------------------------------------ Parsing

enum class ParseStatus { exact, normalized, fuzzy, failed };

std::string_view to_string(ParseStatus s);

struct ParsedLabels {
  std::vector<LabelId> labels;
  std::vector<std::string> unparsed_fragments;
  ParseStatus status = ParseStatus::failed;
};

/// Case-folds, strips list numbering and surrounding punctuation/quotes,
/// collapses whitespace.
std::string normalize_token(std::string_view token);

std::size_t edit_distance(std::string_view a, std::string_view b);

/// Maps free-form model output onto `choices`. Total; never throws.
ParsedLabels parse_choices(std::string_view raw, std::span<const Label> choices,
                           std::optional<std::size_t> cap = std::nullopt);

ParsedLabels parse_labels(std::string_view raw, const Taxonomy& taxonomy,
                          std::optional<std::size_t> cap = std::nullopt);

}  // namespace labelforge
