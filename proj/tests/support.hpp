#pragma once

// Shared helpers for the test binaries: fixture paths, scratch directories
// and in-process mock chat backends.

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "labelforge/corpus.hpp"
#include "labelforge/gateway.hpp"
#include "labelforge/util.hpp"

namespace lf_test {

namespace fs = std::filesystem;

inline fs::path fixture(const std::string& rel) { return fs::path(LABELFORGE_FIXTURES) / rel; }

inline std::shared_ptr<const labelforge::Taxonomy> fixture_taxonomy(const std::string& name) {
  return std::make_shared<const labelforge::Taxonomy>(labelforge::load_taxonomy(fixture("taxonomies/" + name + ".toml")));
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("lftest-" + labelforge::random_token(6));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

/// What a mock model sees: the rendered prompt split into parts.
struct Prompt {
  std::string backend;
  std::string system;
  std::string user;
  /// Document text between "Text:\n" and the next blank line.
  std::string text;
  /// Label lines offered in the prompt, numbering and descriptions removed
  /// only for the numbered form.
  std::vector<std::string> offered;
};

inline Prompt parse_prompt(const labelforge::BackendConfig& backend, const std::string& body) {
  Prompt p;
  p.backend = backend.name;
  const auto j = nlohmann::json::parse(body);
  for (const auto& m : j.at("messages")) {
    if (m.at("role") == "system") p.system = m.at("content").get<std::string>();
    if (m.at("role") == "user") p.user = m.at("content").get<std::string>();
  }
  const auto text_at = p.user.find("Text:\n");
  if (text_at != std::string::npos) {
    const auto start = text_at + 6;
    const auto end = p.user.find("\n\n", start);
    p.text = p.user.substr(start, end == std::string::npos ? std::string::npos : end - start);
  }
  const auto list_at = p.user.find(":\n");
  if (list_at != std::string::npos && list_at < text_at) {
    std::string block = p.user.substr(list_at + 2, p.user.rfind("\n\nText:", text_at) - list_at - 2);
    std::size_t pos = 0;
    while (pos <= block.size()) {
      const auto nl = block.find('\n', pos);
      std::string line = block.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
      const auto dot = line.find(". ");
      if (dot != std::string::npos && dot > 0 && line.find_first_not_of("0123456789") == dot) line = line.substr(dot + 2);
      if (!line.empty()) p.offered.push_back(line);
      if (nl == std::string::npos) break;
      pos = nl + 1;
    }
  }
  return p;
}

/// Reply text, or an HTTP status to return instead.
struct MockReply {
  std::string content;
  int status = 200;
};

using MockModel = std::function<MockReply(const Prompt&)>;

/// FunctionTransport around a mock model; counts requests per backend.
class MockBackends {
 public:
  explicit MockBackends(MockModel model) : model_(std::move(model)) {
    transport_ = std::make_shared<labelforge::FunctionTransport>(
        [this](const labelforge::BackendConfig& b, const std::string& body, const labelforge::HeaderList&) {
          const auto prompt = parse_prompt(b, body);
          {
            std::lock_guard lock(mu_);
            ++requests_[b.name];
          }
          const auto reply = model_(prompt);
          if (reply.status != 200) return labelforge::HttpReply{reply.status, R"({"error":"mock"})"};
          return labelforge::HttpReply{200, labelforge::chat_response_body(reply.content, prompt.user.size() / 4 + 1,
                                                                            reply.content.size() / 4 + 1)};
        });
  }

  std::shared_ptr<labelforge::Transport> transport() const { return transport_; }
  std::size_t requests(const std::string& backend) const {
    std::lock_guard lock(mu_);
    auto it = requests_.find(backend);
    return it == requests_.end() ? 0 : it->second;
  }

 private:
  MockModel model_;
  std::shared_ptr<labelforge::Transport> transport_;
  mutable std::mutex mu_;
  std::map<std::string, std::size_t> requests_;
};

inline labelforge::BackendConfig mock_backend(const std::string& name, std::size_t concurrency = 2,
                                              unsigned attempts = 3) {
  labelforge::BackendConfig b;
  b.name = name;
  b.base_url = "http://mock.invalid";
  b.model = name + "-model";
  b.max_concurrency = concurrency;
  b.retry.max_attempts = attempts;
  b.retry.backoff_base = std::chrono::milliseconds(0);
  b.retry.backoff_cap = std::chrono::milliseconds(0);
  b.price = labelforge::Price{1e-6, 2e-6};
  return b;
}

inline labelforge::Gateway::Sleeper no_sleep() {
  return [](std::chrono::milliseconds) {};
}

/// Synthetic corpus whose document text names its gold labels, so mock
/// models can answer from the text alone: "doc-7 | Health; Labor".
inline labelforge::Corpus synthetic_corpus(std::shared_ptr<const labelforge::Taxonomy> tax, std::size_t n,
                                           std::uint64_t seed, std::size_t max_labels = 1) {
  labelforge::SeededRng rng(seed);
  std::vector<labelforge::Document> docs;
  const auto& labels = tax->labels();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<labelforge::LabelId> truth;
    const std::size_t k = tax->exclusive() ? 1 : 1 + rng.below(max_labels);
    while (truth.size() < k) {
      const auto& l = labels[rng.below(labels.size())];
      if (std::find(truth.begin(), truth.end(), l.id) == truth.end()) truth.push_back(l.id);
    }
    truth = tax->canonicalize(truth);
    std::string text = "doc-" + std::to_string(i) + " |";
    for (const auto& id : truth) text += " " + tax->label(id).name + ";";
    docs.push_back({"doc-" + std::to_string(i), text, truth, "synthetic"});
  }
  return labelforge::Corpus(std::move(tax), std::move(docs));
}

/// Gold label names embedded in a synthetic document's text.
inline std::vector<std::string> names_in_text(const std::string& text) {
  std::vector<std::string> out;
  const auto bar = text.find('|');
  if (bar == std::string::npos) return out;
  std::size_t pos = bar + 1;
  while (pos < text.size()) {
    const auto semi = text.find(';', pos);
    if (semi == std::string::npos) break;
    out.push_back(labelforge::trim(text.substr(pos, semi - pos)));
    pos = semi + 1;
  }
  return out;
}

}  // namespace lf_test
