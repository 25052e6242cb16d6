#include "labelforge/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "labelforge/error.hpp"
#include "labelforge/util.hpp"

namespace labelforge {

using nlohmann::json;

// ----------------------------------------------------------------- Backends

void BackendConfig::validate() const {
  if (name.empty()) throw ConfigError("backend needs a name");
  if (base_url.empty()) throw ConfigError(fmt::format("backend '{}' needs base_url", name));
  if (max_concurrency < 1) throw ConfigError(fmt::format("backend '{}': max_concurrency must be >= 1", name));
  if (retry.max_attempts < 1) throw ConfigError(fmt::format("backend '{}': max_attempts must be >= 1", name));
  if (price && (price->per_input_token < 0 || price->per_output_token < 0)) {
    throw ConfigError(fmt::format("backend '{}': prices must be non-negative", name));
  }
  if (auth && auth->env_var.empty()) throw ConfigError(fmt::format("backend '{}': auth needs an env var", name));
}

BackendConfig BackendConfig::from_json(const json& j) {
  BackendConfig c;
  try {
    c.name = j.at("name").get<std::string>();
    c.base_url = j.at("base_url").get<std::string>();
    c.path = j.value("path", c.path);
    c.model = j.value("model", std::string{});
    c.max_concurrency = j.value("max_concurrency", std::size_t{1});
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", 60000));
    c.temperature = j.value("temperature", 0.0);
    c.fine_tuned = j.value("fine_tuned", false);
    if (j.contains("auth")) {
      const auto& a = j["auth"];
      AuthRef ref;
      ref.header = a.value("header", ref.header);
      ref.env_var = a.value("env", std::string{});
      ref.prefix = a.value("prefix", ref.prefix);
      c.auth = ref;
    }
    if (j.contains("retry")) {
      const auto& r = j["retry"];
      c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
      c.retry.backoff_base = std::chrono::milliseconds(r.value("backoff_base_ms", c.retry.backoff_base.count()));
      c.retry.backoff_cap = std::chrono::milliseconds(r.value("backoff_cap_ms", c.retry.backoff_cap.count()));
    }
    if (j.contains("price")) {
      c.price = Price{j["price"].value("per_input_token", 0.0), j["price"].value("per_output_token", 0.0)};
    }
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("malformed backend entry: {}", e.what()));
  }
  c.validate();
  return c;
}

json BackendConfig::to_json() const {
  json j{{"name", name},
         {"base_url", base_url},
         {"path", path},
         {"model", model},
         {"max_concurrency", max_concurrency},
         {"timeout_ms", timeout.count()},
         {"temperature", temperature},
         {"fine_tuned", fine_tuned},
         {"retry",
          {{"max_attempts", retry.max_attempts},
           {"backoff_base_ms", retry.backoff_base.count()},
           {"backoff_cap_ms", retry.backoff_cap.count()}}}};
  if (auth) j["auth"] = {{"header", auth->header}, {"env", auth->env_var}, {"prefix", auth->prefix}};
  if (price) j["price"] = {{"per_input_token", price->per_input_token}, {"per_output_token", price->per_output_token}};
  return j;
}

json CompletionRecord::to_json() const {
  json j{{"id", id},
         {"backend", backend},
         {"prompt_hash", prompt_hash},
         {"raw_text", raw_text},
         {"input_tokens", input_tokens},
         {"output_tokens", output_tokens},
         {"latency_ms", latency_ms},
         {"timestamp", timestamp},
         {"attempts", attempts}};
  j["cost"] = cost ? json(*cost) : json(nullptr);
  return j;
}

CompletionRecord CompletionRecord::from_json(const json& j) {
  CompletionRecord r;
  r.id = j.at("id").get<std::string>();
  r.backend = j.at("backend").get<std::string>();
  r.prompt_hash = j.value("prompt_hash", std::string{});
  r.raw_text = j.value("raw_text", std::string{});
  r.input_tokens = j.value("input_tokens", std::size_t{0});
  r.output_tokens = j.value("output_tokens", std::size_t{0});
  r.latency_ms = j.value("latency_ms", 0.0);
  r.timestamp = j.value("timestamp", std::string{});
  r.attempts = j.value("attempts", 1u);
  if (j.contains("cost") && !j["cost"].is_null()) r.cost = j["cost"].get<double>();
  return r;
}

std::optional<double> completion_cost(const std::optional<Price>& price, std::size_t input_tokens,
                                      std::size_t output_tokens) {
  if (!price) return std::nullopt;
  return static_cast<double>(input_tokens) * price->per_input_token +
         static_cast<double>(output_tokens) * price->per_output_token;
}

json chat_request(const BackendConfig& backend, const Messages& messages) {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", backend.model}, {"messages", msgs}, {"temperature", backend.temperature}};
}

std::string chat_response_body(std::string_view content, std::size_t prompt_tokens, std::size_t completion_tokens) {
  json j{{"object", "chat.completion"},
         {"choices", json::array({{{"index", 0},
                                   {"message", {{"role", "assistant"}, {"content", std::string(content)}}},
                                   {"finish_reason", "stop"}}})},
         {"usage",
          {{"prompt_tokens", prompt_tokens},
           {"completion_tokens", completion_tokens},
           {"total_tokens", prompt_tokens + completion_tokens}}}};
  return j.dump();
}

// ------------------------------------------------------------------ Journal

CompletionJournal::CompletionJournal(std::filesystem::path path) : path_(std::move(path)) {
  out_.open(path_, std::ios::app | std::ios::binary);
  if (!out_) throw Error(fmt::format("cannot open journal {}", path_.string()));
}

void CompletionJournal::append(const CompletionRecord& record) {
  const auto line = record.to_json().dump() + "\n";
  std::lock_guard lock(mu_);
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
}

std::vector<CompletionRecord> CompletionJournal::load(const std::filesystem::path& path) {
  std::vector<CompletionRecord> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      out.push_back(CompletionRecord::from_json(json::parse(line)));
    } catch (const json::exception&) {
      // torn write at the tail
    }
  }
  return out;
}

// ------------------------------------------------------------------ Gateway

Gateway::Gateway(std::shared_ptr<Transport> transport, CompletionJournal* journal, Sleeper sleeper)
    : transport_(std::move(transport)), journal_(journal), sleeper_(std::move(sleeper)) {
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

void Gateway::add_backend(BackendConfig config) {
  config.validate();
  const auto permits = static_cast<std::ptrdiff_t>(std::min<std::size_t>(config.max_concurrency, 4096));
  auto name = config.name;
  backends_.insert_or_assign(std::move(name),
                             Slot{std::move(config), std::make_unique<std::counting_semaphore<4096>>(permits)});
}

const BackendConfig& Gateway::backend(const std::string& name) const {
  auto it = backends_.find(name);
  if (it == backends_.end()) throw ConfigError(fmt::format("unknown backend '{}'", name));
  return it->second.config;
}

namespace {

struct PermitGuard {
  std::counting_semaphore<4096>& sem;
  explicit PermitGuard(std::counting_semaphore<4096>& s) : sem(s) { sem.acquire(); }
  ~PermitGuard() { sem.release(); }
  PermitGuard(const PermitGuard&) = delete;
  PermitGuard& operator=(const PermitGuard&) = delete;
};

std::string excerpt(std::string_view body) {
  constexpr std::size_t kMax = 200;
  return body.size() <= kMax ? std::string(body) : std::string(body.substr(0, kMax)) + "...";
}

}  // namespace

CompletionRecord Gateway::complete(const std::string& backend_name, const Messages& messages) {
  auto it = backends_.find(backend_name);
  if (it == backends_.end()) throw ConfigError(fmt::format("unknown backend '{}'", backend_name));
  const auto& cfg = it->second.config;

  HeaderList headers;
  if (cfg.auth) {
    const char* secret = std::getenv(cfg.auth->env_var.c_str());
    if (secret == nullptr || *secret == '\0') {
      throw ConfigError(fmt::format("backend '{}': environment variable {} is not set", cfg.name, cfg.auth->env_var));
    }
    headers.emplace_back(cfg.auth->header, cfg.auth->prefix + secret);
  }
  const auto body = chat_request(cfg, messages).dump();
  const auto prompt_hash = sha256_hex(body);

  PermitGuard permit(*it->second.permits);
  std::vector<std::string> trace;
  for (unsigned attempt = 1; attempt <= cfg.retry.max_attempts; ++attempt) {
    ++calls_;
    const auto started = std::chrono::steady_clock::now();
    HttpReply reply;
    bool transient = false;
    try {
      reply = transport_->post(cfg, body, headers);
      if (reply.status == 429 || reply.status >= 500) {
        transient = true;
        trace.push_back(fmt::format("attempt {}: HTTP {}", attempt, reply.status));
      }
    } catch (const TransportFailure& e) {
      transient = true;
      trace.push_back(fmt::format("attempt {}: {}", attempt, e.what()));
    }
    if (transient) {
      if (attempt < cfg.retry.max_attempts) {
        const double factor = std::ldexp(1.0, static_cast<int>(std::min(attempt - 1, 30u)));
        const auto wait = std::min<double>(static_cast<double>(cfg.retry.backoff_base.count()) * factor,
                                           static_cast<double>(cfg.retry.backoff_cap.count()));
        sleeper_(std::chrono::milliseconds(static_cast<long long>(wait)));
      }
      continue;
    }
    if (reply.status == 401 || reply.status == 403) {
      throw ConfigError(fmt::format("backend '{}' rejected credentials (HTTP {})", cfg.name, reply.status));
    }
    if (reply.status < 200 || reply.status >= 300) {
      throw BackendError(fmt::format("backend '{}' returned HTTP {}: {}", cfg.name, reply.status, excerpt(reply.body)));
    }

    CompletionRecord rec;
    try {
      const auto j = json::parse(reply.body);
      rec.raw_text = j.at("choices").at(0).at("message").at("content").get<std::string>();
      const auto& usage = j.at("usage");
      rec.input_tokens = usage.contains("prompt_tokens") ? usage["prompt_tokens"].get<std::size_t>()
                                                         : usage.at("input_tokens").get<std::size_t>();
      rec.output_tokens = usage.contains("completion_tokens") ? usage["completion_tokens"].get<std::size_t>()
                                                              : usage.at("output_tokens").get<std::size_t>();
    } catch (const json::exception& e) {
      throw BackendError(fmt::format("backend '{}' sent a malformed completion: {}", cfg.name, e.what()));
    }
    rec.backend = cfg.name;
    rec.prompt_hash = prompt_hash;
    rec.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    rec.cost = completion_cost(cfg.price, rec.input_tokens, rec.output_tokens);
    rec.timestamp = utc_timestamp();
    rec.attempts = attempt;
    rec.id = fmt::format("{}-{}", prompt_hash.substr(0, 12), random_token(6));
    if (journal_ != nullptr) journal_->append(rec);
    return rec;
  }
  throw BackendUnavailable(fmt::format("backend '{}' unavailable after {} attempts ({})", cfg.name,
                                       cfg.retry.max_attempts, fmt::join(trace, "; ")),
                           std::move(trace));
}

// ------------------------------------------------------------------ Prompts

namespace {

std::string_view to_string(LabelRendering r) {
  switch (r) {
    case LabelRendering::names: return "names";
    case LabelRendering::names_with_descriptions: return "names_with_descriptions";
    case LabelRendering::numbered: return "numbered";
  }
  return "names";
}

}  // namespace

std::string PromptTemplate::fingerprint() const {
  return sha256_hex(json{{"id", id}, {"system", system}, {"user", user}, {"render_labels_as", to_string(render_labels_as)}}
                        .dump());
}

PromptTemplate PromptTemplate::from_json(const json& j) {
  PromptTemplate t;
  try {
    t.id = j.at("id").get<std::string>();
    t.system = j.value("system", std::string{});
    t.user = j.at("user").get<std::string>();
    const auto mode = j.value("render_labels_as", std::string{"names"});
    if (mode == "names") {
      t.render_labels_as = LabelRendering::names;
    } else if (mode == "names_with_descriptions") {
      t.render_labels_as = LabelRendering::names_with_descriptions;
    } else if (mode == "numbered") {
      t.render_labels_as = LabelRendering::numbered;
    } else {
      throw TemplateError(fmt::format("template '{}': unknown render_labels_as '{}'", t.id, mode));
    }
  } catch (const json::exception& e) {
    throw TemplateError(fmt::format("malformed template: {}", e.what()));
  }
  return t;
}

std::string render_string(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tmpl.size() + 64);
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    const char c = tmpl[i];
    if (c == '{') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
        out += '{';
        ++i;
        continue;
      }
      const auto close = tmpl.find('}', i + 1);
      if (close == std::string_view::npos) throw TemplateError(fmt::format("unterminated placeholder at offset {}", i));
      const std::string key(tmpl.substr(i + 1, close - i - 1));
      auto it = vars.find(key);
      if (it == vars.end()) throw TemplateError(fmt::format("unresolved placeholder {{{}}}", key));
      out += it->second;
      i = close;
    } else if (c == '}') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '}') ++i;
      out += '}';
    } else {
      out += c;
    }
  }
  return out;
}

std::string render_label_list(std::span<const Label> labels, LabelRendering mode) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& l = labels[i];
    switch (mode) {
      case LabelRendering::names:
        if (i) out += ", ";
        out += l.name;
        break;
      case LabelRendering::numbered:
        if (i) out += '\n';
        out += fmt::format("{}. {}", i + 1, l.name);
        break;
      case LabelRendering::names_with_descriptions:
        if (i) out += '\n';
        out += l.description.empty() ? l.name : fmt::format("{}: {}", l.name, l.description);
        break;
    }
  }
  return out;
}

Messages render(const PromptTemplate& tmpl, const Document& doc, std::span<const Label> labels) {
  const std::map<std::string, std::string> vars{
      {"text", doc.text},
      {"labels", render_label_list(labels, tmpl.render_labels_as)},
      {"label_descriptions", render_label_list(labels, LabelRendering::names_with_descriptions)},
  };
  Messages out;
  auto system = render_string(tmpl.system, vars);
  if (!trim(system).empty()) out.push_back({"system", std::move(system)});
  auto user = render_string(tmpl.user, vars);
  if (trim(user).empty()) throw TemplateError(fmt::format("template '{}' rendered an empty prompt", tmpl.id));
  out.push_back({"user", std::move(user)});
  return out;
}

const std::vector<PromptTemplate>& builtin_templates() {
  static const std::vector<PromptTemplate> kTemplates{
      {"zero_shot", "You are a careful annotator. Reply with category names only, no explanation.",
       "Classify the text below into exactly one of these categories:\n{labels}\n\nText:\n{text}\n\n"
       "Answer with the category name only.",
       LabelRendering::numbered},
      {"multi_label", "You are a careful annotator. Reply with category names only, no explanation.",
       "Which of these categories apply to the text below?\n{label_descriptions}\n\nText:\n{text}\n\n"
       "List every applicable category name, one per line.",
       LabelRendering::names_with_descriptions},
      {"direct", "You are a careful annotator. Reply with a subtopic name only, no explanation.",
       "Choose the single subtopic that best fits the text below:\n{labels}\n\nText:\n{text}\n\n"
       "Answer with the subtopic name only.",
       LabelRendering::numbered},
      {"iterative_subtopic", "You are a careful annotator. Reply with a subtopic name or None, no explanation.",
       "Choose only one of the following subtopics for the text below, or answer None if none of them "
       "applies:\n{labels}\n\nText:\n{text}",
       LabelRendering::numbered},
      {"iterative_final", "You are a careful annotator. Reply with a category name only, no explanation.",
       "The text below touches on these areas:\n{labels}\n\nText:\n{text}\n\n"
       "Choose only one of the areas listed. You must pick one.",
       LabelRendering::numbered},
  };
  return kTemplates;
}

TemplateSet::TemplateSet() {
  for (const auto& t : builtin_templates()) templates_.emplace(t.id, t);
}

void TemplateSet::add(PromptTemplate tmpl) {
  auto id = tmpl.id;
  templates_.insert_or_assign(std::move(id), std::move(tmpl));
}

const PromptTemplate& TemplateSet::get(const std::string& id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw TemplateError(fmt::format("unknown template '{}'", id));
  return it->second;
}

// ------------------------------------------------------------------ Parsing

std::string_view to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::exact: return "exact";
    case ParseStatus::normalized: return "normalized";
    case ParseStatus::fuzzy: return "fuzzy";
    case ParseStatus::failed: return "failed";
  }
  return "failed";
}

namespace {

bool is_strip_char(unsigned char c) {
  if (std::isspace(c)) return true;
  switch (c) {
    case '.': case ',': case ';': case ':': case '!': case '?': case '"': case '\'': case '`':
    case '(': case ')': case '[': case ']': case '{': case '}': case '*': case '-': case '_':
    case '#': case '>':
      return true;
    default:
      return false;
  }
}

std::string_view strip_surrounding(std::string_view s) {
  while (!s.empty() && is_strip_char(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_strip_char(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// "3. x", "3) x", "(3) x", "3: x", "3 - x"
std::string_view strip_numbering(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  const bool paren = i < s.size() && s[i] == '(';
  if (paren) ++i;
  const std::size_t digits_begin = i;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i == digits_begin || i == s.size()) return s;
  if (s[i] == '.' || s[i] == ')' || s[i] == ':') {
    ++i;
  } else if (!paren && std::isspace(static_cast<unsigned char>(s[i]))) {
    std::size_t k = i;
    while (k < s.size() && std::isspace(static_cast<unsigned char>(s[k]))) ++k;
    if (k < s.size() && s[k] == '-') {
      i = k + 1;
    } else {
      return s;
    }
  } else {
    return s;
  }
  return s.substr(i);
}

}  // namespace

std::string normalize_token(std::string_view token) {
  auto s = strip_surrounding(strip_numbering(strip_surrounding(token)));
  std::string out;
  out.reserve(s.size());
  bool space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace {

struct Match {
  std::size_t choice;
  ParseStatus level;
};

class Matcher {
 public:
  explicit Matcher(std::span<const Label> choices) : choices_(choices) {
    normalized_.reserve(choices.size());
    for (const auto& c : choices) normalized_.push_back(normalize_token(c.name));
  }

  std::optional<Match> exact_or_normalized(std::string_view token) const {
    const auto t = trim(token);
    if (t.empty()) return std::nullopt;
    for (std::size_t i = 0; i < choices_.size(); ++i) {
      if (choices_[i].name == t || choices_[i].id == t) return Match{i, ParseStatus::exact};
    }
    const auto n = normalize_token(t);
    if (n.empty()) return std::nullopt;
    for (std::size_t i = 0; i < choices_.size(); ++i) {
      if (normalized_[i] == n || ascii_lower(choices_[i].id) == n) return Match{i, ParseStatus::normalized};
    }
    return std::nullopt;
  }

  // Unique nearest name within max(1, ceil(len/10)) edits; ties fail.
  std::optional<Match> fuzzy(std::string_view token) const {
    const auto n = normalize_token(token);
    if (n.empty()) return std::nullopt;
    const std::size_t threshold = std::max<std::size_t>(1, (n.size() + 9) / 10);
    std::size_t best = std::numeric_limits<std::size_t>::max();
    std::size_t best_idx = 0;
    std::size_t best_count = 0;
    for (std::size_t i = 0; i < choices_.size(); ++i) {
      const auto d = edit_distance(n, normalized_[i]);
      if (d < best) {
        best = d;
        best_idx = i;
        best_count = 1;
      } else if (d == best) {
        ++best_count;
      }
    }
    if (best <= threshold && best_count == 1) return Match{best_idx, ParseStatus::fuzzy};
    return std::nullopt;
  }

 private:
  std::span<const Label> choices_;
  std::vector<std::string> normalized_;
};

struct Piece {
  std::size_t begin;
  std::size_t end;
};

}  // namespace

ParsedLabels parse_choices(std::string_view raw, std::span<const Label> choices, std::optional<std::size_t> cap) {
  ParsedLabels out;
  if (trim(raw).empty() || choices.empty()) {
    if (!trim(raw).empty()) out.unparsed_fragments.push_back(trim(raw));
    return out;
  }
  const Matcher matcher(choices);
  std::vector<char> taken(choices.size(), 0);
  std::vector<std::size_t> picked;
  ParseStatus worst = ParseStatus::exact;

  auto accept = [&](const Match& m) {
    if (!taken[m.choice]) {
      taken[m.choice] = 1;
      picked.push_back(m.choice);
    }
    worst = std::max(worst, m.level);
  };

  std::size_t line_begin = 0;
  while (line_begin <= raw.size()) {
    auto line_end = raw.find('\n', line_begin);
    if (line_end == std::string_view::npos) line_end = raw.size();
    const auto line = raw.substr(line_begin, line_end - line_begin);

    std::vector<Piece> pieces;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',' || line[i] == ';') {
        pieces.push_back({start, i});
        start = i + 1;
      }
    }
    // Longest run of consecutive pieces first, so names that themselves
    // contain commas ("Medicine, Health and Life Sciences") survive splitting.
    std::size_t i = 0;
    while (i < pieces.size()) {
      bool merged = false;
      for (std::size_t j = pieces.size() - 1; j > i; --j) {
        const auto span_text = line.substr(pieces[i].begin, pieces[j].end - pieces[i].begin);
        if (auto m = matcher.exact_or_normalized(span_text)) {
          accept(*m);
          i = j + 1;
          merged = true;
          break;
        }
      }
      if (merged) continue;
      const auto piece = line.substr(pieces[i].begin, pieces[i].end - pieces[i].begin);
      if (!normalize_token(piece).empty()) {
        if (auto m = matcher.exact_or_normalized(piece)) {
          accept(*m);
        } else if (auto f = matcher.fuzzy(piece)) {
          accept(*f);
        } else {
          out.unparsed_fragments.push_back(trim(piece));
        }
      }
      ++i;
    }
    if (line_end == raw.size()) break;
    line_begin = line_end + 1;
  }

  if (cap && picked.size() > *cap) picked.resize(*cap);
  for (auto idx : picked) out.labels.push_back(choices[idx].id);
  out.status = out.labels.empty() ? ParseStatus::failed : worst;
  return out;
}

ParsedLabels parse_labels(std::string_view raw, const Taxonomy& taxonomy, std::optional<std::size_t> cap) {
  return parse_choices(raw, taxonomy.labels(), cap);
}

}  // namespace labelforge
