#include "labelforge/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "labelforge/error.hpp"
#include "labelforge/util.hpp"
#include "toml.hpp"

namespace labelforge {

using nlohmann::json;

// ---------------------------------------------------------------- Taxonomy

Taxonomy::Taxonomy(std::string name, std::vector<Label> labels, bool exclusive,
                   std::optional<std::size_t> max_labels,
                   std::vector<std::pair<LabelId, std::vector<Label>>> hierarchy)
    : name_(std::move(name)), labels_(std::move(labels)), exclusive_(exclusive), max_labels_(max_labels) {
  if (labels_.size() < 2) {
    throw TaxonomyError(fmt::format("taxonomy '{}' needs at least 2 labels, got {}", name_, labels_.size()));
  }
  std::set<std::string> folded_names;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    auto& l = labels_[i];
    l.id = trim(l.id);
    if (l.id.empty()) throw TaxonomyError(fmt::format("label #{} has an empty id", i + 1));
    if (l.name.empty()) l.name = l.id;
    if (!index_.emplace(l.id, i).second) throw TaxonomyError(fmt::format("duplicate label id '{}'", l.id));
    if (!folded_names.insert(ascii_lower(l.name)).second) {
      throw TaxonomyError(fmt::format("duplicate label name '{}'", l.name));
    }
    by_name_.emplace(l.name, l.id);
  }
  if (max_labels_ && *max_labels_ == 0) throw TaxonomyError("max_labels must be positive");
  if (exclusive_) {
    if (max_labels_ && *max_labels_ > 1) {
      throw TaxonomyError(fmt::format("exclusive taxonomy cannot have max_labels={}", *max_labels_));
    }
    max_labels_ = 1;
  }

  // Macro areas follow taxonomy order regardless of how the file listed them.
  std::set<LabelId> seen_macros;
  std::set<LabelId> sub_ids;
  std::set<std::string> sub_names;
  for (auto& [macro, subs] : hierarchy) {
    if (!index_.count(macro)) throw TaxonomyError(fmt::format("hierarchy key '{}' is not a label", macro));
    if (!seen_macros.insert(macro).second) throw TaxonomyError(fmt::format("hierarchy key '{}' repeated", macro));
    for (auto& s : subs) {
      if (s.name.empty()) s.name = s.id;
      if (!sub_ids.insert(s.id).second) throw TaxonomyError(fmt::format("duplicate subtopic id '{}'", s.id));
      if (!sub_names.insert(ascii_lower(s.name)).second) {
        throw TaxonomyError(fmt::format("duplicate subtopic name '{}'", s.name));
      }
      subtopic_parent_.emplace(s.id, macro);
    }
  }
  std::sort(hierarchy.begin(), hierarchy.end(),
            [this](const auto& a, const auto& b) { return index_.at(a.first) < index_.at(b.first); });
  hierarchy_ = std::move(hierarchy);
}

const std::vector<Label>& Taxonomy::subtopics(const LabelId& macro) const {
  for (const auto& [m, subs] : hierarchy_) {
    if (m == macro) return subs;
  }
  throw TaxonomyError(fmt::format("'{}' is not a macro area", macro));
}

std::vector<Label> Taxonomy::macro_labels() const {
  std::vector<Label> out;
  out.reserve(hierarchy_.size());
  for (const auto& [m, subs] : hierarchy_) out.push_back(label(m));
  return out;
}

std::vector<Label> Taxonomy::all_subtopics() const {
  std::vector<Label> out;
  for (const auto& [m, subs] : hierarchy_) out.insert(out.end(), subs.begin(), subs.end());
  return out;
}

std::optional<LabelId> Taxonomy::macro_of_subtopic(const LabelId& subtopic) const {
  auto it = subtopic_parent_.find(subtopic);
  if (it == subtopic_parent_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Taxonomy::index_of(const LabelId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Label& Taxonomy::label(const LabelId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw TaxonomyError(fmt::format("unknown label '{}'", id));
  return labels_[it->second];
}

std::optional<LabelId> Taxonomy::resolve(std::string_view token) const {
  const std::string t = trim(token);
  if (index_.count(t)) return t;
  if (auto it = by_name_.find(t); it != by_name_.end()) return it->second;
  return std::nullopt;
}

std::vector<LabelId> Taxonomy::canonicalize(const std::vector<LabelId>& ids) const {
  std::vector<std::size_t> idx;
  idx.reserve(ids.size());
  for (const auto& id : ids) {
    auto i = index_of(id);
    if (!i) throw TaxonomyError(fmt::format("unknown label '{}'", id));
    idx.push_back(*i);
  }
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  std::vector<LabelId> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(labels_[i].id);
  return out;
}

json Taxonomy::to_json() const {
  json labels = json::array();
  for (const auto& l : labels_) {
    json lj{{"id", l.id}, {"name", l.name}, {"description", l.description}};
    if (!l.group.empty()) lj["group"] = l.group;
    labels.push_back(std::move(lj));
  }
  json hierarchy = json::object();
  for (const auto& [m, subs] : hierarchy_) {
    json arr = json::array();
    for (const auto& s : subs) arr.push_back({{"id", s.id}, {"name", s.name}});
    hierarchy[m] = arr;
  }
  json j{{"name", name_}, {"exclusive", exclusive_}, {"labels", labels}, {"hierarchy", hierarchy}};
  if (max_labels_) j["max_labels"] = *max_labels_;
  return j;
}

Taxonomy Taxonomy::from_json(const json& j) {
  try {
    std::vector<Label> labels;
    for (const auto& l : j.at("labels")) {
      labels.push_back({l.at("id").get<std::string>(), l.value("name", std::string{}),
                        l.value("description", std::string{}), l.value("group", std::string{})});
    }
    std::optional<std::size_t> max_labels;
    if (j.contains("max_labels") && !j["max_labels"].is_null()) {
      const auto v = j["max_labels"].get<long long>();
      if (v <= 0) throw TaxonomyError("max_labels must be positive");
      max_labels = static_cast<std::size_t>(v);
    }
    std::vector<std::pair<LabelId, std::vector<Label>>> hierarchy;
    if (j.contains("hierarchy")) {
      for (const auto& [macro, subs] : j["hierarchy"].items()) {
        std::vector<Label> s;
        for (const auto& sub : subs) {
          s.push_back({sub.at("id").get<std::string>(), sub.value("name", std::string{}),
                       sub.value("description", std::string{}), {}});
        }
        hierarchy.emplace_back(macro, std::move(s));
      }
    }
    return Taxonomy(j.value("name", std::string{"unnamed"}), std::move(labels), j.value("exclusive", false),
                    max_labels, std::move(hierarchy));
  } catch (const json::exception& e) {
    throw TaxonomyError(fmt::format("malformed taxonomy: {}", e.what()));
  }
}

std::string Taxonomy::fingerprint() const { return sha256_hex(to_json().dump()); }

namespace {

json toml_to_json(const toml::node& node) {
  if (auto* t = node.as_table()) {
    json j = json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = toml_to_json(v);
    return j;
  }
  if (auto* a = node.as_array()) {
    json j = json::array();
    for (const auto& v : *a) j.push_back(toml_to_json(v));
    return j;
  }
  if (auto* s = node.as_string()) return s->get();
  if (auto* i = node.as_integer()) return i->get();
  if (auto* f = node.as_floating_point()) return f->get();
  if (auto* b = node.as_boolean()) return b->get();
  throw ConfigError("unsupported TOML value type (dates are not accepted)");
}

}  // namespace

json parse_toml_file(const std::filesystem::path& path) {
  try {
    return toml_to_json(toml::parse_file(path.string()));
  } catch (const toml::parse_error& e) {
    throw ConfigError(fmt::format("{}:{}: {}", path.string(), e.source().begin.line, e.description()));
  }
}

Taxonomy load_taxonomy(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw TaxonomyError(fmt::format("taxonomy file {} not found", path.string()));
  if (path.extension() == ".toml") {
    try {
      return Taxonomy::from_json(parse_toml_file(path));
    } catch (const ConfigError& e) {
      throw TaxonomyError(e.what());
    }
  }
  try {
    return Taxonomy::from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw TaxonomyError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

// ------------------------------------------------------------------ Corpus

Corpus::Corpus(std::shared_ptr<const Taxonomy> taxonomy, std::vector<Document> documents)
    : taxonomy_(std::move(taxonomy)), documents_(std::move(documents)) {
  if (!taxonomy_) throw IngestError("corpus requires a taxonomy");
  std::vector<std::string> dups;
  for (std::size_t i = 0; i < documents_.size(); ++i) {
    auto& d = documents_[i];
    if (d.id.empty()) throw IngestError(fmt::format("document #{} has an empty id", i + 1));
    if (trim(d.text).empty()) throw IngestError(fmt::format("document '{}' has empty text", d.id));
    if (!by_id_.emplace(d.id, i).second) dups.push_back(d.id);
    if (d.true_labels) d.true_labels = taxonomy_->canonicalize(*d.true_labels);
  }
  if (!dups.empty()) throw IngestError(fmt::format("duplicate document ids: {}", fmt::join(dups, ", ")));
}

const Document* Corpus::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &documents_[it->second];
}

namespace {

// RFC 4180: quoted fields may contain delimiters, doubled quotes and newlines.
std::vector<std::vector<std::string>> parse_csv(const std::string& data) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const char c = data[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        any = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any || !field.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        row.clear();
        field.clear();
        any = false;
        break;
      default:
        field += c;
        any = true;
    }
  }
  if (quoted) throw IngestError("unterminated quoted CSV field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<LabelId> resolve_tokens(const std::vector<std::string>& tokens, const Taxonomy& taxonomy,
                                    const std::string& where) {
  std::vector<LabelId> out;
  for (const auto& raw : tokens) {
    const auto tok = trim(raw);
    if (tok.empty()) continue;
    auto id = taxonomy.resolve(tok);
    if (!id) throw IngestError(fmt::format("{}: unknown label '{}'", where, tok));
    out.push_back(*id);
  }
  auto canon = taxonomy.canonicalize(out);
  if (taxonomy.exclusive() && canon.size() > 1) {
    throw IngestError(fmt::format("{}: {} labels on an exclusive taxonomy", where, canon.size()));
  }
  return canon;
}

std::vector<std::string> split_on(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, delim)) out.push_back(cur);
  return out;
}

}  // namespace

IngestResult ingest_csv(const std::filesystem::path& path, const CsvMapping& mapping,
                        std::shared_ptr<const Taxonomy> taxonomy) {
  if (!std::filesystem::exists(path)) throw IngestError(fmt::format("{} not found", path.string()));
  const auto rows = parse_csv(read_file(path));
  if (rows.empty()) throw IngestError(fmt::format("{} has no header row", path.string()));

  const auto& header = rows.front();
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw IngestError(fmt::format("column '{}' not found in header", name));
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto id_col = column(mapping.id_col);
  const auto text_col = column(mapping.text_col);
  std::optional<std::size_t> label_col;
  if (mapping.label_col) label_col = column(*mapping.label_col);

  std::vector<Document> docs;
  docs.reserve(rows.size() - 1);
  std::size_t dropped = 0;
  std::vector<std::string> missing_id_rows;
  std::map<std::string, std::vector<std::size_t>> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::size_t line = r + 1;  // 1-based, header is line 1
    auto cell = [&](std::size_t c) -> std::string { return c < row.size() ? row[c] : std::string{}; };
    auto id = trim(cell(id_col));
    if (id.empty()) {
      missing_id_rows.push_back(std::to_string(line));
      continue;
    }
    seen[id].push_back(line);
    auto text = trim(cell(text_col));
    if (text.empty()) {
      ++dropped;
      continue;
    }
    Document d{id, std::move(text), std::nullopt, path.filename().string()};
    if (label_col) {
      const auto raw = cell(*label_col);
      d.true_labels = resolve_tokens(split_on(raw, mapping.label_delim), *taxonomy, fmt::format("row {}", line));
    }
    docs.push_back(std::move(d));
  }
  std::vector<std::string> problems;
  if (!missing_id_rows.empty()) problems.push_back(fmt::format("missing id on rows {}", fmt::join(missing_id_rows, ", ")));
  for (const auto& [id, lines] : seen) {
    if (lines.size() > 1) problems.push_back(fmt::format("duplicate id \"{}\" on rows {}", id, fmt::join(lines, ", ")));
  }
  if (!problems.empty()) throw IngestError(fmt::format("{}: {}", path.string(), fmt::join(problems, "; ")));
  return {Corpus(std::move(taxonomy), std::move(docs)), dropped};
}

IngestResult ingest_jsonl(const std::filesystem::path& path, std::shared_ptr<const Taxonomy> taxonomy) {
  std::ifstream in(path);
  if (!in) throw IngestError(fmt::format("{} not found", path.string()));
  std::vector<Document> docs;
  std::size_t dropped = 0;
  std::map<std::string, std::vector<std::size_t>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto where = fmt::format("{} line {}", path.filename().string(), lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw IngestError(fmt::format("{}: malformed JSON ({})", where, e.what()));
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("text") || !j["id"].is_string() || !j["text"].is_string()) {
      throw IngestError(fmt::format("{}: expected string fields \"id\" and \"text\"", where));
    }
    Document d{trim(j["id"].get<std::string>()), trim(j["text"].get<std::string>()), std::nullopt,
               j.value("source", std::string{})};
    if (d.id.empty()) throw IngestError(fmt::format("{}: empty id", where));
    seen[d.id].push_back(lineno);
    if (d.text.empty()) {
      ++dropped;
      continue;
    }
    if (j.contains("true_labels") && !j["true_labels"].is_null()) {
      if (!j["true_labels"].is_array()) throw IngestError(fmt::format("{}: true_labels must be an array", where));
      d.true_labels = resolve_tokens(j["true_labels"].get<std::vector<std::string>>(), *taxonomy, where);
    }
    docs.push_back(std::move(d));
  }
  std::vector<std::string> dups;
  for (const auto& [id, lines] : seen) {
    if (lines.size() > 1) dups.push_back(fmt::format("\"{}\" on lines {}", id, fmt::join(lines, ", ")));
  }
  if (!dups.empty()) throw IngestError(fmt::format("{}: duplicate ids {}", path.string(), fmt::join(dups, "; ")));
  return {Corpus(std::move(taxonomy), std::move(docs)), dropped};
}

json document_to_json(const Document& doc, const Taxonomy& taxonomy) {
  json j{{"id", doc.id}, {"text", doc.text}};
  if (doc.true_labels) {
    json labels = json::array();
    for (const auto& id : *doc.true_labels) labels.push_back(taxonomy.label(id).id);
    j["true_labels"] = labels;
  }
  if (!doc.source.empty()) j["source"] = doc.source;
  return j;
}

void write_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  std::string out;
  for (const auto& d : corpus.documents()) {
    out += document_to_json(d, corpus.taxonomy()).dump();
    out += '\n';
  }
  atomic_write_file(path, out);
}

// ------------------------------------------------------------------- Split

std::size_t train_size(std::size_t n, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw SplitError(fmt::format("ratio must be in (0,1), got {}", ratio));
  // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

std::pair<Corpus, Corpus> split_train_test(const Corpus& corpus, double ratio, std::uint64_t seed,
                                           bool stratify_by_label) {
  const std::size_t n = corpus.size();
  const std::size_t n_train = train_size(n, ratio);
  if (n < 2) throw SplitError(fmt::format("need at least 2 documents to split, got {}", n));

  const auto& docs = corpus.documents();
  SeededRng rng(seed);
  std::vector<char> in_train(n, 0);

  if (!stratify_by_label) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = 1;
  } else {
    const auto& tax = corpus.taxonomy();
    if (!tax.exclusive()) throw SplitError("stratified split requires an exclusive taxonomy");
    std::vector<std::vector<std::size_t>> by_class(tax.size());
    for (std::size_t i = 0; i < n; ++i) {
      const auto& tl = docs[i].true_labels;
      if (!tl || tl->size() != 1) {
        throw SplitError(fmt::format("stratified split: document '{}' lacks exactly one true label", docs[i].id));
      }
      by_class[*tax.index_of(tl->front())].push_back(i);
    }
    // Largest-remainder apportionment: floor per class, then the leftover
    // slots go to the largest fractional parts (ties by taxonomy order).
    std::vector<std::size_t> quota(by_class.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      const double exact = ratio * static_cast<double>(by_class[c].size());
      quota[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      assigned += quota[c];
      remainders.emplace_back(exact - static_cast<double>(quota[c]), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < n_train && k < remainders.size(); ++k) {
      const auto c = remainders[k].second;
      if (quota[c] < by_class[c].size()) {
        ++quota[c];
        ++assigned;
      }
    }
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      auto members = by_class[c];
      rng.shuffle(members);
      for (std::size_t i = 0; i < quota[c]; ++i) in_train[members[i]] = 1;
    }
  }

  std::vector<Document> train;
  std::vector<Document> test;
  train.reserve(n_train);
  test.reserve(n - n_train);
  for (std::size_t i = 0; i < n; ++i) (in_train[i] ? train : test).push_back(docs[i]);
  return {Corpus(corpus.taxonomy_ptr(), std::move(train)), Corpus(corpus.taxonomy_ptr(), std::move(test))};
}

}  // namespace labelforge
