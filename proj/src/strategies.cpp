#include "labelforge/strategies.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "labelforge/error.hpp"
#include "labelforge/util.hpp"

namespace labelforge {

using nlohmann::json;

namespace {
constexpr std::string_view kNone = "None";
}

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::zero_shot: return "zero_shot";
    case StrategyKind::direct: return "direct";
    case StrategyKind::iterative: return "iterative";
  }
  return "zero_shot";
}

StrategyKind strategy_kind_from_string(std::string_view s) {
  if (s == "zero_shot") return StrategyKind::zero_shot;
  if (s == "direct") return StrategyKind::direct;
  if (s == "iterative") return StrategyKind::iterative;
  throw StrategyError(fmt::format("unknown strategy '{}'", s));
}

std::string StrategyConfig::key() const {
  return name.empty() ? fmt::format("{}/{}", backend, to_string(kind)) : name;
}

json StrategyConfig::to_json() const {
  return {{"kind", to_string(kind)},         {"backend", backend},
          {"name", key()},                   {"template_id", template_id},
          {"final_template_id", final_template_id}, {"force_final_choice", force_final_choice}};
}

StrategyConfig StrategyConfig::from_json(const json& j) {
  StrategyConfig c;
  c.kind = strategy_kind_from_string(j.at("kind").get<std::string>());
  c.backend = j.at("backend").get<std::string>();
  c.name = j.value("name", std::string{});
  c.template_id = j.value("template_id", std::string{});
  c.final_template_id = j.value("final_template_id", c.final_template_id);
  c.force_final_choice = j.value("force_final_choice", true);
  return c;
}

void check_strategy(const StrategyConfig& config, const Taxonomy& taxonomy) {
  if (config.kind == StrategyKind::zero_shot) return;
  if (!taxonomy.hierarchical()) {
    throw StrategyError(fmt::format("{} strategy needs a hierarchical taxonomy; '{}' has no subtopics",
                                    to_string(config.kind), taxonomy.name()));
  }
  if (config.kind == StrategyKind::iterative) {
    const auto reserved = ascii_lower(kNone);
    for (const auto& l : taxonomy.labels()) {
      if (normalize_token(l.name) == reserved) {
        throw StrategyError("iterative strategy reserves \"None\"; the taxonomy has a label with that name");
      }
    }
    for (const auto& s : taxonomy.all_subtopics()) {
      if (normalize_token(s.name) == reserved) {
        throw StrategyError("iterative strategy reserves \"None\"; the taxonomy has a subtopic with that name");
      }
    }
  }
}

namespace {

struct Call {
  CompletionRecord record;
  ParsedLabels parsed;
};

Call ask(const Document& doc, const PromptTemplate& tmpl, std::span<const Label> choices,
         std::optional<std::size_t> cap, const std::string& backend, Completer& completer, StrategyOutcome& out) {
  auto messages = render(tmpl, doc, choices);
  auto record = completer.complete(backend, messages);
  ++out.calls;
  out.completion_refs.push_back(record.id);
  auto parsed = parse_choices(record.raw_text, choices, cap);
  return {std::move(record), std::move(parsed)};
}

std::string describe_failure(std::string_view what, const Call& call) {
  return fmt::format("{}: unparsed [{}] raw=\"{}\"", what, fmt::join(call.parsed.unparsed_fragments, " | "),
                     call.record.raw_text);
}

}  // namespace

StrategyOutcome classify_zero_shot(const Document& doc, const Taxonomy& taxonomy, const StrategyConfig& config,
                                   Completer& completer, const TemplateSet& templates) {
  StrategyOutcome out;
  const auto& tmpl_id = !config.template_id.empty() ? config.template_id
                        : taxonomy.exclusive()      ? std::string("zero_shot")
                                                    : std::string("multi_label");
  const std::optional<std::size_t> cap = taxonomy.exclusive() ? std::optional<std::size_t>(1) : taxonomy.max_labels();
  auto call = ask(doc, templates.get(tmpl_id), taxonomy.labels(), cap, config.backend, completer, out);
  out.parsed = std::move(call.parsed);
  if (out.parsed.status == ParseStatus::failed) {
    call.parsed = out.parsed;
    out.failure = describe_failure("no category matched", call);
  }
  return out;
}

StrategyOutcome classify_direct(const Document& doc, const Taxonomy& taxonomy, const StrategyConfig& config,
                                Completer& completer, const TemplateSet& templates) {
  check_strategy(config, taxonomy);
  StrategyOutcome out;
  const auto subtopics = taxonomy.all_subtopics();
  const auto& tmpl = templates.get(config.template_id.empty() ? "direct" : config.template_id);
  auto call = ask(doc, tmpl, subtopics, 1, config.backend, completer, out);
  if (call.parsed.status == ParseStatus::failed) {
    out.parsed = call.parsed;
    out.failure = describe_failure("no subtopic matched", call);
    return out;
  }
  out.parsed.status = call.parsed.status;
  out.parsed.unparsed_fragments = call.parsed.unparsed_fragments;
  out.parsed.labels = {*taxonomy.macro_of_subtopic(call.parsed.labels.front())};
  return out;
}

StrategyOutcome classify_iterative(const Document& doc, const Taxonomy& taxonomy, const StrategyConfig& config,
                                   Completer& completer, const TemplateSet& templates) {
  check_strategy(config, taxonomy);
  StrategyOutcome out;
  const auto& probe_tmpl = templates.get(config.template_id.empty() ? "iterative_subtopic" : config.template_id);
  const auto& final_tmpl = templates.get(config.final_template_id);
  const Label none{std::string(kNone), std::string(kNone), {}, {}};

  // Stage A: each macro area offers only its own subtopics plus None.
  std::vector<Label> survivors;
  for (const auto& [macro, subs] : taxonomy.hierarchy()) {
    std::vector<Label> choices = subs;
    choices.push_back(none);
    auto call = ask(doc, probe_tmpl, choices, 1, config.backend, completer, out);
    for (auto& frag : call.parsed.unparsed_fragments) out.parsed.unparsed_fragments.push_back(std::move(frag));
    if (call.parsed.status == ParseStatus::failed || call.parsed.labels.front() == kNone) continue;
    survivors.push_back(taxonomy.label(macro));
  }
  for (const auto& s : survivors) out.survivors.push_back(s.id);

  if (survivors.empty()) {
    // Nothing survived: one zero-shot call over the macro areas.
    out.fallback = true;
    const auto macros = taxonomy.macro_labels();
    auto call = ask(doc, final_tmpl, macros, 1, config.backend, completer, out);
    out.parsed.labels = call.parsed.labels;
    out.parsed.status = call.parsed.status;
    if (call.parsed.status == ParseStatus::failed) out.failure = describe_failure("fallback: no area matched", call);
    return out;
  }
  if (survivors.size() == 1 && !config.force_final_choice) {
    out.parsed.labels = {survivors.front().id};
    out.parsed.status = ParseStatus::exact;
    return out;
  }

  // Stage B: forced choice among survivors, None not offered.
  auto call = ask(doc, final_tmpl, survivors, 1, config.backend, completer, out);
  out.parsed.labels = call.parsed.labels;
  out.parsed.status = call.parsed.status;
  for (auto& frag : call.parsed.unparsed_fragments) out.parsed.unparsed_fragments.push_back(std::move(frag));
  if (call.parsed.status == ParseStatus::failed) {
    out.failure = fmt::format("{} (survivors: {})", describe_failure("final choice unparsed", call),
                              fmt::join(out.survivors, ", "));
  }
  return out;
}

StrategyOutcome classify(const Document& doc, const Taxonomy& taxonomy, const StrategyConfig& config,
                         Completer& completer, const TemplateSet& templates) {
  switch (config.kind) {
    case StrategyKind::zero_shot: return classify_zero_shot(doc, taxonomy, config, completer, templates);
    case StrategyKind::direct: return classify_direct(doc, taxonomy, config, completer, templates);
    case StrategyKind::iterative: return classify_iterative(doc, taxonomy, config, completer, templates);
  }
  throw StrategyError("unhandled strategy kind");
}

// -------------------------------------------------------------------- Crowd

std::vector<LabelId> CrowdResult::labels() const {
  std::vector<LabelId> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back(c.label);
  return out;
}

namespace {

json provenance_to_json(const Provenance& p) {
  return {{"config", p.config},
          {"backend", p.backend},
          {"strategy", to_string(p.strategy)},
          {"completion_refs", p.completion_refs},
          {"fallback", p.fallback}};
}

Provenance provenance_from_json(const json& j) {
  return {j.at("config").get<std::string>(), j.value("backend", std::string{}),
          strategy_kind_from_string(j.value("strategy", std::string{"zero_shot"})),
          j.value("completion_refs", std::vector<std::string>{}), j.value("fallback", false)};
}

}  // namespace

json CrowdResult::to_json() const {
  json cands = json::array();
  for (const auto& c : candidates) {
    json prov = json::array();
    for (const auto& p : c.provenance) prov.push_back(provenance_to_json(p));
    cands.push_back({{"label", c.label}, {"first_seen", c.first_seen}, {"provenance", prov}});
  }
  json fails = json::array();
  for (const auto& f : failures) {
    fails.push_back({{"config", f.config}, {"backend", f.backend}, {"strategy", to_string(f.strategy)}, {"error", f.error}});
  }
  return {{"doc_id", doc_id}, {"candidates", cands}, {"failures", fails}};
}

CrowdResult CrowdResult::from_json(const json& j) {
  CrowdResult r;
  r.doc_id = j.at("doc_id").get<std::string>();
  for (const auto& c : j.value("candidates", json::array())) {
    CandidateLabel cl{r.doc_id, c.at("label").get<std::string>(), {}, c.value("first_seen", std::string{})};
    for (const auto& p : c.value("provenance", json::array())) cl.provenance.push_back(provenance_from_json(p));
    r.candidates.push_back(std::move(cl));
  }
  for (const auto& f : j.value("failures", json::array())) {
    r.failures.push_back({f.value("config", std::string{}), f.value("backend", std::string{}),
                          strategy_kind_from_string(f.value("strategy", std::string{"zero_shot"})),
                          f.value("error", std::string{})});
  }
  return r;
}

json PairRecord::to_json() const {
  return {{"doc_id", doc_id},     {"config", config},
          {"backend", backend},   {"strategy", to_string(strategy)},
          {"ok", ok},             {"retryable", retryable},
          {"labels", labels},     {"completion_refs", completion_refs},
          {"fallback", fallback}, {"error", error},
          {"calls", calls},       {"timestamp", timestamp}};
}

PairRecord PairRecord::from_json(const json& j) {
  PairRecord r;
  r.doc_id = j.at("doc_id").get<std::string>();
  r.config = j.at("config").get<std::string>();
  r.backend = j.value("backend", std::string{});
  r.strategy = strategy_kind_from_string(j.value("strategy", std::string{"zero_shot"}));
  r.ok = j.value("ok", false);
  r.retryable = j.value("retryable", false);
  r.labels = j.value("labels", std::vector<std::string>{});
  r.completion_refs = j.value("completion_refs", std::vector<std::string>{});
  r.fallback = j.value("fallback", false);
  r.error = j.value("error", std::string{});
  r.calls = j.value("calls", std::size_t{0});
  r.timestamp = j.value("timestamp", std::string{});
  return r;
}

PairJournal::PairJournal(std::filesystem::path path) {
  out_.open(path, std::ios::app | std::ios::binary);
  if (!out_) throw Error(fmt::format("cannot open pair journal {}", path.string()));
}

void PairJournal::append(const PairRecord& record) {
  const auto line = record.to_json().dump() + "\n";
  std::lock_guard lock(mu_);
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
}

std::vector<PairRecord> PairJournal::load(const std::filesystem::path& path) {
  std::vector<PairRecord> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      out.push_back(PairRecord::from_json(json::parse(line)));
    } catch (const std::exception&) {
      // torn tail line
    }
  }
  return out;
}

std::vector<CrowdResult> merge_pairs(const Corpus& corpus, std::span<const PairRecord> records) {
  const auto& tax = corpus.taxonomy();
  // Last record per (doc, config) wins, so a retried pair replaces its failure.
  std::map<std::pair<std::string, std::string>, const PairRecord*> latest;
  for (const auto& r : records) latest[{r.doc_id, r.config}] = &r;

  std::map<std::string, std::vector<const PairRecord*>> by_doc;
  for (const auto& [key, rec] : latest) by_doc[key.first].push_back(rec);  // config order within doc

  std::vector<CrowdResult> out;
  out.reserve(corpus.size());
  for (const auto& doc : corpus.documents()) {
    CrowdResult res;
    res.doc_id = doc.id;
    std::map<std::size_t, CandidateLabel> by_label;
    for (const auto* rec : by_doc[doc.id]) {
      if (!rec->ok) {
        res.failures.push_back({rec->config, rec->backend, rec->strategy, rec->error});
        continue;
      }
      for (const auto& label : rec->labels) {
        const auto idx = tax.index_of(label);
        if (!idx) continue;
        auto& cand = by_label[*idx];
        if (cand.provenance.empty()) {
          cand.doc_id = doc.id;
          cand.label = label;
          cand.first_seen = rec->timestamp;
        } else if (rec->timestamp < cand.first_seen) {
          cand.first_seen = rec->timestamp;
        }
        cand.provenance.push_back({rec->config, rec->backend, rec->strategy, rec->completion_refs, rec->fallback});
      }
    }
    for (auto& [idx, cand] : by_label) res.candidates.push_back(std::move(cand));
    out.push_back(std::move(res));
  }
  return out;
}

CrowdRun run_crowd(const Corpus& corpus, std::span<const StrategyConfig> configs, Completer& completer,
                   const TemplateSet& templates, const CrowdOptions& options) {
  if (configs.empty()) throw StrategyError("run_crowd needs at least one strategy config");
  std::set<std::string> keys;
  for (const auto& c : configs) {
    check_strategy(c, corpus.taxonomy());
    if (!keys.insert(c.key()).second) throw StrategyError(fmt::format("duplicate strategy config '{}'", c.key()));
  }

  std::vector<PairRecord> records;
  std::set<std::pair<std::string, std::string>> done;
  std::unique_ptr<PairJournal> journal;
  if (options.journal) {
    records = PairJournal::load(*options.journal);
    for (const auto& r : records) {
      if (r.ok || !r.retryable) {
        done.insert({r.doc_id, r.config});
      }
    }
    journal = std::make_unique<PairJournal>(*options.journal);
  }

  CrowdRun run;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> halt{false};
  std::exception_ptr fatal;
  const auto& docs = corpus.documents();

  auto worker = [&] {
    while (!halt.load()) {
      const auto i = next.fetch_add(1);
      if (i >= docs.size()) return;
      const auto& doc = docs[i];
      std::vector<PairRecord> fresh;
      std::size_t attempted = 0;
      std::size_t unavailable = 0;
      std::size_t skipped = 0;
      std::size_t calls = 0;
      try {
        for (const auto& cfg : configs) {
          if (done.count({doc.id, cfg.key()})) {
            ++skipped;
            continue;
          }
          ++attempted;
          PairRecord rec;
          rec.doc_id = doc.id;
          rec.config = cfg.key();
          rec.backend = cfg.backend;
          rec.strategy = cfg.kind;
          try {
            auto outcome = classify(doc, corpus.taxonomy(), cfg, completer, templates);
            rec.ok = outcome.ok();
            rec.labels = outcome.parsed.labels;
            rec.completion_refs = std::move(outcome.completion_refs);
            rec.fallback = outcome.fallback;
            rec.calls = outcome.calls;
            if (!rec.ok) rec.error = *outcome.failure;
          } catch (const BackendUnavailable& e) {
            ++unavailable;
            rec.retryable = true;
            rec.error = e.what();
          } catch (const BackendError& e) {
            rec.error = e.what();
          }
          calls += rec.calls;
          rec.timestamp = utc_timestamp();
          fresh.push_back(std::move(rec));
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!fatal) fatal = std::current_exception();
        halt = true;
        return;
      }

      std::lock_guard lock(mu);
      run.skipped_pairs += skipped;
      run.calls += calls;
      if (attempted > 0 && unavailable == attempted) {
        // Every backend is down for this document: stop without journaling
        // it so that a resume retries the whole document.
        if (!halt.exchange(true)) {
          run.halted = true;
          run.halt_reason = fmt::format("all backends unavailable on document '{}': {}", doc.id, fresh.front().error);
        }
        return;
      }
      run.executed_pairs += fresh.size();
      for (auto& r : fresh) {
        if (journal) journal->append(r);
        records.push_back(std::move(r));
      }
    }
  };

  const auto n_workers = std::max<std::size_t>(1, std::min(options.workers, docs.size()));
  {
    std::vector<std::jthread> pool;
    pool.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  run.results = merge_pairs(corpus, records);
  return run;
}

void write_crowd_jsonl(std::span<const CrowdResult> results, const std::filesystem::path& path) {
  std::string out;
  for (const auto& r : results) {
    out += r.to_json().dump();
    out += '\n';
  }
  atomic_write_file(path, out);
}

std::vector<CrowdResult> read_crowd_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open {}", path.string()));
  std::vector<CrowdResult> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(CrowdResult::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(fmt::format("{} line {}: {}", path.string(), lineno, e.what()));
    }
  }
  return out;
}

}  // namespace labelforge
