#include "labelforge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "labelforge/error.hpp"
#include "labelforge/util.hpp"

namespace labelforge {

using nlohmann::json;
namespace fs = std::filesystem;

// ------------------------------------------------------------------- Export

json FinetuneExample::to_json() const {
  return {{"instruction", instruction},
          {"input", input},
          {"output", output},
          {"meta", {{"doc_id", doc_id}, {"taxonomy", taxonomy}, {"template_id", template_id}}}};
}

FinetuneExample FinetuneExample::from_json(const json& j) {
  FinetuneExample e;
  e.instruction = j.at("instruction").get<std::string>();
  e.input = j.at("input").get<std::string>();
  e.output = j.at("output").get<std::string>();
  if (j.contains("meta")) {
    const auto& m = j["meta"];
    e.doc_id = m.value("doc_id", std::string{});
    e.taxonomy = m.value("taxonomy", std::string{});
    e.template_id = m.value("template_id", std::string{});
  }
  return e;
}

json ExportManifest::to_json() const {
  return {{"counts",
           {{"train_docs", train_docs},
            {"test_docs", test_docs},
            {"train_examples", train_examples},
            {"test_examples", test_examples},
            {"skipped_empty", skipped_empty}}},
          {"seed", seed},
          {"ratio", ratio},
          {"per_label_replication", per_label_replication},
          {"taxonomy_sha", taxonomy_sha},
          {"template_id", template_id},
          {"template_sha", template_sha},
          {"train_sha", train_sha},
          {"test_sha", test_sha},
          {"created_at", created_at},
          {"tool_version", tool_version}};
}

ExportManifest ExportManifest::from_json(const json& j) {
  ExportManifest m;
  const auto& c = j.at("counts");
  m.train_docs = c.value("train_docs", std::size_t{0});
  m.test_docs = c.value("test_docs", std::size_t{0});
  m.train_examples = c.value("train_examples", std::size_t{0});
  m.test_examples = c.value("test_examples", std::size_t{0});
  m.skipped_empty = c.value("skipped_empty", std::size_t{0});
  m.seed = j.at("seed").get<std::uint64_t>();
  m.ratio = j.at("ratio").get<double>();
  m.per_label_replication = j.value("per_label_replication", false);
  m.taxonomy_sha = j.value("taxonomy_sha", std::string{});
  m.template_id = j.value("template_id", std::string{});
  m.template_sha = j.value("template_sha", std::string{});
  m.train_sha = j.value("train_sha", std::string{});
  m.test_sha = j.value("test_sha", std::string{});
  m.created_at = j.value("created_at", std::string{});
  m.tool_version = j.value("tool_version", std::string{});
  return m;
}

std::string canonical_output(const std::vector<LabelId>& labels, const Taxonomy& taxonomy) {
  std::vector<std::string> names;
  for (const auto& id : taxonomy.canonicalize(labels)) names.push_back(taxonomy.label(id).name);
  return fmt::format("{}", fmt::join(names, "; "));
}

std::vector<LabelId> parse_canonical_output(const std::string& output, const Taxonomy& taxonomy) {
  std::vector<LabelId> out;
  if (trim(output).empty()) return out;
  std::size_t start = 0;
  while (start <= output.size()) {
    auto end = output.find("; ", start);
    if (end == std::string::npos) end = output.size();
    const auto token = output.substr(start, end - start);
    auto id = taxonomy.resolve(token);
    if (!id) throw ValidationError(fmt::format("unknown label '{}' in output", token));
    out.push_back(*id);
    start = end + 2;
  }
  return taxonomy.canonicalize(out);
}

std::string render_instruction(const PromptTemplate& tmpl, const Taxonomy& taxonomy) {
  const Document blank{"", "", std::nullopt, ""};
  std::string out;
  for (const auto& m : render(tmpl, blank, taxonomy.labels())) {
    if (!out.empty()) out += "\n\n";
    out += trim(m.content);
  }
  return out;
}

std::string examples_jsonl(std::span<const FinetuneExample> examples) {
  std::string out;
  for (const auto& e : examples) {
    out += e.to_json().dump();
    out += '\n';
  }
  return out;
}

std::vector<FinetuneExample> read_examples(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ExportError(fmt::format("cannot open {}", path.string()));
  std::vector<FinetuneExample> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(FinetuneExample::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ExportError(fmt::format("{} line {}: {}", path.string(), no, e.what()));
    }
  }
  return out;
}

FinetuneExport build_finetune_export(const Corpus& corpus, std::span<const ResolvedDocument> resolved,
                                     const PromptTemplate& tmpl, const ExportOptions& options) {
  const auto& taxonomy = corpus.taxonomy();
  std::map<std::string, const ResolvedDocument*> by_id;
  std::vector<std::string> conflicts;
  std::vector<std::string> unknown;
  for (const auto& r : resolved) {
    if (!corpus.find(r.doc_id)) unknown.push_back(r.doc_id);
    if (r.conflict) conflicts.push_back(r.doc_id);
    by_id[r.doc_id] = &r;
  }
  if (!unknown.empty()) {
    throw ExportError(fmt::format("resolved documents missing from corpus: {}", fmt::join(unknown, ", ")));
  }
  if (!conflicts.empty()) {
    throw ExportError(fmt::format("documents need adjudication before export: {}", fmt::join(conflicts, ", ")));
  }

  FinetuneExport out;
  std::vector<Document> eligible;
  for (const auto& doc : corpus.documents()) {
    auto it = by_id.find(doc.id);
    if (it == by_id.end()) continue;
    const auto& labels = it->second->surviving_labels;
    if (labels.empty() && !options.include_empty) {
      ++out.manifest.skipped_empty;
      continue;
    }
    eligible.push_back({doc.id, doc.text, taxonomy.canonicalize(labels), doc.source});
  }
  const Corpus pool(corpus.taxonomy_ptr(), std::move(eligible));
  auto [train, test] = split_train_test(pool, options.ratio, options.seed, options.stratify);

  const auto instruction = render_instruction(tmpl, taxonomy);
  auto emit = [&](const Corpus& part, std::vector<FinetuneExample>& sink) {
    for (const auto& doc : part.documents()) {
      const auto& labels = *doc.true_labels;
      if (options.per_label_replication && !labels.empty()) {
        for (const auto& l : labels) {
          sink.push_back({instruction, doc.text, taxonomy.label(l).name, doc.id, taxonomy.name(), tmpl.id});
        }
      } else {
        sink.push_back({instruction, doc.text, canonical_output(labels, taxonomy), doc.id, taxonomy.name(), tmpl.id});
      }
    }
  };
  emit(train, out.train);
  emit(test, out.test);

  auto& m = out.manifest;
  m.train_docs = train.size();
  m.test_docs = test.size();
  m.train_examples = out.train.size();
  m.test_examples = out.test.size();
  m.seed = options.seed;
  m.ratio = options.ratio;
  m.per_label_replication = options.per_label_replication;
  m.taxonomy_sha = taxonomy.fingerprint();
  m.template_id = tmpl.id;
  m.template_sha = tmpl.fingerprint();
  m.train_sha = sha256_hex(examples_jsonl(out.train));
  m.test_sha = sha256_hex(examples_jsonl(out.test));
  m.created_at = utc_timestamp();
  m.tool_version = LABELFORGE_VERSION;
  return out;
}

FinetuneExport export_finetune(const Corpus& corpus, std::span<const ResolvedDocument> resolved,
                               const PromptTemplate& tmpl, const ExportOptions& options, const fs::path& dir) {
  auto out = build_finetune_export(corpus, resolved, tmpl, options);
  fs::create_directories(dir);
  atomic_write_file(dir / "train.jsonl", examples_jsonl(out.train));
  atomic_write_file(dir / "test.jsonl", examples_jsonl(out.test));
  atomic_write_file(dir / "manifest.json", out.manifest.to_json().dump(2) + "\n");
  return out;
}

// -------------------------------------------------------------------- Scale

json ScalePrediction::to_json() const {
  json j{{"doc_id", doc_id},
         {"ok", ok},
         {"labels", labels},
         {"parse_status", to_string(parse_status)},
         {"completion_refs", completion_refs},
         {"calls", calls},
         {"attempts", attempts},
         {"input_tokens", input_tokens},
         {"output_tokens", output_tokens},
         {"cost", cost}};
  if (!ok) {
    j["error"] = error;
    j["failure_kind"] = failure_kind;
  }
  return j;
}

namespace {

ParseStatus parse_status_from_string(std::string_view s) {
  if (s == "exact") return ParseStatus::exact;
  if (s == "normalized") return ParseStatus::normalized;
  if (s == "fuzzy") return ParseStatus::fuzzy;
  return ParseStatus::failed;
}

}  // namespace

ScalePrediction ScalePrediction::from_json(const json& j) {
  ScalePrediction p;
  p.doc_id = j.at("doc_id").get<std::string>();
  p.ok = j.at("ok").get<bool>();
  p.labels = j.value("labels", std::vector<std::string>{});
  p.parse_status = parse_status_from_string(j.value("parse_status", std::string{"failed"}));
  p.error = j.value("error", std::string{});
  p.failure_kind = j.value("failure_kind", std::string{});
  p.completion_refs = j.value("completion_refs", std::vector<std::string>{});
  p.calls = j.value("calls", std::size_t{0});
  p.attempts = j.value("attempts", std::size_t{0});
  p.input_tokens = j.value("input_tokens", std::size_t{0});
  p.output_tokens = j.value("output_tokens", std::size_t{0});
  p.cost = j.value("cost", 0.0);
  return p;
}

json ScaleCheckpoint::to_json() const {
  return {{"job_id", job_id},
          {"corpus_sha", corpus_sha},
          {"backend", backend},
          {"strategy", strategy},
          {"cursor", cursor},
          {"done", done},
          {"failed", failed},
          {"retried", retried},
          {"probe", {{"calls", probe_calls}, {"input_tokens", probe_input_tokens},
                     {"output_tokens", probe_output_tokens}, {"cost", probe_cost}}},
          {"status", status},
          {"updated_at", updated_at}};
}

ScaleCheckpoint ScaleCheckpoint::from_json(const json& j) {
  ScaleCheckpoint c;
  c.job_id = j.at("job_id").get<std::string>();
  c.corpus_sha = j.at("corpus_sha").get<std::string>();
  c.backend = j.value("backend", std::string{});
  c.strategy = j.value("strategy", json::object());
  c.cursor = j.value("cursor", std::size_t{0});
  c.done = j.value("done", std::size_t{0});
  c.failed = j.value("failed", std::size_t{0});
  c.retried = j.value("retried", std::size_t{0});
  if (j.contains("probe")) {
    const auto& p = j["probe"];
    c.probe_calls = p.value("calls", std::size_t{0});
    c.probe_input_tokens = p.value("input_tokens", std::size_t{0});
    c.probe_output_tokens = p.value("output_tokens", std::size_t{0});
    c.probe_cost = p.value("cost", 0.0);
  }
  c.status = j.value("status", std::string{"running"});
  c.updated_at = j.value("updated_at", std::string{});
  return c;
}

json ScaleSummary::to_json() const {
  return {{"job_id", job_id},
          {"total", total},
          {"done", done},
          {"failed", failed},
          {"pending", pending},
          {"retried", retried},
          {"processed_this_run", processed_this_run},
          {"resumed_from", resumed_from},
          {"calls", calls},
          {"input_tokens", input_tokens},
          {"output_tokens", output_tokens},
          {"cost", cost},
          {"elapsed_s", elapsed_s},
          {"docs_per_sec", docs_per_sec},
          {"parse_failure_rate", parse_failure_rate},
          {"halted", halted},
          {"halt_reason", halt_reason}};
}

fs::path predictions_path(const fs::path& job_dir) { return job_dir / "predictions.jsonl"; }
fs::path checkpoint_path(const fs::path& job_dir) { return job_dir / "checkpoint.json"; }

std::vector<ScalePrediction> read_predictions(const fs::path& path) {
  std::vector<ScalePrediction> out;
  std::ifstream in(path);
  if (!in) return out;
  std::set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ScalePrediction p;
    try {
      p = ScalePrediction::from_json(json::parse(line));
    } catch (const json::exception&) {
      continue;  // torn write from an interrupted run
    }
    if (seen.insert(p.doc_id).second) out.push_back(std::move(p));
  }
  return out;
}

namespace {

/// Forwards to another completer while tallying one document's usage.
class MeteredCompleter final : public Completer {
 public:
  explicit MeteredCompleter(Completer& inner) : inner_(inner) {}

  CompletionRecord complete(const std::string& backend, const Messages& messages) override {
    auto rec = inner_.complete(backend, messages);
    ++calls;
    input_tokens += rec.input_tokens;
    output_tokens += rec.output_tokens;
    cost += rec.cost.value_or(0.0);
    return rec;
  }

  std::size_t calls = 0;
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;
  double cost = 0.0;

 private:
  Completer& inner_;
};

// Ids and texts, so an edited document invalidates the job.
std::string corpus_digest(const Corpus& corpus) {
  std::string buf = corpus.taxonomy().fingerprint();
  for (const auto& d : corpus.documents()) {
    buf += '\n';
    buf += sha256_hex(d.id + '\0' + d.text);
  }
  return sha256_hex(buf);
}

/// Drops a partial final line so appends start on a fresh line.
void repair_tail(const fs::path& path) {
  if (!fs::exists(path)) return;
  const auto content = read_file(path);
  if (content.empty() || content.back() == '\n') return;
  const auto keep = content.rfind('\n');
  fs::resize_file(path, keep == std::string::npos ? 0 : keep + 1);
}

enum class DocOutcome { written, unavailable };

}  // namespace

ScaleSummary run_scale(const Corpus& corpus, Completer& completer, const TemplateSet& templates,
                       const ScaleOptions& options) {
  if (options.job_id.empty()) throw ValidationError("scale job needs an id");
  if (options.checkpoint_every == 0) throw ValidationError("checkpoint_every must be positive");
  if (options.doc_attempts == 0) throw ValidationError("doc_attempts must be positive");
  check_strategy(options.strategy, corpus.taxonomy());

  const auto started = std::chrono::steady_clock::now();
  fs::create_directories(options.dir);
  const auto out_path = predictions_path(options.dir);
  const auto ckpt_path = checkpoint_path(options.dir);

  ScaleCheckpoint ckpt;
  const auto digest = corpus_digest(corpus);
  if (fs::exists(ckpt_path)) {
    ckpt = ScaleCheckpoint::from_json(json::parse(read_file(ckpt_path)));
    if (ckpt.job_id != options.job_id) {
      throw ValidationError(fmt::format("{} belongs to job '{}', not '{}'", ckpt_path.string(), ckpt.job_id,
                                        options.job_id));
    }
    if (ckpt.corpus_sha != digest) {
      throw ValidationError(fmt::format("job '{}' was started on a different corpus", options.job_id));
    }
  } else {
    ckpt.job_id = options.job_id;
    ckpt.corpus_sha = digest;
  }
  ckpt.backend = options.strategy.backend;
  ckpt.strategy = options.strategy.to_json();

  repair_tail(out_path);
  std::set<std::string> finished;
  for (const auto& p : read_predictions(out_path)) finished.insert(p.doc_id);

  ScaleSummary summary;
  summary.job_id = options.job_id;
  summary.total = corpus.size();
  summary.resumed_from = finished.size();

  auto save = [&] {
    ckpt.updated_at = utc_timestamp();
    atomic_write_file(ckpt_path, ckpt.to_json().dump(2) + "\n");
  };

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!finished.count(corpus.documents()[i].id)) pending.push_back(i);
  }

  bool halted = false;
  if (options.probe && !pending.empty()) {
    try {
      MeteredCompleter probe(completer);
      probe.complete(options.strategy.backend, {{"user", "Reply with OK."}});
      ckpt.probe_calls += probe.calls;
      ckpt.probe_input_tokens += probe.input_tokens;
      ckpt.probe_output_tokens += probe.output_tokens;
      ckpt.probe_cost += probe.cost;
    } catch (const BackendUnavailable& e) {
      halted = true;
      summary.halt_reason = fmt::format("probe failed: {}", e.what());
    } catch (const BackendError& e) {
      halted = true;
      summary.halt_reason = fmt::format("probe failed: {}", e.what());
    }
  }

  std::ofstream out(out_path, std::ios::app | std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot open {}", out_path.string()));
  std::mutex write_mu;
  std::size_t retried = 0;

  auto process = [&](const Document& doc) -> DocOutcome {
    ScalePrediction pred;
    pred.doc_id = doc.id;
    MeteredCompleter meter(completer);
    for (std::size_t attempt = 1; attempt <= options.doc_attempts; ++attempt) {
      pred.attempts = attempt;
      try {
        auto outcome = classify(doc, corpus.taxonomy(), options.strategy, meter, templates);
        pred.parse_status = outcome.parsed.status;
        pred.completion_refs.insert(pred.completion_refs.end(), outcome.completion_refs.begin(),
                                    outcome.completion_refs.end());
        if (outcome.ok()) {
          pred.ok = true;
          pred.labels = outcome.parsed.labels;
          pred.error.clear();
          pred.failure_kind.clear();
          break;
        }
        pred.error = *outcome.failure;
        pred.failure_kind = "parse";
      } catch (const BackendUnavailable&) {
        return DocOutcome::unavailable;
      } catch (const BackendError& e) {
        pred.error = e.what();
        pred.failure_kind = "request";
        pred.parse_status = ParseStatus::failed;
      }
    }
    pred.calls = meter.calls;
    pred.input_tokens = meter.input_tokens;
    pred.output_tokens = meter.output_tokens;
    pred.cost = meter.cost;

    std::lock_guard lock(write_mu);
    retried += pred.attempts - 1;
    out << pred.to_json().dump() << '\n';
    out.flush();
    if (options.on_prediction) options.on_prediction(pred);
    return DocOutcome::written;
  };

  const auto workers = std::max<std::size_t>(1, options.workers);
  for (std::size_t begin = 0; !halted && begin < pending.size(); begin += options.checkpoint_every) {
    const auto end = std::min(pending.size(), begin + options.checkpoint_every);
    std::atomic<std::size_t> next{begin};
    std::atomic<std::size_t> unavailable{0};
    std::exception_ptr fatal;
    std::mutex fatal_mu;
    std::atomic<bool> stop{false};

    auto worker = [&] {
      while (!stop.load()) {
        const auto k = next.fetch_add(1);
        if (k >= end) return;
        try {
          if (process(corpus.documents()[pending[k]]) == DocOutcome::unavailable) ++unavailable;
        } catch (...) {
          std::lock_guard lock(fatal_mu);
          if (!fatal) fatal = std::current_exception();
          stop = true;
          return;
        }
      }
    };
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < std::min(workers, end - begin); ++w) pool.emplace_back(worker);
    }
    if (fatal) std::rethrow_exception(fatal);

    ckpt.cursor = std::max(ckpt.cursor, pending[end - 1] + 1);
    ckpt.retried += retried;
    retried = 0;
    summary.processed_this_run += (end - begin) - unavailable.load();
    if (unavailable.load() == end - begin) {
      halted = true;
      summary.halt_reason = fmt::format("backend '{}' unavailable for a whole batch of {} documents",
                                        options.strategy.backend, end - begin);
    }
    ckpt.status = halted ? "halted" : "running";
    save();
  }
  out.close();

  // Totals come from the output file so that resumed runs report the whole job.
  const auto all = read_predictions(out_path);
  std::size_t parse_failures = 0;
  for (const auto& p : all) {
    if (p.ok) {
      ++summary.done;
    } else {
      ++summary.failed;
      if (p.failure_kind == "parse") ++parse_failures;
    }
    summary.calls += p.calls;
    summary.input_tokens += p.input_tokens;
    summary.output_tokens += p.output_tokens;
    summary.cost += p.cost;
  }
  summary.calls += ckpt.probe_calls;
  summary.input_tokens += ckpt.probe_input_tokens;
  summary.output_tokens += ckpt.probe_output_tokens;
  summary.cost += ckpt.probe_cost;
  summary.pending = corpus.size() - all.size();
  summary.retried = ckpt.retried;
  summary.halted = halted;
  if (!all.empty()) summary.parse_failure_rate = static_cast<double>(parse_failures) / static_cast<double>(all.size());
  summary.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (summary.elapsed_s > 0) summary.docs_per_sec = static_cast<double>(summary.processed_this_run) / summary.elapsed_s;

  ckpt.done = summary.done;
  ckpt.failed = summary.failed;
  ckpt.status = halted ? "halted" : (summary.pending == 0 ? "completed" : "incomplete");
  save();
  return summary;
}

// --------------------------------------------------------------- Evaluation

std::vector<PredictionRow> read_prediction_rows(const fs::path& path, const Taxonomy& taxonomy) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open {}", path.string()));
  std::vector<PredictionRow> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      throw ValidationError(fmt::format("{} line {}: malformed JSON", path.string(), no));
    }
    PredictionRow row;
    if (j.contains("id")) {
      row.doc_id = j["id"].get<std::string>();
    } else if (j.contains("doc_id")) {
      row.doc_id = j["doc_id"].get<std::string>();
    } else {
      throw ValidationError(fmt::format("{} line {}: missing id", path.string(), no));
    }
    if (j.value("ok", true)) {
      for (const auto& tok : j.value("labels", std::vector<std::string>{})) {
        auto id = taxonomy.resolve(tok);
        if (!id) throw ValidationError(fmt::format("{} line {}: unknown label '{}'", path.string(), no, tok));
        row.labels.push_back(*id);
      }
      row.labels = taxonomy.canonicalize(row.labels);
    }
    if (seen.insert(row.doc_id).second) out.push_back(std::move(row));
  }
  return out;
}

MetricsReport evaluate_run(std::span<const PredictionRow> predictions, const Corpus& gold,
                           std::optional<MetricsMode> mode, json metadata) {
  std::vector<std::string> missing;
  std::vector<std::string> unlabeled;
  std::vector<std::string> ids;
  std::vector<std::vector<LabelId>> truth;
  std::vector<std::vector<LabelId>> pred;
  for (const auto& p : predictions) {
    const auto* doc = gold.find(p.doc_id);
    if (!doc) {
      missing.push_back(p.doc_id);
      continue;
    }
    if (!doc->true_labels) {
      unlabeled.push_back(p.doc_id);
      continue;
    }
    ids.push_back(p.doc_id);
    truth.push_back(*doc->true_labels);
    pred.push_back(p.labels);
  }
  if (!missing.empty()) {
    throw ValidationError(fmt::format("predictions for documents not in the gold corpus: {}", fmt::join(missing, ", ")));
  }
  if (!unlabeled.empty()) {
    throw ValidationError(fmt::format("gold documents without labels: {}", fmt::join(unlabeled, ", ")));
  }
  const auto m = mode.value_or(gold.taxonomy().exclusive() ? MetricsMode::exclusive : MetricsMode::multilabel);
  auto report = compute_report(PredictionSet::from_labels(gold.taxonomy(), ids, truth, pred), m);
  metadata["taxonomy"] = gold.taxonomy().name();
  metadata["taxonomy_sha"] = gold.taxonomy().fingerprint();
  metadata["gold_size"] = gold.size();
  metadata["evaluated"] = ids.size();
  report.metadata = std::move(metadata);
  return report;
}

}  // namespace labelforge
