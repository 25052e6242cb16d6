#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "labelforge/config.hpp"
#include "labelforge/corpus.hpp"
#include "labelforge/error.hpp"
#include "labelforge/gateway.hpp"
#include "labelforge/metrics.hpp"
#include "labelforge/pipeline.hpp"
#include "labelforge/server.hpp"
#include "labelforge/store.hpp"
#include "labelforge/strategies.hpp"
#include "labelforge/util.hpp"
#include "labelforge/verification.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace labelforge;

namespace {

struct Globals {
  std::string config_path;
  std::string store_path;
  bool json_output = false;
};

AppConfig load_config(const Globals& g) {
  AppConfig cfg;
  if (!g.config_path.empty()) {
    cfg = AppConfig::load(g.config_path);
  } else if (fs::exists("labelforge.toml")) {
    cfg = AppConfig::load("labelforge.toml");
  }
  if (!g.store_path.empty()) cfg.store = g.store_path;
  return cfg;
}

std::unique_ptr<Store> open_store(const AppConfig& cfg) {
  auto store = std::make_unique<Store>(cfg.store);
  store->migrate();
  return store;
}

std::string pick_project(Store& store, const std::string& requested) {
  if (!requested.empty()) {
    store.project(requested);
    return requested;
  }
  const auto all = store.projects();
  if (all.size() == 1) return all.front().id;
  throw ValidationError(all.empty() ? "no projects in store; run ingest first"
                                    : "several projects in store; pass --project");
}

void emit(const Globals& g, const json& j, const std::string& human) {
  if (g.json_output) {
    fmt::print("{}\n", j.dump(2));
  } else {
    fmt::print("{}\n", human);
  }
}

void write_text(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    fmt::print("{}", content);
    return;
  }
  atomic_write_file(path, content);
}

std::string metrics_human(const MetricsReport& r) { return r.to_markdown(); }

void write_report(const MetricsReport& report, const std::string& path, const Globals& g) {
  if (path.empty()) {
    emit(g, report.to_json(), metrics_human(report));
    return;
  }
  const auto ext = fs::path(path).extension();
  write_text(path, ext == ".md" ? report.to_markdown() : report.to_json().dump(2) + "\n");
  emit(g, {{"report", path}}, fmt::format("report written to {}", path));
}

std::shared_ptr<const Taxonomy> taxonomy_arg(const std::string& path) {
  return std::make_shared<const Taxonomy>(load_taxonomy(path));
}

Corpus corpus_file(const std::string& path, std::shared_ptr<const Taxonomy> tax) {
  const auto ext = fs::path(path).extension();
  if (ext == ".csv") return ingest_csv(path, CsvMapping{}, std::move(tax)).corpus;
  return ingest_jsonl(path, std::move(tax)).corpus;
}

void add_backends(Gateway& gw, const AppConfig& cfg) {
  for (const auto& b : cfg.backends) gw.add_backend(b);
}

std::vector<Coder> parse_coders(const std::vector<std::string>& specs) {
  std::vector<Coder> out;
  for (const auto& s : specs) {
    Coder c;
    const auto colon = s.find(':');
    c.id = s.substr(0, colon);
    c.display_name = c.id;
    if (colon != std::string::npos) c.role = coder_role_from_string(s.substr(colon + 1));
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"labelforge: LLM-assisted labeling with human verification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", LABELFORGE_VERSION);
  Globals g;
  app.add_option("--config", g.config_path, "Config file (TOML or JSON); defaults to ./labelforge.toml");
  app.add_option("--store", g.store_path, "Store path, overriding the config");
  app.add_flag("--json", g.json_output, "Machine-readable JSON output");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Load a corpus into a new or existing project");
  std::string in_csv, in_jsonl, in_tax, in_project, in_name, in_out, id_col = "id", text_col = "text", label_col;
  char delim = ';';
  auto* csv_opt = ingest->add_option("--csv", in_csv, "CSV file")->check(CLI::ExistingFile);
  auto* jsonl_opt = ingest->add_option("--jsonl", in_jsonl, "JSONL file")->check(CLI::ExistingFile);
  csv_opt->excludes(jsonl_opt);
  ingest->add_option("--taxonomy", in_tax, "Taxonomy file")->required()->check(CLI::ExistingFile);
  ingest->add_option("--project", in_project, "Existing project id to append to");
  ingest->add_option("--name", in_name, "Name for a new project");
  ingest->add_option("--id-col", id_col, "CSV id column");
  ingest->add_option("--text-col", text_col, "CSV text column");
  ingest->add_option("--label-col", label_col, "CSV gold label column");
  ingest->add_option("--label-delim", delim, "Delimiter between labels in the label column");
  ingest->add_option("--out", in_out, "Also write the canonical corpus JSONL here");

  // classify
  auto* classify_cmd = app.add_subcommand("classify", "Run the LLM crowd over a project's documents");
  std::string cl_project, cl_out;
  std::vector<std::string> cl_only;
  classify_cmd->add_option("--project", cl_project, "Project id");
  classify_cmd->add_option("--only", cl_only, "Restrict to these crowd config names");
  classify_cmd->add_option("--out", cl_out, "Also write candidates JSONL here");

  // assign
  auto* assign_cmd = app.add_subcommand("assign", "Add coders and distribute documents for review");
  std::string as_project;
  std::vector<std::string> as_coders;
  std::optional<double> as_overlap;
  std::optional<std::size_t> as_cap;
  std::optional<std::uint64_t> as_seed;
  assign_cmd->add_option("--project", as_project, "Project id");
  assign_cmd->add_option("--coders", as_coders, "Coder ids, optionally id:role")->required()->delimiter(',');
  assign_cmd->add_option("--overlap", as_overlap, "Fraction of documents given to two coders")->check(CLI::Range(0.0, 1.0));
  assign_cmd->add_option("--cap", as_cap, "Maximum documents per coder");
  assign_cmd->add_option("--seed", as_seed, "Random seed");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP API and web UI");
  std::optional<std::string> sv_host;
  std::optional<int> sv_port;
  std::string sv_webroot;
  serve->add_option("--host", sv_host, "Bind address");
  serve->add_option("--port", sv_port, "Port (0 picks a free one)");
  serve->add_option("--webroot", sv_webroot, "Directory with the web UI bundle");

  // resolve
  auto* resolve_cmd = app.add_subcommand("resolve", "Apply a resolution policy to submitted reviews");
  std::string rs_project, rs_policy, rs_out;
  resolve_cmd->add_option("--project", rs_project, "Project id");
  resolve_cmd->add_option("--policy", rs_policy, "any_reject_drops | majority_reject_drops | unanimous_keep");
  resolve_cmd->add_option("--out", rs_out, "Write resolved.jsonl here");

  // export-finetune
  auto* export_cmd = app.add_subcommand("export-finetune", "Write train/test instruction-tuning JSONL");
  std::string ex_project, ex_out, ex_template;
  std::optional<double> ex_ratio;
  std::optional<std::uint64_t> ex_seed;
  bool ex_replicate = false, ex_empty = false, ex_stratify = false;
  export_cmd->add_option("--project", ex_project, "Project id");
  export_cmd->add_option("--out", ex_out, "Output directory")->required();
  export_cmd->add_option("--template", ex_template, "Prompt template id for the instruction field");
  export_cmd->add_option("--ratio", ex_ratio, "Training share")->check(CLI::Range(0.0, 1.0));
  export_cmd->add_option("--seed", ex_seed, "Split seed");
  export_cmd->add_flag("--per-label-replication", ex_replicate, "One example per (document, label)");
  export_cmd->add_flag("--include-empty", ex_empty, "Keep documents with no surviving label");
  export_cmd->add_flag("--stratify", ex_stratify, "Stratify the split by label (exclusive taxonomies)");

  // scale
  auto* scale = app.add_subcommand("scale", "Classify a large corpus with a (tuned) backend, resumably");
  std::string sc_corpus, sc_tax, sc_project, sc_backend, sc_resume, sc_job, sc_dir, sc_strategy = "zero_shot",
                                                                            sc_template;
  std::optional<std::size_t> sc_every, sc_workers;
  scale->add_option("--corpus", sc_corpus, "Corpus JSONL/CSV (or use --project)");
  scale->add_option("--taxonomy", sc_tax, "Taxonomy for --corpus");
  scale->add_option("--project", sc_project, "Project whose documents to classify");
  scale->add_option("--backend", sc_backend, "Backend name from the config");
  scale->add_option("--resume", sc_resume, "Resume this job id");
  scale->add_option("--job", sc_job, "Job id for a new run");
  scale->add_option("--dir", sc_dir, "Job directory (default jobs/<id> next to the store)");
  scale->add_option("--strategy", sc_strategy, "zero_shot | direct | iterative");
  scale->add_option("--template", sc_template, "Prompt template id");
  scale->add_option("--checkpoint-every", sc_every, "Documents per checkpoint");
  scale->add_option("--workers", sc_workers, "Concurrent documents");

  // metrics
  auto* metrics_cmd = app.add_subcommand("metrics", "Score predictions against gold labels");
  std::string mt_pred, mt_truth, mt_tax, mt_mode, mt_report;
  metrics_cmd->add_option("--pred", mt_pred, "Predictions JSONL {id, labels}")->required()->check(CLI::ExistingFile);
  metrics_cmd->add_option("--truth", mt_truth, "Gold corpus JSONL")->required()->check(CLI::ExistingFile);
  metrics_cmd->add_option("--taxonomy", mt_tax, "Taxonomy file")->required()->check(CLI::ExistingFile);
  metrics_cmd->add_option("--mode", mt_mode, "exclusive | multilabel")->check(CLI::IsMember({"exclusive", "multilabel"}));
  metrics_cmd->add_option("--report", mt_report, "Write report to .json or .md");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score a scale run against a gold corpus");
  std::string ev_run, ev_gold, ev_tax, ev_report, ev_mode;
  evaluate->add_option("--run", ev_run, "Job directory or predictions JSONL")->required()->check(CLI::ExistingPath);
  evaluate->add_option("--gold", ev_gold, "Gold corpus JSONL")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--taxonomy", ev_tax, "Taxonomy file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--mode", ev_mode, "exclusive | multilabel")->check(CLI::IsMember({"exclusive", "multilabel"}));
  evaluate->add_option("--report", ev_report, "Write report to .json or .md");

  // reliability
  auto* reliability = app.add_subcommand("reliability", "Inter-coder agreement on overlapping reviews");
  std::string rl_project;
  reliability->add_option("--project", rl_project, "Project id");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*ingest) {
      if (in_csv.empty() && in_jsonl.empty()) throw ValidationError("ingest needs --csv or --jsonl");
      const auto cfg = load_config(g);
      auto store = open_store(cfg);
      auto tax = taxonomy_arg(in_tax);
      CsvMapping mapping{id_col, text_col, label_col.empty() ? std::nullopt : std::optional(label_col), delim};
      auto result = !in_csv.empty() ? ingest_csv(in_csv, mapping, tax) : ingest_jsonl(in_jsonl, tax);
      std::string project = in_project;
      if (project.empty()) {
        const auto name = in_name.empty() ? fs::path(!in_csv.empty() ? in_csv : in_jsonl).stem().string() : in_name;
        project = store->create_project(name, *tax, cfg.to_json());
      }
      store->put_corpus(project, result.corpus);
      if (!in_out.empty()) write_jsonl(result.corpus, in_out);
      emit(g,
           {{"project", project}, {"documents", result.corpus.size()}, {"dropped_empty", result.dropped_empty}},
           fmt::format("project {}: {} documents ingested ({} empty rows dropped)", project, result.corpus.size(),
                       result.dropped_empty));
    } else if (*classify_cmd) {
      const auto cfg = load_config(g);
      auto store = open_store(cfg);
      const auto project = pick_project(*store, cl_project);
      std::vector<StrategyConfig> configs;
      for (const auto& c : cfg.crowd) {
        if (cl_only.empty() || std::find(cl_only.begin(), cl_only.end(), c.key()) != cl_only.end()) {
          configs.push_back(c);
        }
      }
      if (configs.empty()) throw ConfigError("no crowd configs selected; add [[crowd]] entries to the config");
      const auto dir = (cfg.store.has_parent_path() ? cfg.store.parent_path() : fs::path(".")) / "crowd" / project;
      fs::create_directories(dir);
      CompletionJournal journal(dir / "completions.jsonl");
      Gateway gateway(make_http_transport(), &journal);
      add_backends(gateway, cfg);
      const auto corpus = store->corpus(project);
      CrowdOptions opts;
      opts.workers = cfg.defaults.workers;
      opts.journal = dir / "pairs.jsonl";
      auto run = run_crowd(corpus, configs, gateway, cfg.template_set(), opts);
      for (const auto& r : CompletionJournal::load(dir / "completions.jsonl")) store->put_completion(r);
      if (run.halted) {
        emit(g, {{"halted", true}, {"reason", run.halt_reason}},
             fmt::format("crowd halted: {}; rerun classify to resume", run.halt_reason));
        return 3;
      }
      store->put_candidates(project, run.results);
      json snapshot = json::array();
      for (const auto& c : configs) snapshot.push_back(c.to_json());
      store->advance_stage(project, Stage::crowd_done, {{"crowd", snapshot}});
      if (!cl_out.empty()) write_crowd_jsonl(run.results, cl_out);
      std::size_t candidates = 0;
      for (const auto& r : run.results) candidates += r.candidates.size();
      emit(g,
           {{"project", project}, {"executed_pairs", run.executed_pairs}, {"skipped_pairs", run.skipped_pairs},
            {"calls", run.calls}, {"candidates", candidates}},
           fmt::format("{} pairs run ({} resumed), {} calls, {} candidate labels", run.executed_pairs,
                       run.skipped_pairs, run.calls, candidates));
    } else if (*assign_cmd) {
      const auto cfg = load_config(g);
      auto store = open_store(cfg);
      const auto project = pick_project(*store, as_project);
      const auto coders = parse_coders(as_coders);
      const auto corpus = store->corpus(project);
      const double overlap = as_overlap.value_or(cfg.defaults.overlap);
      std::size_t cap = as_cap.value_or(cfg.defaults.per_coder_cap);
      if (cap == 0) {
        const auto n = corpus.size();
        const auto slots = n + static_cast<std::size_t>(std::ceil(overlap * static_cast<double>(n) - 1e-9));
        cap = (slots + coders.size() - 1) / coders.size();
      }
      auto assignments = assign(corpus, coders, overlap, cap, as_seed.value_or(cfg.defaults.seed));
      json tokens = json::object();
      for (const auto& c : coders) tokens[c.id] = store->add_coder(project, c);
      store->put_assignments(project, assignments);
      store->advance_stage(project, Stage::verifying, {{"overlap", overlap}, {"cap", cap}});
      std::string human = fmt::format("{} assignments for {} coders (cap {})\ncoder tokens (shown once):",
                                      assignments.size(), coders.size(), cap);
      for (const auto& [id, tok] : tokens.items()) human += fmt::format("\n  {}: {}", id, tok.get<std::string>());
      emit(g, {{"project", project}, {"assignments", assignments.size()}, {"cap", cap}, {"tokens", tokens}}, human);
    } else if (*serve) {
      auto cfg = load_config(g);
      if (sv_host) cfg.server.host = *sv_host;
      if (sv_port) cfg.server.port = *sv_port;
      if (!sv_webroot.empty()) cfg.server.webroot = sv_webroot;
      auto store = open_store(cfg);
      Server server(*store, cfg);
      const int port = server.bind(cfg.server.host, cfg.server.port);
      spdlog::info("listening on http://{}:{}", cfg.server.host, port);
      server.run();
    } else if (*resolve_cmd) {
      const auto cfg = load_config(g);
      auto store = open_store(cfg);
      const auto project = pick_project(*store, rs_project);
      const auto policy = rs_policy.empty() ? cfg.defaults.policy : resolution_policy_from_string(rs_policy);
      const auto resolved = store->resolve(project, policy);
      store->advance_stage(project, Stage::resolved, {{"policy", to_string(policy)}});
      std::size_t conflicts = 0, empty = 0;
      std::string lines;
      for (const auto& r : resolved) {
        conflicts += r.conflict;
        empty += r.surviving_labels.empty();
        lines += r.to_json(store->document(project, r.doc_id)->text).dump() + "\n";
      }
      if (!rs_out.empty()) write_text(rs_out, lines);
      emit(g, {{"project", project}, {"resolved", resolved.size()}, {"conflicts", conflicts}, {"empty", empty}},
           fmt::format("{} documents resolved with {}: {} conflicts, {} with no surviving label", resolved.size(),
                       to_string(policy), conflicts, empty));
    } else if (*export_cmd) {
      const auto cfg = load_config(g);
      auto store = open_store(cfg);
      const auto project = pick_project(*store, ex_project);
      const auto corpus = store->corpus(project);
      const auto templates = cfg.template_set();
      const auto tmpl_id =
          !ex_template.empty() ? ex_template : (corpus.taxonomy().exclusive() ? "zero_shot" : "multi_label");
      ExportOptions opts;
      opts.ratio = ex_ratio.value_or(cfg.defaults.split_ratio);
      opts.seed = ex_seed.value_or(cfg.defaults.seed);
      opts.per_label_replication = ex_replicate;
      opts.include_empty = ex_empty;
      opts.stratify = ex_stratify;
      const auto resolved = store->resolutions(project);
      if (resolved.empty()) throw NotReadyError("no resolutions yet; run resolve first");
      auto out = export_finetune(corpus, resolved, templates.get(tmpl_id), opts, ex_out);
      store->advance_stage(project, Stage::exported, out.manifest.to_json());
      emit(g, out.manifest.to_json(),
           fmt::format("{} train / {} test examples written to {}", out.manifest.train_examples,
                       out.manifest.test_examples, ex_out));
    } else if (*scale) {
      const auto cfg = load_config(g);
      std::unique_ptr<Store> store;
      std::optional<Corpus> corpus;
      if (!sc_corpus.empty()) {
        if (sc_tax.empty()) throw ValidationError("--corpus needs --taxonomy");
        corpus = corpus_file(sc_corpus, taxonomy_arg(sc_tax));
      } else {
        store = open_store(cfg);
        corpus = store->corpus(pick_project(*store, sc_project));
      }
      const auto job = !sc_resume.empty() ? sc_resume : (!sc_job.empty() ? sc_job : "j" + random_token(6));
      const auto dir = !sc_dir.empty() ? fs::path(sc_dir)
                                       : (cfg.store.has_parent_path() ? cfg.store.parent_path() : fs::path(".")) /
                                             "jobs" / job;
      if (!sc_resume.empty() && !fs::exists(checkpoint_path(dir))) {
        throw ValidationError(fmt::format("no checkpoint for job '{}' in {}", job, dir.string()));
      }
      std::string backend = sc_backend;
      if (backend.empty()) {
        for (const auto& b : cfg.backends) {
          if (b.fine_tuned) backend = b.name;
        }
      }
      if (backend.empty()) throw ConfigError("no --backend given and no fine_tuned backend in config");
      cfg.backend(backend);
      fs::create_directories(dir);
      CompletionJournal journal(dir.parent_path() / (job + ".completions.jsonl"));
      Gateway gateway(make_http_transport(), &journal);
      add_backends(gateway, cfg);
      ScaleOptions opts;
      opts.job_id = job;
      opts.dir = dir;
      opts.strategy.kind = strategy_kind_from_string(sc_strategy);
      opts.strategy.backend = backend;
      opts.strategy.template_id = sc_template;
      opts.checkpoint_every = sc_every.value_or(cfg.defaults.checkpoint_every);
      opts.workers = sc_workers.value_or(cfg.backend(backend).max_concurrency);
      const auto summary = run_scale(*corpus, gateway, cfg.template_set(), opts);
      emit(g, summary.to_json(),
           fmt::format("job {}: {} done, {} failed, {} pending; {:.1f} docs/s; {} tokens in, {} out; cost {:.4f}{}",
                       job, summary.done, summary.failed, summary.pending, summary.docs_per_sec, summary.input_tokens,
                       summary.output_tokens, summary.cost,
                       summary.halted ? fmt::format(" (halted: {}; resume with --resume {})", summary.halt_reason, job)
                                      : ""));
      if (summary.halted) return 3;
    } else if (*metrics_cmd) {
      auto tax = taxonomy_arg(mt_tax);
      const auto gold = ingest_jsonl(mt_truth, tax).corpus;
      const auto rows = read_prediction_rows(mt_pred, *tax);
      std::optional<MetricsMode> mode;
      if (!mt_mode.empty()) mode = metrics_mode_from_string(mt_mode);
      const auto report = evaluate_run(rows, gold, mode, {{"predictions", mt_pred}, {"truth", mt_truth}});
      write_report(report, mt_report, g);
    } else if (*evaluate) {
      auto tax = taxonomy_arg(ev_tax);
      const auto gold = ingest_jsonl(ev_gold, tax).corpus;
      const fs::path run = fs::is_directory(ev_run) ? predictions_path(ev_run) : fs::path(ev_run);
      const auto rows = read_prediction_rows(run, *tax);
      json meta{{"run", ev_run}, {"gold", ev_gold}};
      if (fs::is_directory(ev_run) && fs::exists(checkpoint_path(ev_run))) {
        meta["job"] = json::parse(read_file(checkpoint_path(ev_run)));
      }
      std::optional<MetricsMode> mode;
      if (!ev_mode.empty()) mode = metrics_mode_from_string(ev_mode);
      write_report(evaluate_run(rows, gold, mode, meta), ev_report, g);
    } else if (*reliability) {
      const auto cfg = load_config(g);
      auto store = open_store(cfg);
      const auto project = pick_project(*store, rl_project);
      const auto report = reliability_report(store->current_reviews(project), *store->taxonomy(project));
      std::string human;
      const auto& overall = report["overall"];
      if (overall["defined"].get<bool>()) {
        human = fmt::format("{} kappa: {:.3f} ({:.1f}%) over {} documents", overall["statistic"].get<std::string>(),
                            overall["kappa"].get<double>(), overall["percent"].get<double>(),
                            overall["items"].get<std::size_t>());
      } else {
        human = fmt::format("kappa not computable: {}", overall.value("reason", std::string{"no data"}));
      }
      for (const auto& p : report["pairs"]) {
        const auto& c = p["cohen"];
        human += fmt::format("\n  {} vs {}: {} shared, kappa {}", p["coder_a"].get<std::string>(),
                             p["coder_b"].get<std::string>(), p["shared_documents"].get<std::size_t>(),
                             c["defined"].get<bool>() ? fmt::format("{:.3f}", c["kappa"].get<double>())
                                                      : std::string("undefined"));
      }
      emit(g, report, human);
    }
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
