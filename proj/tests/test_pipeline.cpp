#include <fstream>
#include <set>

#include "doctest.h"
#include "labelforge/error.hpp"
#include "labelforge/pipeline.hpp"
#include "support.hpp"

using namespace labelforge;
using lf_test::MockBackends;
using lf_test::MockReply;
using lf_test::Prompt;
using lf_test::TempDir;

namespace {

std::vector<ResolvedDocument> resolve_all(const Corpus& c) {
  std::vector<ResolvedDocument> out;
  for (const auto& d : c.documents()) {
    ResolvedDocument r;
    r.doc_id = d.id;
    r.surviving_labels = *d.true_labels;
    out.push_back(r);
  }
  return out;
}

MockReply echo_gold(const Prompt& p) {
  const auto names = lf_test::names_in_text(p.text);
  return {names.empty() ? "OK" : names.front()};
}

ScaleOptions scale_opts(const std::filesystem::path& dir, const std::string& backend = "m") {
  ScaleOptions o;
  o.job_id = "job";
  o.dir = dir;
  o.strategy.kind = StrategyKind::zero_shot;
  o.strategy.backend = backend;
  o.checkpoint_every = 5;
  o.workers = 2;
  return o;
}

}  // namespace

TEST_CASE("canonical output round trips in taxonomy order") {
  auto dv = lf_test::fixture_taxonomy("dataverse");
  const auto& labels = dv->labels();
  const std::vector<LabelId> picked{labels[5].id, labels[1].id};
  const auto text = canonical_output(picked, *dv);
  CHECK(text == labels[1].name + "; " + labels[5].name);
  CHECK(parse_canonical_output(text, *dv) == std::vector<LabelId>{labels[1].id, labels[5].id});
  CHECK(parse_canonical_output("", *dv).empty());
  CHECK_THROWS_AS(parse_canonical_output("Not A Label", *dv), ValidationError);
}

TEST_CASE("fine-tune export splits documents and writes a manifest") {
  TempDir tmp;
  auto dv = lf_test::fixture_taxonomy("dataverse");
  auto corpus = lf_test::synthetic_corpus(dv, 40, 3, 2);
  auto resolved = resolve_all(corpus);
  resolved[0].surviving_labels.clear();
  const TemplateSet t;
  ExportOptions o;
  o.seed = 9;
  const auto ex = export_finetune(corpus, resolved, t.get("multi_label"), o, tmp.path());
  CHECK(ex.manifest.skipped_empty == 1);
  CHECK(ex.manifest.train_docs == 27);  // floor(0.7 * 39)
  CHECK(ex.manifest.test_docs == 12);
  CHECK(ex.train.size() == 27);
  for (const auto& e : ex.train) {
    CHECK(e.input == corpus.find(e.doc_id)->text);
    CHECK(parse_canonical_output(e.output, *dv) == *corpus.find(e.doc_id)->true_labels);
    CHECK(e.instruction.find("{text}") == std::string::npos);
  }
  CHECK(read_examples(tmp / "train.jsonl").size() == 27);
  CHECK(read_examples(tmp / "test.jsonl").size() == 12);
  const auto manifest = ExportManifest::from_json(nlohmann::json::parse(std::ifstream(tmp / "manifest.json")));
  CHECK(manifest.train_sha == ex.manifest.train_sha);
  CHECK(manifest.seed == 9);

  // Same inputs, same bytes.
  const auto again = build_finetune_export(corpus, resolved, t.get("multi_label"), o);
  CHECK(again.manifest.train_sha == ex.manifest.train_sha);

  o.per_label_replication = true;
  const auto rep = build_finetune_export(corpus, resolved, t.get("multi_label"), o);
  std::size_t labels = 0;
  for (const auto& d : corpus.documents()) {
    if (d.id != corpus.documents()[0].id) labels += d.true_labels->size();
  }
  CHECK(rep.train.size() + rep.test.size() == labels);

  o.per_label_replication = false;
  o.include_empty = true;
  CHECK(build_finetune_export(corpus, resolved, t.get("multi_label"), o).manifest.skipped_empty == 0);
}

TEST_CASE("export refuses conflicts and unknown documents") {
  auto cap = lf_test::fixture_taxonomy("cap");
  auto corpus = lf_test::synthetic_corpus(cap, 5, 1);
  auto resolved = resolve_all(corpus);
  const TemplateSet t;
  resolved[2].conflict = true;
  CHECK_THROWS_WITH_AS(build_finetune_export(corpus, resolved, t.get("zero_shot"), {}),
                       doctest::Contains(resolved[2].doc_id.c_str()), ExportError);
  resolved[2].conflict = false;
  resolved[3].doc_id = "ghost";
  CHECK_THROWS_WITH_AS(build_finetune_export(corpus, resolved, t.get("zero_shot"), {}), doctest::Contains("ghost"),
                       ExportError);
}

TEST_CASE("scale writes one prediction per document and checkpoints") {
  TempDir tmp;
  auto cap = lf_test::fixture_taxonomy("cap");
  auto corpus = lf_test::synthetic_corpus(cap, 23, 4);
  MockBackends mock(echo_gold);
  Gateway gw(mock.transport(), nullptr, lf_test::no_sleep());
  gw.add_backend(lf_test::mock_backend("m"));
  const auto s = run_scale(corpus, gw, TemplateSet{}, scale_opts(tmp.path()));
  CHECK(s.done == 23);
  CHECK(s.failed == 0);
  CHECK(s.pending == 0);
  CHECK_FALSE(s.halted);
  CHECK(mock.requests("m") == 24);  // probe plus one per document
  const auto preds = read_predictions(predictions_path(tmp.path()));
  REQUIRE(preds.size() == 23);
  for (const auto& p : preds) CHECK(p.labels == *corpus.find(p.doc_id)->true_labels);
  const auto ck = ScaleCheckpoint::from_json(nlohmann::json::parse(std::ifstream(checkpoint_path(tmp.path()))));
  CHECK(ck.cursor == 23);
  CHECK(ck.probe_calls == 1);

  // A finished job re-run does nothing and skips the probe.
  const auto again = run_scale(corpus, gw, TemplateSet{}, scale_opts(tmp.path()));
  CHECK(again.processed_this_run == 0);
  CHECK(again.resumed_from == 23);
  CHECK(mock.requests("m") == 24);
}

TEST_CASE("scale retries a parse failure and records the kind") {
  TempDir tmp;
  auto cap = lf_test::fixture_taxonomy("cap");
  auto corpus = lf_test::synthetic_corpus(cap, 4, 2);
  MockBackends mock([](const Prompt& p) -> MockReply {
    if (p.text.rfind("doc-0", 0) == 0) return {"no idea"};
    return echo_gold(p);
  });
  Gateway gw(mock.transport(), nullptr, lf_test::no_sleep());
  gw.add_backend(lf_test::mock_backend("m"));
  auto o = scale_opts(tmp.path());
  o.probe = false;
  o.doc_attempts = 3;
  const auto s = run_scale(corpus, gw, TemplateSet{}, o);
  CHECK(s.failed == 1);
  CHECK(s.done == 3);
  const auto preds = read_predictions(predictions_path(tmp.path()));
  for (const auto& p : preds) {
    if (p.ok) continue;
    CHECK(p.failure_kind == "parse");
    CHECK(p.attempts == 3);
    CHECK(p.calls == 3);
  }
}

TEST_CASE("scale halts on a dead backend and resumes later") {
  TempDir tmp;
  auto cap = lf_test::fixture_taxonomy("cap");
  auto corpus = lf_test::synthetic_corpus(cap, 20, 5);
  std::atomic<bool> down{true};
  MockBackends mock([&](const Prompt& p) -> MockReply {
    if (down) return {"", 503};
    return echo_gold(p);
  });
  Gateway gw(mock.transport(), nullptr, lf_test::no_sleep());
  gw.add_backend(lf_test::mock_backend("m", 2, 2));

  auto s = run_scale(corpus, gw, TemplateSet{}, scale_opts(tmp.path()));
  CHECK(s.halted);
  CHECK(s.halt_reason.find("probe") != std::string::npos);
  CHECK(s.done == 0);

  auto o = scale_opts(tmp.path());
  o.probe = false;
  s = run_scale(corpus, gw, TemplateSet{}, o);
  CHECK(s.halted);
  CHECK(s.halt_reason.find("unavailable") != std::string::npos);
  CHECK(read_predictions(predictions_path(tmp.path())).empty());

  down = false;
  s = run_scale(corpus, gw, TemplateSet{}, scale_opts(tmp.path()));
  CHECK_FALSE(s.halted);
  CHECK(s.done == 20);
}

TEST_CASE("scale repairs a torn tail and refuses a different corpus") {
  TempDir tmp;
  auto cap = lf_test::fixture_taxonomy("cap");
  auto corpus = lf_test::synthetic_corpus(cap, 10, 6);
  MockBackends mock(echo_gold);
  Gateway gw(mock.transport(), nullptr, lf_test::no_sleep());
  gw.add_backend(lf_test::mock_backend("m"));
  auto o = scale_opts(tmp.path());
  std::size_t seen = 0;
  o.on_prediction = [&](const ScalePrediction&) {
    if (++seen == 4) throw std::runtime_error("crash");
  };
  CHECK_THROWS_AS(run_scale(corpus, gw, TemplateSet{}, o), std::runtime_error);
  { std::ofstream(predictions_path(tmp.path()), std::ios::app) << R"({"doc_id":"doc-)"; }
  const auto partial = read_predictions(predictions_path(tmp.path()));
  CHECK(partial.size() >= 4);

  const auto s = run_scale(corpus, gw, TemplateSet{}, scale_opts(tmp.path()));
  CHECK(s.done == 10);
  std::set<std::string> ids;
  std::ifstream in(predictions_path(tmp.path()));
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line); ++lines) {
    CHECK(ids.insert(nlohmann::json::parse(line)["doc_id"].get<std::string>()).second);
  }
  CHECK(lines == 10);

  auto other = lf_test::synthetic_corpus(cap, 10, 7);
  CHECK_THROWS_AS(run_scale(other, gw, TemplateSet{}, scale_opts(tmp.path())), ValidationError);
  auto renamed = scale_opts(tmp.path());
  renamed.job_id = "other";
  CHECK_THROWS_AS(run_scale(corpus, gw, TemplateSet{}, renamed), ValidationError);
  auto bad = scale_opts(tmp / "x");
  bad.checkpoint_every = 0;
  CHECK_THROWS_AS(run_scale(corpus, gw, TemplateSet{}, bad), ValidationError);
}

TEST_CASE("evaluate checks ids and picks the mode from the taxonomy") {
  TempDir tmp;
  auto cap = lf_test::fixture_taxonomy("cap");
  auto gold = lf_test::synthetic_corpus(cap, 10, 3);
  std::vector<PredictionRow> rows;
  for (const auto& d : gold.documents()) rows.push_back({d.id, *d.true_labels});
  rows[0].labels.clear();
  const auto r = evaluate_run(rows, gold);
  CHECK(r.mode == MetricsMode::exclusive);
  CHECK(*r.accuracy == doctest::Approx(0.9));
  CHECK(r.unparsed == 1);

  rows.push_back({"ghost", {}});
  CHECK_THROWS_WITH_AS(evaluate_run(rows, gold), doctest::Contains("ghost"), ValidationError);

  {
    std::ofstream out(tmp / "p.jsonl");
    out << R"({"id":"doc-1","labels":["Health"]})" "\n";
    out << R"({"doc_id":"doc-2","ok":true,"labels":["Law and Crime"]})" "\n";
  }
  const auto read = read_prediction_rows(tmp / "p.jsonl", *cap);
  REQUIRE(read.size() == 2);
  CHECK(read[0].labels == std::vector<LabelId>{"Health"});
  { std::ofstream(tmp / "bad.jsonl") << R"({"id":"doc-1","labels":["Astrology"]})" "\n"; }
  CHECK_THROWS_AS(read_prediction_rows(tmp / "bad.jsonl", *cap), ValidationError);
}
