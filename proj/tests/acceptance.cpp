// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "labelforge/corpus.hpp"
#include "labelforge/error.hpp"
#include "labelforge/gateway.hpp"
#include "labelforge/metrics.hpp"
#include "labelforge/pipeline.hpp"
#include "labelforge/store.hpp"
#include "labelforge/strategies.hpp"
#include "labelforge/util.hpp"
#include "labelforge/verification.hpp"
#include "support.hpp"

using namespace labelforge;
using lf_test::MockBackends;
using lf_test::MockReply;
using lf_test::Prompt;
using lf_test::TempDir;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

bool near(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

void expect_rate(const Rate& got, const std::optional<double>& want, const std::string& what, double tol = 1e-12) {
  if (!want) {
    expect(!got, what + ": expected undefined");
    return;
  }
  expect(got.has_value(), what + ": expected a value, got undefined");
  expect(near(*got, *want, tol), fmt::format("{}: got {:.17g}, oracle {:.17g}", what, *got, *want));
}

// ------------------------------------------------------------ Criterion 1

// Brute-force reference implementation over plain nested vectors.
struct Oracle {
  using Rows = std::vector<std::vector<int>>;
  Rows truth, pred;
  std::size_t n, m;

  Oracle(Rows t, Rows p) : truth(std::move(t)), pred(std::move(p)), n(truth.size()), m(truth.empty() ? 0 : truth[0].size()) {}

  static std::optional<double> div(double a, double b) {
    if (b == 0) return std::nullopt;
    return a / b;
  }

  int count(std::size_t j, int t, int p) const {
    int c = 0;
    for (std::size_t i = 0; i < n; ++i) c += (truth[i][j] == t && pred[i][j] == p);
    return c;
  }
  int tp(std::size_t j) const { return count(j, 1, 1); }
  int fp(std::size_t j) const { return count(j, 0, 1); }
  int fn(std::size_t j) const { return count(j, 1, 0); }
  int tn(std::size_t j) const { return count(j, 0, 0); }

  std::optional<double> precision(std::size_t j) const { return div(tp(j), tp(j) + fp(j)); }
  std::optional<double> recall(std::size_t j) const { return div(tp(j), tp(j) + fn(j)); }
  std::optional<double> specificity(std::size_t j) const { return div(tn(j), tn(j) + fp(j)); }
  std::optional<double> bal(std::size_t j) const {
    auto r = recall(j), s = specificity(j);
    if (!r || !s) return std::nullopt;
    return 0.5 * (*r + *s);
  }
  std::optional<double> f1(std::size_t j) const {
    auto p = precision(j), r = recall(j);
    if (!p && !r) {
      // Class absent from truth and predictions.
      return std::nullopt;
    }
    const double pv = p.value_or(0.0), rv = r.value_or(0.0);
    if (pv + rv == 0.0) return 0.0;
    return 2.0 * pv * rv / (pv + rv);
  }

  std::pair<std::optional<double>, std::size_t> macro(std::function<std::optional<double>(std::size_t)> f) const {
    double sum = 0;
    std::size_t defined = 0, excluded = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (auto v = f(j)) {
        sum += *v;
        ++defined;
      } else {
        ++excluded;
      }
    }
    return {defined ? std::optional(sum / defined) : std::nullopt, excluded};
  }

  std::optional<double> weighted_f1() const {
    double sum = 0, w = 0;
    for (std::size_t j = 0; j < m; ++j) {
      auto v = f1(j);
      if (!v) continue;
      sum += *v * (tp(j) + fn(j));
      w += tp(j) + fn(j);
    }
    return div(sum, w);
  }

  std::optional<double> exclusive_accuracy() const {
    int correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) correct += truth[i][j] && pred[i][j];
    }
    return div(correct, n);
  }

  int unparsed() const {
    int u = 0;
    for (const auto& row : pred) u += std::accumulate(row.begin(), row.end(), 0) == 0;
    return u;
  }

  std::optional<double> hamming() const {
    double wrong = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) wrong += truth[i][j] != pred[i][j];
    }
    return div(wrong, double(n) * m);
  }

  std::optional<double> jaccard_standard() const {
    if (n == 0) return std::nullopt;
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      int inter = 0, uni = 0;
      for (std::size_t j = 0; j < m; ++j) {
        inter += truth[i][j] && pred[i][j];
        uni += truth[i][j] || pred[i][j];
      }
      sum += uni == 0 ? 1.0 : double(inter) / uni;
    }
    return sum / n;
  }

  std::optional<double> jaccard_over_m() const {
    if (n == 0) return std::nullopt;
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      int inter = 0;
      for (std::size_t j = 0; j < m; ++j) inter += truth[i][j] && pred[i][j];
      sum += double(inter) / m;
    }
    return sum / n;
  }

  std::optional<double> at_least_one() const {
    double hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      bool any = false, t_empty = true, p_empty = true;
      for (std::size_t j = 0; j < m; ++j) {
        any |= truth[i][j] && pred[i][j];
        t_empty &= !truth[i][j];
        p_empty &= !pred[i][j];
      }
      hits += any || (t_empty && p_empty);
    }
    return div(hits, n);
  }

  // cell(r, c): exact matches on the diagonal, size pairs elsewhere.
  int crosstab(std::size_t r, std::size_t c) const {
    int k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto ts = std::accumulate(truth[i].begin(), truth[i].end(), 0u);
      const auto ps = std::accumulate(pred[i].begin(), pred[i].end(), 0u);
      if (ts != r || ps != c) continue;
      if (r == c) {
        k += truth[i] == pred[i];
      } else {
        ++k;
      }
    }
    return k;
  }
};

void compare_report(const MetricsReport& rep, const Oracle& o, bool exclusive, const std::string& tag) {
  expect(rep.n == o.n && rep.M == o.m, tag + ": shape");
  if (exclusive) {
    expect_rate(rep.accuracy, o.exclusive_accuracy(), tag + " accuracy");
    expect(rep.unparsed == o.unparsed(), tag + " unparsed");
  }
  expect(rep.per_class.size() == o.m, tag + ": per-class size");
  for (std::size_t j = 0; j < o.m; ++j) {
    const auto& c = rep.per_class[j];
    const auto cj = fmt::format("{} class {}", tag, j);
    expect(c.tp == o.tp(j) && c.fp == o.fp(j) && c.fn == o.fn(j) && c.tn == o.tn(j), cj + " counts");
    expect_rate(c.precision, o.precision(j), cj + " precision");
    expect_rate(c.recall, o.recall(j), cj + " recall");
    expect_rate(c.specificity, o.specificity(j), cj + " specificity");
    expect_rate(c.balanced_accuracy, o.bal(j), cj + " balanced accuracy");
    expect_rate(c.f1, o.f1(j), cj + " f1");
  }
  auto agg = [&](const Aggregate& a, std::function<std::optional<double>(std::size_t)> f, const std::string& what) {
    auto [v, excluded] = o.macro(std::move(f));
    expect_rate(a.value, v, tag + " " + what);
    expect(a.excluded == excluded, tag + " " + what + " excluded count");
  };
  agg(rep.macro_precision, [&](std::size_t j) { return o.precision(j); }, "macro precision");
  agg(rep.macro_recall, [&](std::size_t j) { return o.recall(j); }, "macro recall");
  agg(rep.macro_specificity, [&](std::size_t j) { return o.specificity(j); }, "macro specificity");
  agg(rep.macro_balanced_accuracy, [&](std::size_t j) { return o.bal(j); }, "macro balanced accuracy");
  agg(rep.macro_f1, [&](std::size_t j) { return o.f1(j); }, "macro f1");
  expect_rate(rep.weighted_f1, o.weighted_f1(), tag + " weighted f1");
  expect_rate(rep.hamming_loss, o.hamming(), tag + " hamming");
  if (!exclusive) {
    expect_rate(rep.jaccard_standard, o.jaccard_standard(), tag + " jaccard");
    expect_rate(rep.jaccard_over_m, o.jaccard_over_m(), tag + " jaccard over M");
    expect_rate(rep.at_least_one_correct, o.at_least_one(), tag + " at least one");
    expect(rep.crosstab.has_value(), tag + " crosstab missing");
    for (std::size_t r = 0; r <= o.m; ++r) {
      for (std::size_t c = 0; c <= o.m; ++c) {
        expect(rep.crosstab->cell(r, c) == o.crosstab(r, c), fmt::format("{} crosstab ({},{})", tag, r, c));
      }
    }
  }
}

std::string criterion1() {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t ms[] = {2, 15, 20, 46};
  std::size_t instances = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    SeededRng rng(seed * 7919);
    const std::size_t m = ms[seed % 4];
    const std::size_t n = 1 + rng.below(200);
    const bool exclusive = seed % 2 == 0;
    Oracle::Rows truth(n, std::vector<int>(m, 0)), pred(n, std::vector<int>(m, 0));
    // Skewed label use so that some classes are absent and rates go undefined.
    const std::size_t active = 1 + rng.below(m);
    for (std::size_t i = 0; i < n; ++i) {
      if (exclusive) {
        truth[i][rng.below(active)] = 1;
        if (rng.unit() < 0.9) pred[i][rng.unit() < 0.6 ? std::find(truth[i].begin(), truth[i].end(), 1) - truth[i].begin()
                                                         : rng.below(m)] = 1;
      } else {
        const double density = 0.02 + 0.3 * rng.unit();
        for (std::size_t j = 0; j < active; ++j) truth[i][j] = rng.unit() < density;
        for (std::size_t j = 0; j < m; ++j) {
          pred[i][j] = truth[i][j] ? rng.unit() < 0.7 : rng.unit() < density / 3;
        }
      }
    }
    BitMatrix t(n, m), p(n, m);
    std::vector<std::string> ids, labels;
    for (std::size_t j = 0; j < m; ++j) labels.push_back("L" + std::to_string(j));
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back("d" + std::to_string(i));
      for (std::size_t j = 0; j < m; ++j) {
        t(i, j) = truth[i][j];
        p(i, j) = pred[i][j];
      }
    }
    PredictionSet ps(labels, ids, t, p);
    const Oracle o(truth, pred);
    const auto tag = fmt::format("seed {} (n={}, M={})", seed, n, m);
    if (exclusive) compare_report(compute_report(ps, MetricsMode::exclusive), o, true, tag + " exclusive");
    compare_report(compute_report(ps, MetricsMode::multilabel), o, false, tag + " multilabel");
    ++instances;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  expect(secs < 60.0, fmt::format("took {:.1f}s", secs));
  return fmt::format("{} instances match the brute-force oracle within 1e-12 in {:.2f}s", instances, secs);
}

// ------------------------------------------------------------ Criterion 2

MetricsReport fixture_report(const std::string& stem, const std::string& taxonomy) {
  auto tax = lf_test::fixture_taxonomy(taxonomy);
  const auto gold = ingest_jsonl(lf_test::fixture("metrics/" + stem + "_truth.jsonl"), tax).corpus;
  const auto rows = read_prediction_rows(lf_test::fixture("metrics/" + stem + "_pred.jsonl"), *tax);
  return evaluate_run(rows, gold);
}

std::string criterion2() {
  const auto acc = fixture_report("accuracy424", "cap");
  expect(acc.n == 424, fmt::format("expected 424 rows, got {}", acc.n));
  expect(acc.confusion && acc.confusion->square().trace() == 317,
         fmt::format("expected 317 correct, got {}", acc.confusion->square().trace()));
  expect(format_percent(acc.accuracy) == "74.8", "accuracy renders " + format_percent(acc.accuracy));

  const auto bal = fixture_report("balanced", "binary");
  const auto& policy = bal.per_class.at(0);
  expect(policy.label == "policy", "first class should be policy");
  expect_rate(policy.recall, 0.741, "sensitivity", 1e-12);
  expect_rate(policy.specificity, 0.987, "specificity", 1e-12);
  expect_rate(policy.balanced_accuracy, 0.864, "balanced accuracy", 1e-12);
  expect(format_percent(bal.macro_balanced_accuracy.value) == "86.4",
         "balanced accuracy renders " + format_percent(bal.macro_balanced_accuracy.value));
  return fmt::format("accuracy {}% (317/424), balanced accuracy {}% (0.741 / 0.987)", format_percent(acc.accuracy),
                     format_percent(bal.macro_balanced_accuracy.value));
}

// ------------------------------------------------------------ Criterion 3

std::string criterion3() {
  const auto rep = fixture_report("crosstab1000", "flourishing");
  expect(rep.crosstab.has_value(), "no crosstab");
  const auto& x = *rep.crosstab;
  const std::vector<std::string> want{"80.3", "9.8", "0.2", "0.0"};
  for (std::size_t k = 1; k <= 4; ++k) {
    const auto got = fmt::format("{:.1f}", *x.percent(k, k));
    expect(got == want[k - 1], fmt::format("diagonal {} renders {}, want {}", k, got, want[k - 1]));
  }
  expect(x.exact_matches() == 903, fmt::format("exact matches {}", x.exact_matches()));
  expect(format_percent(x.exact_match_accuracy()) == "90.3",
         "exact-match accuracy renders " + format_percent(x.exact_match_accuracy()));
  expect(rep.to_markdown().find("Exact-match accuracy: 90.3%.") != std::string::npos, "markdown summary line");
  return "diagonal 80.3/9.8/0.2/0.0, exact-match accuracy 90.3%";
}

// ------------------------------------------------------------ Criterion 4

class CountingCompleter final : public Completer {
 public:
  explicit CountingCompleter(Completer& inner) : inner_(inner) {}
  CompletionRecord complete(const std::string& backend, const Messages& messages) override {
    ++calls;
    return inner_.complete(backend, messages);
  }
  std::size_t calls = 0;

 private:
  Completer& inner_;
};

std::string criterion4() {
  auto tax = lf_test::fixture_taxonomy("cap");
  expect(tax->hierarchy().size() == 19, fmt::format("cap has {} macro areas", tax->hierarchy().size()));
  std::size_t docs = 0;
  for (std::uint64_t script = 1; script <= 50; ++script) {
    SeededRng rng(script);
    // Per document: which macro areas answer with a subtopic, and how the
    // answer is phrased.
    std::set<std::string> matching;
    int phrasing = 0;
    MockBackends mock([&](const Prompt& p) -> MockReply {
      const bool final_stage = p.system.find("category") != std::string::npos;
      if (final_stage) {
        expect(!p.offered.empty(), "final stage offered nothing");
        const auto& pick = p.offered[rng.below(p.offered.size())];
        return {phrasing == 0 ? pick : phrasing == 1 ? "1. " + pick : ascii_lower(pick) + "."};
      }
      // Offered subtopics plus None; find the macro they belong to.
      std::optional<std::string> macro;
      for (const auto& [m, subs] : tax->hierarchy()) {
        if (subs.front().name == p.offered.front()) macro = m;
      }
      expect(macro.has_value(), "probe offered unknown subtopics");
      expect(p.offered.back() == "None", "probe must offer None");
      if (!matching.count(*macro)) return {rng.unit() < 0.5 ? "None" : "none."};
      const auto& subs = tax->subtopics(*macro);
      const auto& sub = subs[rng.below(subs.size())].name;
      return {phrasing == 2 ? "\"" + sub + "\"" : sub};
    });
    Gateway gw(mock.transport(), nullptr, lf_test::no_sleep());
    gw.add_backend(lf_test::mock_backend("llm"));
    CountingCompleter counter(gw);
    StrategyConfig cfg;
    cfg.kind = StrategyKind::iterative;
    cfg.backend = "llm";
    const TemplateSet templates;
    for (int d = 0; d < 4; ++d) {
      matching.clear();
      const auto k = 1 + rng.below(5);
      while (matching.size() < k) matching.insert(tax->hierarchy()[rng.below(19)].first);
      phrasing = static_cast<int>(rng.below(3));
      const Document doc{fmt::format("s{}-d{}", script, d), "A bill concerning public matters.", std::nullopt, ""};
      const auto before = counter.calls;
      const auto out = classify_iterative(doc, *tax, cfg, counter, templates);
      const auto used = counter.calls - before;
      expect(out.ok(), fmt::format("script {} doc {}: {}", script, d, out.failure.value_or("")));
      expect(!out.fallback, "happy path should not fall back");
      expect(std::set<std::string>(out.survivors.begin(), out.survivors.end()) == matching,
             fmt::format("script {} doc {}: survivors differ", script, d));
      expect(used == 20 && out.calls == 20, fmt::format("script {} doc {}: {} calls", script, d, used));
      expect(out.parsed.labels.size() == 1 && matching.count(out.parsed.labels.front()),
             "final label not among survivors");
      ++docs;
    }
    expect(mock.requests("llm") == counter.calls, "transport and completer call counts differ");
  }
  return fmt::format("20 calls on each of {} documents across 50 scripts", docs);
}

// ------------------------------------------------------------ Criterion 5

std::string criterion5() {
  auto tax = lf_test::fixture_taxonomy("dataverse");
  std::vector<Document> docs;
  docs.reserve(108729);
  for (std::size_t i = 0; i < 108729; ++i) docs.push_back({"dv" + std::to_string(i), "dataset " + std::to_string(i), std::nullopt, ""});
  const Corpus corpus(tax, std::move(docs));
  for (std::uint64_t seed : {1ULL, 7ULL, 42ULL}) {
    std::vector<std::string> first_train;
    for (int run = 0; run < 10; ++run) {
      auto [train, test] = split_train_test(corpus, 0.7, seed);
      expect(train.size() == 76110 && test.size() == 32619,
             fmt::format("seed {}: sizes ({}, {})", seed, train.size(), test.size()));
      std::vector<std::string> ids;
      for (const auto& d : train.documents()) ids.push_back(d.id);
      if (run == 0) {
        first_train = ids;
        std::set<std::string> all(ids.begin(), ids.end());
        for (const auto& d : test.documents()) all.insert(d.id);
        expect(all.size() == 108729, "train and test must partition the corpus");
      } else {
        expect(ids == first_train, fmt::format("seed {} run {} differs", seed, run));
      }
    }
  }
  return "sizes (76110, 32619), identical across 10 runs for each of 3 seeds";
}

// ------------------------------------------------------------ Criterion 6

struct KillSignal {};

// Deterministic per-text pseudo-random draw so answers do not depend on
// call order or thread timing.
double draw(const std::string& salt, const std::string& text) {
  const auto h = sha256_hex(salt + "\x1f" + text);
  return static_cast<double>(std::stoull(h.substr(0, 12), nullptr, 16)) / static_cast<double>(1ULL << 48);
}

std::string criterion6() {
  const auto started = std::chrono::steady_clock::now();
  TempDir tmp;
  auto tax = lf_test::fixture_taxonomy("cap");
  const auto corpus = lf_test::synthetic_corpus(tax, 200, 2024);
  std::vector<std::string> violations;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) violations.push_back(what);
  };

  // Three noisy crowd models plus a tuned model; each answers the gold
  // label most of the time.
  auto answer = [&](const Prompt& p, double accuracy) -> MockReply {
    const auto gold = lf_test::names_in_text(p.text);
    if (gold.empty()) return {"Macroeconomics"};
    if (draw(p.backend, p.text) < accuracy) return {gold.front()};
    const auto& labels = tax->labels();
    return {labels[static_cast<std::size_t>(draw(p.backend + "/wrong", p.text) * labels.size())].name};
  };
  MockBackends crowd_mock([&](const Prompt& p) {
    const double acc = p.backend == "alpha" ? 0.85 : p.backend == "beta" ? 0.75 : 0.65;
    return answer(p, acc);
  });
  Store store(tmp / "lf.db");
  store.migrate();
  const auto project = store.create_project("e2e", *tax);
  store.put_corpus(project, corpus);

  Gateway crowd_gw(crowd_mock.transport(), nullptr, lf_test::no_sleep());
  std::vector<StrategyConfig> configs;
  for (const std::string b : {"alpha", "beta", "gamma"}) {
    crowd_gw.add_backend(lf_test::mock_backend(b, 4));
    StrategyConfig c;
    c.backend = b;
    configs.push_back(c);
  }
  CrowdOptions copts;
  copts.journal = tmp / "pairs.jsonl";
  const auto crowd = run_crowd(corpus, configs, crowd_gw, TemplateSet{}, copts);
  check(!crowd.halted, "crowd halted");
  check(crowd.executed_pairs == 600, fmt::format("crowd ran {} pairs", crowd.executed_pairs));
  for (const auto& r : crowd.results) {
    std::set<std::string> seen;
    for (const auto& c : r.candidates) {
      check(seen.insert(c.label).second, "duplicate candidate " + r.doc_id + "/" + c.label);
      check(!c.provenance.empty(), "candidate without provenance");
    }
  }
  store.put_candidates(project, crowd.results);
  store.advance_stage(project, Stage::crowd_done);

  // Two coders, 20% overlap. Coder "ann" keeps exactly the gold label;
  // coder "bob" also rejects gold on a scripted 5% of documents.
  const std::vector<Coder> coders{{"ann", "Ann", CoderRole::expert}, {"bob", "Bob", CoderRole::trained}};
  for (const auto& c : coders) store.add_coder(project, c);
  const auto assignments = assign(corpus, coders, 0.2, 120, 99);
  store.put_assignments(project, assignments);
  store.advance_stage(project, Stage::verifying);
  std::map<std::string, int> per_doc;
  for (const auto& a : assignments) ++per_doc[a.doc_id];
  std::size_t doubled = 0;
  for (const auto& [d, k] : per_doc) {
    check(k == 1 || k == 2, "document assigned " + std::to_string(k) + " times");
    doubled += k == 2;
  }
  check(per_doc.size() == 200 && doubled == 40, fmt::format("{} docs assigned, {} doubled", per_doc.size(), doubled));

  for (const auto& a : assignments) {
    const auto doc = *store.document(project, a.doc_id);
    const auto cands = store.candidates(project, a.doc_id);
    DecisionMap decisions;
    for (const auto& c : cands->candidates) {
      const bool gold = c.label == doc.true_labels->front();
      const bool scripted_reject = a.coder_id == "bob" && draw("bob", doc.text) < 0.05;
      decisions[c.label] = gold && !scripted_reject ? Decision::keep : Decision::reject;
    }
    store.submit_review(project, a.coder_id, a.doc_id, decisions, false, false, "k-" + a.coder_id + "-" + a.doc_id);
  }
  // Replaying an idempotency key must not create a second record.
  const auto before = store.reviews(project).size();
  {
    const auto& a = assignments.front();
    store.submit_review(project, a.coder_id, a.doc_id, {}, true, false, "k-" + a.coder_id + "-" + a.doc_id);
  }
  check(store.reviews(project).size() == before, "idempotent replay wrote a record");

  const auto resolved = store.resolve(project, ResolutionPolicy::any_reject_drops);
  store.advance_stage(project, Stage::resolved);
  check(resolved.size() == 200, "resolved count");
  const auto current = store.current_reviews(project);
  for (const auto& r : resolved) {
    const auto cands = store.candidates(project, r.doc_id)->labels();
    for (const auto& l : r.surviving_labels) {
      check(std::find(cands.begin(), cands.end(), l) != cands.end(), "survivor not a candidate: " + r.doc_id);
      for (const auto& rec : current) {
        if (rec.doc_id == r.doc_id) check(rec.decisions.at(l) == Decision::keep, "survivor rejected by a coder");
      }
    }
    check(!r.conflict, "unexpected conflict on " + r.doc_id);
    const auto gold = store.document(project, r.doc_id)->true_labels->front();
    check(r.surviving_labels.empty() || r.surviving_labels.front() == gold, "non-gold survivor " + r.doc_id);
  }

  const auto export_dir = tmp / "export";
  const auto exported = export_finetune(corpus, resolved, TemplateSet{}.get("zero_shot"), ExportOptions{}, export_dir);
  std::size_t nonempty = 0;
  for (const auto& r : resolved) nonempty += !r.surviving_labels.empty();
  const auto& man = exported.manifest;
  check(man.train_docs + man.test_docs == nonempty, "export lost documents");
  check(man.train_docs == train_size(nonempty, 0.7), "export train size");
  check(man.skipped_empty == 200 - nonempty, "skipped_empty count");
  std::set<std::string> train_ids;
  for (const auto& e : read_examples(export_dir / "train.jsonl")) train_ids.insert(e.doc_id);
  for (const auto& e : read_examples(export_dir / "test.jsonl")) {
    check(!train_ids.count(e.doc_id), "document in both train and test");
    const auto* d = corpus.find(e.doc_id);
    check(parse_canonical_output(e.output, *tax) == *d->true_labels, "exported output is not the survivor");
  }
  store.advance_stage(project, Stage::exported, man.to_json());

  // Scale with a mock tuned model, killed at three random points.
  MockBackends tuned_mock([&](const Prompt& p) { return answer(p, 0.9); });
  Gateway tuned_gw(tuned_mock.transport(), nullptr, lf_test::no_sleep());
  auto tuned = lf_test::mock_backend("tuned", 4);
  tuned.fine_tuned = true;
  tuned_gw.add_backend(tuned);
  ScaleOptions sopts;
  sopts.job_id = "scale-e2e";
  sopts.dir = tmp / "jobs" / "scale-e2e";
  sopts.strategy.backend = "tuned";
  sopts.checkpoint_every = 16;
  sopts.workers = 4;
  SeededRng kill_rng(31337);
  std::set<std::size_t> kills;
  while (kills.size() < 3) kills.insert(1 + kill_rng.below(199));
  std::size_t written = 0, killed = 0;
  std::vector<std::size_t> kill_points(kills.begin(), kills.end());
  ScaleSummary summary;
  for (std::size_t attempt = 0; attempt < 4; ++attempt) {
    const std::size_t target = attempt < 3 ? kill_points[attempt] : SIZE_MAX;
    sopts.on_prediction = [&](const ScalePrediction&) {
      ++written;
      if (written == target) throw KillSignal{};
    };
    try {
      summary = run_scale(corpus, tuned_gw, TemplateSet{}, sopts);
    } catch (const KillSignal&) {
      ++killed;
      const auto on_disk = read_predictions(predictions_path(sopts.dir));
      check(on_disk.size() == written,
            fmt::format("after kill {}: {} predictions on disk, {} written", attempt, on_disk.size(), written));
      continue;
    }
  }
  check(killed == 3, fmt::format("{} kills happened", killed));
  check(!summary.halted && summary.pending == 0 && summary.done + summary.failed == 200,
        fmt::format("scale finished with done={} failed={} pending={}", summary.done, summary.failed, summary.pending));
  check(written == 200, fmt::format("{} predictions written in total; each document exactly once expected", written));
  std::map<std::string, int> lines;
  {
    std::istringstream in(read_file(predictions_path(sopts.dir)));
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) ++lines[nlohmann::json::parse(line).at("doc_id").get<std::string>()];
    }
  }
  check(lines.size() == 200, "prediction file covers " + std::to_string(lines.size()) + " docs");
  for (const auto& [d, k] : lines) check(k == 1, "duplicate prediction line for " + d);
  const auto ckpt = ScaleCheckpoint::from_json(nlohmann::json::parse(read_file(checkpoint_path(sopts.dir))));
  check(ckpt.status == "completed" && ckpt.cursor == 200, "checkpoint status " + ckpt.status);

  const auto report = evaluate_run(read_prediction_rows(predictions_path(sopts.dir), *tax), corpus);
  check(report.n == 200, "evaluated " + std::to_string(report.n));
  check(report.accuracy && *report.accuracy > 0.8, "tuned accuracy " + format_percent(report.accuracy));

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  check(secs < 300.0, fmt::format("took {:.1f}s", secs));
  if (!violations.empty()) {
    throw Failure(fmt::format("{} invariant violations, first: {}", violations.size(), violations.front()));
  }
  return fmt::format("200 docs through crowd, review, resolve, export ({} train / {} test), scale killed at {}, {}, {} "
                     "and resumed, accuracy {}% in {:.1f}s",
                     man.train_docs, man.test_docs, kill_points[0], kill_points[1], kill_points[2],
                     format_percent(report.accuracy), secs);
}

// ------------------------------------------------------------ Criterion 7

std::string criterion7() {
  const std::vector<std::string> a{"x", "y", "z", "x", "y", "x"};
  const auto total = cohen_kappa(a, a);
  expect(total.kappa && near(*total.kappa, 1.0, 1e-12), "total agreement should give 1.0");

  Eigen::MatrixXd table(2, 2);
  table << 20, 5, 10, 15;
  // Independent arithmetic from the table.
  const double n = 50, po = (20 + 15) / n;
  const double pe = ((20 + 5) / n) * ((20 + 10) / n) + ((10 + 15) / n) * ((5 + 15) / n);
  const double oracle = (po - pe) / (1 - pe);
  expect(near(oracle, 0.4, 1e-12), "oracle arithmetic");
  const auto k = cohen_kappa(table);
  expect(k.kappa && near(*k.kappa, oracle, 1e-12), fmt::format("table kappa {}", k.kappa.value_or(-99)));
  // The same table expanded into rating pairs.
  std::vector<std::string> ra, rb;
  auto add = [&](int count, const char* x, const char* y) {
    for (int i = 0; i < count; ++i) {
      ra.push_back(x);
      rb.push_back(y);
    }
  };
  add(20, "yes", "yes");
  add(5, "yes", "no");
  add(10, "no", "yes");
  add(15, "no", "no");
  const auto kr = cohen_kappa(ra, rb);
  expect(kr.kappa && near(*kr.kappa, 0.4, 1e-12), "rating-pair kappa");

  SeededRng rng(2718);
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(2000, 4);
  for (int i = 0; i < 2000; ++i) {
    for (int r = 0; r < 5; ++r) counts(i, static_cast<Eigen::Index>(rng.below(4))) += 1;
  }
  const auto f = fleiss_kappa(counts);
  expect(f.kappa && std::fabs(*f.kappa) <= 0.05, fmt::format("fleiss on random ratings {}", f.kappa.value_or(-99)));

  const std::vector<std::string> same(10, "x");
  const auto degenerate = cohen_kappa(same, same);
  expect(!degenerate.kappa && !degenerate.reason.empty(), "degenerate marginals must be undefined");
  const auto empty = cohen_kappa(std::vector<std::string>{}, std::vector<std::string>{});
  expect(!empty.kappa, "empty ratings must be undefined");
  bool signalled = false;
  try {
    const std::vector<std::string> items{"i1", "i2"};
    const std::vector<std::vector<std::string>> ratings{{"a", "b"}, {"a", "b", "c"}};
    fleiss_kappa(items, ratings);
  } catch (const ValidationError&) {
    signalled = true;
  }
  expect(signalled, "unequal rater counts must raise");
  return fmt::format("cohen 1.0 and {:.3f}, fleiss {:+.4f} on random ratings, undefined cases signalled", *k.kappa,
                     *f.kappa);
}

// ------------------------------------------------------------ Criterion 8

std::string criterion8() {
  auto tax = lf_test::fixture_taxonomy("dataverse");
  std::size_t candidates = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    SeededRng rng(seed);
    const auto corpus = lf_test::synthetic_corpus(tax, 12 + rng.below(12), seed, 3);
    const std::size_t n_configs = 2 + rng.below(4);
    std::vector<StrategyConfig> configs;
    // Intended answers, recorded by the mock: (backend, text) -> labels.
    std::mutex mu;
    std::map<std::pair<std::string, std::string>, std::set<std::string>> said;
    MockBackends mock([&](const Prompt& p) -> MockReply {
      const double x = draw(fmt::format("{}/{}", seed, p.backend), p.text);
      std::vector<std::string> picks;
      const auto gold = lf_test::names_in_text(p.text);
      if (x < 0.5) picks = gold;
      const std::size_t extra = static_cast<std::size_t>(x * 10) % 3;
      for (std::size_t e = 0; e < extra; ++e) {
        picks.push_back(tax->labels()[static_cast<std::size_t>(draw(fmt::format("{}/{}", p.backend, e), p.text) * 15)].name);
      }
      std::set<std::string> ids;
      std::string reply;
      for (const auto& name : picks) {
        if (ids.size() == 3 && !ids.count(*tax->resolve(name))) continue;
        ids.insert(*tax->resolve(name));
        // Duplicated mentions inside one answer must collapse too.
        reply += name + "\n" + (x < 0.3 ? name + "\n" : "");
      }
      if (reply.empty()) reply = "None of these";
      {
        std::lock_guard lock(mu);
        said[{p.backend, p.text}] = ids;
      }
      return {reply};
    });
    Gateway real(mock.transport(), nullptr, lf_test::no_sleep());
    for (std::size_t c = 0; c < n_configs; ++c) {
      const auto name = "m" + std::to_string(c);
      real.add_backend(lf_test::mock_backend(name, 2));
      StrategyConfig sc;
      sc.backend = name;
      configs.push_back(sc);
    }
    CrowdOptions opts;
    opts.workers = 1 + rng.below(4);
    const auto run = run_crowd(corpus, configs, real, TemplateSet{}, opts);
    for (const auto& r : run.results) {
      const auto* doc = corpus.find(r.doc_id);
      std::set<std::string> seen;
      for (const auto& c : r.candidates) {
        expect(seen.insert(c.label).second, fmt::format("seed {}: duplicate {}/{}", seed, r.doc_id, c.label));
        std::size_t producers = 0;
        for (const auto& sc : configs) producers += said[{sc.backend, doc->text}].count(c.label);
        std::set<std::string> prov_configs;
        for (const auto& p : c.provenance) prov_configs.insert(p.config);
        expect(prov_configs.size() == c.provenance.size(), "repeated config in provenance");
        expect(c.provenance.size() == producers,
               fmt::format("seed {} {}/{}: provenance {} vs producers {}", seed, r.doc_id, c.label,
                           c.provenance.size(), producers));
        ++candidates;
      }
      // Every label some config produced must be a candidate.
      std::set<std::string> produced;
      for (const auto& sc : configs) {
        const auto& s = said[{sc.backend, doc->text}];
        produced.insert(s.begin(), s.end());
      }
      expect(produced == seen, fmt::format("seed {} {}: candidate set differs from produced union", seed, r.doc_id));
    }
  }
  return fmt::format("{} candidates over 50 seeds, no duplicates, provenance equals producers", candidates);
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<std::string()>>> criteria{
      {"metrics oracle equivalence", criterion1}, {"accuracy and balanced accuracy arithmetic", criterion2},
      {"exact-count crosstab arithmetic", criterion3}, {"iterative strategy call count", criterion4},
      {"train/test split sizes", criterion5},       {"end-to-end workflow with resumable scale", criterion6},
      {"reliability statistics", criterion7},       {"crowd deduplication law", criterion8},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& [name, fn] = criteria[i];
    try {
      const auto detail = fn();
      std::cout << fmt::format("PASS [{}] {}: {}", i + 1, name, detail) << std::endl;
    } catch (const std::exception& e) {
      ++failed;
      std::cout << fmt::format("FAIL [{}] {}: {}", i + 1, name, e.what()) << std::endl;
    }
  }
  std::cout << fmt::format("{}/{} criteria passed", criteria.size() - failed, criteria.size()) << std::endl;
  return failed == 0 ? 0 : 1;
}
