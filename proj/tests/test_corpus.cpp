#include <fstream>
#include <set>

#include "doctest.h"
#include "labelforge/corpus.hpp"
#include "labelforge/error.hpp"
#include "support.hpp"

using namespace labelforge;
using lf_test::TempDir;

namespace {

void write(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

std::shared_ptr<const Taxonomy> small_taxonomy(bool exclusive = false) {
  return std::make_shared<const Taxonomy>(
      "small", std::vector<Label>{{"a", "Alpha", "", ""}, {"b", "Beta", "", ""}, {"c", "Gamma, Delta", "", ""}},
      exclusive);
}

}  // namespace

TEST_CASE("shipped taxonomies load with their documented sizes") {
  auto cap = lf_test::fixture_taxonomy("cap");
  CHECK(cap->exclusive());
  CHECK(cap->size() == 20);
  CHECK(cap->hierarchy().size() == 19);
  CHECK(cap->max_labels() == 1u);
  auto dv = lf_test::fixture_taxonomy("dataverse");
  CHECK_FALSE(dv->exclusive());
  CHECK(dv->size() == 15);
  CHECK(dv->max_labels() == 3u);
  auto fl = lf_test::fixture_taxonomy("flourishing");
  CHECK(fl->size() == 46);
}

TEST_CASE("taxonomy rejects malformed label sets") {
  CHECK_THROWS_AS(Taxonomy("t", {{"a", "A", "", ""}}, false), TaxonomyError);
  CHECK_THROWS_AS(Taxonomy("t", {{"a", "A", "", ""}, {"a", "B", "", ""}}, false), TaxonomyError);
  CHECK_THROWS_AS(Taxonomy("t", {{"a", "Same", "", ""}, {"b", "same", "", ""}}, false), TaxonomyError);
  CHECK_THROWS_AS(Taxonomy("t", {{"a", "A", "", ""}, {"b", "B", "", ""}}, true, 2), TaxonomyError);
  CHECK_THROWS_AS(Taxonomy("t", {{"a", "A", "", ""}, {"b", "B", "", ""}}, false, std::nullopt,
                           {{"zzz", {{"s1", "S1", "", ""}}}}),
                  TaxonomyError);
}

TEST_CASE("taxonomy resolution and canonical order") {
  auto tax = small_taxonomy();
  CHECK(tax->resolve("a") == "a");
  CHECK(tax->resolve("Beta") == "b");
  CHECK_FALSE(tax->resolve("nope"));
  CHECK(tax->canonicalize({"c", "a", "c"}) == std::vector<LabelId>{"a", "c"});
  CHECK_THROWS_AS(tax->canonicalize({"x"}), TaxonomyError);
}

TEST_CASE("fingerprint is stable and schema-sensitive") {
  auto a = small_taxonomy();
  auto b = small_taxonomy();
  auto c = small_taxonomy(true);
  CHECK(a->fingerprint() == b->fingerprint());
  CHECK(a->fingerprint() != c->fingerprint());
  CHECK(Taxonomy::from_json(a->to_json()).fingerprint() == a->fingerprint());
}

TEST_CASE("hierarchy lookups on CAP") {
  auto cap = lf_test::fixture_taxonomy("cap");
  CHECK(cap->hierarchical());
  CHECK(cap->macro_of_subtopic("101") == "Macroeconomics");
  CHECK(cap->subtopics("Macroeconomics").front().name == "General Macroeconomics");
  CHECK(cap->macro_labels().size() == 19);
  CHECK_FALSE(cap->macro_of_subtopic("No Policy Area"));
}

TEST_CASE("CSV ingest handles quoting, label columns and empty rows") {
  TempDir tmp;
  CsvMapping m{"id", "text", "gold", ';'};
  write(tmp / "noid.csv", "id,text\n1,a\n,b\n1,c\n");
  CHECK_THROWS_WITH_AS(ingest_csv(tmp / "noid.csv", CsvMapping{}, small_taxonomy()),
                       doctest::Contains("missing id on rows 3"), IngestError);

  write(tmp / "ok.csv",
        "id,text,gold\n"
        "1,\"Hello, world\",Alpha\n"
        "2,\"She said \"\"hi\"\"\",\"Beta;Gamma, Delta\"\n"
        "3,   ,Alpha\n"
        "4,\"multi\nline\",\n");
  auto r = ingest_csv(tmp / "ok.csv", m, small_taxonomy());
  CHECK(r.dropped_empty == 1);
  REQUIRE(r.corpus.size() == 3);
  CHECK(r.corpus.documents()[0].text == "Hello, world");
  CHECK(r.corpus.documents()[1].text == "She said \"hi\"");
  CHECK(r.corpus.documents()[1].true_labels == std::vector<LabelId>{"b", "c"});
  CHECK(r.corpus.documents()[2].text == "multi\nline");
}

TEST_CASE("CSV ingest reports missing columns and unknown labels") {
  TempDir tmp;
  write(tmp / "a.csv", "ident,text\n1,x\n");
  CHECK_THROWS_AS(ingest_csv(tmp / "a.csv", CsvMapping{}, small_taxonomy()), IngestError);
  write(tmp / "b.csv", "id,text,gold\n1,x,Nope\n");
  CHECK_THROWS_WITH_AS(ingest_csv(tmp / "b.csv", CsvMapping{"id", "text", "gold", ';'}, small_taxonomy()),
                       doctest::Contains("Nope"), IngestError);
  CHECK_THROWS_AS(ingest_csv(tmp / "missing.csv", CsvMapping{}, small_taxonomy()), IngestError);
}

TEST_CASE("exclusive taxonomy refuses multi-label gold") {
  TempDir tmp;
  write(tmp / "x.jsonl", R"({"id":"1","text":"t","true_labels":["a","b"]})" "\n");
  CHECK_THROWS_AS(ingest_jsonl(tmp / "x.jsonl", small_taxonomy(true)), IngestError);
}

TEST_CASE("JSONL ingest reports every duplicate id with line numbers") {
  TempDir tmp;
  write(tmp / "d.jsonl",
        R"({"id":"1","text":"a"})" "\n" R"({"id":"2","text":"b"})" "\n" R"({"id":"1","text":"c"})" "\n");
  CHECK_THROWS_WITH_AS(ingest_jsonl(tmp / "d.jsonl", small_taxonomy()), doctest::Contains("lines 1, 3"), IngestError);
  write(tmp / "bad.jsonl", "{not json}\n");
  CHECK_THROWS_AS(ingest_jsonl(tmp / "bad.jsonl", small_taxonomy()), IngestError);
}

TEST_CASE("JSONL round trip through write_jsonl") {
  TempDir tmp;
  auto tax = lf_test::fixture_taxonomy("dataverse");
  auto corpus = lf_test::synthetic_corpus(tax, 25, 3, 3);
  write_jsonl(corpus, tmp / "c.jsonl");
  auto back = ingest_jsonl(tmp / "c.jsonl", tax).corpus;
  REQUIRE(back.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) CHECK(back.documents()[i] == corpus.documents()[i]);
}

TEST_CASE("train_size floors and validates the ratio") {
  CHECK(train_size(108729, 0.7) == 76110);
  CHECK(train_size(100, 0.29) == 29);
  CHECK(train_size(10, 0.5) == 5);
  CHECK_THROWS_AS(train_size(10, 0.0), SplitError);
  CHECK_THROWS_AS(train_size(10, 1.0), SplitError);
}

TEST_CASE("split preserves order, partitions and depends on seed") {
  auto tax = lf_test::fixture_taxonomy("cap");
  auto corpus = lf_test::synthetic_corpus(tax, 50, 8);
  auto [tr1, te1] = split_train_test(corpus, 0.7, 1);
  auto [tr2, te2] = split_train_test(corpus, 0.7, 2);
  CHECK(tr1.size() == 35);
  CHECK(te1.size() == 15);
  auto pos = [&](const std::string& id) { return corpus.find(id) - corpus.documents().data(); };
  for (std::size_t i = 1; i < tr1.size(); ++i) CHECK(pos(tr1.documents()[i - 1].id) < pos(tr1.documents()[i].id));
  std::set<std::string> ids;
  for (const auto& d : tr1.documents()) ids.insert(d.id);
  for (const auto& d : te1.documents()) CHECK(ids.insert(d.id).second);
  bool differs = false;
  for (std::size_t i = 0; i < tr1.size(); ++i) differs |= tr1.documents()[i].id != tr2.documents()[i].id;
  CHECK(differs);
}

TEST_CASE("stratified split keeps class proportions within one document") {
  auto tax = lf_test::fixture_taxonomy("cap");
  auto corpus = lf_test::synthetic_corpus(tax, 400, 12);
  auto [train, test] = split_train_test(corpus, 0.7, 5, true);
  CHECK(train.size() == 280);
  std::map<std::string, int> all, tr;
  for (const auto& d : corpus.documents()) ++all[d.true_labels->front()];
  for (const auto& d : train.documents()) ++tr[d.true_labels->front()];
  for (const auto& [label, count] : all) CHECK(std::abs(tr[label] - 0.7 * count) <= 1.0);
  CHECK_THROWS_AS(split_train_test(lf_test::synthetic_corpus(lf_test::fixture_taxonomy("dataverse"), 10, 1, 2), 0.7,
                                   1, true),
                  SplitError);
}
