#include "labelforge/store.hpp"

#include <map>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <sqlite3.h>

#include "labelforge/error.hpp"
#include "labelforge/util.hpp"

namespace labelforge {

using nlohmann::json;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::ingested: return "ingested";
    case Stage::crowd_done: return "crowd_done";
    case Stage::verifying: return "verifying";
    case Stage::resolved: return "resolved";
    case Stage::exported: return "exported";
    case Stage::scaling: return "scaling";
  }
  return "ingested";
}

Stage stage_from_string(std::string_view s) {
  for (auto st : {Stage::ingested, Stage::crowd_done, Stage::verifying, Stage::resolved, Stage::exported,
                  Stage::scaling}) {
    if (to_string(st) == s) return st;
  }
  throw StoreError(fmt::format("unknown stage '{}'", s));
}

json ProjectInfo::to_json() const {
  return {{"id", id},
          {"name", name},
          {"stage", to_string(stage)},
          {"revision", revision},
          {"taxonomy", taxonomy_name},
          {"taxonomy_sha", taxonomy_sha},
          {"documents", documents},
          {"config", config},
          {"created_at", created_at}};
}

json JobInfo::to_json() const {
  return {{"id", id},           {"project_id", project_id}, {"kind", kind},
          {"status", status},   {"params", params},         {"progress", progress},
          {"created_at", created_at}, {"updated_at", updated_at}};
}

namespace {

/// Prepared statement with positional binding.
class Stmt {
 public:
  Stmt(sqlite3* db, const std::string& sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql.c_str(), -1, &st_, nullptr) != SQLITE_OK) {
      throw StoreError(fmt::format("prepare failed: {} ({})", sqlite3_errmsg(db), sql));
    }
  }
  ~Stmt() { sqlite3_finalize(st_); }
  Stmt(const Stmt&) = delete;
  Stmt& operator=(const Stmt&) = delete;

  Stmt& bind(int i, const std::string& v) {
    sqlite3_bind_text(st_, i, v.c_str(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
    return *this;
  }
  Stmt& bind(int i, const char* v) { return bind(i, std::string(v)); }
  Stmt& bind(int i, std::int64_t v) {
    sqlite3_bind_int64(st_, i, v);
    return *this;
  }
  Stmt& bind(int i, int v) { return bind(i, static_cast<std::int64_t>(v)); }
  Stmt& bind(int i, std::size_t v) { return bind(i, static_cast<std::int64_t>(v)); }
  Stmt& bind(int i, double v) {
    sqlite3_bind_double(st_, i, v);
    return *this;
  }
  Stmt& bind(int i, bool v) { return bind(i, static_cast<std::int64_t>(v ? 1 : 0)); }
  Stmt& bind_null(int i) {
    sqlite3_bind_null(st_, i);
    return *this;
  }
  template <typename T>
  Stmt& bind(int i, const std::optional<T>& v) {
    return v ? bind(i, *v) : bind_null(i);
  }

  /// True while a row is available.
  bool step() {
    const int rc = sqlite3_step(st_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    const int ext = sqlite3_extended_errcode(db_);
    if (ext == SQLITE_CONSTRAINT_UNIQUE || ext == SQLITE_CONSTRAINT_PRIMARYKEY) {
      throw ConflictError(sqlite3_errmsg(db_));
    }
    throw StoreError(sqlite3_errmsg(db_));
  }
  void run() {
    while (step()) {
    }
  }

  std::string text(int col) const {
    auto p = sqlite3_column_text(st_, col);
    return p ? std::string(reinterpret_cast<const char*>(p), sqlite3_column_bytes(st_, col)) : std::string{};
  }
  std::int64_t integer(int col) const { return sqlite3_column_int64(st_, col); }
  double real(int col) const { return sqlite3_column_double(st_, col); }
  bool null(int col) const { return sqlite3_column_type(st_, col) == SQLITE_NULL; }

 private:
  sqlite3* db_;
  sqlite3_stmt* st_ = nullptr;
};

/// Rolls back unless committed.
class Tx {
 public:
  explicit Tx(sqlite3* db) : db_(db) { exec("BEGIN IMMEDIATE"); }
  ~Tx() {
    if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
  }
  void commit() {
    exec("COMMIT");
    done_ = true;
  }

 private:
  void exec(const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "unknown";
      sqlite3_free(err);
      throw StoreError(fmt::format("{} failed: {}", sql, msg));
    }
  }
  sqlite3* db_;
  bool done_ = false;
};

const char* kMigrationV1 = R"sql(
CREATE TABLE taxonomies(
  id INTEGER PRIMARY KEY,
  name TEXT NOT NULL,
  fingerprint TEXT NOT NULL UNIQUE,
  body TEXT NOT NULL);
CREATE TABLE projects(
  id TEXT PRIMARY KEY,
  name TEXT NOT NULL,
  taxonomy_id INTEGER NOT NULL REFERENCES taxonomies(id),
  stage TEXT NOT NULL,
  revision INTEGER NOT NULL DEFAULT 1,
  config TEXT NOT NULL,
  created_at TEXT NOT NULL);
CREATE TABLE project_stages(
  project_id TEXT NOT NULL REFERENCES projects(id),
  stage TEXT NOT NULL,
  revision INTEGER NOT NULL,
  snapshot TEXT NOT NULL,
  at TEXT NOT NULL);
CREATE TABLE documents(
  project_id TEXT NOT NULL REFERENCES projects(id),
  doc_id TEXT NOT NULL,
  position INTEGER NOT NULL,
  text TEXT NOT NULL,
  true_labels TEXT,
  source TEXT NOT NULL DEFAULT '',
  PRIMARY KEY(project_id, doc_id));
CREATE TABLE candidates(
  project_id TEXT NOT NULL,
  doc_id TEXT NOT NULL,
  label TEXT NOT NULL,
  position INTEGER NOT NULL,
  first_seen TEXT NOT NULL,
  provenance TEXT NOT NULL,
  PRIMARY KEY(project_id, doc_id, label),
  FOREIGN KEY(project_id, doc_id) REFERENCES documents(project_id, doc_id));
CREATE TABLE crowd_failures(
  project_id TEXT NOT NULL,
  doc_id TEXT NOT NULL,
  body TEXT NOT NULL,
  FOREIGN KEY(project_id, doc_id) REFERENCES documents(project_id, doc_id));
CREATE TABLE coders(
  project_id TEXT NOT NULL REFERENCES projects(id),
  coder_id TEXT NOT NULL,
  display_name TEXT NOT NULL,
  role TEXT NOT NULL,
  token_hash TEXT NOT NULL UNIQUE,
  PRIMARY KEY(project_id, coder_id));
CREATE TABLE assignments(
  project_id TEXT NOT NULL,
  coder_id TEXT NOT NULL,
  doc_id TEXT NOT NULL,
  status TEXT NOT NULL,
  assigned_at TEXT NOT NULL,
  PRIMARY KEY(project_id, coder_id, doc_id),
  FOREIGN KEY(project_id, coder_id) REFERENCES coders(project_id, coder_id),
  FOREIGN KEY(project_id, doc_id) REFERENCES documents(project_id, doc_id));
CREATE TABLE reviews(
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  project_id TEXT NOT NULL,
  coder_id TEXT NOT NULL,
  doc_id TEXT NOT NULL,
  decisions TEXT NOT NULL,
  none_apply INTEGER NOT NULL,
  submitted_at TEXT NOT NULL,
  supersedes INTEGER REFERENCES reviews(id),
  idempotency_key TEXT UNIQUE,
  FOREIGN KEY(project_id, coder_id, doc_id) REFERENCES assignments(project_id, coder_id, doc_id));
CREATE TRIGGER reviews_no_update BEFORE UPDATE ON reviews
BEGIN SELECT RAISE(ABORT, 'reviews are append-only'); END;
CREATE TRIGGER reviews_no_delete BEFORE DELETE ON reviews
BEGIN SELECT RAISE(ABORT, 'reviews are append-only'); END;
CREATE TABLE resolutions(
  project_id TEXT NOT NULL,
  doc_id TEXT NOT NULL,
  policy TEXT NOT NULL,
  surviving TEXT NOT NULL,
  records TEXT NOT NULL,
  conflict INTEGER NOT NULL,
  resolved_at TEXT NOT NULL,
  PRIMARY KEY(project_id, doc_id),
  FOREIGN KEY(project_id, doc_id) REFERENCES documents(project_id, doc_id));
CREATE TABLE completions(
  id TEXT PRIMARY KEY,
  backend TEXT NOT NULL,
  prompt_hash TEXT NOT NULL,
  raw_text TEXT NOT NULL,
  input_tokens INTEGER NOT NULL,
  output_tokens INTEGER NOT NULL,
  latency_ms REAL NOT NULL,
  cost REAL,
  timestamp TEXT NOT NULL,
  attempts INTEGER NOT NULL);
CREATE TABLE jobs(
  id TEXT PRIMARY KEY,
  project_id TEXT NOT NULL REFERENCES projects(id),
  kind TEXT NOT NULL,
  status TEXT NOT NULL,
  params TEXT NOT NULL,
  progress TEXT NOT NULL,
  created_at TEXT NOT NULL,
  updated_at TEXT NOT NULL);
)sql";

const char* kMigrationV2 = R"sql(
CREATE INDEX reviews_by_doc ON reviews(project_id, doc_id, coder_id);
CREATE INDEX assignments_by_doc ON assignments(project_id, doc_id);
CREATE INDEX jobs_by_project ON jobs(project_id);
)sql";

const std::vector<const char*>& migrations() {
  static const std::vector<const char*> kAll{kMigrationV1, kMigrationV2};
  return kAll;
}

json decisions_json(const DecisionMap& d) {
  json j = json::object();
  for (const auto& [label, dec] : d) j[label] = to_string(dec);
  return j;
}

}  // namespace

Store::Store(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (sqlite3_open(path.c_str(), &db_) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    db_ = nullptr;
    throw StoreError(fmt::format("cannot open store {}: {}", path.string(), msg));
  }
  sqlite3_busy_timeout(db_, 5000);
  exec("PRAGMA foreign_keys = ON");
  exec("PRAGMA journal_mode = WAL");
  exec("PRAGMA synchronous = NORMAL");
  // Fail fast on a corrupt file rather than at the first query.
  Stmt check(db_, "PRAGMA quick_check");
  if (check.step() && check.text(0) != "ok") {
    throw StoreError(fmt::format("store {} failed integrity check: {}", path.string(), check.text(0)));
  }
}

Store::~Store() { sqlite3_close(db_); }

void Store::exec(const std::string& sql) const {
  char* err = nullptr;
  if (sqlite3_exec(db_, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw StoreError(msg);
  }
}

int Store::version_unlocked() const {
  Stmt t(db_, "SELECT count(*) FROM sqlite_master WHERE type='table' AND name='schema_version'");
  t.step();
  if (t.integer(0) == 0) return 0;
  Stmt v(db_, "SELECT max(version) FROM schema_version");
  if (!v.step() || v.null(0)) return 0;
  return static_cast<int>(v.integer(0));
}

int Store::version() const {
  std::lock_guard lock(mu_);
  return version_unlocked();
}

int Store::migrate() {
  std::lock_guard lock(mu_);
  const int current = version_unlocked();
  if (current > kSchemaVersion) {
    throw StoreError(fmt::format("store schema version {} is newer than this release supports ({}); refusing to "
                                 "downgrade",
                                 current, kSchemaVersion));
  }
  for (int v = current; v < kSchemaVersion; ++v) {
    Tx tx(db_);
    exec("CREATE TABLE IF NOT EXISTS schema_version(version INTEGER NOT NULL, applied_at TEXT NOT NULL)");
    exec(migrations()[static_cast<std::size_t>(v)]);
    Stmt(db_, "INSERT INTO schema_version(version, applied_at) VALUES(?, ?)").bind(1, v + 1).bind(2, utc_timestamp()).run();
    tx.commit();
  }
  return kSchemaVersion;
}

void Store::require_project(const std::string& project_id) const {
  Stmt s(db_, "SELECT 1 FROM projects WHERE id = ?");
  s.bind(1, project_id);
  if (!s.step()) throw ValidationError(fmt::format("unknown project '{}'", project_id));
}

// ---------------------------------------------------------------- Projects

std::string Store::create_project(const std::string& name, const Taxonomy& taxonomy, const json& config) {
  std::lock_guard lock(mu_);
  Tx tx(db_);
  const auto sha = taxonomy.fingerprint();
  Stmt(db_, "INSERT OR IGNORE INTO taxonomies(name, fingerprint, body) VALUES(?, ?, ?)")
      .bind(1, taxonomy.name())
      .bind(2, sha)
      .bind(3, taxonomy.to_json().dump())
      .run();
  Stmt tid(db_, "SELECT id FROM taxonomies WHERE fingerprint = ?");
  tid.bind(1, sha);
  tid.step();
  const auto taxonomy_id = tid.integer(0);

  Stmt count(db_, "SELECT count(*) FROM projects");
  count.step();
  const auto id = fmt::format("p{}", count.integer(0) + 1);
  const auto now = utc_timestamp();
  Stmt(db_, "INSERT INTO projects(id, name, taxonomy_id, stage, revision, config, created_at) VALUES(?,?,?,?,1,?,?)")
      .bind(1, id)
      .bind(2, name)
      .bind(3, taxonomy_id)
      .bind(4, std::string(to_string(Stage::ingested)))
      .bind(5, config.dump())
      .bind(6, now)
      .run();
  Stmt(db_, "INSERT INTO project_stages(project_id, stage, revision, snapshot, at) VALUES(?,?,1,?,?)")
      .bind(1, id)
      .bind(2, std::string(to_string(Stage::ingested)))
      .bind(3, config.dump())
      .bind(4, now)
      .run();
  tx.commit();
  return id;
}

namespace {

const char* kProjectSelect =
    "SELECT p.id, p.name, p.stage, p.revision, t.name, t.fingerprint, p.config, p.created_at, "
    "(SELECT count(*) FROM documents d WHERE d.project_id = p.id) "
    "FROM projects p JOIN taxonomies t ON t.id = p.taxonomy_id";

ProjectInfo project_row(const Stmt& s) {
  ProjectInfo p;
  p.id = s.text(0);
  p.name = s.text(1);
  p.stage = stage_from_string(s.text(2));
  p.revision = static_cast<int>(s.integer(3));
  p.taxonomy_name = s.text(4);
  p.taxonomy_sha = s.text(5);
  p.config = json::parse(s.text(6));
  p.created_at = s.text(7);
  p.documents = static_cast<std::size_t>(s.integer(8));
  return p;
}

}  // namespace

std::vector<ProjectInfo> Store::projects() const {
  std::lock_guard lock(mu_);
  Stmt s(db_, std::string(kProjectSelect) + " ORDER BY p.created_at, p.id");
  std::vector<ProjectInfo> out;
  while (s.step()) out.push_back(project_row(s));
  return out;
}

ProjectInfo Store::project(const std::string& id) const {
  std::lock_guard lock(mu_);
  Stmt s(db_, std::string(kProjectSelect) + " WHERE p.id = ?");
  s.bind(1, id);
  if (!s.step()) throw ValidationError(fmt::format("unknown project '{}'", id));
  return project_row(s);
}

void Store::advance_stage(const std::string& project_id, Stage stage, const json& snapshot) {
  std::lock_guard lock(mu_);
  Tx tx(db_);
  Stmt s(db_, "SELECT stage, revision FROM projects WHERE id = ?");
  s.bind(1, project_id);
  if (!s.step()) throw ValidationError(fmt::format("unknown project '{}'", project_id));
  const auto current = stage_from_string(s.text(0));
  int revision = static_cast<int>(s.integer(1));
  if (stage < current) {
    throw ConflictError(fmt::format("project '{}' is at stage {}; cannot go back to {}", project_id,
                                    to_string(current), to_string(stage)));
  }
  revision = stage == current ? revision + 1 : 1;
  const auto snap = snapshot.is_null() ? std::string("{}") : snapshot.dump();
  Stmt(db_, "UPDATE projects SET stage = ?, revision = ? WHERE id = ?")
      .bind(1, std::string(to_string(stage)))
      .bind(2, revision)
      .bind(3, project_id)
      .run();
  Stmt(db_, "INSERT INTO project_stages(project_id, stage, revision, snapshot, at) VALUES(?,?,?,?,?)")
      .bind(1, project_id)
      .bind(2, std::string(to_string(stage)))
      .bind(3, revision)
      .bind(4, snap)
      .bind(5, utc_timestamp())
      .run();
  tx.commit();
}

json Store::stage_history(const std::string& project_id) const {
  std::lock_guard lock(mu_);
  Stmt s(db_, "SELECT stage, revision, snapshot, at FROM project_stages WHERE project_id = ? ORDER BY rowid");
  s.bind(1, project_id);
  json out = json::array();
  while (s.step()) {
    out.push_back({{"stage", s.text(0)}, {"revision", s.integer(1)}, {"snapshot", json::parse(s.text(2))},
                   {"at", s.text(3)}});
  }
  return out;
}

std::shared_ptr<const Taxonomy> Store::taxonomy(const std::string& project_id) const {
  std::lock_guard lock(mu_);
  Stmt s(db_, "SELECT t.body FROM projects p JOIN taxonomies t ON t.id = p.taxonomy_id WHERE p.id = ?");
  s.bind(1, project_id);
  if (!s.step()) throw ValidationError(fmt::format("unknown project '{}'", project_id));
  return std::make_shared<const Taxonomy>(Taxonomy::from_json(json::parse(s.text(0))));
}

// --------------------------------------------------------------- Documents

void Store::put_corpus(const std::string& project_id, const Corpus& corpus) {
  std::lock_guard lock(mu_);
  const auto tax = taxonomy(project_id);
  if (tax->fingerprint() != corpus.taxonomy().fingerprint()) {
    throw ValidationError("corpus taxonomy differs from the project taxonomy");
  }
  Tx tx(db_);
  std::size_t pos = 0;
  {
    Stmt base(db_, "SELECT coalesce(max(position) + 1, 0) FROM documents WHERE project_id = ?");
    base.bind(1, project_id);
    base.step();
    pos = static_cast<std::size_t>(base.integer(0));
  }
  for (const auto& d : corpus.documents()) {
    Stmt one(db_, "INSERT INTO documents(project_id, doc_id, position, text, true_labels, source) VALUES(?,?,?,?,?,?)");
    one.bind(1, project_id).bind(2, d.id).bind(3, pos++).bind(4, d.text);
    if (d.true_labels) {
      one.bind(5, json(*d.true_labels).dump());
    } else {
      one.bind_null(5);
    }
    one.bind(6, d.source);
    try {
      one.run();
    } catch (const ConflictError&) {
      throw ConflictError(fmt::format("document '{}' already exists in project '{}'", d.id, project_id));
    }
  }
  tx.commit();
}

Corpus Store::corpus(const std::string& project_id) const {
  std::lock_guard lock(mu_);
  auto tax = taxonomy(project_id);
  Stmt s(db_, "SELECT doc_id, text, true_labels, source FROM documents WHERE project_id = ? ORDER BY position");
  s.bind(1, project_id);
  std::vector<Document> docs;
  while (s.step()) {
    Document d{s.text(0), s.text(1), std::nullopt, s.text(3)};
    if (!s.null(2)) d.true_labels = json::parse(s.text(2)).get<std::vector<std::string>>();
    docs.push_back(std::move(d));
  }
  return Corpus(tax, std::move(docs));
}

std::optional<Document> Store::document(const std::string& project_id, const std::string& doc_id) const {
  std::lock_guard lock(mu_);
  Stmt s(db_, "SELECT doc_id, text, true_labels, source FROM documents WHERE project_id = ? AND doc_id = ?");
  s.bind(1, project_id).bind(2, doc_id);
  if (!s.step()) return std::nullopt;
  Document d{s.text(0), s.text(1), std::nullopt, s.text(3)};
  if (!s.null(2)) d.true_labels = json::parse(s.text(2)).get<std::vector<std::string>>();
  return d;
}

// -------------------------------------------------------------- Candidates

void Store::put_candidates(const std::string& project_id, std::span<const CrowdResult> results) {
  std::lock_guard lock(mu_);
  const auto tax = taxonomy(project_id);
  Tx tx(db_);
  for (const auto& r : results) {
    Stmt(db_, "DELETE FROM candidates WHERE project_id = ? AND doc_id = ?").bind(1, project_id).bind(2, r.doc_id).run();
    Stmt(db_, "DELETE FROM crowd_failures WHERE project_id = ? AND doc_id = ?")
        .bind(1, project_id)
        .bind(2, r.doc_id)
        .run();
    const auto body = r.to_json();
    for (const auto& c : body["candidates"]) {
      const auto label = c["label"].get<std::string>();
      auto idx = tax->index_of(label);
      if (!idx) throw ValidationError(fmt::format("candidate '{}' for '{}' is not in the taxonomy", label, r.doc_id));
      Stmt ins(db_,
               "INSERT INTO candidates(project_id, doc_id, label, position, first_seen, provenance) "
               "VALUES(?,?,?,?,?,?)");
      ins.bind(1, project_id).bind(2, r.doc_id).bind(3, label).bind(4, *idx);
      ins.bind(5, c["first_seen"].get<std::string>()).bind(6, c["provenance"].dump());
      try {
        ins.run();
      } catch (const StoreError& e) {
        throw ValidationError(fmt::format("cannot store candidates for '{}': {}", r.doc_id, e.what()));
      }
    }
    for (const auto& f : body["failures"]) {
      Stmt(db_, "INSERT INTO crowd_failures(project_id, doc_id, body) VALUES(?,?,?)")
          .bind(1, project_id)
          .bind(2, r.doc_id)
          .bind(3, f.dump())
          .run();
    }
  }
  tx.commit();
}

std::vector<CrowdResult> Store::candidates_unlocked(const std::string& project_id,
                                                    const std::optional<std::string>& doc_id) const {
  std::map<std::string, json> bodies;
  std::vector<std::string> order;
  {
    Stmt s(db_, std::string("SELECT doc_id FROM documents WHERE project_id = ?") + (doc_id ? " AND doc_id = ?" : "") +
                    " ORDER BY position");
    s.bind(1, project_id);
    if (doc_id) s.bind(2, *doc_id);
    while (s.step()) {
      order.push_back(s.text(0));
      bodies[order.back()] = {{"doc_id", order.back()}, {"candidates", json::array()}, {"failures", json::array()}};
    }
  }
  {
    Stmt s(db_, std::string("SELECT doc_id, label, first_seen, provenance FROM candidates WHERE project_id = ?") +
                    (doc_id ? " AND doc_id = ?" : "") + " ORDER BY doc_id, position");
    s.bind(1, project_id);
    if (doc_id) s.bind(2, *doc_id);
    while (s.step()) {
      bodies[s.text(0)]["candidates"].push_back(
          {{"label", s.text(1)}, {"first_seen", s.text(2)}, {"provenance", json::parse(s.text(3))}});
    }
  }
  {
    Stmt s(db_, std::string("SELECT doc_id, body FROM crowd_failures WHERE project_id = ?") +
                    (doc_id ? " AND doc_id = ?" : "") + " ORDER BY rowid");
    s.bind(1, project_id);
    if (doc_id) s.bind(2, *doc_id);
    while (s.step()) bodies[s.text(0)]["failures"].push_back(json::parse(s.text(1)));
  }
  std::vector<CrowdResult> out;
  for (const auto& id : order) out.push_back(CrowdResult::from_json(bodies[id]));
  return out;
}

std::vector<CrowdResult> Store::candidates(const std::string& project_id) const {
  std::lock_guard lock(mu_);
  return candidates_unlocked(project_id, std::nullopt);
}

std::optional<CrowdResult> Store::candidates(const std::string& project_id, const std::string& doc_id) const {
  std::lock_guard lock(mu_);
  auto r = candidates_unlocked(project_id, doc_id);
  if (r.empty()) return std::nullopt;
  return r.front();
}

// ------------------------------------------------------------------ Coders

std::string Store::add_coder(const std::string& project_id, const Coder& coder) {
  std::lock_guard lock(mu_);
  require_project(project_id);
  if (coder.id.empty()) throw ValidationError("coder id must not be empty");
  const auto token = random_token(24);
  try {
    Stmt(db_, "INSERT INTO coders(project_id, coder_id, display_name, role, token_hash) VALUES(?,?,?,?,?)")
        .bind(1, project_id)
        .bind(2, coder.id)
        .bind(3, coder.display_name.empty() ? coder.id : coder.display_name)
        .bind(4, std::string(to_string(coder.role)))
        .bind(5, sha256_hex(token))
        .run();
  } catch (const ConflictError&) {
    throw ConflictError(fmt::format("coder '{}' already exists in project '{}'", coder.id, project_id));
  }
  return token;
}

std::optional<CoderInfo> Store::coder_by_token(const std::string& token) const {
  std::lock_guard lock(mu_);
  Stmt s(db_, "SELECT project_id, coder_id, display_name, role FROM coders WHERE token_hash = ?");
  s.bind(1, sha256_hex(token));
  if (!s.step()) return std::nullopt;
  return CoderInfo{{s.text(1), s.text(2), coder_role_from_string(s.text(3))}, s.text(0)};
}

std::vector<Coder> Store::coders(const std::string& project_id) const {
  std::lock_guard lock(mu_);
  Stmt s(db_, "SELECT coder_id, display_name, role FROM coders WHERE project_id = ? ORDER BY coder_id");
  s.bind(1, project_id);
  std::vector<Coder> out;
  while (s.step()) out.push_back({s.text(0), s.text(1), coder_role_from_string(s.text(2))});
  return out;
}

// ------------------------------------------------------------- Assignments

void Store::put_assignments(const std::string& project_id, std::span<const Assignment> assignments) {
  std::lock_guard lock(mu_);
  Tx tx(db_);
  for (const auto& a : assignments) {
    Stmt ins(db_,
             "INSERT INTO assignments(project_id, coder_id, doc_id, status, assigned_at) VALUES(?,?,?,?,?)");
    ins.bind(1, project_id).bind(2, a.coder_id).bind(3, a.doc_id);
    ins.bind(4, std::string(to_string(a.status))).bind(5, a.assigned_at.empty() ? utc_timestamp() : a.assigned_at);
    try {
      ins.run();
    } catch (const ConflictError&) {
      throw ConflictError(fmt::format("coder '{}' already assigned to '{}'", a.coder_id, a.doc_id));
    } catch (const StoreError& e) {
      throw ValidationError(
          fmt::format("assignment ({}, {}) references an unknown coder or document: {}", a.coder_id, a.doc_id,
                      e.what()));
    }
  }
  tx.commit();
}

std::vector<Assignment> Store::assignments(const std::string& project_id,
                                           const std::optional<std::string>& coder_id) const {
  std::lock_guard lock(mu_);
  Stmt s(db_, std::string("SELECT a.coder_id, a.doc_id, a.status, a.assigned_at FROM assignments a "
                          "JOIN documents d ON d.project_id = a.project_id AND d.doc_id = a.doc_id "
                          "WHERE a.project_id = ?") +
                  (coder_id ? " AND a.coder_id = ?" : "") + " ORDER BY d.position, a.coder_id");
  s.bind(1, project_id);
  if (coder_id) s.bind(2, *coder_id);
  std::vector<Assignment> out;
  while (s.step()) {
    out.push_back({s.text(0), s.text(1), s.text(2) == "pending" ? AssignmentStatus::pending : AssignmentStatus::submitted,
                   s.text(3)});
  }
  return out;
}

// ----------------------------------------------------------------- Reviews

namespace {

VerificationRecord review_row(const Stmt& s) {
  VerificationRecord r;
  r.id = std::to_string(s.integer(0));
  r.coder_id = s.text(1);
  r.doc_id = s.text(2);
  const auto decisions = json::parse(s.text(3));
  for (const auto& [label, dec] : decisions.items()) r.decisions[label] = decision_from_string(dec.get<std::string>());
  r.none_apply = s.integer(4) != 0;
  r.submitted_at = s.text(5);
  if (!s.null(6)) r.supersedes = std::to_string(s.integer(6));
  return r;
}

const char* kReviewSelect =
    "SELECT id, coder_id, doc_id, decisions, none_apply, submitted_at, supersedes FROM reviews ";

}  // namespace

VerificationRecord Store::submit_review(const std::string& project_id, const std::string& coder_id,
                                        const std::string& doc_id, const DecisionMap& decisions, bool none_apply,
                                        bool supersede, const std::optional<std::string>& idempotency_key) {
  std::lock_guard lock(mu_);
  Tx tx(db_);
  if (idempotency_key) {
    Stmt s(db_, std::string(kReviewSelect) + "WHERE idempotency_key = ?");
    s.bind(1, *idempotency_key);
    if (s.step()) {
      auto existing = review_row(s);
      if (existing.coder_id != coder_id || existing.doc_id != doc_id) {
        throw ConflictError("idempotency key already used for a different review");
      }
      return existing;
    }
  }
  Stmt a(db_, "SELECT status FROM assignments WHERE project_id = ? AND coder_id = ? AND doc_id = ?");
  a.bind(1, project_id).bind(2, coder_id).bind(3, doc_id);
  if (!a.step()) throw ValidationError(fmt::format("coder '{}' has no assignment for '{}'", coder_id, doc_id));
  const bool submitted = a.text(0) == "submitted";

  std::vector<LabelId> shown;
  {
    Stmt c(db_, "SELECT label FROM candidates WHERE project_id = ? AND doc_id = ? ORDER BY position");
    c.bind(1, project_id).bind(2, doc_id);
    while (c.step()) shown.push_back(c.text(0));
  }
  DecisionMap final_decisions = decisions;
  if (none_apply && final_decisions.empty()) {
    for (const auto& l : shown) final_decisions[l] = Decision::reject;
  }
  validate_decisions(shown, final_decisions, none_apply);

  std::optional<std::int64_t> previous;
  if (submitted) {
    if (!supersede) {
      throw ConflictError(
          fmt::format("coder '{}' already submitted '{}'; resubmit as a superseding record", coder_id, doc_id));
    }
    Stmt p(db_, "SELECT max(id) FROM reviews WHERE project_id = ? AND coder_id = ? AND doc_id = ?");
    p.bind(1, project_id).bind(2, coder_id).bind(3, doc_id);
    if (p.step() && !p.null(0)) previous = p.integer(0);
  }
  Stmt ins(db_,
           "INSERT INTO reviews(project_id, coder_id, doc_id, decisions, none_apply, submitted_at, supersedes, "
           "idempotency_key) VALUES(?,?,?,?,?,?,?,?)");
  ins.bind(1, project_id).bind(2, coder_id).bind(3, doc_id).bind(4, decisions_json(final_decisions).dump());
  ins.bind(5, none_apply).bind(6, utc_timestamp()).bind(7, previous).bind(8, idempotency_key);
  ins.run();
  const auto id = sqlite3_last_insert_rowid(db_);
  Stmt(db_, "UPDATE assignments SET status = 'submitted' WHERE project_id = ? AND coder_id = ? AND doc_id = ?")
      .bind(1, project_id)
      .bind(2, coder_id)
      .bind(3, doc_id)
      .run();
  Stmt back(db_, std::string(kReviewSelect) + "WHERE id = ?");
  back.bind(1, static_cast<std::int64_t>(id));
  back.step();
  auto rec = review_row(back);
  tx.commit();
  return rec;
}

std::vector<VerificationRecord> Store::reviews_unlocked(const std::string& project_id) const {
  Stmt s(db_, std::string(kReviewSelect) + "WHERE project_id = ? ORDER BY id");
  s.bind(1, project_id);
  std::vector<VerificationRecord> out;
  while (s.step()) out.push_back(review_row(s));
  return out;
}

std::vector<VerificationRecord> Store::reviews(const std::string& project_id) const {
  std::lock_guard lock(mu_);
  return reviews_unlocked(project_id);
}

std::vector<VerificationRecord> Store::current_reviews(const std::string& project_id) const {
  std::lock_guard lock(mu_);
  std::map<std::pair<std::string, std::string>, VerificationRecord> latest;
  for (auto& r : reviews_unlocked(project_id)) latest[{r.doc_id, r.coder_id}] = std::move(r);
  std::vector<VerificationRecord> out;
  for (auto& [k, r] : latest) out.push_back(std::move(r));
  return out;
}

// -------------------------------------------------------------- Resolution

std::vector<ResolvedDocument> Store::resolve(const std::string& project_id, ResolutionPolicy policy) {
  std::lock_guard lock(mu_);
  const auto tax = taxonomy(project_id);
  const auto all_assignments = assignments(project_id);
  std::map<std::string, std::vector<std::string>> pending;
  std::vector<std::string> docs;
  std::set<std::string> seen;
  for (const auto& a : all_assignments) {
    if (seen.insert(a.doc_id).second) docs.push_back(a.doc_id);
    if (a.status == AssignmentStatus::pending) pending[a.doc_id].push_back(a.coder_id);
  }
  if (docs.empty()) throw NotReadyError(fmt::format("project '{}' has no assignments", project_id));
  if (!pending.empty()) {
    std::vector<std::string> parts;
    for (const auto& [doc, coders] : pending) parts.push_back(fmt::format("{} ({})", doc, fmt::join(coders, ", ")));
    throw NotReadyError(fmt::format("{} documents still pending: {}", pending.size(), fmt::join(parts, "; ")));
  }

  std::map<std::string, std::vector<VerificationRecord>> by_doc;
  for (auto& r : current_reviews(project_id)) by_doc[r.doc_id].push_back(std::move(r));
  std::map<std::string, std::vector<LabelId>> shown;
  for (const auto& cr : candidates_unlocked(project_id, std::nullopt)) shown[cr.doc_id] = cr.labels();

  std::vector<ResolvedDocument> out;
  Tx tx(db_);
  const auto now = utc_timestamp();
  for (const auto& doc : docs) {
    auto res = resolve_records(doc, shown[doc], by_doc[doc], policy, *tax);
    Stmt(db_,
         "INSERT OR REPLACE INTO resolutions(project_id, doc_id, policy, surviving, records, conflict, resolved_at) "
         "VALUES(?,?,?,?,?,?,?)")
        .bind(1, project_id)
        .bind(2, doc)
        .bind(3, std::string(to_string(policy)))
        .bind(4, json(res.surviving_labels).dump())
        .bind(5, json(res.contributing_records).dump())
        .bind(6, res.conflict)
        .bind(7, now)
        .run();
    out.push_back(std::move(res));
  }
  tx.commit();
  return out;
}

std::vector<ResolvedDocument> Store::resolutions(const std::string& project_id) const {
  std::lock_guard lock(mu_);
  Stmt s(db_,
         "SELECT r.doc_id, r.policy, r.surviving, r.records, r.conflict FROM resolutions r "
         "JOIN documents d ON d.project_id = r.project_id AND d.doc_id = r.doc_id "
         "WHERE r.project_id = ? ORDER BY d.position");
  s.bind(1, project_id);
  std::vector<ResolvedDocument> out;
  while (s.step()) {
    ResolvedDocument r;
    r.doc_id = s.text(0);
    r.policy = resolution_policy_from_string(s.text(1));
    r.surviving_labels = json::parse(s.text(2)).get<std::vector<std::string>>();
    r.contributing_records = json::parse(s.text(3)).get<std::vector<std::string>>();
    r.conflict = s.integer(4) != 0;
    out.push_back(std::move(r));
  }
  return out;
}

// ------------------------------------------------------------- Completions

void Store::put_completion(const CompletionRecord& r) {
  std::lock_guard lock(mu_);
  Stmt s(db_,
         "INSERT OR IGNORE INTO completions(id, backend, prompt_hash, raw_text, input_tokens, output_tokens, "
         "latency_ms, cost, timestamp, attempts) VALUES(?,?,?,?,?,?,?,?,?,?)");
  s.bind(1, r.id).bind(2, r.backend).bind(3, r.prompt_hash).bind(4, r.raw_text).bind(5, r.input_tokens);
  s.bind(6, r.output_tokens).bind(7, r.latency_ms).bind(8, r.cost).bind(9, r.timestamp).bind(10, std::size_t{r.attempts});
  s.run();
}

std::size_t Store::completion_count() const {
  std::lock_guard lock(mu_);
  Stmt s(db_, "SELECT count(*) FROM completions");
  s.step();
  return static_cast<std::size_t>(s.integer(0));
}

// -------------------------------------------------------------------- Jobs

std::string Store::create_job(const std::string& project_id, const std::string& kind, const json& params) {
  std::lock_guard lock(mu_);
  require_project(project_id);
  const auto id = fmt::format("j{}", random_token(6));
  const auto now = utc_timestamp();
  Stmt(db_, "INSERT INTO jobs(id, project_id, kind, status, params, progress, created_at, updated_at) "
            "VALUES(?,?,?,'queued',?,'{}',?,?)")
      .bind(1, id)
      .bind(2, project_id)
      .bind(3, kind)
      .bind(4, params.dump())
      .bind(5, now)
      .bind(6, now)
      .run();
  return id;
}

void Store::update_job(const std::string& job_id, const std::string& status, const json& progress) {
  std::lock_guard lock(mu_);
  Stmt(db_, "UPDATE jobs SET status = ?, progress = ?, updated_at = ? WHERE id = ?")
      .bind(1, status)
      .bind(2, progress.dump())
      .bind(3, utc_timestamp())
      .bind(4, job_id)
      .run();
}

namespace {

JobInfo job_row(const Stmt& s) {
  return {s.text(0), s.text(1), s.text(2), s.text(3), json::parse(s.text(4)), json::parse(s.text(5)), s.text(6),
          s.text(7)};
}

const char* kJobSelect = "SELECT id, project_id, kind, status, params, progress, created_at, updated_at FROM jobs ";

}  // namespace

std::optional<JobInfo> Store::job(const std::string& job_id) const {
  std::lock_guard lock(mu_);
  Stmt s(db_, std::string(kJobSelect) + "WHERE id = ?");
  s.bind(1, job_id);
  if (!s.step()) return std::nullopt;
  return job_row(s);
}

std::vector<JobInfo> Store::jobs(const std::string& project_id) const {
  std::lock_guard lock(mu_);
  Stmt s(db_, std::string(kJobSelect) + "WHERE project_id = ? ORDER BY created_at, id");
  s.bind(1, project_id);
  std::vector<JobInfo> out;
  while (s.step()) out.push_back(job_row(s));
  return out;
}

// ---------------------------------------------------------------- Progress

json Store::progress(const std::string& project_id) const {
  std::lock_guard lock(mu_);
  require_project(project_id);
  json coders_j = json::array();
  std::size_t total = 0;
  std::size_t submitted = 0;
  {
    Stmt s(db_,
           "SELECT c.coder_id, c.display_name, count(a.doc_id), coalesce(sum(a.status = 'submitted'), 0) "
           "FROM coders c LEFT JOIN assignments a ON a.project_id = c.project_id AND a.coder_id = c.coder_id "
           "WHERE c.project_id = ? GROUP BY c.coder_id ORDER BY c.coder_id");
    s.bind(1, project_id);
    while (s.step()) {
      const auto t = static_cast<std::size_t>(s.integer(2));
      const auto d = static_cast<std::size_t>(s.integer(3));
      total += t;
      submitted += d;
      coders_j.push_back({{"coder_id", s.text(0)},
                          {"display_name", s.text(1)},
                          {"assigned", t},
                          {"submitted", d},
                          {"completion", t ? json(static_cast<double>(d) / static_cast<double>(t)) : json(nullptr)}});
    }
  }

  std::map<std::string, std::pair<std::size_t, std::size_t>> per_label;  // shown, kept
  std::map<std::pair<std::string, std::string>, VerificationRecord> latest;
  for (auto& r : reviews_unlocked(project_id)) latest[{r.doc_id, r.coder_id}] = std::move(r);
  for (const auto& [k, r] : latest) {
    for (const auto& [label, d] : r.decisions) {
      auto& [shown, kept] = per_label[label];
      ++shown;
      if (d == Decision::keep) ++kept;
    }
  }
  json labels_j = json::array();
  for (const auto& [label, counts] : per_label) {
    const auto [shown, kept] = counts;
    labels_j.push_back({{"label", label},
                        {"reviewed", shown},
                        {"kept", kept},
                        {"rejected", shown - kept},
                        {"survival_rate", static_cast<double>(kept) / static_cast<double>(shown)}});
  }
  return {{"project_id", project_id},
          {"assignments", total},
          {"submitted", submitted},
          {"completion", total ? json(static_cast<double>(submitted) / static_cast<double>(total)) : json(nullptr)},
          {"coders", coders_j},
          {"labels", labels_j}};
}

}  // namespace labelforge
