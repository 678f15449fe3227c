// Copyright 2026 The odgate Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "odgate/store.hpp"

#include <sqlite3.h>

#include <charconv>

#include "odgate/error.hpp"
#include "odgate/pack_io.hpp"

namespace odgate {
namespace {

class Stmt {
 public:
  Stmt(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
      fail(ErrorCode::kIoError, std::string("sqlite prepare: ") + sqlite3_errmsg(db));
    }
  }
  ~Stmt() { sqlite3_finalize(stmt_); }
  Stmt(const Stmt&) = delete;
  Stmt& operator=(const Stmt&) = delete;

  Stmt& bind(int i, const std::string& v) {
    check(sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
    return *this;
  }
  Stmt& bind(int i, std::int64_t v) {
    check(sqlite3_bind_int64(stmt_, i, v));
    return *this;
  }
  Stmt& bind(int i, int v) { return bind(i, static_cast<std::int64_t>(v)); }
  Stmt& bind(int i, bool v) { return bind(i, static_cast<std::int64_t>(v ? 1 : 0)); }
  Stmt& bind(int i, double v) {
    check(sqlite3_bind_double(stmt_, i, v));
    return *this;
  }
  Stmt& bind_null(int i) {
    check(sqlite3_bind_null(stmt_, i));
    return *this;
  }
  Stmt& bind_blob(int i, const std::vector<std::uint8_t>& v) {
    if (v.empty()) return bind_null(i);
    check(sqlite3_bind_blob(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
    return *this;
  }
  template <typename T>
  Stmt& bind_opt(int i, const std::optional<T>& v) {
    return v ? bind(i, *v) : bind_null(i);
  }

  // True while rows are available.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    if (rc == SQLITE_CONSTRAINT) fail(ErrorCode::kDuplicateName, sqlite3_errmsg(db_));
    fail(ErrorCode::kIoError, std::string("sqlite step: ") + sqlite3_errmsg(db_));
  }
  void run() { step(); }

  bool is_null(int c) const { return sqlite3_column_type(stmt_, c) == SQLITE_NULL; }
  std::int64_t int64(int c) const { return sqlite3_column_int64(stmt_, c); }
  int integer(int c) const { return sqlite3_column_int(stmt_, c); }
  double real(int c) const { return sqlite3_column_double(stmt_, c); }
  std::string text(int c) const {
    const auto* p = sqlite3_column_text(stmt_, c);
    return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_, c)))
             : std::string();
  }
  std::vector<std::uint8_t> blob(int c) const {
    const auto* p = static_cast<const std::uint8_t*>(sqlite3_column_blob(stmt_, c));
    return p ? std::vector<std::uint8_t>(p, p + sqlite3_column_bytes(stmt_, c)) : std::vector<std::uint8_t>();
  }

 private:
  void check(int rc) {
    if (rc != SQLITE_OK) fail(ErrorCode::kIoError, std::string("sqlite bind: ") + sqlite3_errmsg(db_));
  }
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

void exec(sqlite3* db, const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown";
    sqlite3_free(err);
    fail(ErrorCode::kIoError, "sqlite: " + msg);
  }
}

// BEGIN IMMEDIATE ... COMMIT, rolled back when unwinding.
class Transaction {
 public:
  explicit Transaction(sqlite3* db) : db_(db) { exec(db_, "BEGIN IMMEDIATE"); }
  ~Transaction() {
    if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
  }
  void commit() {
    exec(db_, "COMMIT");
    done_ = true;
  }

 private:
  sqlite3* db_;
  bool done_ = false;
};

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS meta(key TEXT PRIMARY KEY, value TEXT NOT NULL);
INSERT OR IGNORE INTO meta(key, value) VALUES ('schema_version', '1');
CREATE TABLE IF NOT EXISTS projects(
  project_id TEXT PRIMARY KEY,
  name TEXT NOT NULL UNIQUE,
  created_at TEXT NOT NULL,
  active_pack_version INTEGER,
  next_seq INTEGER NOT NULL DEFAULT 1
);
CREATE TABLE IF NOT EXISTS reference_images(
  project_id TEXT NOT NULL REFERENCES projects(project_id),
  idx INTEGER NOT NULL,
  name TEXT NOT NULL,
  bytes BLOB NOT NULL,
  PRIMARY KEY(project_id, idx)
);
CREATE TABLE IF NOT EXISTS packs(
  project_id TEXT NOT NULL REFERENCES projects(project_id),
  version INTEGER NOT NULL,
  created_at TEXT NOT NULL,
  tau REAL NOT NULL,
  body TEXT NOT NULL,
  PRIMARY KEY(project_id, version)
);
CREATE TABLE IF NOT EXISTS records(
  record_id TEXT PRIMARY KEY,
  project_id TEXT NOT NULL REFERENCES projects(project_id),
  seq INTEGER NOT NULL,
  timestamp TEXT NOT NULL,
  pack_version INTEGER NOT NULL,
  gmm_loglik REAL NOT NULL,
  recon_loss REAL,
  gmm_flag INTEGER NOT NULL,
  embed_flag INTEGER,
  outlier INTEGER NOT NULL,
  gmm_margin REAL NOT NULL,
  embed_margin REAL,
  degraded INTEGER NOT NULL,
  features TEXT NOT NULL,
  review TEXT NOT NULL DEFAULT 'none',
  review_note TEXT NOT NULL DEFAULT '',
  reviewed_at TEXT NOT NULL DEFAULT '',
  thumbnail BLOB,
  UNIQUE(project_id, seq)
);
CREATE INDEX IF NOT EXISTS records_flagged ON records(project_id, outlier, seq);
CREATE TABLE IF NOT EXISTS audit(
  audit_id INTEGER PRIMARY KEY AUTOINCREMENT,
  record_id TEXT NOT NULL REFERENCES records(record_id),
  at TEXT NOT NULL,
  old_label TEXT NOT NULL,
  new_label TEXT NOT NULL,
  note TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS fit_jobs(
  job_id TEXT PRIMARY KEY,
  project_id TEXT NOT NULL REFERENCES projects(project_id),
  state TEXT NOT NULL,
  pack_version INTEGER,
  error TEXT NOT NULL DEFAULT '',
  created_at TEXT NOT NULL,
  updated_at TEXT NOT NULL
);
)sql";

constexpr const char* kRecordColumns =
    "record_id, project_id, seq, timestamp, pack_version, gmm_loglik, recon_loss, gmm_flag, "
    "embed_flag, outlier, gmm_margin, embed_margin, degraded, features, review, review_note, "
    "reviewed_at, thumbnail IS NOT NULL";

std::string encode_features(const FeatureVector& f) {
  std::string out;
  for (int i = 0; i < kFofDim; ++i) {
    if (i) out += ' ';
    out += format_double(f[i]);
  }
  return out;
}

FeatureVector decode_features(const std::string& text) {
  FeatureVector f;
  const char* p = text.data();
  const char* end = p + text.size();
  for (int i = 0; i < kFofDim; ++i) {
    while (p < end && *p == ' ') ++p;
    const auto res = std::from_chars(p, end, f[i]);
    if (res.ec != std::errc()) fail(ErrorCode::kIoError, "corrupt feature column");
    p = res.ptr;
  }
  return f;
}

ScoreRecord read_record(const Stmt& s) {
  ScoreRecord r;
  r.record_id = s.text(0);
  r.project_id = s.text(1);
  r.seq = s.int64(2);
  r.timestamp = s.text(3);
  r.pack_version = s.integer(4);
  Verdict& v = r.verdict;
  v.gmm_loglik = s.real(5);
  if (!s.is_null(6)) v.recon_loss = s.real(6);
  v.gmm_flag = s.integer(7) != 0;
  if (!s.is_null(8)) v.embed_flag = s.integer(8) != 0;
  v.outlier = s.integer(9) != 0;
  v.gmm_margin = s.real(10);
  if (!s.is_null(11)) v.embed_margin = s.real(11);
  v.degraded = s.integer(12) != 0;
  v.features = decode_features(s.text(13));
  r.review = s.text(14);
  r.review_note = s.text(15);
  r.reviewed_at = s.text(16);
  r.has_thumbnail = s.integer(17) != 0;
  return r;
}

Project read_project(const Stmt& s) {
  Project p;
  p.project_id = s.text(0);
  p.name = s.text(1);
  p.created_at = s.text(2);
  if (!s.is_null(3)) p.active_pack_version = s.integer(3);
  return p;
}

FitJob read_job(const Stmt& s) {
  FitJob j;
  j.job_id = s.text(0);
  j.project_id = s.text(1);
  j.state = s.text(2);
  if (!s.is_null(3)) j.pack_version = s.integer(3);
  j.error = s.text(4);
  j.created_at = s.text(5);
  j.updated_at = s.text(6);
  return j;
}

}  // namespace

Store::Store(const std::filesystem::path& db_file, int max_records) : max_records_(max_records) {
  if (sqlite3_open_v2(db_file.c_str(), &db_,
                      SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                      nullptr) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    fail(ErrorCode::kIoError, "cannot open store " + db_file.string() + ": " + msg);
  }
  sqlite3_busy_timeout(db_, 5000);
  try {
    exec(db_, "PRAGMA journal_mode=WAL");
    exec(db_, "PRAGMA synchronous=FULL");
    exec(db_, "PRAGMA foreign_keys=ON");
    exec(db_, kSchema);
  } catch (...) {
    sqlite3_close(db_);
    throw;
  }
}

Store::~Store() { sqlite3_close(db_); }

Project Store::create_project(const std::string& project_id, const std::string& name,
                              const std::string& created_at) {
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  {
    Stmt dup(db_, "SELECT 1 FROM projects WHERE name = ?");
    dup.bind(1, name);
    if (dup.step()) fail(ErrorCode::kDuplicateName, "a project named '" + name + "' already exists");
  }
  Stmt s(db_, "INSERT INTO projects(project_id, name, created_at) VALUES (?, ?, ?)");
  s.bind(1, project_id).bind(2, name).bind(3, created_at).run();
  tx.commit();
  return Project{project_id, name, created_at, std::nullopt};
}

std::vector<Project> Store::list_projects() {
  std::lock_guard lock(mu_);
  Stmt s(db_, "SELECT project_id, name, created_at, active_pack_version FROM projects ORDER BY created_at, name");
  std::vector<Project> out;
  while (s.step()) out.push_back(read_project(s));
  return out;
}

std::optional<Project> Store::find_project(const std::string& project_id) {
  std::lock_guard lock(mu_);
  Stmt s(db_, "SELECT project_id, name, created_at, active_pack_version FROM projects WHERE project_id = ?");
  s.bind(1, project_id);
  if (!s.step()) return std::nullopt;
  return read_project(s);
}

Project Store::require_project(const std::string& project_id) {
  auto p = find_project(project_id);
  if (!p) fail(ErrorCode::kProjectNotFound, "no project '" + project_id + "'");
  return *p;
}

void Store::add_reference(const std::string& project_id, const std::string& name,
                          const std::vector<std::uint8_t>& bytes) {
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  Stmt s(db_,
         "INSERT INTO reference_images(project_id, idx, name, bytes) VALUES "
         "(?, (SELECT COALESCE(MAX(idx), -1) + 1 FROM reference_images WHERE project_id = ?), ?, ?)");
  s.bind(1, project_id).bind(2, project_id).bind(3, name).bind_blob(4, bytes).run();
  tx.commit();
}

int Store::reference_count(const std::string& project_id) {
  std::lock_guard lock(mu_);
  Stmt s(db_, "SELECT COUNT(*) FROM reference_images WHERE project_id = ?");
  s.bind(1, project_id);
  s.step();
  return s.integer(0);
}

std::vector<std::pair<std::string, std::vector<std::uint8_t>>> Store::reference_images(
    const std::string& project_id) {
  std::lock_guard lock(mu_);
  Stmt s(db_, "SELECT name, bytes FROM reference_images WHERE project_id = ? ORDER BY idx");
  s.bind(1, project_id);
  std::vector<std::pair<std::string, std::vector<std::uint8_t>>> out;
  while (s.step()) out.emplace_back(s.text(0), s.blob(1));
  return out;
}

int Store::activate_pack(const std::string& project_id, const std::string& created_at, double tau,
                         const std::string& body) {
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  int version = 1;
  {
    Stmt s(db_, "SELECT COALESCE(MAX(version), 0) + 1 FROM packs WHERE project_id = ?");
    s.bind(1, project_id);
    s.step();
    version = s.integer(0);
  }
  Stmt ins(db_, "INSERT INTO packs(project_id, version, created_at, tau, body) VALUES (?, ?, ?, ?, ?)");
  ins.bind(1, project_id).bind(2, version).bind(3, created_at).bind(4, tau).bind(5, body).run();
  Stmt upd(db_, "UPDATE projects SET active_pack_version = ? WHERE project_id = ?");
  upd.bind(1, version).bind(2, project_id).run();
  tx.commit();
  return version;
}

std::optional<StoredPack> Store::active_pack(const std::string& project_id) {
  std::lock_guard lock(mu_);
  Stmt s(db_,
         "SELECT p.version, p.created_at, p.tau, p.body FROM packs p JOIN projects j "
         "ON p.project_id = j.project_id AND p.version = j.active_pack_version WHERE j.project_id = ?");
  s.bind(1, project_id);
  if (!s.step()) return std::nullopt;
  return StoredPack{s.integer(0), s.text(1), s.real(2), s.text(3)};
}

ScoreRecord Store::insert_record(ScoreRecord r, const std::vector<std::uint8_t>& thumbnail_png) {
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  {
    Stmt s(db_, "SELECT next_seq FROM projects WHERE project_id = ?");
    s.bind(1, r.project_id);
    if (!s.step()) fail(ErrorCode::kProjectNotFound, "no project '" + r.project_id + "'");
    r.seq = s.int64(0);
  }
  Stmt bump(db_, "UPDATE projects SET next_seq = next_seq + 1 WHERE project_id = ?");
  bump.bind(1, r.project_id).run();

  const Verdict& v = r.verdict;
  Stmt ins(db_,
           "INSERT INTO records(record_id, project_id, seq, timestamp, pack_version, gmm_loglik, "
           "recon_loss, gmm_flag, embed_flag, outlier, gmm_margin, embed_margin, degraded, features, "
           "thumbnail) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)");
  ins.bind(1, r.record_id)
      .bind(2, r.project_id)
      .bind(3, r.seq)
      .bind(4, r.timestamp)
      .bind(5, r.pack_version)
      .bind(6, v.gmm_loglik)
      .bind_opt(7, v.recon_loss)
      .bind(8, v.gmm_flag)
      .bind_opt(9, v.embed_flag)
      .bind(10, v.outlier)
      .bind(11, v.gmm_margin)
      .bind_opt(12, v.embed_margin)
      .bind(13, v.degraded)
      .bind(14, encode_features(v.features))
      .bind_blob(15, thumbnail_png)
      .run();

  if (max_records_ > 0) {
    // Oldest unreviewed first, then oldest reviewed.
    constexpr const char* kVictims =
        "SELECT record_id FROM records WHERE project_id = ?1 ORDER BY (review != 'none'), seq "
        "LIMIT MAX(0, (SELECT COUNT(*) FROM records WHERE project_id = ?1) - ?2)";
    Stmt audit(db_, (std::string("DELETE FROM audit WHERE record_id IN (") + kVictims + ")").c_str());
    audit.bind(1, r.project_id).bind(2, max_records_).run();
    Stmt evict(db_, (std::string("DELETE FROM records WHERE record_id IN (") + kVictims + ")").c_str());
    evict.bind(1, r.project_id).bind(2, max_records_).run();
  }
  tx.commit();
  r.has_thumbnail = !thumbnail_png.empty();
  return r;
}

std::vector<ScoreRecord> Store::list_records(const std::string& project_id, const RecordQuery& q) {
  std::lock_guard lock(mu_);
  const std::string sql = std::string("SELECT ") + kRecordColumns +
                          " FROM records WHERE project_id = ? AND seq > ? AND (? = 0 OR outlier = 1) "
                          "ORDER BY seq LIMIT ?";
  Stmt s(db_, sql.c_str());
  s.bind(1, project_id).bind(2, q.since_seq).bind(3, q.flagged_only).bind(4, q.limit);
  std::vector<ScoreRecord> out;
  while (s.step()) out.push_back(read_record(s));
  return out;
}

std::vector<ScoreRecord> Store::recent_records(const std::string& project_id, int window) {
  std::lock_guard lock(mu_);
  const std::string sql = std::string("SELECT ") + kRecordColumns +
                          " FROM records WHERE project_id = ? ORDER BY seq DESC LIMIT ?";
  Stmt s(db_, sql.c_str());
  s.bind(1, project_id).bind(2, window);
  std::vector<ScoreRecord> out;
  while (s.step()) out.push_back(read_record(s));
  return out;
}

std::optional<ScoreRecord> Store::find_record(const std::string& record_id) {
  std::lock_guard lock(mu_);
  const std::string sql = std::string("SELECT ") + kRecordColumns + " FROM records WHERE record_id = ?";
  Stmt s(db_, sql.c_str());
  s.bind(1, record_id);
  if (!s.step()) return std::nullopt;
  return read_record(s);
}

std::optional<std::vector<std::uint8_t>> Store::thumbnail(const std::string& record_id) {
  std::lock_guard lock(mu_);
  Stmt s(db_, "SELECT thumbnail FROM records WHERE record_id = ? AND thumbnail IS NOT NULL");
  s.bind(1, record_id);
  if (!s.step()) return std::nullopt;
  return s.blob(0);
}

ScoreRecord Store::review(const std::string& record_id, const std::string& label,
                          const std::string& note, const std::string& at) {
  std::lock_guard lock(mu_);
  Transaction tx(db_);
  const std::string sql = std::string("SELECT ") + kRecordColumns + " FROM records WHERE record_id = ?";
  ScoreRecord current;
  {
    Stmt s(db_, sql.c_str());
    s.bind(1, record_id);
    if (!s.step()) fail(ErrorCode::kRecordNotFound, "no record '" + record_id + "'");
    current = read_record(s);
  }
  if (current.review == label && current.review_note == note) return current;

  Stmt upd(db_, "UPDATE records SET review = ?, review_note = ?, reviewed_at = ? WHERE record_id = ?");
  upd.bind(1, label).bind(2, note).bind(3, at).bind(4, record_id).run();
  Stmt audit(db_, "INSERT INTO audit(record_id, at, old_label, new_label, note) VALUES (?, ?, ?, ?, ?)");
  audit.bind(1, record_id).bind(2, at).bind(3, current.review).bind(4, label).bind(5, note).run();
  tx.commit();
  current.review = label;
  current.review_note = note;
  current.reviewed_at = at;
  return current;
}

std::vector<AuditEntry> Store::audit_trail(const std::string& record_id) {
  std::lock_guard lock(mu_);
  Stmt s(db_,
         "SELECT audit_id, record_id, at, old_label, new_label, note FROM audit WHERE record_id = ? "
         "ORDER BY audit_id");
  s.bind(1, record_id);
  std::vector<AuditEntry> out;
  while (s.step()) {
    out.push_back(AuditEntry{s.int64(0), s.text(1), s.text(2), s.text(3), s.text(4), s.text(5)});
  }
  return out;
}

void Store::insert_job(const FitJob& job) {
  std::lock_guard lock(mu_);
  Stmt s(db_,
         "INSERT INTO fit_jobs(job_id, project_id, state, pack_version, error, created_at, updated_at) "
         "VALUES (?, ?, ?, ?, ?, ?, ?)");
  s.bind(1, job.job_id)
      .bind(2, job.project_id)
      .bind(3, job.state)
      .bind_opt(4, job.pack_version)
      .bind(5, job.error)
      .bind(6, job.created_at)
      .bind(7, job.updated_at)
      .run();
}

void Store::update_job(const FitJob& job) {
  std::lock_guard lock(mu_);
  // Terminal states never change.
  Stmt s(db_,
         "UPDATE fit_jobs SET state = ?, pack_version = ?, error = ?, updated_at = ? "
         "WHERE job_id = ? AND state NOT IN ('done', 'failed')");
  s.bind(1, job.state).bind_opt(2, job.pack_version).bind(3, job.error).bind(4, job.updated_at).bind(5, job.job_id).run();
}

std::optional<FitJob> Store::find_job(const std::string& job_id) {
  std::lock_guard lock(mu_);
  Stmt s(db_,
         "SELECT job_id, project_id, state, pack_version, error, created_at, updated_at FROM fit_jobs "
         "WHERE job_id = ?");
  s.bind(1, job_id);
  if (!s.step()) return std::nullopt;
  return read_job(s);
}

int Store::fail_interrupted_jobs(const std::string& at) {
  std::lock_guard lock(mu_);
  Stmt s(db_,
         "UPDATE fit_jobs SET state = 'failed', error = 'interrupted by service restart', "
         "updated_at = ? WHERE state IN ('pending', 'running')");
  s.bind(1, at).run();
  return sqlite3_changes(db_);
}

}  // namespace odgate
