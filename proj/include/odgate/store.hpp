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

#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "odgate/fof.hpp"
#include "odgate/gate.hpp"

struct sqlite3;

namespace odgate {

/// Embedded file-backed store for the monitoring service.
///
/// Schema (SQLite, WAL journal, synchronous=FULL):
///   projects(project_id PK, name UNIQUE, created_at, active_pack_version, next_seq)
///   reference_images(project_id, idx, name, bytes)
///   packs(project_id, version, created_at, tau, body)      body = canonical .odpack text
///   records(record_id PK, project_id, seq, ..., UNIQUE(project_id, seq))
///   audit(audit_id PK, record_id, at, old_label, new_label, note)
///   fit_jobs(job_id PK, project_id, state, pack_version, error, created_at, updated_at)
///
/// Every mutating call is one transaction; a call that returns has been
/// committed to disk.
struct Project {
  std::string project_id;
  std::string name;
  std::string created_at;
  std::optional<int> active_pack_version;
};

struct StoredPack {
  int version = 0;
  std::string created_at;
  double tau = 0.0;
  std::string body;
};

struct ScoreRecord {
  std::string record_id;
  std::string project_id;
  std::int64_t seq = 0;
  std::string timestamp;
  int pack_version = 0;
  Verdict verdict;
  std::string review = "none";  // none | confirmed_outlier | false_alarm
  std::string review_note;
  std::string reviewed_at;
  bool has_thumbnail = false;
};

struct AuditEntry {
  std::int64_t audit_id = 0;
  std::string record_id;
  std::string at;
  std::string old_label;
  std::string new_label;
  std::string note;
};

struct FitJob {
  std::string job_id;
  std::string project_id;
  std::string state;  // pending | running | done | failed
  std::optional<int> pack_version;
  std::string error;
  std::string created_at;
  std::string updated_at;
};

struct RecordQuery {
  std::int64_t since_seq = 0;  // exclusive
  bool flagged_only = false;
  int limit = 100;
};

class Store {
 public:
  /// `max_records` > 0 caps stored records per project, evicting the oldest
  /// unreviewed ones first.
  explicit Store(const std::filesystem::path& db_file, int max_records = 0);
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  Project create_project(const std::string& project_id, const std::string& name,
                         const std::string& created_at);
  std::vector<Project> list_projects();
  std::optional<Project> find_project(const std::string& project_id);
  Project require_project(const std::string& project_id);

  void add_reference(const std::string& project_id, const std::string& name,
                     const std::vector<std::uint8_t>& bytes);
  int reference_count(const std::string& project_id);
  std::vector<std::pair<std::string, std::vector<std::uint8_t>>> reference_images(
      const std::string& project_id);

  /// Inserts the pack as the next version and makes it active atomically.
  int activate_pack(const std::string& project_id, const std::string& created_at, double tau,
                    const std::string& body);
  std::optional<StoredPack> active_pack(const std::string& project_id);

  /// Assigns the next seq and persists the record in one transaction.
  ScoreRecord insert_record(ScoreRecord record, const std::vector<std::uint8_t>& thumbnail_png);
  std::vector<ScoreRecord> list_records(const std::string& project_id, const RecordQuery& query);
  std::vector<ScoreRecord> recent_records(const std::string& project_id, int window);
  std::optional<ScoreRecord> find_record(const std::string& record_id);
  std::optional<std::vector<std::uint8_t>> thumbnail(const std::string& record_id);

  /// Identical label and note as already stored is a no-op; any change
  /// appends an audit entry.
  ScoreRecord review(const std::string& record_id, const std::string& label,
                     const std::string& note, const std::string& at);
  std::vector<AuditEntry> audit_trail(const std::string& record_id);

  void insert_job(const FitJob& job);
  void update_job(const FitJob& job);
  std::optional<FitJob> find_job(const std::string& job_id);
  /// Jobs left pending/running by a previous process become failed.
  int fail_interrupted_jobs(const std::string& at);

 private:
  sqlite3* db_ = nullptr;
  int max_records_ = 0;
  std::mutex mu_;
};

}  // namespace odgate
