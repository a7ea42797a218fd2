#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "incisor/constraints.hpp"
#include "incisor/executor.hpp"
#include "incisor/selector.hpp"
#include "incisor/similarity.hpp"
#include "incisor/submission.hpp"

namespace incisor {

inline constexpr std::string_view kRecordSchema = "job-record/1";

struct AttemptEntry {
  int rank = 0;
  std::string provider;
  std::string name;
  double memory_gb = 0;
  double price_per_hour_usd = 0;
  RunStatus status = RunStatus::success;
  int exit_code = 0;
  double runtime_s = 0;
  std::string diagnosis;

  bool operator==(const AttemptEntry&) const = default;
};

AttemptEntry attempt_entry(const Attempt& a);

struct JobRecord {
  std::string job_id;
  std::string created_at;  // ISO-8601 UTC with microseconds
  JobSpec spec_snapshot;
  ConstraintBundle bundle;
  std::vector<InstancePreference> preferences;
  bool recommendation_bypassed = false;
  std::vector<AttemptEntry> attempts;
  std::vector<std::string> recovery_log;
  RunStatus final_status = RunStatus::success;
  std::string failure_reason;  // "<status>: <diagnosis>", empty on success
  std::string metrics_summary;
  EvidenceGraph exec_graph;
  EvidenceGraph inv_graph;
  std::string logs_path;
  double cost_usd = 0;
  std::vector<std::string> notes;

  bool operator==(const JobRecord&) const = default;
};

// Violated record invariants; empty when valid.
std::vector<std::string> check_record(const JobRecord& r);

json to_json(const JobRecord& r);
JobRecord record_from_json(const json& j);

// "<status>: <diagnosis>" for failures, "" for success.
std::string failure_reason_for(const RunOutcome& outcome);

// Current time as "YYYY-MM-DDTHH:MM:SS.uuuuuuZ".
std::string utc_timestamp();

struct RecordHeader {
  std::string job_id;
  std::string created_at;
  RunStatus final_status = RunStatus::success;
  std::string failure_reason;

  bool operator==(const RecordHeader&) const = default;
};

// Directory tree store:
//   <root>/jobs/<job_id>/record.json
//   <root>/index.jsonl   (one header per line, append-only)
//   <root>/.lock         (serializes writers)
class RecordStore {
 public:
  explicit RecordStore(std::filesystem::path root) : root_(std::move(root)) {}

  // INCISOR_STORE, else ./.incisor
  static std::filesystem::path default_root();

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path record_path(std::string_view job_id) const;

  // Throws duplicate_job_id, store_unwritable or invariant_violation.
  std::filesystem::path persist(const JobRecord& record);

  // Throws not_found.
  JobRecord load(std::string_view job_id) const;

  // Newest first. The index is rebuilt from the record files when it is
  // missing or disagrees with them.
  std::vector<RecordHeader> list_history(const std::function<bool(const RecordHeader&)>& filter = {}) const;

  std::vector<HistoryEntry> history_entries() const;

  // Test hook: persist stops after writing the temp file, as if the process died.
  void set_crash_before_rename(bool on) { crash_before_rename_ = on; }

  // A read-only store never writes: persist throws store_unwritable and a
  // stale index is worked around instead of rewritten.
  void set_read_only(bool on) { read_only_ = on; }
  bool read_only() const { return read_only_; }

 private:
  std::vector<RecordHeader> scan_records() const;

  std::filesystem::path root_;
  bool crash_before_rename_ = false;
  bool read_only_ = false;
};

struct HistoryItem {
  SimilarityMatch match;
  RunStatus final_status = RunStatus::success;
  std::string summary;  // at most kSummaryMaxChars
  std::optional<double> measured_peak_gb;
  std::optional<double> measured_running_avg;
  std::optional<double> measured_waiting_avg;
  std::vector<double> oom_instance_memory_gb;
};

struct HistoryEvidence {
  std::vector<HistoryItem> similar;        // from find_similar_jobs
  std::vector<HistoryItem> explicit_refs;  // named by --job-history
  std::vector<std::string> notes;

  bool empty() const { return similar.empty() && explicit_refs.empty(); }
};

json to_json(const HistoryEvidence& ev);
HistoryEvidence history_evidence_from_json(const json& j);

HistoryEvidence history_evidence_for(const RecordStore& store, const JobSpec& job, const EvidenceGraph& exec_graph,
                                     const EvidenceGraph& inv_graph, const SimilarityOptions& options = {});

}  // namespace incisor
