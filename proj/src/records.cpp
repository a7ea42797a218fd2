#include "incisor/records.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "incisor/error.hpp"

namespace incisor {

namespace {

// Holds an exclusive flock on <root>/.lock for the lifetime of the object.
class StoreLock {
 public:
  explicit StoreLock(const fs::path& root) {
    fd_ = ::open((root / ".lock").c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) fail(errc::store_unwritable, "cannot open lock file in " + root.string());
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      fail(errc::store_unwritable, "cannot lock " + root.string());
    }
  }
  ~StoreLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  StoreLock(const StoreLock&) = delete;
  StoreLock& operator=(const StoreLock&) = delete;

 private:
  int fd_ = -1;
};

void write_all(int fd, const std::string& data, const fs::path& where) {
  const char* p = data.data();
  std::size_t left = data.size();
  while (left > 0) {
    ssize_t n = ::write(fd, p, left);
    if (n < 0) fail(errc::store_unwritable, "write to " + where.string() + " failed");
    p += n;
    left -= static_cast<std::size_t>(n);
  }
}

json header_json(const RecordHeader& h) {
  return {{"job_id", h.job_id},
          {"created_at", h.created_at},
          {"final_status", std::string(to_string(h.final_status))},
          {"failure_reason", h.failure_reason}};
}

RecordHeader header_from_json(const json& j) {
  return {j.at("job_id").get<std::string>(), j.at("created_at").get<std::string>(),
          parse_run_status(j.at("final_status").get<std::string>()), j.at("failure_reason").get<std::string>()};
}

RecordHeader header_of(const JobRecord& r) { return {r.job_id, r.created_at, r.final_status, r.failure_reason}; }

void newest_first(std::vector<RecordHeader>& v) {
  std::sort(v.begin(), v.end(), [](const RecordHeader& a, const RecordHeader& b) {
    if (a.created_at != b.created_at) return a.created_at > b.created_at;
    return a.job_id > b.job_id;
  });
}

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) fail(errc::not_found, "cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(errc::parse_error, p.string() + ": " + e.what());
  }
}

}  // namespace

AttemptEntry attempt_entry(const Attempt& a) {
  return {a.rank,
          a.offer.provider,
          a.offer.name,
          a.offer.memory_gb,
          a.offer.price_per_hour_usd,
          a.outcome.status,
          a.outcome.exit_code,
          a.outcome.runtime_s,
          a.outcome.diagnosis};
}

std::string failure_reason_for(const RunOutcome& outcome) {
  if (outcome.status == RunStatus::success) return "";
  std::string s(to_string(outcome.status));
  if (!outcome.diagnosis.empty()) s += ": " + outcome.diagnosis;
  return s;
}

std::string utc_timestamp() {
  using namespace std::chrono;
  auto us = duration_cast<microseconds>(system_clock::now().time_since_epoch()).count();
  std::time_t secs = static_cast<std::time_t>(us / 1000000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%06lldZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<long long>(us % 1000000));
  return buf;
}

std::vector<std::string> check_record(const JobRecord& r) {
  std::vector<std::string> v;
  if (!is_valid_job_id(r.job_id)) v.push_back("job_id '" + r.job_id + "' is not valid");
  if (r.created_at.empty()) v.push_back("created_at missing");
  if (!r.attempts.empty()) {
    if (r.attempts.back().status != r.final_status) {
      v.push_back("final_status " + std::string(to_string(r.final_status)) + " differs from last attempt " +
                  std::string(to_string(r.attempts.back().status)));
    }
    if (r.exec_graph.empty() || r.inv_graph.empty()) v.push_back("completed record lacks evidence graphs");
  }
  if ((r.final_status == RunStatus::success) != r.failure_reason.empty()) {
    v.push_back("failure_reason must be set exactly when the job failed");
  }
  return v;
}

json to_json(const JobRecord& r) {
  json prefs = json::array();
  for (const auto& p : r.preferences) prefs.push_back(to_json(p));
  json attempts = json::array();
  for (const auto& a : r.attempts) {
    attempts.push_back({{"rank", a.rank},
                        {"provider", a.provider},
                        {"name", a.name},
                        {"memory_gb", a.memory_gb},
                        {"price_per_hour_usd", a.price_per_hour_usd},
                        {"status", std::string(to_string(a.status))},
                        {"exit_code", a.exit_code},
                        {"runtime_s", a.runtime_s},
                        {"diagnosis", a.diagnosis}});
  }
  return {{"schema", kRecordSchema},
          {"job_id", r.job_id},
          {"created_at", r.created_at},
          {"spec", to_json(r.spec_snapshot)},
          {"bundle", to_json(r.bundle)},
          {"preferences", prefs},
          {"recommendation_bypassed", r.recommendation_bypassed},
          {"attempts", attempts},
          {"recovery_log", r.recovery_log},
          {"final_status", std::string(to_string(r.final_status))},
          {"failure_reason", r.failure_reason},
          {"metrics_summary", r.metrics_summary},
          {"exec_graph", to_json(r.exec_graph)},
          {"inv_graph", to_json(r.inv_graph)},
          {"logs_path", r.logs_path},
          {"cost_usd", r.cost_usd},
          {"notes", r.notes}};
}

JobRecord record_from_json(const json& j) {
  try {
    if (j.at("schema").get<std::string>() != kRecordSchema) {
      fail(errc::schema_violation, "unsupported record schema " + j.at("schema").dump());
    }
    JobRecord r;
    r.job_id = j.at("job_id").get<std::string>();
    r.created_at = j.at("created_at").get<std::string>();
    r.spec_snapshot = job_spec_from_json(j.at("spec"));
    r.bundle = bundle_from_json(j.at("bundle"));
    for (const auto& p : j.at("preferences")) r.preferences.push_back(preference_from_json(p));
    r.recommendation_bypassed = j.at("recommendation_bypassed").get<bool>();
    for (const auto& a : j.at("attempts")) {
      r.attempts.push_back({a.at("rank").get<int>(), a.at("provider").get<std::string>(),
                            a.at("name").get<std::string>(), a.at("memory_gb").get<double>(),
                            a.at("price_per_hour_usd").get<double>(),
                            parse_run_status(a.at("status").get<std::string>()), a.at("exit_code").get<int>(),
                            a.at("runtime_s").get<double>(), a.at("diagnosis").get<std::string>()});
    }
    r.recovery_log = j.at("recovery_log").get<std::vector<std::string>>();
    r.final_status = parse_run_status(j.at("final_status").get<std::string>());
    r.failure_reason = j.at("failure_reason").get<std::string>();
    r.metrics_summary = j.at("metrics_summary").get<std::string>();
    r.exec_graph = graph_from_json(j.at("exec_graph"));
    r.inv_graph = graph_from_json(j.at("inv_graph"));
    r.logs_path = j.at("logs_path").get<std::string>();
    r.cost_usd = j.at("cost_usd").get<double>();
    r.notes = j.at("notes").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    fail(errc::parse_error, std::string("malformed job record: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

fs::path RecordStore::default_root() {
  if (const char* env = std::getenv("INCISOR_STORE"); env && *env) return env;
  return fs::current_path() / ".incisor";
}

fs::path RecordStore::record_path(std::string_view job_id) const {
  return root_ / "jobs" / std::string(job_id) / "record.json";
}

fs::path RecordStore::persist(const JobRecord& record) {
  if (read_only_) fail(errc::store_unwritable, "store " + root_.string() + " is open read-only");
  if (auto v = check_record(record); !v.empty()) fail(errc::invariant_violation, "invalid record: " + v.front());

  std::error_code ec;
  fs::create_directories(root_ / "jobs" / record.job_id, ec);
  if (ec) fail(errc::store_unwritable, "cannot create " + (root_ / "jobs" / record.job_id).string() + ": " + ec.message());

  StoreLock lock(root_);
  const fs::path final_path = record_path(record.job_id);
  if (fs::exists(final_path, ec)) fail(errc::duplicate_job_id, "job " + record.job_id + " already recorded");

  const fs::path tmp = final_path.parent_path() / ("record.json.tmp." + std::to_string(::getpid()));
  {
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) fail(errc::store_unwritable, "cannot write " + tmp.string());
    try {
      write_all(fd, to_json(record).dump(2) + "\n", tmp);
    } catch (...) {
      ::close(fd);
      throw;
    }
    ::fsync(fd);
    ::close(fd);
  }
  if (crash_before_rename_) fail(errc::store_unwritable, "simulated crash before rename of " + tmp.string());

  fs::rename(tmp, final_path, ec);
  if (ec) fail(errc::store_unwritable, "cannot rename into " + final_path.string() + ": " + ec.message());

  // One write() per line with O_APPEND keeps concurrent appends whole.
  int fd = ::open((root_ / "index.jsonl").c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) fail(errc::store_unwritable, "cannot append to index in " + root_.string());
  try {
    write_all(fd, header_json(header_of(record)).dump() + "\n", root_ / "index.jsonl");
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  return final_path;
}

JobRecord RecordStore::load(std::string_view job_id) const {
  const fs::path p = record_path(job_id);
  std::error_code ec;
  if (!is_valid_job_id(job_id) || !fs::is_regular_file(p, ec)) {
    fail(errc::not_found, "no record for job " + std::string(job_id) + " in " + root_.string());
  }
  return record_from_json(read_json_file(p));
}

std::vector<RecordHeader> RecordStore::scan_records() const {
  std::vector<RecordHeader> out;
  std::error_code ec;
  const fs::path jobs = root_ / "jobs";
  if (!fs::is_directory(jobs, ec)) return out;
  for (const auto& entry : fs::directory_iterator(jobs, ec)) {
    const fs::path p = entry.path() / "record.json";
    if (!fs::is_regular_file(p, ec)) continue;
    try {
      auto j = read_json_file(p);
      out.push_back({j.at("job_id").get<std::string>(), j.at("created_at").get<std::string>(),
                     parse_run_status(j.at("final_status").get<std::string>()),
                     j.at("failure_reason").get<std::string>()});
    } catch (const std::exception&) {
      // unreadable record files are left out of the listing
    }
  }
  return out;
}

std::vector<RecordHeader> RecordStore::list_history(const std::function<bool(const RecordHeader&)>& filter) const {
  std::error_code ec;
  std::set<std::string> on_disk;
  if (fs::is_directory(root_ / "jobs", ec)) {
    for (const auto& entry : fs::directory_iterator(root_ / "jobs", ec)) {
      if (fs::is_regular_file(entry.path() / "record.json", ec)) on_disk.insert(entry.path().filename().string());
    }
  }

  std::vector<RecordHeader> headers;
  bool consistent = true;
  {
    std::ifstream in(root_ / "index.jsonl");
    std::set<std::string> indexed;
    std::string line;
    while (in && std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        auto h = header_from_json(json::parse(line));
        if (indexed.insert(h.job_id).second) headers.push_back(std::move(h));
      } catch (const std::exception&) {
        consistent = false;
      }
    }
    consistent = consistent && indexed == on_disk;
  }

  if (!consistent) {
    headers = scan_records();
    newest_first(headers);
    // Best effort: rewrite the index so later readers take the fast path.
    if (!read_only_ && fs::is_directory(root_, ec)) {
      try {
        StoreLock lock(root_);
        const fs::path tmp = root_ / ("index.jsonl.tmp." + std::to_string(::getpid()));
        {
          std::ofstream out(tmp, std::ios::trunc);
          for (auto it = headers.rbegin(); it != headers.rend(); ++it) out << header_json(*it).dump() << "\n";
        }
        fs::rename(tmp, root_ / "index.jsonl", ec);
      } catch (const error&) {
      }
    }
  }

  newest_first(headers);
  if (filter) std::erase_if(headers, [&](const RecordHeader& h) { return !filter(h); });
  return headers;
}

std::vector<HistoryEntry> RecordStore::history_entries() const {
  std::vector<HistoryEntry> out;
  for (const auto& h : list_history()) {
    try {
      JobRecord r = load(h.job_id);
      if (r.attempts.empty()) continue;
      out.push_back({r.job_id, r.created_at, r.exec_graph, r.inv_graph, r.final_status == RunStatus::success,
                     r.failure_reason});
    } catch (const error&) {
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// History evidence

namespace {

HistoryItem item_from_record(const JobRecord& r, SimilarityMatch match) {
  HistoryItem item;
  item.match = std::move(match);
  item.final_status = r.final_status;
  std::string text = r.metrics_summary;
  if (!r.failure_reason.empty()) text += "failure_reason=" + r.failure_reason + "\n";
  for (const auto& a : r.attempts) {
    text += "attempt=" + a.provider + "/" + a.name + " memory_gb=" + std::to_string(a.memory_gb) +
            " status=" + std::string(to_string(a.status)) + "\n";
    if (a.status == RunStatus::fail_oom) item.oom_instance_memory_gb.push_back(a.memory_gb);
  }
  if (text.size() > kSummaryMaxChars) {
    text.resize(kSummaryMaxChars - 4);
    text += "...\n";
  }
  item.summary = std::move(text);
  if (r.final_status == RunStatus::success) {
    item.measured_peak_gb = summary_number(r.metrics_summary, "mem_peak_used_gb");
    item.measured_running_avg = summary_number(r.metrics_summary, "sched_running_avg");
    item.measured_waiting_avg = summary_number(r.metrics_summary, "sched_waiting_avg");
  }
  return item;
}

json item_json(const HistoryItem& i) {
  json j{{"match", to_json(i.match)},
         {"final_status", std::string(to_string(i.final_status))},
         {"summary", i.summary},
         {"oom_instance_memory_gb", i.oom_instance_memory_gb}};
  if (i.measured_peak_gb) j["measured_peak_gb"] = *i.measured_peak_gb;
  if (i.measured_running_avg) j["measured_running_avg"] = *i.measured_running_avg;
  if (i.measured_waiting_avg) j["measured_waiting_avg"] = *i.measured_waiting_avg;
  return j;
}

HistoryItem item_from_json(const json& j) {
  HistoryItem i;
  const auto& m = j.at("match");
  i.match.job_id = m.at("job_id").get<std::string>();
  i.match.created_at = m.value("created_at", "");
  i.match.executable_score = m.value("executable_score", 0.0);
  i.match.invocation_score = m.value("invocation_score", 0.0);
  i.match.success = m.value("outcome", "") == "success";
  i.match.failure_reason = m.value("failure_reason", "");
  i.match.note = m.value("note", "");
  i.final_status = parse_run_status(j.at("final_status").get<std::string>());
  i.summary = j.at("summary").get<std::string>();
  i.oom_instance_memory_gb = j.value("oom_instance_memory_gb", std::vector<double>{});
  if (j.contains("measured_peak_gb")) i.measured_peak_gb = j["measured_peak_gb"].get<double>();
  if (j.contains("measured_running_avg")) i.measured_running_avg = j["measured_running_avg"].get<double>();
  if (j.contains("measured_waiting_avg")) i.measured_waiting_avg = j["measured_waiting_avg"].get<double>();
  return i;
}

}  // namespace

json to_json(const HistoryEvidence& ev) {
  json similar = json::array();
  for (const auto& i : ev.similar) similar.push_back(item_json(i));
  json refs = json::array();
  for (const auto& i : ev.explicit_refs) refs.push_back(item_json(i));
  return {{"similar", similar}, {"explicit_refs", refs}, {"notes", ev.notes}};
}

HistoryEvidence history_evidence_from_json(const json& j) {
  HistoryEvidence ev;
  for (const auto& i : j.value("similar", json::array())) ev.similar.push_back(item_from_json(i));
  for (const auto& i : j.value("explicit_refs", json::array())) ev.explicit_refs.push_back(item_from_json(i));
  ev.notes = j.value("notes", std::vector<std::string>{});
  return ev;
}

HistoryEvidence history_evidence_for(const RecordStore& store, const JobSpec& job, const EvidenceGraph& exec_graph,
                                     const EvidenceGraph& inv_graph, const SimilarityOptions& options) {
  HistoryEvidence ev;
  std::vector<HistoryEntry> entries;
  try {
    entries = store.history_entries();
  } catch (const std::exception& e) {
    ev.notes.push_back(std::string("history store unreadable: ") + e.what());
    return ev;
  }
  std::erase_if(entries, [&](const HistoryEntry& e) { return e.job_id == job.job_id; });

  if (!entries.empty() && !exec_graph.empty()) {
    std::vector<SimilarityMatch> matches;
    try {
      matches = find_similar_jobs(exec_graph, inv_graph, entries, options);
    } catch (const error& e) {
      ev.notes.push_back(std::string("similarity search failed: ") + e.what());
    }
    for (auto& m : matches) {
      try {
        ev.similar.push_back(item_from_record(store.load(m.job_id), m));
      } catch (const error& e) {
        ev.notes.push_back("record " + m.job_id + " unreadable: " + e.what());
      }
    }
  }

  for (const auto& id : job.history_refs) {
    try {
      JobRecord r = store.load(id);
      SimilarityMatch m;
      m.job_id = r.job_id;
      m.created_at = r.created_at;
      m.success = r.final_status == RunStatus::success;
      m.failure_reason = r.failure_reason;
      try {
        if (!exec_graph.empty() && !r.exec_graph.empty() && exec_graph.kind == r.exec_graph.kind) {
          m.executable_score = normalized_similarity(exec_graph, r.exec_graph, options.iterations);
        }
        if (!inv_graph.empty() && !r.inv_graph.empty()) {
          m.invocation_score = normalized_similarity(inv_graph, r.inv_graph, options.iterations);
        }
      } catch (const error&) {
      }
      m.note = "named by the user as related history";
      ev.explicit_refs.push_back(item_from_record(r, m));
    } catch (const error& e) {
      ev.notes.push_back("job-history " + id + ": " + e.what());
    }
  }
  return ev;
}

}  // namespace incisor
