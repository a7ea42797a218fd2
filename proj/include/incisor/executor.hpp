#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "incisor/catalog.hpp"
#include "incisor/constraints.hpp"
#include "incisor/error.hpp"
#include "incisor/selector.hpp"

namespace incisor {

struct WorkloadProfile {
  std::string name;
  double true_mem_hwm_gb = 1;
  int true_cpu_parallelism = 1;
  bool needs_gpu = false;
  double true_gpu_mem_gb = 0;
  IsaSet required_isa;
  IoIntensity io_class = IoIntensity::minimal;
  double disk_gb = 1;
  double base_runtime_s_at_reference = 1;
  std::optional<std::set<std::string>> imported_modules;

  bool operator==(const WorkloadProfile&) const = default;
};

// Throws invariant_violation.
void validate_profile(const WorkloadProfile& p);
json to_json(const WorkloadProfile& p);
WorkloadProfile profile_from_json(const json& j);
WorkloadProfile load_profile(const std::filesystem::path& path);

enum class RunStatus {
  success,
  fail_oom,
  fail_illegal_instruction,
  fail_missing_gpu,
  fail_insufficient_disk,
  fail_provision_unavailable,
};

std::string_view to_string(RunStatus s) noexcept;
RunStatus parse_run_status(std::string_view s);

struct Pressure {
  double some_pct = 0;
  double full_pct = 0;
  bool operator==(const Pressure&) const = default;
};

struct MetricsSummary {
  double mem_total_gb = 0;
  double mem_peak_used_gb = 0;
  Pressure mem_pressure;
  double cpu_user_pct = 0;
  double cpu_system_pct = 0;
  double cpu_idle_pct = 100;
  double sched_running_avg = 0;
  double sched_waiting_avg = 0;
  Pressure cpu_pressure;
  std::optional<double> gpu_util_pct;
  std::optional<double> gpu_mem_used_gb;
  double io_read_bytes = 0;
  double io_write_bytes = 0;
  Pressure io_pressure;
  double disk_used_gb = 0;
  double disk_avail_gb = 0;
  std::optional<std::set<std::string>> imported_modules;

  bool operator==(const MetricsSummary&) const = default;
};

// Violated MetricsSummary invariants; empty when consistent.
std::vector<std::string> check_metrics(const MetricsSummary& m, bool success);

struct RunOutcome {
  RunStatus status = RunStatus::success;
  int exit_code = 0;
  double runtime_s = 0;
  MetricsSummary metrics;
  std::string diagnosis;  // e.g. which ISA feature faulted

  bool operator==(const RunOutcome&) const = default;
};

inline constexpr double kSimulatedOverheadGb = 2.0;
inline constexpr double kDefaultRootVolumeGb = 100.0;

// Full runtime of the profile on an offer with the given vCPU count.
double simulated_runtime_s(const WorkloadProfile& profile, int vcpus);

RunOutcome simulate_run(const InstanceOffer& offer, const WorkloadProfile& profile,
                        double root_volume_gb = kDefaultRootVolumeGb);

// Plain key=value text, at most kSummaryMaxChars characters.
inline constexpr std::size_t kSummaryMaxChars = 4000;
std::string summarize_metrics(const RunOutcome& outcome);

// Reads "key=value" fields back out of a summary.
std::optional<double> summary_number(std::string_view summary, std::string_view key);
std::optional<std::string> summary_field(std::string_view summary, std::string_view key);

struct Attempt {
  int rank = 0;
  InstanceOffer offer;
  RunOutcome outcome;
};

struct RecoveryResult {
  RunOutcome final_outcome;
  std::vector<Attempt> attempts;
  std::vector<std::string> log;  // attempts, skips and the constraint that caused each skip
};

// Availability keyed by "provider/name"; missing keys count as available.
using Availability = std::map<std::string, bool>;

class exhausted_error : public error {
 public:
  exhausted_error(const std::string& what, RecoveryResult partial)
      : error(errc::all_candidates_exhausted, what), partial_(std::move(partial)) {}
  const RecoveryResult& partial() const noexcept { return partial_; }

 private:
  RecoveryResult partial_;
};

// Throws exhausted_error when no candidate succeeds.
RecoveryResult execute_with_recovery(const std::vector<InstancePreference>& prefs, const WorkloadProfile& profile,
                                     const Availability& availability = {},
                                     double root_volume_gb = kDefaultRootVolumeGb);

}  // namespace incisor
