#include "incisor/executor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace incisor {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void validate_profile(const WorkloadProfile& p) {
  auto bad = [&](std::string_view field, std::string_view why) {
    fail(errc::invariant_violation, "profile " + std::string(field) + ": " + std::string(why));
  };
  if (!(p.true_mem_hwm_gb > 0)) bad("true_mem_hwm_gb", "must be > 0");
  if (p.true_cpu_parallelism < 1) bad("true_cpu_parallelism", "must be >= 1");
  if (p.true_gpu_mem_gb < 0) bad("true_gpu_mem_gb", "must be >= 0");
  if (!p.needs_gpu && p.true_gpu_mem_gb != 0) bad("true_gpu_mem_gb", "must be 0 when no GPU is needed");
  if (!(p.disk_gb > 0)) bad("disk_gb", "must be > 0");
  if (!(p.base_runtime_s_at_reference > 0)) bad("base_runtime_s_at_reference", "must be > 0");
  if (!p.required_isa.is_closed()) bad("required_isa", "must be closed under avx512 => avx2 => avx");
}

json to_json(const WorkloadProfile& p) {
  json j{{"name", p.name},
         {"true_mem_hwm_gb", p.true_mem_hwm_gb},
         {"true_cpu_parallelism", p.true_cpu_parallelism},
         {"needs_gpu", p.needs_gpu},
         {"true_gpu_mem_gb", p.true_gpu_mem_gb},
         {"required_isa", p.required_isa.names()},
         {"io_class", to_string(p.io_class)},
         {"disk_gb", p.disk_gb},
         {"base_runtime_s_at_reference", p.base_runtime_s_at_reference}};
  if (p.imported_modules) j["imported_modules"] = *p.imported_modules;
  return j;
}

WorkloadProfile profile_from_json(const json& j) {
  WorkloadProfile p;
  try {
    p.name = j.value("name", "");
    p.true_mem_hwm_gb = j.at("true_mem_hwm_gb").get<double>();
    p.true_cpu_parallelism = j.at("true_cpu_parallelism").get<int>();
    p.needs_gpu = j.value("needs_gpu", false);
    p.true_gpu_mem_gb = j.value("true_gpu_mem_gb", 0.0);
    for (const auto& f : j.value("required_isa", json::array())) p.required_isa.insert(parse_isa_feature(f.get<std::string>()));
    p.io_class = parse_io_intensity(j.value("io_class", "minimal"));
    p.disk_gb = j.value("disk_gb", 1.0);
    p.base_runtime_s_at_reference = j.at("base_runtime_s_at_reference").get<double>();
    if (j.contains("imported_modules")) p.imported_modules = j["imported_modules"].get<std::set<std::string>>();
  } catch (const json::exception& e) {
    fail(errc::parse_error, std::string("malformed workload profile: ") + e.what());
  }
  validate_profile(p);
  return p;
}

WorkloadProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(errc::unreadable_file, "cannot read profile '" + path.string() + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(errc::parse_error, "'" + path.string() + "' is not valid JSON");
  WorkloadProfile p = profile_from_json(j);
  if (p.name.empty()) p.name = path.stem().string();
  return p;
}

std::string_view to_string(RunStatus s) noexcept {
  switch (s) {
    case RunStatus::success: return "success";
    case RunStatus::fail_oom: return "fail_oom";
    case RunStatus::fail_illegal_instruction: return "fail_illegal_instruction";
    case RunStatus::fail_missing_gpu: return "fail_missing_gpu";
    case RunStatus::fail_insufficient_disk: return "fail_insufficient_disk";
    case RunStatus::fail_provision_unavailable: return "fail_provision_unavailable";
  }
  return "unknown";
}

RunStatus parse_run_status(std::string_view s) {
  for (auto st : {RunStatus::success, RunStatus::fail_oom, RunStatus::fail_illegal_instruction,
                  RunStatus::fail_missing_gpu, RunStatus::fail_insufficient_disk,
                  RunStatus::fail_provision_unavailable}) {
    if (to_string(st) == s) return st;
  }
  fail(errc::parse_error, "unknown run status '" + std::string(s) + "'");
}

std::vector<std::string> check_metrics(const MetricsSummary& m, bool success) {
  std::vector<std::string> v;
  auto pct = [&](std::string_view name, double x) {
    if (!(x >= 0 && x <= 100)) v.push_back(std::string(name) + "=" + num(x) + " outside [0,100]");
  };
  pct("mem_pressure.some", m.mem_pressure.some_pct);
  pct("mem_pressure.full", m.mem_pressure.full_pct);
  pct("cpu_user", m.cpu_user_pct);
  pct("cpu_system", m.cpu_system_pct);
  pct("cpu_idle", m.cpu_idle_pct);
  pct("cpu_pressure.some", m.cpu_pressure.some_pct);
  pct("cpu_pressure.full", m.cpu_pressure.full_pct);
  pct("io_pressure.some", m.io_pressure.some_pct);
  pct("io_pressure.full", m.io_pressure.full_pct);
  if (m.gpu_util_pct) pct("gpu_util", *m.gpu_util_pct);
  if (std::abs(m.cpu_user_pct + m.cpu_system_pct + m.cpu_idle_pct - 100) > 0.5) {
    v.push_back("user+system+idle does not sum to 100");
  }
  if (success && m.mem_peak_used_gb > m.mem_total_gb) v.push_back("peak memory exceeds total on success");
  if (m.mem_total_gb < 0 || m.mem_peak_used_gb < 0 || m.disk_used_gb < 0 || m.disk_avail_gb < 0 ||
      m.io_read_bytes < 0 || m.io_write_bytes < 0) {
    v.push_back("negative quantity");
  }
  return v;
}

// ---------------------------------------------------------------------------
// Simulation

double simulated_runtime_s(const WorkloadProfile& profile, int vcpus) {
  const int p = profile.true_cpu_parallelism;
  const int used = std::max(1, std::min(vcpus, p));
  return profile.base_runtime_s_at_reference * static_cast<double>(p) / used;
}

namespace {

struct IoRates {
  double bytes_per_s;
  Pressure pressure;
};

IoRates io_rates(IoIntensity io) {
  switch (io) {
    case IoIntensity::minimal: return {1e6, {0, 0}};
    case IoIntensity::moderate: return {5e7, {8, 2}};
    case IoIntensity::heavy: return {5e8, {35, 12}};
  }
  return {0, {0, 0}};
}

MetricsSummary running_metrics(const InstanceOffer& offer, const WorkloadProfile& profile, double runtime_s,
                               double root_volume_gb) {
  MetricsSummary m;
  const int p = profile.true_cpu_parallelism;
  const int running = std::min(offer.vcpus, p);
  const double busy = 100.0 * running / offer.vcpus;
  m.mem_total_gb = offer.memory_gb;
  m.mem_peak_used_gb = std::min(offer.memory_gb, profile.true_mem_hwm_gb + kSimulatedOverheadGb);
  const double ratio = m.mem_peak_used_gb / offer.memory_gb;
  m.mem_pressure = {std::clamp((ratio - 0.75) / 0.25, 0.0, 1.0) * 20.0, 0};
  m.cpu_user_pct = busy * 0.95;
  m.cpu_system_pct = busy * 0.05;
  m.cpu_idle_pct = 100.0 - busy;
  m.sched_running_avg = running;
  m.sched_waiting_avg = std::max(0, p - offer.vcpus);
  m.cpu_pressure = {m.sched_waiting_avg > 0 ? 100.0 * m.sched_waiting_avg / p : 0.0, 0};
  if (offer.accelerator) {
    m.gpu_util_pct = profile.needs_gpu ? 90.0 : 0.0;
    m.gpu_mem_used_gb = profile.needs_gpu ? std::min(profile.true_gpu_mem_gb, offer.accelerator->mem_gb_per_device) : 0.0;
  }
  IoRates io = io_rates(profile.io_class);
  m.io_read_bytes = std::round(io.bytes_per_s * runtime_s * 0.7);
  m.io_write_bytes = std::round(io.bytes_per_s * runtime_s * 0.3);
  m.io_pressure = io.pressure;
  m.disk_used_gb = std::min(profile.disk_gb, root_volume_gb);
  m.disk_avail_gb = root_volume_gb - m.disk_used_gb;
  m.imported_modules = profile.imported_modules;
  return m;
}

}  // namespace

RunOutcome simulate_run(const InstanceOffer& offer, const WorkloadProfile& profile, double root_volume_gb) {
  const double full = simulated_runtime_s(profile, offer.vcpus);
  RunOutcome out;

  IsaSet missing = profile.required_isa - offer.isa_features;
  if (!missing.empty()) {
    out.status = RunStatus::fail_illegal_instruction;
    out.exit_code = 132;
    out.runtime_s = std::min(0.5, full);
    out.metrics = running_metrics(offer, profile, out.runtime_s, root_volume_gb);
    out.metrics.mem_peak_used_gb = std::min(offer.memory_gb, 0.25);
    out.diagnosis = "SIGILL: instance lacks " + missing.to_string('|');
    return out;
  }

  if (profile.needs_gpu && (!offer.accelerator || offer.accelerator->mem_gb_per_device < profile.true_gpu_mem_gb)) {
    out.status = RunStatus::fail_missing_gpu;
    out.exit_code = 3;
    out.runtime_s = std::min(1.0, full);
    out.metrics = running_metrics(offer, profile, out.runtime_s, root_volume_gb);
    out.metrics.mem_peak_used_gb = std::min(offer.memory_gb, 0.5);
    out.diagnosis = offer.accelerator ? "GPU has " + num(offer.accelerator->mem_gb_per_device) + " GB, " +
                                            num(profile.true_gpu_mem_gb) + " GB needed"
                                      : "no GPU device present";
    return out;
  }

  if (profile.true_mem_hwm_gb + kSimulatedOverheadGb > offer.memory_gb) {
    out.status = RunStatus::fail_oom;
    out.exit_code = 137;
    double reached = std::clamp((offer.memory_gb - kSimulatedOverheadGb) / profile.true_mem_hwm_gb, 0.01, 1.0);
    out.runtime_s = full * reached;
    out.metrics = running_metrics(offer, profile, out.runtime_s, root_volume_gb);
    out.metrics.mem_peak_used_gb = offer.memory_gb;
    out.metrics.mem_pressure = {85, 60};
    out.diagnosis = "killed by the OOM killer: needs " + num(profile.true_mem_hwm_gb + kSimulatedOverheadGb) +
                    " GB, instance has " + num(offer.memory_gb) + " GB";
    return out;
  }

  if (profile.disk_gb > root_volume_gb) {
    out.status = RunStatus::fail_insufficient_disk;
    out.exit_code = 28;
    out.runtime_s = full * (root_volume_gb / profile.disk_gb);
    out.metrics = running_metrics(offer, profile, out.runtime_s, root_volume_gb);
    out.metrics.disk_used_gb = root_volume_gb;
    out.metrics.disk_avail_gb = 0;
    out.diagnosis = "ENOSPC: needs " + num(profile.disk_gb) + " GB on a " + num(root_volume_gb) + " GB volume";
    return out;
  }

  out.status = RunStatus::success;
  out.exit_code = 0;
  out.runtime_s = full;
  out.metrics = running_metrics(offer, profile, full, root_volume_gb);
  return out;
}

// ---------------------------------------------------------------------------
// Summaries

namespace {

std::string memory_fit(const MetricsSummary& m) {
  if (m.mem_total_gb <= 0) return "n/a";
  double r = m.mem_peak_used_gb / m.mem_total_gb;
  if (r > 2.0 / 3.0) return "tight";
  if (r > 1.0 / 3.0) return "right-sized";
  return "overprovisioned";
}

std::string cpu_fit(const MetricsSummary& m) {
  if (m.sched_running_avg <= 0) return "n/a";
  if (m.sched_waiting_avg > 0) return "tight";
  if (m.cpu_idle_pct <= 100.0 / 3.0) return "right-sized";
  return "overprovisioned";
}

std::string pressure_flag(const Pressure& p) {
  if (p.full_pct >= 10) return "full";
  if (p.some_pct >= 10) return "some";
  return "none";
}

}  // namespace

std::string summarize_metrics(const RunOutcome& o) {
  const auto& m = o.metrics;
  std::string s;
  s += "status=" + std::string(to_string(o.status)) + " exit_code=" + std::to_string(o.exit_code) +
       " runtime_s=" + num(o.runtime_s) + "\n";
  if (!o.diagnosis.empty()) s += "diagnosis=" + o.diagnosis + "\n";
  s += "mem_total_gb=" + num(m.mem_total_gb) + " mem_peak_used_gb=" + num(m.mem_peak_used_gb) +
       " mem_pressure_some_pct=" + num(m.mem_pressure.some_pct) + " mem_pressure_full_pct=" +
       num(m.mem_pressure.full_pct) + "\n";
  s += "cpu_user_pct=" + num(m.cpu_user_pct) + " cpu_system_pct=" + num(m.cpu_system_pct) +
       " cpu_idle_pct=" + num(m.cpu_idle_pct) + "\n";
  s += "sched_running_avg=" + num(m.sched_running_avg) + " sched_waiting_avg=" + num(m.sched_waiting_avg) +
       " cpu_pressure_some_pct=" + num(m.cpu_pressure.some_pct) + " cpu_pressure_full_pct=" +
       num(m.cpu_pressure.full_pct) + "\n";
  if (m.gpu_util_pct) {
    s += "gpu_util_pct=" + num(*m.gpu_util_pct) + " gpu_mem_used_gb=" + num(m.gpu_mem_used_gb.value_or(0)) + "\n";
  } else {
    s += "gpu=none\n";
  }
  s += "io_read_bytes=" + num(m.io_read_bytes) + " io_write_bytes=" + num(m.io_write_bytes) +
       " io_pressure_some_pct=" + num(m.io_pressure.some_pct) + " io_pressure_full_pct=" +
       num(m.io_pressure.full_pct) + "\n";
  s += "disk_used_gb=" + num(m.disk_used_gb) + " disk_avail_gb=" + num(m.disk_avail_gb) + "\n";
  s += "memory_fit=" + memory_fit(m) + " cpu_fit=" + cpu_fit(m) + " memory_pressure=" + pressure_flag(m.mem_pressure) +
       "\n";
  s += "fit_rule=memory by peak/total thirds, cpu tight if threads wait, right-sized if idle<=33.3%\n";
  if (m.imported_modules) {
    std::string mods;
    for (const auto& mod : *m.imported_modules) mods += (mods.empty() ? "" : ",") + mod;
    s += "imported_modules=" + mods + "\n";
  }
  if (s.size() > kSummaryMaxChars) {
    s.resize(kSummaryMaxChars - 4);
    s += "...\n";
  }
  return s;
}

std::optional<std::string> summary_field(std::string_view summary, std::string_view key) {
  std::string needle = std::string(key) + "=";
  for (auto pos = summary.find(needle); pos != std::string_view::npos; pos = summary.find(needle, pos + 1)) {
    if (pos > 0 && summary[pos - 1] != ' ' && summary[pos - 1] != '\n') continue;
    auto start = pos + needle.size();
    auto end = summary.find_first_of(" \n", start);
    if (key == "diagnosis" || key == "imported_modules") end = summary.find('\n', start);
    return std::string(summary.substr(start, end == std::string_view::npos ? end : end - start));
  }
  return std::nullopt;
}

std::optional<double> summary_number(std::string_view summary, std::string_view key) {
  auto f = summary_field(summary, key);
  if (!f) return std::nullopt;
  double v = 0;
  auto [p, ec] = std::from_chars(f->data(), f->data() + f->size(), v);
  if (ec != std::errc{} || p != f->data() + f->size()) return std::nullopt;
  return v;
}

// ---------------------------------------------------------------------------
// Recovery

RecoveryResult execute_with_recovery(const std::vector<InstancePreference>& prefs, const WorkloadProfile& profile,
                                     const Availability& availability, double root_volume_gb) {
  RecoveryResult r;
  double min_memory = 0;
  std::string memory_reason;
  IsaSet required_isa;
  bool need_accelerator = false;

  for (const auto& pref : prefs) {
    const auto& o = pref.offer;
    const std::string id = o.provider + "/" + o.name;
    const std::string tag = "rank " + std::to_string(pref.rank) + " " + id;

    std::string skip;
    if (o.memory_gb < min_memory) {
      skip = num(o.memory_gb) + " GB is below " + num(min_memory) + " GB (" + memory_reason + ")";
    } else if (!o.isa_features.includes(required_isa)) {
      skip = "lacks " + (required_isa - o.isa_features).to_string('|') + " that faulted on an earlier attempt";
    } else if (need_accelerator && !o.accelerator) {
      skip = "no accelerator; an earlier attempt failed for want of a GPU";
    }
    if (!skip.empty()) {
      r.log.push_back("skipped " + tag + ": " + skip);
      continue;
    }

    if (auto it = availability.find(id); it != availability.end() && !it->second) {
      RunOutcome u;
      u.status = RunStatus::fail_provision_unavailable;
      u.exit_code = -1;
      u.runtime_s = 0;
      u.metrics.mem_total_gb = o.memory_gb;
      u.diagnosis = "provider reported no capacity";
      r.attempts.push_back({pref.rank, o, u});
      r.log.push_back("attempt " + tag + ": fail_provision_unavailable, stepping down");
      continue;
    }

    RunOutcome out = simulate_run(o, profile, root_volume_gb);
    r.attempts.push_back({pref.rank, o, out});
    std::string line = "attempt " + tag + ": " + std::string(to_string(out.status));
    if (!out.diagnosis.empty()) line += " (" + out.diagnosis + ")";
    r.log.push_back(line);

    switch (out.status) {
      case RunStatus::success:
        r.final_outcome = out;
        return r;
      case RunStatus::fail_oom:
        if (2 * o.memory_gb > min_memory) {
          min_memory = 2 * o.memory_gb;
          memory_reason = "retry after OOM requires at least 2x the " + num(o.memory_gb) + " GB of " + o.name;
        }
        break;
      case RunStatus::fail_illegal_instruction:
        required_isa = required_isa | (profile.required_isa - o.isa_features);
        break;
      case RunStatus::fail_missing_gpu:
        need_accelerator = true;
        break;
      default:
        break;  // disk: plain step-down
    }
  }

  if (!r.attempts.empty()) {
    r.final_outcome = r.attempts.back().outcome;
  } else {
    r.final_outcome.status = RunStatus::fail_provision_unavailable;
    r.final_outcome.exit_code = -1;
  }
  std::string what = "all " + std::to_string(prefs.size()) + " candidates exhausted after " +
                     std::to_string(r.attempts.size()) + " attempts";
  r.log.push_back(what);
  throw exhausted_error(what, std::move(r));
}

}  // namespace incisor
