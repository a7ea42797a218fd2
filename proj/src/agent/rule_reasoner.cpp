#include <algorithm>
#include <cmath>
#include <set>

#include "incisor/agent.hpp"
#include "incisor/error.hpp"

namespace incisor {

namespace {

enum class Group { platform, cpu, memory, gpu, io, disk, select };

std::optional<Group> group_of(const std::string& dim) {
  if (dim == "platform" || dim == "isa_features") return Group::platform;
  if (dim == "cpu_count") return Group::cpu;
  if (dim == "mem_hwm_gb") return Group::memory;
  if (dim == "gpu_required" || dim == "gpu_count" || dim == "gpu_mem_gb") return Group::gpu;
  if (dim == "io_intensity") return Group::io;
  if (dim == "disk_gb") return Group::disk;
  if (dim == "items") return Group::select;
  return std::nullopt;
}

std::vector<Group> groups_for(const Subtask& s) {
  std::vector<Group> out;
  for (const auto& d : s.target_dimensions) {
    auto g = group_of(d);
    if (g && std::find(out.begin(), out.end(), *g) == out.end()) out.push_back(*g);
  }
  return out;
}

using Slice = std::vector<const Observation*>;

const json* ok_payload(const Slice& obs, std::string_view tool) {
  for (const auto* o : obs) {
    if (o->call.tool == tool && o->result.status == ToolStatus::ok) return &o->result.payload;
  }
  return nullptr;
}

std::vector<const json*> ok_payloads(const Slice& obs, std::string_view tool) {
  std::vector<const json*> out;
  for (const auto* o : obs) {
    if (o->call.tool == tool && o->result.status == ToolStatus::ok) out.push_back(&o->result.payload);
  }
  return out;
}

std::string tool_error(const Slice& obs, std::string_view tool) {
  for (const auto* o : obs) {
    if (o->call.tool == tool && o->result.status != ToolStatus::ok) {
      return std::string(to_string(o->result.status)) + ": " + o->result.payload.value("error", "");
    }
  }
  return "";
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

Finding from_estimate(std::string dim, const json& est, std::string source) {
  Finding f;
  f.dimension = std::move(dim);
  f.value = est.at("value");
  f.confidence = parse_confidence(est.value("confidence", "low"));
  f.source = std::move(source);
  f.detail = est.value("rationale", "");
  return f;
}

Finding make(std::string dim, json value, Confidence c, std::string source, std::string detail) {
  Finding f;
  f.dimension = std::move(dim);
  f.value = std::move(value);
  f.confidence = c;
  f.source = std::move(source);
  f.detail = std::move(detail);
  return f;
}

struct Digest {
  json j;
  bool compiled() const { return j.value("workload_kind", "") == "compiled_binary"; }
  bool python() const { return j.value("workload_kind", "") == "interpreted_entry_point"; }
  std::string entry() const { return j.value("entry", ""); }
};

ToolCall call(std::string tool, json args = json::object()) { return {std::move(tool), std::move(args)}; }

// Modules whose import is taken as evidence on its own.
const std::set<std::string> kGpuModules{"cupy", "pycuda", "cudf", "cuml", "numba_cuda"};
const std::set<std::string> kHeavyIoModules{"h5py", "netCDF4", "adios2", "pnetcdf", "tables"};

// ---------------------------------------------------------------------------
// Plans: the calls each group makes, given what it has observed so far.

std::vector<ToolCall> plan(Group g, const Digest& d, const Slice& obs) {
  const json path{{"path", d.entry()}};
  std::vector<ToolCall> p;
  switch (g) {
    case Group::platform:
      if (d.compiled()) {
        p = {call("parse_elf_header", path), call("disassemble", path), call("detect_isa_features", path)};
      }
      break;
    case Group::cpu:
      p = {call("detect_parallelism", path)};
      break;
    case Group::memory: {
      p.push_back(call("find_similar_jobs"));
      for (const auto& id : d.j.value("history_refs", json::array())) p.push_back(call("job_history", {{"job_id", id}}));
      if (d.compiled()) {
        p.push_back(call("disassemble", path));
        p.push_back(call("extract_allocation_sizes", path));
        p.push_back(call("estimate_memory", path));
        if (const json* est = ok_payload(obs, "estimate_memory"); est && est->value("total_bytes", 0ULL) > 0) {
          p.push_back(call("calculator", {{"expression", std::to_string(est->at("total_bytes").get<std::uint64_t>()) +
                                                             " B in GiB"}}));
        }
      }
      break;
    }
    case Group::gpu:
    case Group::io:
      if (d.python()) {
        p = {call("scan_python_imports", {{"path", d.entry()}, {"roots", d.j.value("source_roots", json::array())}})};
      } else {
        p = {call("detect_accel_and_io", path)};
      }
      break;
    case Group::disk:
      p = {call("artifact_sizes")};
      break;
    case Group::select: {
      const json bundle = d.j.at("bundle");
      const double mem = bundle.at("mem_hwm_gb").at("value").get<double>();
      p = {call("catalog_filter", {{"bundle", bundle}}),
           call("calculator", {{"expression", num(mem) + " GB + 2 GB"}}),
           call("rank_instances", {{"bundle", bundle}})};
      if (const json* ranked = ok_payload(obs, "rank_instances")) {
        p.push_back(call("validate_preferences", {{"bundle", bundle}, {"preferences", *ranked}}));
      }
      break;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Conclusions

void conclude_platform(const Digest& d, const Slice& obs, std::vector<Finding>& out) {
  if (!d.compiled()) {
    out.push_back(make("platform", "any", Confidence::medium, "workload_kind",
                       "interpreted entry point; the interpreter runs on either architecture"));
    out.push_back(make("isa_features", json::array(), Confidence::medium, "workload_kind",
                       "no machine code of its own to require vector extensions"));
    return;
  }
  if (const json* elf = ok_payload(obs, "parse_elf_header")) {
    std::string plat = elf->value("platform", "any");
    out.push_back(make("platform", plat, plat == "any" ? Confidence::low : Confidence::high, "parse_elf_header",
                       "ELF header: " + elf->value("class", "") + " " + elf->value("machine", "")));
  } else {
    out.push_back(make("platform", "any", Confidence::low, "parse_elf_header",
                       "ELF header unreadable (" + tool_error(obs, "parse_elf_header") + ")"));
  }
  if (const json* isa = ok_payload(obs, "detect_isa_features")) {
    const auto& feats = isa->at("features");
    std::string names;
    for (const auto& f : feats) names += (names.empty() ? "" : ", ") + f.get<std::string>();
    out.push_back(make("isa_features", feats, Confidence::high, "detect_isa_features",
                       feats.empty() ? "no AVX-family mnemonics in " + std::to_string(isa->value("lines_scanned", 0)) +
                                           " disassembled instructions"
                                     : "vector mnemonics in the disassembly require " + names));
  } else {
    out.push_back(make("isa_features", json::array(), Confidence::low, "detect_isa_features",
                       "no disassembly to inspect (" + tool_error(obs, "detect_isa_features") + ")"));
  }
}

void conclude_cpu(const Slice& obs, std::vector<Finding>& out) {
  if (const json* est = ok_payload(obs, "detect_parallelism")) {
    out.push_back(from_estimate("cpu_count", *est, "detect_parallelism"));
  } else {
    out.push_back(make("cpu_count", 1, Confidence::low, "detect_parallelism",
                       "parallelism undetermined (" + tool_error(obs, "detect_parallelism") + ")"));
  }
}

void conclude_memory(const Digest& d, const Slice& obs, std::vector<Finding>& out) {
  // Runtime history first: a measured peak from a successful similar run, and
  // the capacity of any instance a similar run exhausted.
  std::vector<json> items;
  if (const json* sim = ok_payload(obs, "find_similar_jobs")) {
    for (const auto& m : sim->at("matches")) items.push_back(m);
  }
  for (const json* h : ok_payloads(obs, "job_history")) items.push_back(*h);

  const json* measured = nullptr;
  double oom_max = 0;
  std::string oom_from;
  for (const auto& m : items) {
    if (!measured && m.contains("measured_peak_gb")) measured = &m;
    for (const auto& g : m.value("oom_instance_memory_gb", json::array())) {
      if (g.get<double>() > oom_max) {
        oom_max = g.get<double>();
        oom_from = m.value("job_id", "");
      }
    }
  }
  if (measured) {
    double peak = measured->at("measured_peak_gb").get<double>();
    Finding f = make("mem_hwm_gb", peak * 1.10, Confidence::high, "find_similar_jobs",
                     "measured peak " + num(peak) + " GB on job " + measured->value("job_id", "") +
                         " (executable similarity " + num(measured->value("executable_score", 0.0)) +
                         ") plus 10% margin");
    f.measured = true;
    out.push_back(std::move(f));
  }
  if (oom_max > 0) {
    // The retry instance needs 2x the capacity; headroom is added back at selection.
    out.push_back(make("mem_hwm_gb", 2 * oom_max - kInstanceHeadroomGb, Confidence::high, "find_similar_jobs",
                       "job " + oom_from + " ran out of memory on a " + num(oom_max) +
                           " GB instance; the next one needs at least 2x that capacity"));
  }

  if (!d.compiled()) {
    if (out.empty()) {
      out.push_back(make("mem_hwm_gb", kNoEvidenceMemoryGb, Confidence::low, "workload_kind",
                         "no static allocation evidence for " + d.j.value("workload_kind", std::string("this")) +
                             " workloads; placeholder"));
    }
    return;
  }
  if (const json* est = ok_payload(obs, "estimate_memory")) {
    Finding f = from_estimate("mem_hwm_gb", *est, "estimate_memory");
    if (const json* calc = ok_payload(obs, "calculator")) f.detail += "; reachable total " + calc->value("text", "");
    if (const json* sites = ok_payload(obs, "extract_allocation_sizes")) {
      f.detail += "; " + std::to_string(sites->at("sites").size()) + " allocation sites found";
    }
    f.detail += "; reachability " + est->value("reachability", std::string("unverified"));
    out.push_back(std::move(f));
  } else {
    out.push_back(make("mem_hwm_gb", kNoEvidenceMemoryGb, Confidence::low, "estimate_memory",
                       "static memory estimate unavailable (" + tool_error(obs, "estimate_memory") + ")"));
  }
}

void conclude_accel_io(Group g, const Digest& d, const Slice& obs, std::vector<Finding>& out) {
  if (d.python()) {
    const json* scan = ok_payload(obs, "scan_python_imports");
    std::set<std::string> mods;
    if (scan) {
      for (const auto& m : scan->at("modules")) mods.insert(m.get<std::string>());
    }
    auto hit = [&](const std::set<std::string>& wanted) {
      std::string found;
      for (const auto& m : wanted) {
        if (mods.count(m)) found += (found.empty() ? "" : ", ") + m;
      }
      return found;
    };
    const Confidence base = scan ? Confidence::medium : Confidence::low;
    if (g == Group::gpu) {
      std::string gpu = hit(kGpuModules);
      out.push_back(make("gpu_required", !gpu.empty(), base, "scan_python_imports",
                         gpu.empty() ? "no GPU library among the imports" : "imports " + gpu));
      out.push_back(make("gpu_count", gpu.empty() ? 0 : 1, gpu.empty() ? base : Confidence::low, "scan_python_imports",
                         gpu.empty() ? "no GPU needed" : "device count not visible in imports"));
      out.push_back(make("gpu_mem_gb", 0.0, Confidence::low, "scan_python_imports", "device memory not visible"));
    } else {
      std::string io = hit(kHeavyIoModules);
      out.push_back(make("io_intensity", io.empty() ? "minimal" : "heavy", base, "scan_python_imports",
                         io.empty() ? "no parallel or scientific I/O library among the imports" : "imports " + io));
    }
    return;
  }
  const json* f = ok_payload(obs, "detect_accel_and_io");
  if (g == Group::gpu) {
    for (const char* dim : {"gpu_required", "gpu_count", "gpu_mem_gb"}) {
      if (f) {
        out.push_back(from_estimate(dim, f->at(dim), "detect_accel_and_io"));
      } else {
        json v = std::string(dim) == "gpu_required" ? json(false) : std::string(dim) == "gpu_count" ? json(0) : json(0.0);
        out.push_back(make(dim, v, Confidence::low, "detect_accel_and_io", "accelerator scan failed"));
      }
    }
  } else if (f) {
    out.push_back(from_estimate("io_intensity", f->at("io_intensity"), "detect_accel_and_io"));
  } else {
    out.push_back(make("io_intensity", "minimal", Confidence::low, "detect_accel_and_io", "I/O scan failed"));
  }
}

void conclude_disk(const Slice& obs, std::vector<Finding>& out) {
  if (const json* sizes = ok_payload(obs, "artifact_sizes")) {
    double gb = sizes->at("total_bytes").get<double>() / 1073741824.0;
    double disk = std::max(kDefaultDiskGb, std::ceil(2 * gb));
    out.push_back(make("disk_gb", disk, Confidence::low, "artifact_sizes",
                       "artifacts total " + std::to_string(sizes->at("total_bytes").get<std::uint64_t>()) +
                           " bytes; twice that, at least " + num(kDefaultDiskGb) +
                           " GB, covers inputs plus outputs of similar size"));
  } else {
    out.push_back(make("disk_gb", kDefaultDiskGb, Confidence::low, "artifact_sizes", "artifact sizes unavailable"));
  }
}

void conclude_select(const Slice& obs, std::vector<Finding>& out) {
  const json* ranked = ok_payload(obs, "rank_instances");
  if (!ranked) return;  // nothing feasible, or ranking failed; the pipeline reports it
  std::set<int> bad;
  if (const json* v = ok_payload(obs, "validate_preferences")) {
    for (const auto& x : v->at("violations")) {
      if (x.value("kind", "") != "rank_order") bad.insert(x.value("rank", 0));
    }
  }
  json items = json::array();
  for (const auto& item : ranked->at("items")) {
    if (bad.count(item.at("rank").get<int>())) continue;
    json kept = item;
    kept["rank"] = static_cast<int>(items.size()) + 1;
    items.push_back(kept);
  }
  std::string detail = std::to_string(items.size()) + " ranked candidates";
  if (const json* c = ok_payload(obs, "catalog_filter")) {
    detail += " from " + std::to_string(c->value("feasible", 0)) + " feasible of " + std::to_string(c->value("total", 0)) +
              " offers";
  }
  if (!bad.empty()) detail += "; " + std::to_string(bad.size()) + " dropped by validation";
  out.push_back(make("items", items, Confidence::high, "rank_instances", detail));
}

struct Walk {
  std::vector<std::pair<Group, Slice>> done;  // groups whose plans are complete
  std::optional<ToolCall> next;
};

Walk walk(const SubtaskContext& ctx, const Digest& d) {
  Walk w;
  std::size_t offset = 0;
  const auto& obs = ctx.observations;
  for (Group g : groups_for(ctx.subtask)) {
    Slice slice;
    for (std::size_t i = offset; i < obs.size(); ++i) slice.push_back(&obs[i]);
    auto p = plan(g, d, slice);
    std::size_t seen = obs.size() - offset;
    if (seen < p.size()) {
      w.next = p[seen];
      return w;
    }
    slice.resize(p.size());
    w.done.emplace_back(g, std::move(slice));
    offset += p.size();
  }
  return w;
}

std::vector<Finding> conclude(const std::vector<std::pair<Group, Slice>>& groups, const Digest& d) {
  std::vector<Finding> out;
  for (const auto& [g, slice] : groups) {
    switch (g) {
      case Group::platform: conclude_platform(d, slice, out); break;
      case Group::cpu: conclude_cpu(slice, out); break;
      case Group::memory: conclude_memory(d, slice, out); break;
      case Group::gpu:
      case Group::io: conclude_accel_io(g, d, slice, out); break;
      case Group::disk: conclude_disk(slice, out); break;
      case Group::select: conclude_select(slice, out); break;
    }
  }
  return out;
}

Digest parse_digest(const std::string& text) {
  try {
    return {json::parse(text)};
  } catch (const json::exception& e) {
    fail(errc::parse_error, std::string("rule-based reasoner needs a JSON digest: ") + e.what());
  }
}

}  // namespace

Action RuleBasedReasoner::next_action(const SubtaskContext& ctx) {
  Digest d = parse_digest(ctx.input_digest);
  Walk w = walk(ctx, d);
  Action a;
  if (w.next) {
    a.kind = Action::Kind::call_tool;
    a.call = *w.next;
    a.thought = "subtask " + std::to_string(ctx.subtask.id) + ": run " + a.call.tool;
    return a;
  }
  a.kind = Action::Kind::finish;
  a.findings = conclude(w.done, d);
  a.thought = "subtask " + std::to_string(ctx.subtask.id) + ": " + std::to_string(a.findings.size()) + " findings";
  return a;
}

std::vector<Finding> RuleBasedReasoner::best_effort(const SubtaskContext& ctx) {
  Digest d = parse_digest(ctx.input_digest);
  // Conclude every group over whatever it observed; missing results fall
  // back to each group's low-confidence defaults.
  std::vector<std::pair<Group, Slice>> groups;
  std::size_t offset = 0;
  const auto& obs = ctx.observations;
  for (Group g : groups_for(ctx.subtask)) {
    Slice slice;
    for (std::size_t i = offset; i < obs.size(); ++i) slice.push_back(&obs[i]);
    auto p = plan(g, d, slice);
    if (slice.size() > p.size()) slice.resize(p.size());
    offset += slice.size();
    groups.emplace_back(g, std::move(slice));
  }
  return conclude(groups, d);
}

}  // namespace incisor
