#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "incisor/agent.hpp"
#include "incisor/error.hpp"

namespace incisor {

namespace {

template <typename V>
json estimate_json(const Estimate<V>& e) {
  json value;
  if constexpr (std::is_same_v<V, IsaSet>) {
    value = e.value.names();
  } else if constexpr (std::is_same_v<V, Platform> || std::is_same_v<V, IoIntensity>) {
    value = std::string(to_string(e.value));
  } else {
    value = e.value;
  }
  return {{"value", value},
          {"confidence", std::string(to_string(e.confidence))},
          {"rationale", e.rationale},
          {"evidence_refs", e.evidence_refs}};
}

fs::path path_arg(const json& args, const char* key = "path") {
  auto it = args.find(key);
  if (it == args.end() || !it->is_string() || it->get<std::string>().empty()) {
    fail(errc::tool_failure, std::string("missing string argument '") + key + "'");
  }
  return it->get<std::string>();
}

std::uintmax_t tree_size(const fs::path& p, std::size_t& files) {
  std::error_code ec;
  if (fs::is_regular_file(p, ec)) {
    ++files;
    return fs::file_size(p, ec);
  }
  std::uintmax_t total = 0;
  if (fs::is_directory(p, ec)) {
    for (auto it = fs::recursive_directory_iterator(p, fs::directory_options::skip_permission_denied, ec);
         it != fs::recursive_directory_iterator() && files < 100000; it.increment(ec)) {
      if (ec) break;
      if (it->is_regular_file(ec)) {
        ++files;
        total += it->file_size(ec);
      }
    }
  }
  return total;
}

bool looks_like_elf(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  return in.gcount() == 4 && magic[0] == 0x7f && magic[1] == 'E' && magic[2] == 'L' && magic[3] == 'F';
}

json item_payload(const HistoryItem& i) {
  json j{{"job_id", i.match.job_id},
         {"created_at", i.match.created_at},
         {"executable_score", i.match.executable_score},
         {"invocation_score", i.match.invocation_score},
         {"final_status", std::string(to_string(i.final_status))},
         {"summary", i.summary},
         {"oom_instance_memory_gb", i.oom_instance_memory_gb}};
  if (!i.match.failure_reason.empty()) j["failure_reason"] = i.match.failure_reason;
  if (!i.match.note.empty()) j["note"] = i.match.note;
  if (i.measured_peak_gb) j["measured_peak_gb"] = *i.measured_peak_gb;
  if (i.measured_running_avg) j["measured_running_avg"] = *i.measured_running_avg;
  if (i.measured_waiting_avg) j["measured_waiting_avg"] = *i.measured_waiting_avg;
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------

std::shared_ptr<const DisassemblerAdapter::Result> EstimationContext::listing_for(const fs::path& p) {
  {
    std::lock_guard lock(mu);
    if (auto it = listings.find(p.string()); it != listings.end()) return it->second;
  }
  auto ev = evidence_files();
  auto r = std::make_shared<const DisassemblerAdapter::Result>(adapter.disassemble(p, ev));
  std::lock_guard lock(mu);
  return listings.emplace(p.string(), r).first->second;
}

std::shared_ptr<const ElfMetadata> EstimationContext::elf_for(const fs::path& p) {
  {
    std::lock_guard lock(mu);
    if (auto it = elf.find(p.string()); it != elf.end()) return it->second;
  }
  auto m = std::make_shared<const ElfMetadata>(parse_elf_header(p));
  std::lock_guard lock(mu);
  return elf.emplace(p.string(), m).first->second;
}

std::shared_ptr<const std::vector<std::string>> EstimationContext::strings_for(const fs::path& p) {
  {
    std::lock_guard lock(mu);
    if (auto it = strings.find(p.string()); it != strings.end()) return it->second;
  }
  auto s = std::make_shared<const std::vector<std::string>>(extract_strings(p));
  std::lock_guard lock(mu);
  return strings.emplace(p.string(), s).first->second;
}

std::vector<fs::path> EstimationContext::evidence_files() const {
  std::vector<fs::path> out;
  for (const auto& a : job.aux_artifacts) {
    if (a.role == ArtifactRole::evidence_file) out.push_back(a.readable());
  }
  return out;
}

void add_calculator_tool(ToolRegistry& registry) {
  registry.add("calculator", [](const json& args) {
    auto it = args.find("expression");
    if (it == args.end() || !it->is_string()) fail(errc::tool_failure, "missing string argument 'expression'");
    CalcResult r = calculate(it->get<std::string>());
    return json{{"expression", *it}, {"text", r.text()}, {"value", r.value()}, {"unit", r.unit}};
  });
}

void add_estimation_tools(ToolRegistry& registry, std::shared_ptr<EstimationContext> ctx) {
  registry.add("parse_elf_header", [ctx](const json& args) {
    auto meta = ctx->elf_for(path_arg(args));
    json syms = json::array();
    for (const auto& s : meta->symbols) syms.push_back(s.name);
    return json{{"machine", meta->machine.name()},
                {"platform", std::string(to_string(meta->platform()))},
                {"class", meta->elf_class == ElfClass::elf64 ? "ELF64" : "ELF32"},
                {"little_endian", meta->little_endian},
                {"dynamic_deps", meta->dynamic_deps},
                {"symbols", syms}};
  });

  registry.add("extract_strings", [ctx](const json& args) {
    auto strs = ctx->strings_for(path_arg(args));
    json sample = json::array();
    for (std::size_t i = 0; i < strs->size() && i < 40; ++i) sample.push_back((*strs)[i]);
    return json{{"count", strs->size()}, {"sample", sample}};
  });

  registry.add("disassemble", [ctx](const json& args) {
    auto r = ctx->listing_for(path_arg(args));
    json spans = json::array();
    for (const auto& s : r->listing.symbol_spans) spans.push_back(s.name);
    return json{{"origin", r->origin}, {"lines", r->listing.lines.size()}, {"symbols", spans}};
  });

  registry.add("detect_isa_features", [ctx](const json& args) {
    auto r = ctx->listing_for(path_arg(args));
    if (r->listing.empty()) fail(errc::tool_failure, "no disassembly available (" + r->origin + ")");
    IsaSet s = detect_isa_features(r->listing);
    return json{{"features", s.names()}, {"listing_origin", r->origin}, {"lines_scanned", r->listing.lines.size()}};
  });

  registry.add("extract_allocation_sizes", [ctx](const json& args) {
    auto r = ctx->listing_for(path_arg(args));
    if (r->listing.empty()) fail(errc::tool_failure, "no disassembly available (" + r->origin + ")");
    json sites = json::array();
    for (const auto& s : extract_allocation_sizes(r->listing)) {
      sites.push_back({{"address", s.address},
                       {"symbol", s.symbol},
                       {"allocator", s.allocator},
                       {"bytes", s.bytes ? json(*s.bytes) : json(nullptr)},
                       {"detail", s.detail}});
    }
    return json{{"sites", sites}};
  });

  registry.add("estimate_memory", [ctx](const json& args) {
    auto r = ctx->listing_for(path_arg(args));
    if (r->listing.empty()) fail(errc::tool_failure, "no disassembly available (" + r->origin + ")");
    auto sites = extract_allocation_sizes(r->listing);
    std::optional<std::set<std::string>> reachable;
    std::string reach = "unverified";
    if (auto cg = call_graph_evidence(ctx->job)) {
      reachable = reachable_labels(load_evidence_graph(*cg));
      reach = "call-graph evidence " + cg->filename().string();
    }
    Estimate<double> e = estimate_memory_gb(sites, reachable);
    if (!reachable && e.confidence == Confidence::high) {
      e.confidence = Confidence::medium;
      e.rationale += "; reachability unverified (no call-graph evidence), confidence capped at medium";
    }
    std::uint64_t bytes = 0;
    for (const auto& s : sites) {
      if (s.bytes && (!reachable || reachable->count(s.symbol))) bytes += *s.bytes;
    }
    json out = estimate_json(e);
    out["total_bytes"] = bytes;
    out["reachability"] = reach;
    return out;
  });

  registry.add("detect_parallelism", [ctx](const json& args) {
    fs::path p = path_arg(args);
    ElfMetadata meta;
    DisassemblyListing listing;
    std::vector<std::string> strs;
    if (looks_like_elf(p)) {
      meta = *ctx->elf_for(p);
      listing = ctx->listing_for(p)->listing;
      strs = *ctx->strings_for(p);
    }
    auto e = detect_parallelism(meta, listing, ctx->job.invocation.env, ctx->job.invocation.args, strs);
    return estimate_json(e);
  });

  registry.add("detect_accel_and_io", [ctx](const json& args) {
    fs::path p = path_arg(args);
    ElfMetadata meta;
    DisassemblyListing listing;
    std::vector<std::string> strs;
    if (looks_like_elf(p)) {
      meta = *ctx->elf_for(p);
      listing = ctx->listing_for(p)->listing;
      strs = *ctx->strings_for(p);
    }
    auto f = detect_accel_and_io(meta, listing, strs);
    return json{{"gpu_required", estimate_json(f.gpu_required)},
                {"gpu_count", estimate_json(f.gpu_count)},
                {"gpu_mem_gb", estimate_json(f.gpu_mem_gb)},
                {"io_intensity", estimate_json(f.io_intensity)}};
  });

  registry.add("scan_python_imports", [](const json& args) {
    std::vector<fs::path> roots;
    for (const auto& r : args.value("roots", json::array())) roots.emplace_back(r.get<std::string>());
    auto scan = scan_python_imports(path_arg(args), roots);
    return json{{"modules", scan.modules}, {"local_modules", scan.local_modules}, {"unknown", scan.unknown_imports}};
  });

  registry.add("read_script", [](const json& args) {
    std::ifstream in(path_arg(args), std::ios::binary);
    if (!in) fail(errc::tool_failure, "cannot read " + path_arg(args).string());
    std::string text(8000, '\0');
    in.read(text.data(), static_cast<std::streamsize>(text.size()));
    text.resize(static_cast<std::size_t>(in.gcount()));
    return json{{"text", text}, {"truncated", !in.eof() && in.peek() != EOF}};
  });

  registry.add("artifact_sizes", [ctx](const json&) {
    json items = json::array();
    std::uintmax_t total = 0;
    auto add = [&](const std::string& role, const fs::path& p) {
      std::size_t files = 0;
      auto bytes = tree_size(p, files);
      total += bytes;
      items.push_back({{"role", role}, {"path", p.string()}, {"bytes", bytes}, {"files", files}});
    };
    add("entry", ctx->job.analysis_entry());
    for (const auto& a : ctx->job.aux_artifacts) {
      if (a.role != ArtifactRole::evidence_file) add(std::string(to_string(a.role)), a.readable());
    }
    for (const auto& arg : ctx->job.invocation.args) {
      fs::path p(arg);
      std::error_code ec;
      if (p.is_absolute() && fs::is_regular_file(p, ec) && p != ctx->job.entry_path) add("input", p);
    }
    return json{{"items", items}, {"total_bytes", total}};
  });

  registry.add("find_similar_jobs", [ctx](const json&) {
    json matches = json::array();
    for (const auto& i : ctx->history.similar) matches.push_back(item_payload(i));
    return json{{"matches", matches}, {"notes", ctx->history.notes}};
  });

  registry.add("job_history", [ctx](const json& args) {
    auto it = args.find("job_id");
    if (it == args.end() || !it->is_string()) fail(errc::tool_failure, "missing string argument 'job_id'");
    const std::string id = it->get<std::string>();
    for (const auto* list : {&ctx->history.explicit_refs, &ctx->history.similar}) {
      for (const auto& i : *list) {
        if (i.match.job_id == id) return item_payload(i);
      }
    }
    fail(errc::not_found, "no history for job " + id);
  });

  add_calculator_tool(registry);
}

void add_selection_tools(ToolRegistry& registry, std::shared_ptr<const SelectionContext> ctx) {
  auto bundle_arg = [](const json& args) {
    auto it = args.find("bundle");
    if (it == args.end()) fail(errc::tool_failure, "missing argument 'bundle'");
    return bundle_from_json(*it);
  };

  registry.add("catalog_filter", [ctx, bundle_arg](const json& args) {
    auto b = bundle_arg(args);
    auto feasible = filter_feasible(ctx->catalog, b);
    const double need = effective_instance_memory_gb(b);
    auto hist = memory_tier_histogram(feasible, {0, 32, 64, 128, 1e12});
    json sample = json::array();
    for (std::size_t i = 0; i < feasible.size() && i < 25; ++i) {
      sample.push_back(feasible[i].provider + "/" + feasible[i].name);
    }
    return json{{"catalog", ctx->catalog.snapshot_label},
                {"total", ctx->catalog.offers.size()},
                {"feasible", feasible.size()},
                {"effective_memory_gb", need},
                {"feasible_by_memory", {{"<32", hist[0]}, {"32-64", hist[1]}, {"64-128", hist[2]}, {">=128", hist[3]}}},
                {"sample", sample}};
  });

  registry.add("rank_instances", [ctx, bundle_arg](const json& args) {
    auto b = bundle_arg(args);
    std::size_t limit = args.value("limit", kMaxPreferences);
    return preferences_to_json(rank_instances(filter_feasible(ctx->catalog, b), b, {}, limit));
  });

  registry.add("validate_preferences", [ctx, bundle_arg](const json& args) {
    auto b = bundle_arg(args);
    auto it = args.find("preferences");
    if (it == args.end()) fail(errc::tool_failure, "missing argument 'preferences'");
    auto prefs = preferences_from_json(*it, ctx->catalog);
    json out = json::array();
    for (const auto& v : validate_preferences(prefs, ctx->catalog, b)) {
      out.push_back({{"rank", v.rank}, {"kind", std::string(to_string(v.kind))}, {"detail", v.detail}});
    }
    return json{{"violations", out}, {"checked", prefs.size()}};
  });

  registry.add("catalog_lookup", [ctx](const json& args) {
    auto name = args.value("name", "");
    auto provider = args.value("provider", "");
    const InstanceOffer* o = provider.empty() ? ctx->catalog.find_by_name(name) : ctx->catalog.find(provider, name);
    if (!o) fail(errc::not_found, "no offer named " + (provider.empty() ? "" : provider + "/") + name);
    return to_json(*o);
  });

  add_calculator_tool(registry);
}

// ---------------------------------------------------------------------------

json estimation_digest(const JobSpec& job, const HistoryEvidence& history) {
  json evidence = json::array();
  json sources = json::array();
  json docs = json::array();
  for (const auto& a : job.aux_artifacts) {
    switch (a.role) {
      case ArtifactRole::evidence_file: evidence.push_back(a.readable().string()); break;
      case ArtifactRole::source_tree: sources.push_back(a.readable().string()); break;
      default: docs.push_back(a.readable().string()); break;
    }
  }
  return {{"job_id", job.job_id},
          {"workload_kind", std::string(to_string(job.workload_kind))},
          {"entry", job.analysis_entry().string()},
          {"entry_name", job.entry_path.filename().string()},
          {"command", job.invocation.command},
          {"args", job.invocation.args},
          {"env", job.invocation.env},
          {"evidence_files", evidence},
          {"source_roots", sources},
          {"other_artifacts", docs},
          {"history_refs", job.history_refs},
          {"history", {{"similar", history.similar.size()}, {"explicit", history.explicit_refs.size()}}}};
}

json selection_digest(const ConstraintBundle& bundle, const Catalog& catalog) {
  std::set<std::string> providers;
  for (const auto& o : catalog.offers) providers.insert(o.provider);
  return {{"bundle", to_json(bundle)},
          {"effective_memory_gb", effective_instance_memory_gb(bundle)},
          {"catalog", catalog.snapshot_label},
          {"offers", catalog.offers.size()},
          {"providers", providers}};
}

}  // namespace incisor
