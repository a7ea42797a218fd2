#include "incisor/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>

#include <CLI11.hpp>

#include "incisor/agent.hpp"
#include "incisor/catalog.hpp"
#include "incisor/error.hpp"
#include "incisor/executor.hpp"
#include "incisor/records.hpp"
#include "incisor/selector.hpp"
#include "incisor/submission.hpp"

namespace incisor {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string num(double v) { return fmt("%.10g", v); }
std::string money(double v) { return "$" + fmt("%.6f", v); }

std::string dump(const json& j, int indent = -1) { return j.dump(indent, ' ', false, json::error_handler_t::replace); }

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

fs::path data_dir() { return fs::path(INCISOR_DATA_DIR); }

fs::path catalog_path(const std::string& flag) {
  if (!flag.empty()) return flag;
  return env_or("INCISOR_CATALOG", (data_dir() / "fixtures" / "catalogs" / "cloud-snapshot.csv").string());
}

fs::path store_root(const std::string& flag) { return flag.empty() ? RecordStore::default_root() : fs::path(flag); }

// A path to a profile file, or the name of one shipped under fixtures/profiles.
fs::path profile_path(const std::string& name) {
  fs::path p(name);
  std::error_code ec;
  if (fs::is_regular_file(p, ec)) return p;
  fs::path shipped = data_dir() / "fixtures" / "profiles" / (name + ".json");
  if (fs::is_regular_file(shipped, ec)) return shipped;
  fail(errc::unreadable_file, "no workload profile '" + name + "' (not a file, not under " +
                                  (data_dir() / "fixtures" / "profiles").string() + ")");
}

int exit_code_for(errc code) {
  switch (code) {
    case errc::empty_command:
    case errc::unbalanced_quote:
    case errc::unreadable_file:
    case errc::unknown_workload_kind:
    case errc::conflicting_overrides:
    case errc::invalid_job_id:
    case errc::instance_not_found:
    case errc::remote_reasoner:
    case errc::parse_error:
    case errc::schema_violation:
    case errc::kind_mismatch:
      return kExitUsage;
    default:
      return kExitFailed;
  }
}

// Value of one bundle dimension as plain text.
std::string value_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + value_text(x);
    return s.empty() ? "-" : s;
  }
  if (v.is_number()) return num(v.get<double>());
  return dump(v);
}

void print_bundle(std::ostream& out, const ConstraintBundle& bundle, bool with_evidence) {
  json b = to_json(bundle);
  out << "constraint bundle\n";
  for (Dimension d : kAllDimensions) {
    const std::string key(to_string(d));
    const json& e = b.at(key);
    out << "  " << std::left << std::setw(14) << key << std::setw(14) << value_text(e.at("value")) << std::setw(8)
        << e.at("confidence").get<std::string>() << e.at("rationale").get<std::string>() << "\n";
    if (with_evidence && !e.at("evidence_refs").empty()) {
      out << "  " << std::string(14, ' ') << "evidence: " << value_text(e.at("evidence_refs")) << "\n";
    }
  }
  out << std::right;
  out << "  effective instance memory: " << num(effective_instance_memory_gb(bundle)) << " GB\n";
}

std::string offer_line(const InstanceOffer& o) {
  std::string s = o.provider + "/" + o.name + "  " + std::string(to_string(o.architecture)) + "  " +
                  std::to_string(o.vcpus) + " vCPU  " + num(o.memory_gb) + " GB  " + fmt("$%.4f/h", o.price_per_hour_usd);
  std::string isa = o.isa_features.to_string(',');
  if (!isa.empty()) s += "  " + isa;
  if (o.accelerator) s += "  " + std::to_string(o.accelerator->count) + "x " + o.accelerator->kind;
  if (o.premium_storage) s += "  premium-storage";
  return s;
}

void print_preferences(std::ostream& out, const std::vector<InstancePreference>& prefs, bool bypassed) {
  out << (bypassed ? "instance (recommendation bypassed)\n" : "instance preferences\n");
  for (const auto& p : prefs) {
    out << "  " << std::setw(2) << p.rank << ". " << offer_line(p.offer) << "\n";
    if (!p.rationale.empty()) out << "      " << p.rationale << "\n";
  }
}

double attempt_cost(double runtime_s, double price) { return runtime_s / 3600.0 * price; }

void print_attempts(std::ostream& out, const std::vector<AttemptEntry>& attempts) {
  out << "attempts\n";
  if (attempts.empty()) out << "  (none)\n";
  for (const auto& a : attempts) {
    out << "  rank " << a.rank << " " << a.provider << "/" << a.name << "  " << num(a.memory_gb) << " GB  "
        << to_string(a.status) << "  exit " << a.exit_code << "  " << fmt("%.1f", a.runtime_s) << " s  "
        << money(attempt_cost(a.runtime_s, a.price_per_hour_usd));
    if (!a.diagnosis.empty()) out << "  (" << a.diagnosis << ")";
    out << "\n";
  }
}

json attempts_json(const std::vector<AttemptEntry>& attempts) {
  json arr = json::array();
  for (const auto& a : attempts) {
    arr.push_back({{"rank", a.rank},
                   {"provider", a.provider},
                   {"name", a.name},
                   {"memory_gb", a.memory_gb},
                   {"price_per_hour_usd", a.price_per_hour_usd},
                   {"status", std::string(to_string(a.status))},
                   {"exit_code", a.exit_code},
                   {"runtime_s", a.runtime_s},
                   {"cost_usd", attempt_cost(a.runtime_s, a.price_per_hour_usd)},
                   {"diagnosis", a.diagnosis}});
  }
  return arr;
}

json preferences_json(const std::vector<InstancePreference>& prefs) {
  json arr = json::array();
  for (const auto& p : prefs) arr.push_back(to_json(p));
  return arr;
}

Availability parse_unavailable(const std::string& list) {
  Availability a;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto end = list.find(',', start);
    if (end == std::string::npos) end = list.size();
    std::string id = list.substr(start, end - start);
    if (!id.empty()) {
      if (id.find('/') == std::string::npos) fail(errc::parse_error, "--unavailable expects provider/name, got '" + id + "'");
      a[id] = false;
    }
    start = end + 1;
  }
  return a;
}

std::string join_lines(const std::vector<std::string>& items) {
  std::string s;
  for (const auto& i : items) s += (s.empty() ? "" : "\n") + i;
  return s;
}

struct RunFlags {
  std::vector<std::string> command;
  std::vector<std::string> job_src, docs, build_files, evidence, wrapper;
  std::string job_history, ram, cloud, instance_type, constraints, profile, reasoner = "rules", store, catalog,
      unavailable;
  bool dry_run = false;
  bool json_out = false;
};

std::string command_text(const std::vector<std::string>& words) {
  if (words.size() == 1) return words.front();
  std::string s;
  for (const auto& w : words) s += (s.empty() ? "" : " ") + shell_quote(w);
  return s;
}

std::unique_ptr<Reasoner> make_reasoner(const RunFlags& f, const std::optional<fs::path>& transcript) {
  if (f.reasoner == "rules") return std::make_unique<RuleBasedReasoner>();
  auto options = RemoteReasonerOptions::from_environment();
  options.transcript = transcript;
  return std::make_unique<RemoteReasoner>(std::move(options));
}

int cmd_run(const RunFlags& f, std::ostream& out, std::ostream& err) {
  std::map<std::string, std::string> options{{"job-src", join_lines(f.job_src)},
                                             {"docs", join_lines(f.docs)},
                                             {"build-files", join_lines(f.build_files)},
                                             {"evidence", join_lines(f.evidence)},
                                             {"wrapper", join_lines(f.wrapper)},
                                             {"job-history", f.job_history},
                                             {"ram", f.ram},
                                             {"cloud", f.cloud},
                                             {"instance-type", f.instance_type},
                                             {"constraints", f.constraints}};
  const std::string raw = command_text(f.command);
  if (!f.dry_run && f.profile.empty()) {
    err << "incisor: --profile is required unless --dry-run (it names the workload profile to simulate)\n";
    return kExitUsage;
  }

  // Nothing touches the store until the pipeline has produced candidates.
  JobSpec spec = normalize_submission(raw, options);
  std::optional<WorkloadProfile> profile;
  if (!f.dry_run) profile = load_profile(profile_path(f.profile));
  Availability availability = parse_unavailable(f.unavailable);
  Catalog catalog = load_catalog(catalog_path(f.catalog));
  RecordStore store(store_root(f.store));
  store.set_read_only(f.dry_run);

  std::optional<fs::path> transcript;
  if (!f.dry_run) transcript = store.root() / "jobs" / spec.job_id / "logs" / "reasoner.jsonl";
  auto reasoner = make_reasoner(f, transcript);

  std::error_code ec;
  const bool have_store = fs::is_directory(store.root(), ec);
  PipelineResult pr = run_pipeline(spec, catalog, have_store ? &store : nullptr, *reasoner);

  json report{{"job_id", spec.job_id},
              {"workload_kind", std::string(to_string(spec.workload_kind))},
              {"entry", spec.entry_path.string()},
              {"catalog", catalog.snapshot_label},
              {"reasoner", reasoner->name()},
              {"dry_run", f.dry_run},
              {"bundle", to_json(pr.bundle)},
              {"preferences", preferences_json(pr.preferences)},
              {"bypassed", pr.bypassed},
              {"log", pr.log}};

  auto print_head = [&]() {
    out << "job " << spec.job_id << "\n";
    out << "workload " << to_string(spec.workload_kind) << ": " << spec.entry_path.string() << "\n";
    out << "catalog " << catalog.snapshot_label << ", reasoner " << reasoner->name() << "\n";
    print_bundle(out, pr.bundle, false);
    print_preferences(out, pr.preferences, pr.bypassed);
    if (!pr.log.empty()) {
      out << "notes\n";
      for (const auto& l : pr.log) out << "  " << l << "\n";
    }
  };

  if (f.dry_run) {
    if (f.json_out) {
      out << dump(report, 2) << "\n";
    } else {
      print_head();
      out << "dry run: nothing executed, no record written\n";
    }
    return kExitOk;
  }

  RecoveryResult rr;
  bool exhausted = false;
  try {
    rr = execute_with_recovery(pr.preferences, *profile, availability);
  } catch (const exhausted_error& e) {
    rr = e.partial();
    exhausted = true;
  }

  // Stage artifacts under the job directory now that the job has run.
  NormalizeContext staging;
  staging.store_root = store.root();
  staging.job_id = spec.job_id;
  JobSpec staged = normalize_submission(raw, options, staging);

  JobRecord rec;
  rec.job_id = spec.job_id;
  rec.created_at = utc_timestamp();
  rec.spec_snapshot = staged;
  rec.bundle = pr.bundle;
  rec.preferences = pr.preferences;
  rec.recommendation_bypassed = pr.bypassed;
  for (const auto& a : rr.attempts) {
    rec.attempts.push_back(attempt_entry(a));
    rec.cost_usd += attempt_cost(a.outcome.runtime_s, a.offer.price_per_hour_usd);
  }
  rec.recovery_log = rr.log;
  rec.final_status = rr.final_outcome.status;
  rec.failure_reason = failure_reason_for(rr.final_outcome);
  if (!rr.attempts.empty()) rec.metrics_summary = summarize_metrics(rr.final_outcome);
  rec.exec_graph = pr.exec_graph;
  rec.inv_graph = pr.inv_graph;
  fs::path logs = store.root() / "jobs" / spec.job_id / "logs";
  rec.logs_path = logs.string();
  rec.notes = pr.log;

  fs::path record_path = store.persist(rec);
  {
    std::error_code ec;
    fs::create_directories(logs, ec);
    std::ofstream log(logs / "run.log", std::ios::app);
    if (!log) err << "incisor: warning: cannot write " << (logs / "run.log").string() << "\n";
    for (const auto& l : pr.log) log << "pipeline: " << l << "\n";
    for (const auto& l : rr.log) log << "recovery: " << l << "\n";
  }

  if (f.json_out) {
    report["attempts"] = attempts_json(rec.attempts);
    report["recovery_log"] = rr.log;
    report["final_status"] = std::string(to_string(rec.final_status));
    report["failure_reason"] = rec.failure_reason;
    report["cost_usd"] = rec.cost_usd;
    report["record_path"] = record_path.string();
    out << dump(report, 2) << "\n";
  } else {
    print_head();
    print_attempts(out, rec.attempts);
    out << "recovery\n";
    for (const auto& l : rr.log) out << "  " << l << "\n";
    out << "final status: " << to_string(rec.final_status);
    if (!rec.failure_reason.empty()) out << " (" << rec.failure_reason << ")";
    out << "\ncost: " << money(rec.cost_usd) << "\n";
    out << "record: " << record_path.string() << "\n";
  }
  if (exhausted) {
    err << "incisor: all candidate instances exhausted; see 'incisor explain " << spec.job_id << "'\n";
    return kExitFailed;
  }
  return kExitOk;
}

int cmd_history(const std::string& store_flag, const std::string& status, std::size_t limit, bool json_out,
                std::ostream& out) {
  RecordStore store(store_root(store_flag));
  std::optional<RunStatus> wanted;
  if (!status.empty()) wanted = parse_run_status(status);
  auto headers = store.list_history([&](const RecordHeader& h) { return !wanted || h.final_status == *wanted; });
  if (limit > 0 && headers.size() > limit) headers.resize(limit);
  if (json_out) {
    json arr = json::array();
    for (const auto& h : headers) {
      arr.push_back({{"job_id", h.job_id},
                     {"created_at", h.created_at},
                     {"final_status", std::string(to_string(h.final_status))},
                     {"failure_reason", h.failure_reason}});
    }
    out << dump(arr, 2) << "\n";
    return kExitOk;
  }
  for (const auto& h : headers) {
    out << h.job_id << "  " << h.created_at << "  " << to_string(h.final_status);
    if (!h.failure_reason.empty()) out << "  " << h.failure_reason;
    out << "\n";
  }
  return kExitOk;
}

int cmd_explain(const std::string& store_flag, const std::string& job_id, bool json_out, std::ostream& out) {
  RecordStore store(store_root(store_flag));
  JobRecord rec = store.load(job_id);
  if (json_out) {
    out << dump(to_json(rec), 2) << "\n";
    return kExitOk;
  }
  out << "job " << rec.job_id << " created " << rec.created_at << "\n";
  out << "command " << render_invocation(rec.spec_snapshot.invocation) << "\n";
  out << "workload " << to_string(rec.spec_snapshot.workload_kind) << ": " << rec.spec_snapshot.entry_path.string()
      << "\n";
  if (!rec.spec_snapshot.history_refs.empty()) {
    out << "related history";
    for (const auto& r : rec.spec_snapshot.history_refs) out << " " << r;
    out << "\n";
  }
  print_bundle(out, rec.bundle, true);
  print_preferences(out, rec.preferences, rec.recommendation_bypassed);
  print_attempts(out, rec.attempts);
  out << "recovery log\n";
  for (const auto& l : rec.recovery_log) out << "  " << l << "\n";
  if (!rec.notes.empty()) {
    out << "notes\n";
    for (const auto& n : rec.notes) out << "  " << n << "\n";
  }
  out << "final status: " << to_string(rec.final_status);
  if (!rec.failure_reason.empty()) out << " (" << rec.failure_reason << ")";
  out << "\ncost: " << money(rec.cost_usd) << "\n";
  if (!rec.metrics_summary.empty()) {
    out << "metrics\n";
    std::size_t start = 0;
    while (start < rec.metrics_summary.size()) {
      auto end = rec.metrics_summary.find('\n', start);
      if (end == std::string::npos) end = rec.metrics_summary.size();
      out << "  " << rec.metrics_summary.substr(start, end - start) << "\n";
      start = end + 1;
    }
  }
  out << "logs " << rec.logs_path << "\n";
  return kExitOk;
}

ConstraintBundle load_filter_bundle(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(errc::unreadable_file, "cannot read bundle '" + path.string() + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) fail(errc::parse_error, "'" + path.string() + "' is not valid JSON");
  if (doc.contains("schema")) return bundle_from_json(doc);
  // Value-only documents fill in the defaults for missing dimensions.
  UserOverrides o;
  o.extra_constraints = partial_bundle_from_json(doc);
  return merge_with_overrides(default_bundle(), o);
}

int cmd_catalog(const std::string& catalog_flag, const std::string& bundle_flag, const std::string& cloud,
                bool json_out, std::ostream& out) {
  Catalog catalog = load_catalog(catalog_path(catalog_flag));
  if (!cloud.empty()) catalog = catalog.only_provider(cloud);
  std::vector<InstanceOffer> shown = catalog.offers;
  std::optional<ConstraintBundle> bundle;
  if (!bundle_flag.empty()) {
    bundle = load_filter_bundle(bundle_flag);
    if (auto problems = validate_bundle(*bundle); !problems.empty()) {
      fail(errc::schema_violation, "bundle '" + bundle_flag + "' is invalid: " + problems.front());
    }
    shown = filter_feasible(catalog, *bundle);
  }
  if (json_out) {
    json arr = json::array();
    for (const auto& o : shown) arr.push_back(to_json(o));
    json doc{{"catalog", catalog.snapshot_label}, {"total", catalog.offers.size()}, {"offers", arr}};
    if (bundle) {
      doc["feasible"] = shown.size();
      doc["threshold_gb"] = effective_instance_memory_gb(*bundle);
    }
    out << dump(doc, 2) << "\n";
    return kExitOk;
  }
  for (const auto& o : shown) out << offer_line(o) << "\n";
  if (bundle) {
    const double threshold = effective_instance_memory_gb(*bundle);
    std::size_t below = 0;
    for (const auto& o : catalog.offers) below += o.memory_gb < threshold;
    out << shown.size() << " feasible offers (of " << catalog.offers.size() << ")\n";
    out << below << " offers below the " << num(threshold) << " GB memory threshold\n";
  } else {
    out << shown.size() << " offers in " << catalog.snapshot_label << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"incisor: ex ante instance selection for batch jobs", "incisor"};
  app.require_subcommand(1);

  RunFlags rf;
  auto* run = app.add_subcommand("run", "analyze a job, choose an instance, run it (simulated) and record it");
  run->add_option("command", rf.command, "the job's command line, e.g. \"OMP_NUM_THREADS=16 ./cg.D.x\"")->required();
  run->add_option("--job-src", rf.job_src, "source tree of the job (repeatable)");
  run->add_option("--docs", rf.docs, "documentation for the job (repeatable)");
  run->add_option("--build-files", rf.build_files, "Makefiles and build scripts (repeatable)");
  run->add_option("--evidence", rf.evidence, "extra evidence such as .dis listings or .cg.json call graphs");
  run->add_option("--wrapper", rf.wrapper, "wrapper script that launches the job (repeatable)");
  run->add_option("--job-history", rf.job_history, "comma-separated ids of related earlier jobs");
  run->add_option("--ram", rf.ram, "memory requirement in GB; replaces the estimate");
  run->add_option("--cloud", rf.cloud, "restrict to one provider");
  run->add_option("--instance-type", rf.instance_type, "run on this instance, bypassing recommendation");
  run->add_option("--constraints", rf.constraints, "JSON file with per-dimension overrides");
  run->add_option("--profile", rf.profile, "workload profile to simulate (file or shipped fixture name)");
  run->add_option("--reasoner", rf.reasoner, "rules (default) or remote")
      ->check(CLI::IsMember({"rules", "remote"}));
  run->add_option("--store", rf.store, "record store root (default $INCISOR_STORE or ./.incisor)");
  run->add_option("--catalog", rf.catalog, "catalog CSV (default $INCISOR_CATALOG or the shipped snapshot)");
  run->add_option("--unavailable", rf.unavailable, "comma-separated provider/name offers with no capacity");
  run->add_flag("--dry-run", rf.dry_run, "print the recommendation only; run nothing, write nothing");
  run->add_flag("--json", rf.json_out, "machine-readable report");

  std::string h_store, h_status;
  std::size_t h_limit = 0;
  bool h_json = false;
  auto* history = app.add_subcommand("history", "list recorded jobs, newest first");
  history->add_option("--store", h_store, "record store root");
  history->add_option("--status", h_status, "only jobs with this final status");
  history->add_option("--limit", h_limit, "at most this many jobs");
  history->add_flag("--json", h_json, "machine-readable listing");

  std::string e_store, e_id;
  bool e_json = false;
  auto* explain = app.add_subcommand("explain", "show a job's rationale, candidates and attempt log");
  explain->add_option("job_id", e_id, "job id")->required();
  explain->add_option("--store", e_store, "record store root");
  explain->add_flag("--json", e_json, "print the stored record");

  std::string c_catalog, c_bundle, c_cloud;
  bool c_json = false;
  auto* catalog = app.add_subcommand("catalog", "list catalog offers, optionally only those feasible for a bundle");
  catalog->add_option("--catalog", c_catalog, "catalog CSV");
  catalog->add_option("--filter-bundle", c_bundle, "constraint bundle JSON");
  catalog->add_option("--cloud", c_cloud, "restrict to one provider");
  catalog->add_flag("--json", c_json, "machine-readable listing");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) return cmd_run(rf, out, err);
    if (*history) return cmd_history(h_store, h_status, h_limit, h_json, out);
    if (*explain) return cmd_explain(e_store, e_id, e_json, out);
    if (*catalog) return cmd_catalog(c_catalog, c_bundle, c_cloud, c_json, out);
  } catch (const exhausted_error& e) {
    err << "incisor: " << e.what() << "\n";
    return kExitFailed;
  } catch (const error& e) {
    err << "incisor: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "incisor: " << e.what() << "\n";
    return kExitFailed;
  }
  return kExitUsage;
}

}  // namespace incisor
