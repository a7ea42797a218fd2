#include <algorithm>

#include "incisor/agent.hpp"
#include "incisor/error.hpp"

namespace incisor {

namespace {

EvidenceGraph fallback_exec_graph(const JobSpec& job) {
  EvidenceGraph g;
  g.add_node("entry:" + job.entry_path.filename().string());
  return g;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

PipelineResult run_pipeline(const JobSpec& job, const Catalog& catalog, const RecordStore* store, Reasoner& reasoner,
                            const PipelineOptions& options) {
  PipelineResult r;
  r.inv_graph = build_invocation_graph(job.invocation);
  try {
    r.exec_graph = build_exec_graph(job, options.adapter);
  } catch (const error& e) {
    r.log.push_back(std::string("executable graph unavailable: ") + e.what());
  }
  if (r.exec_graph.empty()) r.exec_graph = fallback_exec_graph(job);

  const std::optional<UserOverrides>& overrides = job.user_overrides;
  Catalog scoped = overrides && overrides->cloud ? catalog.only_provider(*overrides->cloud) : catalog;
  if (overrides && overrides->cloud) {
    r.log.push_back("catalog restricted to provider " + *overrides->cloud + ": " +
                    std::to_string(scoped.offers.size()) + " offers");
  }

  if (job.bypasses_recommendation()) {
    const std::string& name = *overrides->instance_type;
    const InstanceOffer* offer = scoped.find_by_name(name);
    if (!offer) {
      fail(errc::instance_not_found, "instance type '" + name + "' does not exist in catalog " + scoped.snapshot_label);
    }
    r.bypassed = true;
    r.bundle = apply_estimator_floor(
        merge_with_overrides(default_bundle("recommendation bypassed by --instance-type; not estimated"), *overrides));
    r.preferences = {{1, *offer, "named by the user with --instance-type; recommendation bypassed",
                      offer->price_per_hour_usd}};
    r.log.push_back("recommendation bypassed: " + offer->provider + "/" + offer->name);
    return r;
  }

  if (store) r.history = history_evidence_for(*store, job, r.exec_graph, r.inv_graph, options.similarity);
  for (const auto& n : r.history.notes) r.log.push_back("history: " + n);

  AgentConfig estimation = load_agent_config(options.config_root / "constraint-estimation");
  AgentConfig selection = load_agent_config(options.config_root / "instance-selection");
  if (options.budgets) {
    validate_budgets(*options.budgets);
    estimation.budgets = selection.budgets = *options.budgets;
  }

  auto ectx = std::make_shared<EstimationContext>();
  ectx->job = job;
  ectx->adapter = options.adapter;
  ectx->history = r.history;
  auto sctx = std::make_shared<SelectionContext>();
  sctx->catalog = scoped;

  ToolRegistry tools;
  add_estimation_tools(tools, ectx);
  add_selection_tools(tools, sctx);
  ToolCache cache;  // one cache for the whole job
  BudgetState usage;

  r.estimation = run_agent(estimation, estimation_digest(job, r.history).dump(-1, ' ', false, json::error_handler_t::replace),
                           reasoner, tools, cache, usage);
  ConstraintBundle bundle = bundle_from_json(r.estimation->output);
  if (overrides) bundle = merge_with_overrides(bundle, *overrides);
  bundle = apply_estimator_floor(bundle);
  if (auto problems = validate_bundle(bundle); !problems.empty()) {
    fail(errc::schema_violation, "synthesized bundle is invalid: " + problems.front());
  }
  r.bundle = bundle;

  auto feasible = filter_feasible(scoped, bundle);
  if (feasible.empty()) {
    r.tool_executions = tools.execution_counts();
    fail(errc::no_feasible_instance, "no offer in " + scoped.snapshot_label + " has " +
                                         num(effective_instance_memory_gb(bundle)) + " GB, " +
                                         std::string(to_string(bundle.platform.value)) + " and the required features");
  }

  r.selection = run_agent(selection, selection_digest(bundle, scoped).dump(), reasoner, tools, cache, usage);
  auto prefs = preferences_from_json(r.selection->output, scoped);
  // Validation is not optional: whatever the reasoner proposed is re-checked
  // against the catalog and the bundle.
  auto violations = validate_preferences(prefs, scoped, bundle);
  prefs = drop_violations(prefs, violations, r.log);
  if (prefs.size() > kMaxPreferences) prefs.resize(kMaxPreferences);
  if (prefs.empty()) {
    r.log.push_back("selection agent produced no valid candidates; using the deterministic ranking");
    prefs = rank_instances(feasible, bundle);
  }
  r.preferences = std::move(prefs);
  r.tool_executions = tools.execution_counts();
  return r;
}

}  // namespace incisor
