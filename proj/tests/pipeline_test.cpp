#include <gtest/gtest.h>

#include <set>

#include "incisor/agent.hpp"
#include "incisor/error.hpp"
#include "support/test_support.hpp"

using namespace incisor;
using namespace incisor::testing;

namespace {

PipelineOptions fixture_options() {
  PipelineOptions o;
  o.adapter = DisassemblerAdapter();  // fixture listings only
  return o;
}

// Runs the job through simulation and stores the record the way the CLI does.
JobRecord run_and_record(RecordStore& store, const JobSpec& job, const Catalog& catalog, const WorkloadProfile& profile) {
  RuleBasedReasoner rules;
  auto res = run_pipeline(job, catalog, &store, rules, fixture_options());
  RecoveryResult rec;
  try {
    rec = execute_with_recovery(res.preferences, profile);
  } catch (const exhausted_error& e) {
    rec = e.partial();
  }
  JobRecord r;
  r.job_id = job.job_id;
  r.created_at = utc_timestamp();
  r.spec_snapshot = job;
  r.bundle = res.bundle;
  r.preferences = res.preferences;
  for (const auto& a : rec.attempts) r.attempts.push_back(attempt_entry(a));
  r.recovery_log = rec.log;
  r.final_status = rec.final_outcome.status;
  r.failure_reason = failure_reason_for(rec.final_outcome);
  r.metrics_summary = summarize_metrics(rec.final_outcome);
  r.exec_graph = res.exec_graph;
  r.inv_graph = res.inv_graph;
  store.persist(r);
  return r;
}

}  // namespace

TEST(Pipeline, CgBundleAndPreferences) {
  auto catalog = load_catalog(snapshot_catalog());
  RuleBasedReasoner rules;
  auto start = std::chrono::steady_clock::now();
  auto res = run_pipeline(cg_job(), catalog, nullptr, rules, fixture_options());
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(5));
  const auto& b = res.bundle;
  EXPECT_EQ(b.platform.value, Platform::x86_64);
  EXPECT_NEAR(b.mem_hwm_gb.value, 16.0, 0.16);
  EXPECT_EQ(b.cpu_count.value, 8);
  EXPECT_TRUE(b.isa_features.value.contains(IsaFeature::avx));
  EXPECT_FALSE(b.gpu_required.value);
  EXPECT_EQ(b.io_intensity.value, IoIntensity::minimal);
  ASSERT_FALSE(res.preferences.empty());
  EXPECT_LE(res.preferences.size(), kMaxPreferences);
  for (const auto& p : res.preferences) EXPECT_GE(p.offer.memory_gb, 18.0);
  EXPECT_TRUE(validate_preferences(res.preferences, catalog, b).empty());
  EXPECT_FALSE(res.bypassed);
  // Each distinct call ran once across both agents.
  std::map<std::string, std::set<std::string>> distinct;
  for (const auto* stage : {&*res.estimation, &*res.selection}) {
    for (const auto& f : stage->findings) {
      for (const auto& o : f.observations) distinct[o.call.tool].insert(o.call.cache_key());
    }
  }
  for (const auto& [tool, n] : res.tool_executions) EXPECT_EQ(n, distinct[tool].size()) << tool;
}

TEST(Pipeline, RamOverrideAndCloudRestriction) {
  auto catalog = load_catalog(snapshot_catalog());
  RuleBasedReasoner rules;
  auto job = normalize_submission("OMP_NUM_THREADS=8 " + cg_binary().string(), {{"ram", "40"}, {"cloud", "azure"}});
  auto res = run_pipeline(job, catalog, nullptr, rules, fixture_options());
  EXPECT_EQ(res.bundle.mem_hwm_gb.value, 40);
  EXPECT_EQ(res.bundle.mem_hwm_gb.confidence, Confidence::high);
  for (const auto& p : res.preferences) {
    EXPECT_EQ(p.offer.provider, "azure");
    EXPECT_GE(p.offer.memory_gb, 42);
  }
}

TEST(Pipeline, InstanceTypeBypassesRecommendation) {
  auto catalog = load_catalog(snapshot_catalog());
  RuleBasedReasoner rules;
  auto job = normalize_submission(cg_binary().string(), {{"instance-type", "n2d-highmem-8"}});
  auto res = run_pipeline(job, catalog, nullptr, rules, fixture_options());
  EXPECT_TRUE(res.bypassed);
  ASSERT_EQ(res.preferences.size(), 1u);
  EXPECT_EQ(res.preferences[0].offer.name, "n2d-highmem-8");
  EXPECT_FALSE(res.selection);

  auto bad = normalize_submission(cg_binary().string(), {{"instance-type", "nope"}});
  try {
    run_pipeline(bad, catalog, nullptr, rules, fixture_options());
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::instance_not_found);
  }
}

TEST(Pipeline, NoFeasibleOfferIsTyped) {
  auto catalog = load_catalog(snapshot_catalog());
  RuleBasedReasoner rules;
  auto job = normalize_submission(cg_binary().string(), {{"ram", "100000"}});
  try {
    run_pipeline(job, catalog, nullptr, rules, fixture_options());
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::no_feasible_instance);
  }
}

TEST(Pipeline, SecondRunUsesTheMeasuredPeak) {
  TempDir dir("pipe");
  RecordStore store(dir.path());
  auto catalog = load_catalog(snapshot_catalog());
  auto profile = load_profile(fixture("profiles/cg.json"));
  auto first = run_and_record(store, cg_job("8", "job-first"), catalog, profile);
  ASSERT_EQ(first.final_status, RunStatus::success);
  auto peak = summary_number(first.metrics_summary, "mem_peak_used_gb");
  ASSERT_TRUE(peak);
  EXPECT_DOUBLE_EQ(*peak, 18.0);

  RuleBasedReasoner rules;
  auto res = run_pipeline(cg_job("8", "job-second"), catalog, &store, rules, fixture_options());
  ASSERT_EQ(res.history.similar.size(), 1u);
  const auto& m = res.bundle.mem_hwm_gb;
  EXPECT_GE(m.value, *peak);
  EXPECT_LE(m.value, 1.25 * *peak);
  EXPECT_NEAR(m.value, 19.8, 1e-9);
  EXPECT_EQ(m.confidence, Confidence::high);
  EXPECT_NE(m.rationale.find("measured"), std::string::npos);
}

TEST(Pipeline, OomHistoryDoublesTheFailedMemory) {
  TempDir dir("pipe");
  RecordStore store(dir.path());
  auto catalog = load_catalog(snapshot_catalog()).only_provider("gcp");
  auto large = load_profile(fixture("profiles/cg-large.json"));
  JobRecord r;
  {
    auto job = cg_job("8", "job-oom");
    RuleBasedReasoner rules;
    auto res = run_pipeline(job, catalog, nullptr, rules, fixture_options());
    auto outcome = simulate_run(res.preferences[0].offer, large);
    ASSERT_EQ(outcome.status, RunStatus::fail_oom);
    r.job_id = job.job_id;
    r.created_at = utc_timestamp();
    r.spec_snapshot = job;
    r.bundle = res.bundle;
    r.attempts = {attempt_entry({1, res.preferences[0].offer, outcome})};
    r.final_status = outcome.status;
    r.failure_reason = failure_reason_for(outcome);
    r.metrics_summary = summarize_metrics(outcome);
    r.exec_graph = res.exec_graph;
    r.inv_graph = res.inv_graph;
    store.persist(r);
  }
  RuleBasedReasoner rules;
  auto job = normalize_submission("OMP_NUM_THREADS=8 " + cg_binary().string(), {{"job-history", "job-oom"}},
                                  {fs::current_path(), std::nullopt, std::string("job-retry")});
  auto res = run_pipeline(job, catalog, &store, rules, fixture_options());
  EXPECT_EQ(res.history.explicit_refs.size(), 1u);
  EXPECT_DOUBLE_EQ(effective_instance_memory_gb(res.bundle), 2 * r.attempts[0].memory_gb);
  ASSERT_FALSE(res.preferences.empty());
  for (const auto& p : res.preferences) EXPECT_GE(p.offer.memory_gb, 2 * r.attempts[0].memory_gb);
}

TEST(Pipeline, PythonEntryPointUsesImportsAndDefaults) {
  auto catalog = load_catalog(snapshot_catalog());
  RuleBasedReasoner rules;
  auto job = normalize_submission("python3 " + fixture("jobs/python/reduce.py").string(),
                                  {{"job-src", fixture("jobs/python/lib").string()}});
  EXPECT_EQ(job.workload_kind, WorkloadKind::interpreted_entry_point);
  auto res = run_pipeline(job, catalog, nullptr, rules, fixture_options());
  EXPECT_EQ(res.bundle.io_intensity.value, IoIntensity::heavy);
  EXPECT_EQ(res.bundle.platform.value, Platform::any);
  EXPECT_EQ(res.bundle.mem_hwm_gb.confidence, Confidence::low);
  EXPECT_FALSE(res.exec_graph.empty());
  for (const auto& p : res.preferences) EXPECT_TRUE(p.offer.premium_storage);
}

TEST(Pipeline, ShellScriptGetsADefaultBundle) {
  auto catalog = load_catalog(snapshot_catalog());
  RuleBasedReasoner rules;
  auto job = normalize_submission(fixture("jobs/shell/pipeline.sh").string(), {});
  EXPECT_EQ(job.workload_kind, WorkloadKind::shell_script);
  auto res = run_pipeline(job, catalog, nullptr, rules, fixture_options());
  EXPECT_TRUE(validate_bundle(res.bundle).empty());
  EXPECT_FALSE(res.preferences.empty());
}

TEST(Pipeline, SharedBudgetCoversBothAgents) {
  auto catalog = load_catalog(snapshot_catalog());
  RuleBasedReasoner rules;
  auto res = run_pipeline(cg_job(), catalog, nullptr, rules, fixture_options());
  ASSERT_TRUE(res.estimation && res.selection);
  EXPECT_GE(res.selection->usage.tool_calls, res.estimation->usage.tool_calls);
  EXPECT_LE(res.selection->usage.tool_calls, Budgets{}.max_total_tool_calls);
}
