#include <gtest/gtest.h>

#include <random>

#include "incisor/error.hpp"
#include "incisor/executor.hpp"
#include "support/test_support.hpp"

using namespace incisor;
using namespace incisor::testing;

namespace {

InstanceOffer offer(std::string name, double mem, int vcpus = 8, IsaSet isa = {IsaFeature::avx}) {
  InstanceOffer o;
  o.provider = "gcp";
  o.name = std::move(name);
  o.memory_gb = mem;
  o.vcpus = vcpus;
  o.price_per_hour_usd = 0.1 * mem;
  o.isa_features = isa;
  return o;
}

WorkloadProfile profile(double mem, int p = 8) {
  WorkloadProfile w;
  w.name = "w";
  w.true_mem_hwm_gb = mem;
  w.true_cpu_parallelism = p;
  w.required_isa = IsaSet{IsaFeature::avx};
  w.disk_gb = 4;
  w.base_runtime_s_at_reference = 1000;
  return w;
}

std::vector<InstancePreference> prefs_of(const std::vector<InstanceOffer>& offers) {
  std::vector<InstancePreference> p;
  for (const auto& o : offers) p.push_back({static_cast<int>(p.size()) + 1, o, "", 0});
  return p;
}

std::string id_of(const InstanceOffer& o) { return o.provider + "/" + o.name; }

// Walks the list applying the retry rules directly: a run after an OOM must
// double the largest failed memory, after SIGILL must carry the faulting
// features, after a missing GPU must have one.
bool oracle_succeeds(const std::vector<InstancePreference>& prefs, const WorkloadProfile& w, const Availability& av) {
  double floor = 0;
  IsaSet isa;
  bool gpu = false;
  for (const auto& p : prefs) {
    const auto& o = p.offer;
    if (o.memory_gb < floor || !o.isa_features.includes(isa) || (gpu && !o.accelerator)) continue;
    if (av.count(id_of(o)) && !av.at(id_of(o))) continue;
    bool isa_ok = o.isa_features.includes(w.required_isa);
    bool gpu_ok = !w.needs_gpu || (o.accelerator && o.accelerator->mem_gb_per_device >= w.true_gpu_mem_gb);
    bool mem_ok = w.true_mem_hwm_gb + 2.0 <= o.memory_gb;
    bool disk_ok = w.disk_gb <= kDefaultRootVolumeGb;
    if (isa_ok && gpu_ok && mem_ok && disk_ok) return true;
    if (!isa_ok) {
      isa = isa | (w.required_isa - o.isa_features);
    } else if (!gpu_ok) {
      gpu = true;
    } else if (!mem_ok) {
      floor = std::max(floor, 2 * o.memory_gb);
    }
  }
  return false;
}

}  // namespace

TEST(Profile, JsonRoundTripAndValidation) {
  auto p = load_profile(fixture("profiles/cg.json"));
  EXPECT_EQ(p.true_mem_hwm_gb, 16);
  EXPECT_EQ(p.true_cpu_parallelism, 8);
  EXPECT_EQ(profile_from_json(to_json(p)), p);
  auto bad = to_json(p);
  bad["required_isa"] = {"avx2"};
  EXPECT_THROW(profile_from_json(bad), error);
  bad = to_json(p);
  bad["true_gpu_mem_gb"] = 4;  // without needs_gpu
  EXPECT_THROW(profile_from_json(bad), error);
  for (const char* name : {"cg", "cg-large", "heat", "reduce", "pipeline"}) {
    EXPECT_NO_THROW(load_profile(fixture(std::string("profiles/") + name + ".json"))) << name;
  }
}

TEST(Simulation, OutcomesFollowTheFailureOrder) {
  auto w = profile(16);
  EXPECT_EQ(simulate_run(offer("ok", 32), w).status, RunStatus::success);
  EXPECT_EQ(simulate_run(offer("edge", 18), w).status, RunStatus::success);

  auto oom = simulate_run(offer("small", 16), w);
  EXPECT_EQ(oom.status, RunStatus::fail_oom);
  EXPECT_EQ(oom.exit_code, 137);
  EXPECT_EQ(oom.diagnosis, "killed by the OOM killer: needs 18 GB, instance has 16 GB");

  auto sigill = simulate_run(offer("old", 8, 8, {}), w);  // ISA is checked before memory
  EXPECT_EQ(sigill.status, RunStatus::fail_illegal_instruction);
  EXPECT_EQ(sigill.exit_code, 132);
  EXPECT_NE(sigill.diagnosis.find("avx"), std::string::npos);

  auto g = w;
  g.needs_gpu = true;
  g.true_gpu_mem_gb = 20;
  EXPECT_EQ(simulate_run(offer("nogpu", 32), g).status, RunStatus::fail_missing_gpu);
  auto withgpu = offer("gpu", 32);
  withgpu.accelerator = Accelerator{"a10g", 1, 24};
  EXPECT_EQ(simulate_run(withgpu, g).status, RunStatus::success);

  auto d = w;
  d.disk_gb = 500;
  auto disk = simulate_run(offer("ok", 32), d);
  EXPECT_EQ(disk.status, RunStatus::fail_insufficient_disk);
  EXPECT_EQ(disk.exit_code, 28);
  EXPECT_EQ(simulate_run(offer("ok", 32), d, 1000).status, RunStatus::success);
}

TEST(Simulation, RuntimeScalesWithUsableCpus) {
  auto w = profile(1, 8);
  EXPECT_DOUBLE_EQ(simulated_runtime_s(w, 8), 1000);
  EXPECT_DOUBLE_EQ(simulated_runtime_s(w, 4), 2000);
  EXPECT_DOUBLE_EQ(simulated_runtime_s(w, 64), 1000);
  EXPECT_DOUBLE_EQ(simulated_runtime_s(w, 1), 8000);
}

TEST(Metrics, InvariantsHoldForEverySimulatedOutcome) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 500; ++i) {
    auto w = profile(0.5 + static_cast<double>(rng() % 200), static_cast<int>(1 + rng() % 64));
    w.io_class = static_cast<IoIntensity>(rng() % 3);
    w.disk_gb = 1 + static_cast<double>(rng() % 200);
    auto o = offer("o", static_cast<double>(1 << (rng() % 10)), 1 << (rng() % 7),
                   IsaSet::from_bits(static_cast<std::uint8_t>(rng() % 8)).closure());
    auto out = simulate_run(o, w);
    EXPECT_TRUE(check_metrics(out.metrics, out.status == RunStatus::success).empty()) << summarize_metrics(out);
    EXPECT_LE(summarize_metrics(out).size(), kSummaryMaxChars);
  }
}

TEST(Metrics, CheckerRejectsInconsistentSummaries) {
  MetricsSummary m;
  m.mem_total_gb = 8;
  m.mem_peak_used_gb = 9;
  EXPECT_FALSE(check_metrics(m, true).empty());
  EXPECT_TRUE(check_metrics(m, false).empty());
  m.mem_peak_used_gb = 1;
  m.cpu_user_pct = 50;  // idle still 100
  EXPECT_FALSE(check_metrics(m, true).empty());
  m.cpu_idle_pct = 50;
  m.io_pressure.full_pct = 101;
  EXPECT_FALSE(check_metrics(m, true).empty());
}

TEST(Summary, FieldsReadBack) {
  auto w = profile(16);
  w.imported_modules = std::set<std::string>{"numpy", "h5py"};
  auto out = simulate_run(offer("small", 16), w);
  auto s = summarize_metrics(out);
  EXPECT_EQ(summary_field(s, "status"), "fail_oom");
  EXPECT_EQ(summary_number(s, "mem_peak_used_gb"), 16.0);
  EXPECT_EQ(summary_field(s, "diagnosis"), out.diagnosis);
  EXPECT_EQ(summary_field(s, "imported_modules"), "h5py,numpy");
  EXPECT_EQ(summary_field(s, "memory_fit"), "tight");
  EXPECT_FALSE(summary_number(s, "nope"));
}

TEST(Recovery, OomDoublesMemoryAndLogsSkips) {
  auto w = profile(31);
  auto r = execute_with_recovery(prefs_of({offer("a", 32), offer("b", 32), offer("c", 48), offer("d", 64)}), w);
  ASSERT_EQ(r.attempts.size(), 2u);
  EXPECT_EQ(r.attempts[0].outcome.status, RunStatus::fail_oom);
  EXPECT_EQ(r.attempts[1].offer.name, "d");
  EXPECT_EQ(r.final_outcome.status, RunStatus::success);
  ASSERT_EQ(r.log.size(), 4u);
  EXPECT_EQ(r.log[1], "skipped rank 2 gcp/b: 32 GB is below 64 GB (retry after OOM requires at least 2x the 32 GB of a)");
  EXPECT_EQ(r.log[2], "skipped rank 3 gcp/c: 48 GB is below 64 GB (retry after OOM requires at least 2x the 32 GB of a)");
}

TEST(Recovery, UnavailableStepsDownWithoutRunning) {
  auto w = profile(16);
  auto prefs = prefs_of({offer("a", 32), offer("b", 32)});
  auto r = execute_with_recovery(prefs, w, {{"gcp/a", false}});
  ASSERT_EQ(r.attempts.size(), 2u);
  EXPECT_EQ(r.attempts[0].outcome.status, RunStatus::fail_provision_unavailable);
  EXPECT_EQ(r.attempts[0].outcome.exit_code, -1);
  EXPECT_EQ(r.attempts[0].outcome.runtime_s, 0);
  EXPECT_EQ(r.attempts[1].outcome.status, RunStatus::success);
}

TEST(Recovery, IllegalInstructionRequiresTheFaultingFeatures) {
  auto w = profile(4);
  w.required_isa = IsaSet{IsaFeature::avx, IsaFeature::avx2};
  auto r = execute_with_recovery(
      prefs_of({offer("old", 16), offer("old2", 16), offer("new", 16, 8, {IsaFeature::avx, IsaFeature::avx2})}), w);
  ASSERT_EQ(r.attempts.size(), 2u);
  EXPECT_EQ(r.attempts[1].offer.name, "new");
  EXPECT_NE(r.log[1].find("lacks avx2"), std::string::npos);
}

TEST(Recovery, ExhaustionCarriesThePartialResult) {
  auto w = profile(100);
  try {
    execute_with_recovery(prefs_of({offer("a", 32), offer("b", 48)}), w);
    FAIL();
  } catch (const exhausted_error& e) {
    EXPECT_EQ(e.code(), errc::all_candidates_exhausted);
    EXPECT_EQ(e.partial().attempts.size(), 1u);
    EXPECT_EQ(e.partial().final_outcome.status, RunStatus::fail_oom);
    EXPECT_EQ(e.partial().log.size(), 3u);
  }
  EXPECT_THROW(execute_with_recovery({}, w), exhausted_error);
}

TEST(Recovery, RandomTrialsRespectTheRetryRules) {
  std::mt19937_64 rng(5);
  const double mems[] = {4, 8, 16, 18, 24, 32, 48, 64, 96, 128, 256};
  for (int trial = 0; trial < 1000; ++trial) {
    auto w = profile(1 + static_cast<double>(rng() % 120), 8);
    if (rng() % 4 == 0) w.required_isa = IsaSet{IsaFeature::avx, IsaFeature::avx2};
    if (rng() % 8 == 0) {
      w.needs_gpu = true;
      w.true_gpu_mem_gb = 16;
    }
    std::vector<InstanceOffer> offers;
    Availability av;
    const int n = static_cast<int>(1 + rng() % 10);
    for (int i = 0; i < n; ++i) {
      auto o = offer("o" + std::to_string(i), mems[rng() % std::size(mems)], 8,
                     IsaSet::from_bits(static_cast<std::uint8_t>(1 + rng() % 3)).closure());
      if (rng() % 6 == 0) o.accelerator = Accelerator{"g", 1, 24};
      if (rng() % 5 == 0) av[id_of(o)] = false;
      offers.push_back(o);
    }
    auto prefs = prefs_of(offers);
    const bool expect_success = oracle_succeeds(prefs, w, av);

    RecoveryResult r;
    bool exhausted = false;
    try {
      r = execute_with_recovery(prefs, w, av);
    } catch (const exhausted_error& e) {
      exhausted = true;
      r = e.partial();
    }
    ASSERT_EQ(!exhausted, expect_success) << "trial " << trial;

    double worst_oom = 0;
    for (const auto& a : r.attempts) {
      EXPECT_GE(a.offer.memory_gb, 2 * worst_oom) << "trial " << trial;
      if (av.count(id_of(a.offer))) {
        EXPECT_EQ(a.outcome.status, RunStatus::fail_provision_unavailable);
      }
      if (a.outcome.status == RunStatus::fail_oom) worst_oom = std::max(worst_oom, a.offer.memory_gb);
    }
    if (!exhausted) {
      EXPECT_EQ(r.final_outcome.status, RunStatus::success);
    }
  }
}
