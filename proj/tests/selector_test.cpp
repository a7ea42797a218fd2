#include <gtest/gtest.h>

#include <random>

#include "incisor/error.hpp"
#include "incisor/selector.hpp"
#include "support/test_support.hpp"

using namespace incisor;
using namespace incisor::testing;

namespace {

ConstraintBundle cg_bundle() { return bundle_from_json(json::parse(read_file(fixture("bundles/cg.json")))); }

InstanceOffer offer(std::string name, double mem, int vcpus, double price, CpuVendor v = CpuVendor::intel,
                    int gen = 3) {
  InstanceOffer o;
  o.provider = "aws";
  o.name = std::move(name);
  o.memory_gb = mem;
  o.vcpus = vcpus;
  o.price_per_hour_usd = price;
  o.cpu_vendor = v;
  o.cpu_generation = gen;
  o.isa_features = IsaSet{IsaFeature::avx, IsaFeature::avx2};
  return o;
}

std::vector<std::string> names(const std::vector<InstancePreference>& p) {
  std::vector<std::string> out;
  for (const auto& x : p) out.push_back(x.offer.name);
  return out;
}

WorkloadProfile random_profile(std::mt19937_64& rng) {
  WorkloadProfile p;
  p.true_mem_hwm_gb = 0.5 + static_cast<double>(rng() % 400) / 4.0;
  p.true_cpu_parallelism = static_cast<int>(1 + rng() % 64);
  p.required_isa = IsaSet::from_bits(static_cast<std::uint8_t>(rng() % 4)).closure();
  p.io_class = static_cast<IoIntensity>(rng() % 2);  // heavy would demand premium storage
  p.base_runtime_s_at_reference = 100;
  return p;
}

}  // namespace

TEST(Penalties, MaxProductIsTheWorstCaseOfferPenalty) {
  PenaltyWeights w;
  EXPECT_DOUBLE_EQ(w.max_product(), 1.5 * 1.2 * 1.5 * 1.1);
  auto b = cg_bundle();
  auto o = offer("x", 512, 2, 1.0);
  o.accelerator = Accelerator{"gpu", 1, 16};
  o.premium_storage = true;
  std::vector<std::string> applied;
  EXPECT_DOUBLE_EQ(penalty_product(o, b, w, &applied), w.max_product());
  EXPECT_EQ(applied.size(), 4u);
  EXPECT_DOUBLE_EQ(penalty_product(offer("y", 32, 8, 1.0), b, w), 1.0);
  EXPECT_DOUBLE_EQ(penalty_product(offer("z", 32, 64, 1.0), b, w), w.excess_vcpus);
}

TEST(Ranking, CheapestAfterPenaltiesWithDeterministicTieBreaks) {
  auto b = cg_bundle();
  std::vector<InstanceOffer> f{
      offer("few-cpus", 32, 4, 0.20),          // 0.30 after penalty
      offer("intel-g3", 32, 8, 0.25),
      offer("amd-g3", 32, 8, 0.25, CpuVendor::amd),
      offer("amd-g4", 32, 8, 0.25, CpuVendor::amd, 4),
      offer("cheap", 24, 8, 0.24),
  };
  auto r = rank_instances(f, b);
  EXPECT_EQ(names(r), (std::vector<std::string>{"cheap", "amd-g4", "amd-g3", "intel-g3", "few-cpus"}));
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(r[i].rank, static_cast<int>(i) + 1);
  EXPECT_NEAR(r.back().score, 0.30, 1e-12);
  EXPECT_NE(r.back().rationale.find("vCPUs below"), std::string::npos);
}

TEST(Ranking, LimitAndEmptyInput) {
  std::vector<InstanceOffer> f;
  for (int i = 0; i < 30; ++i) f.push_back(offer("o" + std::to_string(i), 32, 8, 1.0 + i));
  EXPECT_EQ(rank_instances(f, cg_bundle()).size(), kMaxPreferences);
  EXPECT_EQ(rank_instances(f, cg_bundle(), {}, 3).size(), 3u);
  try {
    rank_instances({}, cg_bundle());
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::no_feasible_instance);
  }
}

TEST(Ranking, LowMemoryConfidencePrefersTheNextTier) {
  auto b = cg_bundle();
  b.mem_hwm_gb.confidence = Confidence::low;
  std::vector<InstanceOffer> f{offer("small", 18, 8, 0.1), offer("mid", 32, 8, 0.3), offer("big", 64, 8, 0.5)};
  EXPECT_DOUBLE_EQ(next_memory_tier(f), 32);
  EXPECT_EQ(names(rank_instances(f, b)), (std::vector<std::string>{"mid", "big", "small"}));
  b.mem_hwm_gb.confidence = Confidence::medium;
  EXPECT_EQ(names(rank_instances(f, b)), (std::vector<std::string>{"small", "mid", "big"}));
}

TEST(Ranking, InputOrderDoesNotMatter) {
  auto c = load_catalog(synthetic_catalog());
  auto f = filter_feasible(c, cg_bundle());
  auto base = rank_instances(f, cg_bundle());
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(f.begin(), f.end(), rng);
    EXPECT_EQ(rank_instances(f, cg_bundle()), base);
  }
}

// Cost-efficiency bound: with a confident estimate the top candidate never
// costs more than the cheapest feasible offer times the worst penalty.
TEST(Ranking, TopCandidateWithinPenaltyBoundOfCheapestFeasible) {
  auto c = load_catalog(synthetic_catalog());
  std::mt19937_64 rng(9);
  PenaltyWeights w;
  int checked = 0;
  for (int i = 0; i < 200; ++i) {
    auto p = random_profile(rng);
    auto b = default_bundle();
    b.mem_hwm_gb = {p.true_mem_hwm_gb, Confidence::high, "profile", {"t"}};
    b.cpu_count = {p.true_cpu_parallelism, Confidence::high, "profile", {"t"}};
    b.isa_features = {p.required_isa, Confidence::high, "profile", {"t"}};
    b.io_intensity = {p.io_class, Confidence::high, "profile", {"t"}};
    auto f = filter_feasible(c, b);
    if (f.empty()) continue;
    ++checked;
    double cheapest = f.front().price_per_hour_usd;
    for (const auto& o : f) cheapest = std::min(cheapest, o.price_per_hour_usd);
    auto top = rank_instances(f, b, w).front();
    EXPECT_LE(top.offer.price_per_hour_usd, cheapest * w.max_product() + 1e-12);
    EXPECT_TRUE(is_feasible(top.offer, b));
  }
  EXPECT_GT(checked, 150);
}

TEST(Validation, CatchesEachKindAndDropsWithLog) {
  auto c = load_catalog(snapshot_catalog());
  auto b = cg_bundle();
  auto feasible = filter_feasible(c, b);
  ASSERT_GE(feasible.size(), 2u);
  auto small = std::find_if(c.offers.begin(), c.offers.end(), [](const auto& o) { return o.memory_gb < 18; });
  ASSERT_NE(small, c.offers.end());

  std::vector<InstancePreference> prefs;
  auto push = [&](InstanceOffer o, int rank) { prefs.push_back({rank, std::move(o), "r", 0}); };
  push(feasible[0], 1);
  InstanceOffer ghost = feasible[1];
  ghost.name = "made-up-9xlarge";
  push(ghost, 2);
  push(*small, 3);
  push(feasible[0], 4);  // duplicate
  push(feasible[1], 7);  // rank gap only

  auto v = validate_preferences(prefs, c, b);
  auto has = [&](int rank, ViolationKind k) {
    return std::any_of(v.begin(), v.end(), [&](const auto& x) { return x.rank == rank && x.kind == k; });
  };
  EXPECT_TRUE(has(2, ViolationKind::nonexistent));
  EXPECT_TRUE(has(3, ViolationKind::memory));
  EXPECT_TRUE(has(4, ViolationKind::duplicate));
  EXPECT_TRUE(has(7, ViolationKind::rank_order));
  EXPECT_FALSE(has(1, ViolationKind::duplicate));

  std::vector<std::string> log;
  auto kept = drop_violations(prefs, v, log);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].offer, feasible[0]);
  EXPECT_EQ(kept[1].offer, feasible[1]);
  EXPECT_EQ(kept[1].rank, 2);
  EXPECT_EQ(log.size(), 3u);
  EXPECT_TRUE(validate_preferences(kept, c, b).empty());
}

TEST(Validation, UsesCatalogDataNotTheCandidateCopy) {
  auto c = load_catalog(snapshot_catalog());
  auto small = *std::find_if(c.offers.begin(), c.offers.end(), [](const auto& o) { return o.memory_gb < 18; });
  small.memory_gb = 512;  // a lying candidate
  auto v = validate_preferences({{1, small, "", 0}}, c, cg_bundle());
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v[0].kind, ViolationKind::memory);
}

TEST(PreferencesJson, RoundTrip) {
  auto c = load_catalog(snapshot_catalog());
  auto r = rank_instances(filter_feasible(c, cg_bundle()), cg_bundle());
  auto back = preferences_from_json(preferences_to_json(r), c);
  ASSERT_EQ(back.size(), r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_EQ(back[i].offer, r[i].offer);
    EXPECT_EQ(back[i].rank, r[i].rank);
    EXPECT_EQ(preference_from_json(to_json(r[i])), r[i]);
  }
  EXPECT_THROW(preferences_from_json(json{{"schema", "x"}, {"items", json::array()}}, c), error);
}
