#include <gtest/gtest.h>

#include <random>

#include "fixtures/generate.hpp"
#include "incisor/catalog.hpp"
#include "incisor/error.hpp"
#include "support/test_support.hpp"

using namespace incisor;
using namespace incisor::testing;

namespace {

InstanceOffer random_offer(std::mt19937_64& rng, int i) {
  static const double mems[] = {1, 2, 4, 8, 16, 17.9, 18, 18.1, 32, 64, 128, 256};
  InstanceOffer o;
  o.provider = std::vector<std::string>{"aws", "gcp", "azure"}[rng() % 3];
  o.name = "r" + std::to_string(i);
  o.architecture = rng() % 4 == 0 ? Platform::aarch64 : Platform::x86_64;
  o.vcpus = 1 << (rng() % 7);
  o.memory_gb = mems[rng() % std::size(mems)];
  if (rng() % 5 == 0) {
    o.accelerator = Accelerator{"gpu", static_cast<int>(1 + rng() % 4), static_cast<double>(8 * (1 + rng() % 10))};
  }
  o.premium_storage = rng() % 3 == 0;
  o.price_per_hour_usd = 0.01 * static_cast<double>(1 + rng() % 500);
  o.cpu_vendor = o.architecture == Platform::aarch64 ? CpuVendor::arm : static_cast<CpuVendor>(rng() % 2);
  o.cpu_generation = static_cast<int>(1 + rng() % 4);
  if (o.architecture == Platform::x86_64) o.isa_features = IsaSet::from_bits(static_cast<std::uint8_t>(rng() % 8)).closure();
  return o;
}

ConstraintBundle random_bundle(std::mt19937_64& rng) {
  auto b = default_bundle();
  b.mem_hwm_gb.value = std::vector<double>{1, 8, 14, 16, 16.1, 30, 100}[rng() % 7];
  b.platform.value = static_cast<Platform>(rng() % 3);
  b.isa_features.value = IsaSet::from_bits(static_cast<std::uint8_t>(rng() % 8)).closure();
  b.gpu_required.value = rng() % 4 == 0;
  if (b.gpu_required.value) {
    b.gpu_count.value = static_cast<int>(1 + rng() % 4);
    b.gpu_mem_gb.value = static_cast<double>(rng() % 64);
  }
  b.io_intensity.value = static_cast<IoIntensity>(rng() % 3);
  return b;
}

// Straight-line restatement of the hard predicates.
bool oracle_feasible(const InstanceOffer& o, const ConstraintBundle& b) {
  if (o.memory_gb < b.mem_hwm_gb.value + 2.0) return false;
  if (b.platform.value != Platform::any && b.platform.value != o.architecture) return false;
  for (auto f : {IsaFeature::avx, IsaFeature::avx2, IsaFeature::avx512}) {
    if (b.isa_features.value.contains(f) && !o.isa_features.contains(f)) return false;
  }
  if (b.gpu_required.value) {
    if (!o.accelerator) return false;
    if (o.accelerator->count < b.gpu_count.value) return false;
    if (o.accelerator->mem_gb_per_device < b.gpu_mem_gb.value) return false;
  }
  if (b.io_intensity.value == IoIntensity::heavy && !o.premium_storage) return false;
  return true;
}

ConstraintBundle cg_bundle() { return bundle_from_json(json::parse(read_file(fixture("bundles/cg.json")))); }

}  // namespace

TEST(CatalogCsv, SnapshotLoadsAndValidates) {
  auto c = load_catalog(snapshot_catalog());
  EXPECT_EQ(c.offers.size(), 30u);
  for (const auto& o : c.offers) EXPECT_NO_THROW(validate_offer(o));
  const auto* n2d = c.find("gcp", "n2d-highmem-8");
  ASSERT_NE(n2d, nullptr);
  EXPECT_EQ(n2d->memory_gb, 64);
  EXPECT_DOUBLE_EQ(n2d->price_per_hour_usd, 0.4556);
  EXPECT_EQ(c.find("aws", "n2d-highmem-8"), nullptr);
  EXPECT_EQ(c.find_by_name("n2d-highmem-8"), n2d);
  EXPECT_TRUE(exists(c, "gcp", "n2d-highmem-8"));
  for (const auto& o : c.only_provider("azure").offers) EXPECT_EQ(o.provider, "azure");
}

TEST(CatalogCsv, RoundTripsThroughCsvAndJson) {
  std::mt19937_64 rng(7);
  std::vector<InstanceOffer> offers;
  for (int i = 0; i < 200; ++i) offers.push_back(random_offer(rng, i));
  auto back = parse_catalog_csv(to_csv(offers));
  EXPECT_EQ(back.offers, offers);
  for (const auto& o : offers) EXPECT_EQ(offer_from_json(to_json(o)), o);
}

TEST(CatalogCsv, RejectsBadRows) {
  std::string header(kCatalogHeader);
  EXPECT_THROW(parse_catalog_csv(header + "\naws,x,x86_64,0,,4,,,,false,0.1,intel,3,avx\n"), error);
  EXPECT_THROW(parse_catalog_csv(header + "\naws,x,x86_64,2,,4,,,,false,-1,intel,3,avx\n"), error);
  // Offer ISA sets are taken as written, not closed.
  auto explicit_isa = parse_catalog_csv(header + "\naws,x,x86_64,2,,4,,,,false,0.1,intel,3,avx2\n");
  EXPECT_EQ(explicit_isa.offers.at(0).isa_features, IsaSet{IsaFeature::avx2});
  EXPECT_THROW(parse_catalog_csv(header + "\naws,x,x86_64,2\n"), error);
  EXPECT_THROW(parse_catalog_csv("provider,name\n"), error);
  EXPECT_THROW(parse_catalog_csv(header + "\naws,x,x86_64,2,,4,,,,false,0.1,intel,3,avx\naws,x,x86_64,2,,4,,,,false,0.1,intel,3,avx\n"),
               error);  // duplicate provider/name
}

TEST(Feasibility, CgBundleOnSyntheticCatalog) {
  auto c = load_catalog(synthetic_catalog());
  ASSERT_EQ(c.offers.size(), 794u);
  auto start = std::chrono::steady_clock::now();
  auto feasible = filter_feasible(c, cg_bundle());
  auto hist = memory_tier_histogram(c, {0, 18, 32, 1e9});
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(1));
  EXPECT_EQ(feasible.size(), 709u);
  EXPECT_EQ(hist, (std::vector<std::size_t>{85, 79, 630}));
  for (const auto& o : feasible) EXPECT_GE(o.memory_gb, 18.0);
}

TEST(Feasibility, MatchesLinearOracleOnRandomCatalogs) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    Catalog c;
    const int n = static_cast<int>(rng() % 1001);
    for (int i = 0; i < n; ++i) c.offers.push_back(random_offer(rng, i));
    auto b = random_bundle(rng);
    std::vector<InstanceOffer> expected;
    for (const auto& o : c.offers) {
      if (oracle_feasible(o, b)) expected.push_back(o);
    }
    ASSERT_EQ(filter_feasible(c, b), expected) << "trial " << trial;
  }
}

TEST(Feasibility, ViolationsNameTheirKind) {
  InstanceOffer o;
  o.provider = "aws";
  o.name = "tiny";
  o.architecture = Platform::aarch64;
  o.memory_gb = 4;
  o.price_per_hour_usd = 0.1;
  auto b = cg_bundle();
  b.gpu_required.value = true;
  b.gpu_count.value = 1;
  b.io_intensity.value = IoIntensity::heavy;
  auto v = hard_violations(o, b);
  ASSERT_EQ(v.size(), 5u);
  EXPECT_TRUE(v[0].starts_with("memory"));
  EXPECT_TRUE(v[1].starts_with("architecture"));
  EXPECT_TRUE(v[2].starts_with("isa"));
  EXPECT_TRUE(v[3].starts_with("accelerator"));
  EXPECT_TRUE(v[4].starts_with("storage"));
}

TEST(Feasibility, ExactMemoryBoundaryIsFeasible) {
  InstanceOffer o;
  o.provider = "p";
  o.name = "n";
  o.memory_gb = 18;
  o.isa_features = IsaSet{IsaFeature::avx};
  EXPECT_TRUE(is_feasible(o, cg_bundle()));
  o.memory_gb = 17.999;
  EXPECT_FALSE(is_feasible(o, cg_bundle()));
}

TEST(Histogram, HalfOpenBinsAndEdgeValidation) {
  std::vector<InstanceOffer> offers(4);
  offers[0].memory_gb = 0;
  offers[1].memory_gb = 18;
  offers[2].memory_gb = 17.99;
  offers[3].memory_gb = 64;
  EXPECT_EQ(memory_tier_histogram(offers, {0, 18, 64}), (std::vector<std::size_t>{2, 1}));
  EXPECT_THROW(memory_tier_histogram(offers, {0}), error);
  EXPECT_THROW(memory_tier_histogram(offers, {0, 32, 18}), error);
}

TEST(Histogram, SyntheticGeneratorHitsItsBins) {
  for (std::uint64_t seed : {1ull, 794ull, 2026ull}) {
    auto c = parse_catalog_csv(fixtures::synthetic_catalog_csv(seed));
    EXPECT_EQ(memory_tier_histogram(c, {0, 18, 32, 1e9}),
              (std::vector<std::size_t>{fixtures::kSyntheticBelow, fixtures::kSyntheticMid, fixtures::kSyntheticHigh}));
  }
}
