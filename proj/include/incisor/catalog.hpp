#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "incisor/constraints.hpp"

namespace incisor {

enum class CpuVendor { amd, intel, arm, other };

std::string_view to_string(CpuVendor v) noexcept;
CpuVendor parse_cpu_vendor(std::string_view s);

struct Accelerator {
  std::string kind;  // e.g. "nvidia-a10g"
  int count = 0;
  double mem_gb_per_device = 0;
  bool operator==(const Accelerator&) const = default;
};

struct InstanceOffer {
  std::string provider;
  std::string name;
  Platform architecture = Platform::x86_64;
  int vcpus = 1;
  std::optional<int> physical_cpus;
  double memory_gb = 0;
  std::optional<Accelerator> accelerator;
  bool premium_storage = false;
  double price_per_hour_usd = 0;
  CpuVendor cpu_vendor = CpuVendor::other;
  int cpu_generation = 0;
  IsaSet isa_features;

  bool operator==(const InstanceOffer&) const = default;
};

struct Catalog {
  std::vector<InstanceOffer> offers;
  std::string snapshot_label;

  const InstanceOffer* find(std::string_view provider, std::string_view name) const;
  // First offer with this name from any provider.
  const InstanceOffer* find_by_name(std::string_view name) const;
  Catalog only_provider(std::string_view provider) const;
};

inline constexpr std::string_view kCatalogHeader =
    "provider,name,architecture,vcpus,physical_cpus,memory_gb,accel_kind,accel_count,accel_mem_gb,premium_storage,"
    "price_per_hour_usd,cpu_vendor,cpu_generation,isa_features";

Catalog parse_catalog_csv(std::string_view text, std::string snapshot_label = "inline");
Catalog load_catalog(const std::filesystem::path& path);
std::string to_csv(const std::vector<InstanceOffer>& offers);

// Throws invariant_violation naming the offending field.
void validate_offer(const InstanceOffer& offer);

bool exists(const Catalog& catalog, std::string_view provider, std::string_view name);

// Hard-constraint violations of one offer against a bundle; empty when feasible.
// Each entry starts with the violation kind: "memory", "architecture", "isa",
// "accelerator" or "storage".
std::vector<std::string> hard_violations(const InstanceOffer& offer, const ConstraintBundle& bundle);
bool is_feasible(const InstanceOffer& offer, const ConstraintBundle& bundle);

std::vector<InstanceOffer> filter_feasible(const Catalog& catalog, const ConstraintBundle& bundle);

// Half-open bins [edges[i], edges[i+1]); offers outside the edges are not counted.
std::vector<std::size_t> memory_tier_histogram(const std::vector<InstanceOffer>& offers,
                                               const std::vector<double>& edges);
std::vector<std::size_t> memory_tier_histogram(const Catalog& catalog, const std::vector<double>& edges);

json to_json(const InstanceOffer& offer);
InstanceOffer offer_from_json(const json& j);

}  // namespace incisor
