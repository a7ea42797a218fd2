#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "incisor/catalog.hpp"
#include "incisor/constraints.hpp"

namespace incisor {

struct InstancePreference {
  int rank = 0;
  InstanceOffer offer;
  std::string rationale;
  double score = 0;  // lower is better

  bool operator==(const InstancePreference&) const = default;
};

// Multiplicative soft penalties applied to the hourly price.
struct PenaltyWeights {
  double too_few_vcpus = 1.5;       // vcpus < cpu_count
  double excess_vcpus = 1.1;        // vcpus > excess_vcpu_factor x cpu_count
  double excess_vcpu_factor = 4.0;
  double excess_memory = 1.2;       // memory > excess_memory_factor x effective requirement
  double excess_memory_factor = 4.0;
  double unneeded_accelerator = 1.5;
  double unneeded_premium_storage = 1.1;  // premium storage with minimal I/O

  // Largest product of penalties any single offer can receive.
  double max_product() const;
};

inline constexpr std::size_t kMaxPreferences = 10;

// Penalty product and the names of the applied penalties.
double penalty_product(const InstanceOffer& offer, const ConstraintBundle& bundle, const PenaltyWeights& weights,
                       std::vector<std::string>* applied = nullptr);

// Smallest memory size in the set strictly above the minimum; 0 when none.
double next_memory_tier(const std::vector<InstanceOffer>& feasible);

std::vector<InstancePreference> rank_instances(const std::vector<InstanceOffer>& feasible,
                                               const ConstraintBundle& bundle, const PenaltyWeights& weights = {},
                                               std::size_t limit = kMaxPreferences);

enum class ViolationKind { nonexistent, memory, architecture, isa, accelerator, storage, duplicate, rank_order };

std::string_view to_string(ViolationKind k) noexcept;

struct PreferenceViolation {
  int rank = 0;
  ViolationKind kind = ViolationKind::nonexistent;
  std::string detail;

  bool operator==(const PreferenceViolation&) const = default;
};

// Re-checks every candidate against the catalog (existence, then the hard
// predicates using the catalog's own data for that offer).
std::vector<PreferenceViolation> validate_preferences(const std::vector<InstancePreference>& prefs,
                                                      const Catalog& catalog, const ConstraintBundle& bundle);

// Drops candidates with any violation, renumbers ranks from 1 and appends one
// log line per dropped candidate.
std::vector<InstancePreference> drop_violations(const std::vector<InstancePreference>& prefs,
                                                const std::vector<PreferenceViolation>& violations,
                                                std::vector<std::string>& log);

inline constexpr std::string_view kPreferencesSchema = "instance-preferences/1";

json preferences_to_json(const std::vector<InstancePreference>& prefs);
// Items carry provider/name only; offers are resolved against the catalog
// when present, otherwise left as name-only placeholders for validation.
std::vector<InstancePreference> preferences_from_json(const json& doc, const Catalog& catalog);

json to_json(const InstancePreference& p);  // full offer included
InstancePreference preference_from_json(const json& j);

}  // namespace incisor
