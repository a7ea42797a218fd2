#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace incisor {

using json = nlohmann::json;

enum class Confidence { low = 0, medium = 1, high = 2 };

std::string_view to_string(Confidence c) noexcept;
Confidence parse_confidence(std::string_view s);

enum class Platform { x86_64, aarch64, any };

std::string_view to_string(Platform p) noexcept;
Platform parse_platform(std::string_view s);

enum class IoIntensity { minimal = 0, moderate = 1, heavy = 2 };

std::string_view to_string(IoIntensity io) noexcept;
IoIntensity parse_io_intensity(std::string_view s);

enum class IsaFeature : std::uint8_t { avx = 1, avx2 = 2, avx512 = 4 };

std::string_view to_string(IsaFeature f) noexcept;
IsaFeature parse_isa_feature(std::string_view s);

// Small value set over the three vector ISA extensions we track.
class IsaSet {
 public:
  constexpr IsaSet() = default;
  constexpr IsaSet(std::initializer_list<IsaFeature> features) {
    for (auto f : features) bits_ |= static_cast<std::uint8_t>(f);
  }

  static constexpr IsaSet from_bits(std::uint8_t bits) {
    IsaSet s;
    s.bits_ = bits & 0x7;
    return s;
  }

  constexpr bool contains(IsaFeature f) const { return (bits_ & static_cast<std::uint8_t>(f)) != 0; }
  constexpr void insert(IsaFeature f) { bits_ |= static_cast<std::uint8_t>(f); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  constexpr bool includes(IsaSet other) const { return (bits_ & other.bits_) == other.bits_; }
  constexpr IsaSet operator|(IsaSet o) const { return from_bits(bits_ | o.bits_); }
  constexpr IsaSet operator-(IsaSet o) const { return from_bits(bits_ & ~o.bits_); }
  constexpr bool operator==(const IsaSet&) const = default;

  // avx512 => avx2 => avx
  constexpr IsaSet closure() const {
    IsaSet s = *this;
    if (s.contains(IsaFeature::avx512)) s.insert(IsaFeature::avx2);
    if (s.contains(IsaFeature::avx2)) s.insert(IsaFeature::avx);
    return s;
  }
  constexpr bool is_closed() const { return closure() == *this; }

  std::vector<std::string> names() const;
  std::string to_string(char sep = '|') const;
  static IsaSet parse(std::string_view text, char sep = '|');

 private:
  std::uint8_t bits_ = 0;
};

enum class Dimension {
  mem_hwm_gb,
  cpu_count,
  platform,
  isa_features,
  gpu_required,
  gpu_count,
  gpu_mem_gb,
  io_intensity,
  disk_gb,
};

inline constexpr std::array<Dimension, 9> kAllDimensions{
    Dimension::mem_hwm_gb,   Dimension::cpu_count, Dimension::platform,
    Dimension::isa_features, Dimension::gpu_required, Dimension::gpu_count,
    Dimension::gpu_mem_gb,   Dimension::io_intensity, Dimension::disk_gb};

std::string_view to_string(Dimension d) noexcept;
std::optional<Dimension> parse_dimension(std::string_view s) noexcept;

template <typename V>
struct Estimate {
  V value{};
  Confidence confidence = Confidence::low;
  std::string rationale;
  std::vector<std::string> evidence_refs;

  bool operator==(const Estimate&) const = default;
};

// Per-dimension hardware requirement estimates. Numeric fields are plain
// types so that invalid bundles stay representable and validate_bundle can
// report on them.
struct ConstraintBundle {
  Estimate<double> mem_hwm_gb;
  Estimate<int> cpu_count;
  Estimate<Platform> platform;
  Estimate<IsaSet> isa_features;
  Estimate<bool> gpu_required;
  Estimate<int> gpu_count;
  Estimate<double> gpu_mem_gb;
  Estimate<IoIntensity> io_intensity;
  Estimate<double> disk_gb;

  bool operator==(const ConstraintBundle&) const = default;
};

inline constexpr double kEstimatorFloorGb = 1.0;
inline constexpr double kInstanceHeadroomGb = 2.0;
inline constexpr double kNoEvidenceMemoryGb = 4.0;
inline constexpr double kDefaultDiskGb = 8.0;
inline constexpr std::string_view kBundleSchema = "constraint-bundle/1";

// Low-confidence placeholder values for every dimension.
ConstraintBundle default_bundle(std::string_view rationale = "no evidence; default value");

// Value-only subset of a bundle, as supplied by a user.
struct PartialBundle {
  std::optional<double> mem_hwm_gb;
  std::optional<int> cpu_count;
  std::optional<Platform> platform;
  std::optional<IsaSet> isa_features;
  std::optional<bool> gpu_required;
  std::optional<int> gpu_count;
  std::optional<double> gpu_mem_gb;
  std::optional<IoIntensity> io_intensity;
  std::optional<double> disk_gb;

  bool empty() const;
  bool operator==(const PartialBundle&) const = default;
};

struct UserOverrides {
  std::optional<double> ram_gb;
  std::optional<std::string> cloud;
  std::optional<std::string> instance_type;
  std::optional<PartialBundle> extra_constraints;

  bool bypasses_recommendation() const { return instance_type.has_value(); }
  bool empty() const {
    return !ram_gb && !cloud && !instance_type && (!extra_constraints || extra_constraints->empty());
  }
  bool operator==(const UserOverrides&) const = default;
};

ConstraintBundle apply_estimator_floor(ConstraintBundle bundle);

// max(estimate + 2 GB, 2 GB): the feasibility threshold used against instance memory.
double effective_instance_memory_gb(const ConstraintBundle& bundle);
double effective_instance_memory_gb(double mem_hwm_gb);

ConstraintBundle merge_with_overrides(ConstraintBundle bundle, const UserOverrides& overrides);

std::vector<std::string> validate_bundle(const ConstraintBundle& bundle);

json to_json(const ConstraintBundle& bundle);
ConstraintBundle bundle_from_json(const json& doc);

json to_json(const PartialBundle& partial);
PartialBundle partial_bundle_from_json(const json& doc);

json to_json(const UserOverrides& overrides);
UserOverrides overrides_from_json(const json& doc);

}  // namespace incisor
