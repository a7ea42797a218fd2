#include "incisor/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "incisor/error.hpp"

namespace incisor {

std::string_view to_string(Confidence c) noexcept {
  switch (c) {
    case Confidence::low: return "low";
    case Confidence::medium: return "medium";
    case Confidence::high: return "high";
  }
  return "low";
}

Confidence parse_confidence(std::string_view s) {
  if (s == "low") return Confidence::low;
  if (s == "medium") return Confidence::medium;
  if (s == "high") return Confidence::high;
  fail(errc::schema_violation, "unknown confidence level '" + std::string(s) + "'");
}

std::string_view to_string(Platform p) noexcept {
  switch (p) {
    case Platform::x86_64: return "x86_64";
    case Platform::aarch64: return "aarch64";
    case Platform::any: return "any";
  }
  return "any";
}

Platform parse_platform(std::string_view s) {
  if (s == "x86_64") return Platform::x86_64;
  if (s == "aarch64") return Platform::aarch64;
  if (s == "any") return Platform::any;
  fail(errc::schema_violation, "unknown platform '" + std::string(s) + "'");
}

std::string_view to_string(IoIntensity io) noexcept {
  switch (io) {
    case IoIntensity::minimal: return "minimal";
    case IoIntensity::moderate: return "moderate";
    case IoIntensity::heavy: return "heavy";
  }
  return "minimal";
}

IoIntensity parse_io_intensity(std::string_view s) {
  if (s == "minimal") return IoIntensity::minimal;
  if (s == "moderate") return IoIntensity::moderate;
  if (s == "heavy") return IoIntensity::heavy;
  fail(errc::schema_violation, "unknown io intensity '" + std::string(s) + "'");
}

std::string_view to_string(IsaFeature f) noexcept {
  switch (f) {
    case IsaFeature::avx: return "avx";
    case IsaFeature::avx2: return "avx2";
    case IsaFeature::avx512: return "avx512";
  }
  return "avx";
}

IsaFeature parse_isa_feature(std::string_view s) {
  if (s == "avx") return IsaFeature::avx;
  if (s == "avx2") return IsaFeature::avx2;
  if (s == "avx512") return IsaFeature::avx512;
  fail(errc::schema_violation, "unknown isa feature '" + std::string(s) + "'");
}

std::vector<std::string> IsaSet::names() const {
  std::vector<std::string> out;
  for (auto f : {IsaFeature::avx, IsaFeature::avx2, IsaFeature::avx512}) {
    if (contains(f)) out.emplace_back(incisor::to_string(f));
  }
  return out;
}

std::string IsaSet::to_string(char sep) const {
  std::string out;
  for (const auto& n : names()) {
    if (!out.empty()) out += sep;
    out += n;
  }
  return out;
}

IsaSet IsaSet::parse(std::string_view text, char sep) {
  IsaSet s;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto next = text.find(sep, pos);
    if (next == std::string_view::npos) next = text.size();
    auto token = text.substr(pos, next - pos);
    if (!token.empty()) s.insert(parse_isa_feature(token));
    pos = next + 1;
  }
  return s;
}

namespace {

constexpr std::array<std::string_view, 9> kDimensionNames{
    "mem_hwm_gb", "cpu_count",  "platform",     "isa_features", "gpu_required",
    "gpu_count",  "gpu_mem_gb", "io_intensity", "disk_gb"};

template <typename V>
Estimate<V> low_estimate(V value, std::string_view rationale) {
  return Estimate<V>{value, Confidence::low, std::string(rationale), {}};
}

template <typename V>
void override_estimate(Estimate<V>& e, V value, std::string_view rationale = "user override") {
  e.value = value;
  e.confidence = Confidence::high;
  e.rationale = std::string(rationale);
  e.evidence_refs = {"user-override"};
}

std::string fmt_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

template <typename V>
void check_estimate_common(std::string_view name, const Estimate<V>& e, std::vector<std::string>& out) {
  if (e.rationale.empty()) out.push_back(std::string(name) + ": rationale is empty");
  if (e.evidence_refs.empty() && e.confidence != Confidence::low) {
    out.push_back(std::string(name) + ": evidence_refs empty at " + std::string(to_string(e.confidence)) +
                  " confidence");
  }
}

// value <-> json per dimension type
json value_json(double v) { return v; }
json value_json(int v) { return v; }
json value_json(bool v) { return v; }
json value_json(Platform v) { return std::string(to_string(v)); }
json value_json(IoIntensity v) { return std::string(to_string(v)); }
json value_json(IsaSet v) { return v.names(); }

template <typename V>
V value_from(const json& j, std::string_view field);

template <>
double value_from<double>(const json& j, std::string_view field) {
  if (!j.is_number()) fail(errc::schema_violation, std::string(field) + ": expected number");
  return j.get<double>();
}
template <>
int value_from<int>(const json& j, std::string_view field) {
  if (!j.is_number_integer()) fail(errc::schema_violation, std::string(field) + ": expected integer");
  auto v = j.get<std::int64_t>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    fail(errc::schema_violation, std::string(field) + ": integer out of range");
  }
  return static_cast<int>(v);
}
template <>
bool value_from<bool>(const json& j, std::string_view field) {
  if (!j.is_boolean()) fail(errc::schema_violation, std::string(field) + ": expected boolean");
  return j.get<bool>();
}
template <>
Platform value_from<Platform>(const json& j, std::string_view field) {
  if (!j.is_string()) fail(errc::schema_violation, std::string(field) + ": expected string");
  return parse_platform(j.get<std::string>());
}
template <>
IoIntensity value_from<IoIntensity>(const json& j, std::string_view field) {
  if (!j.is_string()) fail(errc::schema_violation, std::string(field) + ": expected string");
  return parse_io_intensity(j.get<std::string>());
}
template <>
IsaSet value_from<IsaSet>(const json& j, std::string_view field) {
  if (!j.is_array()) fail(errc::schema_violation, std::string(field) + ": expected array");
  IsaSet s;
  for (const auto& item : j) {
    if (!item.is_string()) fail(errc::schema_violation, std::string(field) + ": expected string items");
    s.insert(parse_isa_feature(item.get<std::string>()));
  }
  return s;
}

template <typename V>
json estimate_json(const Estimate<V>& e) {
  return json{{"value", value_json(e.value)},
              {"confidence", std::string(to_string(e.confidence))},
              {"rationale", e.rationale},
              {"evidence_refs", e.evidence_refs}};
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      fail(errc::schema_violation, std::string(where) + ": unknown field '" + key + "'");
    }
  }
}

template <typename V>
Estimate<V> estimate_from(const json& doc, std::string_view field) {
  auto it = doc.find(std::string(field));
  if (it == doc.end()) fail(errc::schema_violation, "missing field '" + std::string(field) + "'");
  const json& e = *it;
  if (!e.is_object()) fail(errc::schema_violation, std::string(field) + ": expected object");
  reject_unknown(e, {"value", "confidence", "rationale", "evidence_refs"}, field);
  for (auto key : {"value", "confidence", "rationale"}) {
    if (!e.contains(key)) fail(errc::schema_violation, std::string(field) + ": missing '" + key + "'");
  }
  Estimate<V> out;
  out.value = value_from<V>(e.at("value"), field);
  if (!e.at("confidence").is_string()) fail(errc::schema_violation, std::string(field) + ": confidence");
  out.confidence = parse_confidence(e.at("confidence").get<std::string>());
  if (!e.at("rationale").is_string()) fail(errc::schema_violation, std::string(field) + ": rationale");
  out.rationale = e.at("rationale").get<std::string>();
  if (auto refs = e.find("evidence_refs"); refs != e.end()) {
    if (!refs->is_array()) fail(errc::schema_violation, std::string(field) + ": evidence_refs");
    for (const auto& r : *refs) {
      if (!r.is_string()) fail(errc::schema_violation, std::string(field) + ": evidence_refs item");
      out.evidence_refs.push_back(r.get<std::string>());
    }
  }
  return out;
}

template <typename V>
std::optional<V> optional_from(const json& doc, std::string_view field) {
  auto it = doc.find(std::string(field));
  if (it == doc.end() || it->is_null()) return std::nullopt;
  return value_from<V>(*it, field);
}

}  // namespace

std::string_view to_string(Dimension d) noexcept { return kDimensionNames[static_cast<std::size_t>(d)]; }

std::optional<Dimension> parse_dimension(std::string_view s) noexcept {
  for (std::size_t i = 0; i < kDimensionNames.size(); ++i) {
    if (kDimensionNames[i] == s) return static_cast<Dimension>(i);
  }
  return std::nullopt;
}

ConstraintBundle default_bundle(std::string_view rationale) {
  ConstraintBundle b;
  b.mem_hwm_gb = low_estimate(kNoEvidenceMemoryGb, rationale);
  b.cpu_count = low_estimate(1, rationale);
  b.platform = low_estimate(Platform::any, rationale);
  b.isa_features = low_estimate(IsaSet{}, rationale);
  b.gpu_required = low_estimate(false, rationale);
  b.gpu_count = low_estimate(0, rationale);
  b.gpu_mem_gb = low_estimate(0.0, rationale);
  b.io_intensity = low_estimate(IoIntensity::minimal, rationale);
  b.disk_gb = low_estimate(kDefaultDiskGb, rationale);
  return b;
}

bool PartialBundle::empty() const {
  return !mem_hwm_gb && !cpu_count && !platform && !isa_features && !gpu_required && !gpu_count && !gpu_mem_gb &&
         !io_intensity && !disk_gb;
}

ConstraintBundle apply_estimator_floor(ConstraintBundle bundle) {
  if (bundle.mem_hwm_gb.value < kEstimatorFloorGb) {
    bundle.mem_hwm_gb.rationale += " [raised from " + fmt_number(bundle.mem_hwm_gb.value) + " GB to the " +
                                   fmt_number(kEstimatorFloorGb) + " GB estimator floor]";
    bundle.mem_hwm_gb.value = kEstimatorFloorGb;
  }
  return bundle;
}

double effective_instance_memory_gb(double mem_hwm_gb) {
  return std::max(mem_hwm_gb + kInstanceHeadroomGb, kInstanceHeadroomGb);
}

double effective_instance_memory_gb(const ConstraintBundle& bundle) {
  return effective_instance_memory_gb(bundle.mem_hwm_gb.value);
}

ConstraintBundle merge_with_overrides(ConstraintBundle b, const UserOverrides& o) {
  if (o.extra_constraints) {
    const auto& x = *o.extra_constraints;
    if (x.mem_hwm_gb) override_estimate(b.mem_hwm_gb, *x.mem_hwm_gb);
    if (x.cpu_count) override_estimate(b.cpu_count, *x.cpu_count);
    if (x.platform) override_estimate(b.platform, *x.platform);
    if (x.isa_features) override_estimate(b.isa_features, *x.isa_features);
    if (x.gpu_required) override_estimate(b.gpu_required, *x.gpu_required);
    if (x.gpu_count) override_estimate(b.gpu_count, *x.gpu_count);
    if (x.gpu_mem_gb) override_estimate(b.gpu_mem_gb, *x.gpu_mem_gb);
    if (x.io_intensity) override_estimate(b.io_intensity, *x.io_intensity);
    if (x.disk_gb) override_estimate(b.disk_gb, *x.disk_gb);
    // A user saying "no GPU" also zeroes the dependent GPU dimensions unless given explicitly.
    if (x.gpu_required && !*x.gpu_required) {
      if (!x.gpu_count) override_estimate(b.gpu_count, 0, "user override (implied by gpu_required=false)");
      if (!x.gpu_mem_gb) override_estimate(b.gpu_mem_gb, 0.0, "user override (implied by gpu_required=false)");
    }
  }
  if (o.ram_gb) override_estimate(b.mem_hwm_gb, *o.ram_gb);
  return b;
}

std::vector<std::string> validate_bundle(const ConstraintBundle& b) {
  std::vector<std::string> out;
  check_estimate_common("mem_hwm_gb", b.mem_hwm_gb, out);
  check_estimate_common("cpu_count", b.cpu_count, out);
  check_estimate_common("platform", b.platform, out);
  check_estimate_common("isa_features", b.isa_features, out);
  check_estimate_common("gpu_required", b.gpu_required, out);
  check_estimate_common("gpu_count", b.gpu_count, out);
  check_estimate_common("gpu_mem_gb", b.gpu_mem_gb, out);
  check_estimate_common("io_intensity", b.io_intensity, out);
  check_estimate_common("disk_gb", b.disk_gb, out);

  if (!(b.mem_hwm_gb.value >= kEstimatorFloorGb)) {
    out.push_back("mem_hwm_gb: " + fmt_number(b.mem_hwm_gb.value) + " GB is below the 1 GB estimator floor");
  }
  if (b.cpu_count.value < 1) out.push_back("cpu_count: must be at least 1");
  if (b.gpu_count.value < 0) out.push_back("gpu_count: must be non-negative");
  if (!(b.gpu_mem_gb.value >= 0.0)) out.push_back("gpu_mem_gb: must be non-negative");
  if (!(b.disk_gb.value > 0.0)) out.push_back("disk_gb: must be positive");
  if (!b.gpu_required.value && (b.gpu_count.value != 0 || b.gpu_mem_gb.value != 0.0)) {
    out.push_back("gpu_required=false but gpu_count/gpu_mem_gb are non-zero");
  }
  if (!b.isa_features.value.is_closed()) {
    out.push_back("isa_features: {" + b.isa_features.value.to_string(',') +
                  "} is not closed under avx512 => avx2 => avx");
  }
  return out;
}

json to_json(const ConstraintBundle& b) {
  return json{{"schema", std::string(kBundleSchema)},
              {"mem_hwm_gb", estimate_json(b.mem_hwm_gb)},
              {"cpu_count", estimate_json(b.cpu_count)},
              {"platform", estimate_json(b.platform)},
              {"isa_features", estimate_json(b.isa_features)},
              {"gpu_required", estimate_json(b.gpu_required)},
              {"gpu_count", estimate_json(b.gpu_count)},
              {"gpu_mem_gb", estimate_json(b.gpu_mem_gb)},
              {"io_intensity", estimate_json(b.io_intensity)},
              {"disk_gb", estimate_json(b.disk_gb)}};
}

ConstraintBundle bundle_from_json(const json& doc) {
  if (!doc.is_object()) fail(errc::schema_violation, "constraint bundle must be a JSON object");
  reject_unknown(doc,
                 {"schema", "mem_hwm_gb", "cpu_count", "platform", "isa_features", "gpu_required", "gpu_count",
                  "gpu_mem_gb", "io_intensity", "disk_gb"},
                 "constraint bundle");
  auto schema = doc.find("schema");
  if (schema == doc.end() || !schema->is_string() || schema->get<std::string>() != kBundleSchema) {
    fail(errc::schema_violation, "constraint bundle: expected \"schema\": \"constraint-bundle/1\"");
  }
  ConstraintBundle b;
  b.mem_hwm_gb = estimate_from<double>(doc, "mem_hwm_gb");
  b.cpu_count = estimate_from<int>(doc, "cpu_count");
  b.platform = estimate_from<Platform>(doc, "platform");
  b.isa_features = estimate_from<IsaSet>(doc, "isa_features");
  b.gpu_required = estimate_from<bool>(doc, "gpu_required");
  b.gpu_count = estimate_from<int>(doc, "gpu_count");
  b.gpu_mem_gb = estimate_from<double>(doc, "gpu_mem_gb");
  b.io_intensity = estimate_from<IoIntensity>(doc, "io_intensity");
  b.disk_gb = estimate_from<double>(doc, "disk_gb");
  return b;
}

json to_json(const PartialBundle& p) {
  json j = json::object();
  if (p.mem_hwm_gb) j["mem_hwm_gb"] = *p.mem_hwm_gb;
  if (p.cpu_count) j["cpu_count"] = *p.cpu_count;
  if (p.platform) j["platform"] = value_json(*p.platform);
  if (p.isa_features) j["isa_features"] = value_json(*p.isa_features);
  if (p.gpu_required) j["gpu_required"] = *p.gpu_required;
  if (p.gpu_count) j["gpu_count"] = *p.gpu_count;
  if (p.gpu_mem_gb) j["gpu_mem_gb"] = *p.gpu_mem_gb;
  if (p.io_intensity) j["io_intensity"] = value_json(*p.io_intensity);
  if (p.disk_gb) j["disk_gb"] = *p.disk_gb;
  return j;
}

PartialBundle partial_bundle_from_json(const json& doc) {
  if (!doc.is_object()) fail(errc::schema_violation, "partial bundle must be a JSON object");
  reject_unknown(doc,
                 {"mem_hwm_gb", "cpu_count", "platform", "isa_features", "gpu_required", "gpu_count", "gpu_mem_gb",
                  "io_intensity", "disk_gb"},
                 "partial bundle");
  PartialBundle p;
  p.mem_hwm_gb = optional_from<double>(doc, "mem_hwm_gb");
  p.cpu_count = optional_from<int>(doc, "cpu_count");
  p.platform = optional_from<Platform>(doc, "platform");
  p.isa_features = optional_from<IsaSet>(doc, "isa_features");
  p.gpu_required = optional_from<bool>(doc, "gpu_required");
  p.gpu_count = optional_from<int>(doc, "gpu_count");
  p.gpu_mem_gb = optional_from<double>(doc, "gpu_mem_gb");
  p.io_intensity = optional_from<IoIntensity>(doc, "io_intensity");
  p.disk_gb = optional_from<double>(doc, "disk_gb");
  return p;
}

json to_json(const UserOverrides& o) {
  json j = json::object();
  if (o.ram_gb) j["ram_gb"] = *o.ram_gb;
  if (o.cloud) j["cloud"] = *o.cloud;
  if (o.instance_type) j["instance_type"] = *o.instance_type;
  if (o.extra_constraints) j["extra_constraints"] = to_json(*o.extra_constraints);
  return j;
}

UserOverrides overrides_from_json(const json& doc) {
  if (!doc.is_object()) fail(errc::schema_violation, "overrides must be a JSON object");
  reject_unknown(doc, {"ram_gb", "cloud", "instance_type", "extra_constraints"}, "overrides");
  UserOverrides o;
  o.ram_gb = optional_from<double>(doc, "ram_gb");
  if (auto it = doc.find("cloud"); it != doc.end()) o.cloud = it->get<std::string>();
  if (auto it = doc.find("instance_type"); it != doc.end()) o.instance_type = it->get<std::string>();
  if (auto it = doc.find("extra_constraints"); it != doc.end()) o.extra_constraints = partial_bundle_from_json(*it);
  return o;
}

}  // namespace incisor
