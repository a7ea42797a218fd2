#include "incisor/catalog.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "incisor/error.hpp"

namespace incisor {

std::string_view to_string(CpuVendor v) noexcept {
  switch (v) {
    case CpuVendor::amd: return "amd";
    case CpuVendor::intel: return "intel";
    case CpuVendor::arm: return "arm";
    case CpuVendor::other: break;
  }
  return "other";
}

CpuVendor parse_cpu_vendor(std::string_view s) {
  if (s == "amd") return CpuVendor::amd;
  if (s == "intel") return CpuVendor::intel;
  if (s == "arm") return CpuVendor::arm;
  if (s == "other") return CpuVendor::other;
  fail(errc::parse_error, "unknown cpu vendor '" + std::string(s) + "'");
}

const InstanceOffer* Catalog::find(std::string_view provider, std::string_view name) const {
  for (const auto& o : offers) {
    if (o.provider == provider && o.name == name) return &o;
  }
  return nullptr;
}

const InstanceOffer* Catalog::find_by_name(std::string_view name) const {
  for (const auto& o : offers) {
    if (o.name == name) return &o;
  }
  return nullptr;
}

Catalog Catalog::only_provider(std::string_view provider) const {
  Catalog c;
  c.snapshot_label = snapshot_label + "[" + std::string(provider) + "]";
  for (const auto& o : offers) {
    if (o.provider == provider) c.offers.push_back(o);
  }
  return c;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv_row(std::string_view line, std::size_t row) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) fail(errc::parse_error, "row " + std::to_string(row) + ": unterminated quoted field");
  fields.push_back(std::move(cur));
  return fields;
}

std::string fmt_number(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <typename T>
T parse_num(const std::string& s, std::string_view field, std::size_t row) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) {
    fail(errc::parse_error, "row " + std::to_string(row) + ": " + std::string(field) + " '" + s + "' is not a number");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) fail(errc::parse_error, "row " + std::to_string(row) + ": " + std::string(field) + " is not finite");
  }
  return v;
}

}  // namespace

void validate_offer(const InstanceOffer& o) {
  auto bad = [&](std::string_view field, const std::string& why) {
    fail(errc::invariant_violation, std::string(field) + ": " + why + " (" + o.provider + "/" + o.name + ")");
  };
  if (o.provider.empty()) bad("provider", "empty");
  if (o.name.empty()) bad("name", "empty");
  if (o.architecture == Platform::any) bad("architecture", "must be x86_64 or aarch64");
  if (o.vcpus < 1) bad("vcpus", "must be >= 1");
  if (o.physical_cpus && *o.physical_cpus < 1) bad("physical_cpus", "must be positive when present");
  if (!(o.memory_gb > 0)) bad("memory_gb", "must be > 0");
  if (!(o.price_per_hour_usd > 0)) bad("price_per_hour_usd", "must be > 0");
  if (o.cpu_generation < 0) bad("cpu_generation", "must be >= 0");
  if (o.accelerator) {
    if (o.accelerator->kind.empty()) bad("accel_kind", "empty");
    if (o.accelerator->count < 1) bad("accel_count", "must be positive");
    if (!(o.accelerator->mem_gb_per_device > 0)) bad("accel_mem_gb", "must be positive");
  }
}

Catalog parse_catalog_csv(std::string_view text, std::string snapshot_label) {
  Catalog cat;
  cat.snapshot_label = std::move(snapshot_label);
  std::set<std::pair<std::string, std::string>> seen;
  std::size_t row = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++row;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kCatalogHeader) fail(errc::parse_error, "row 1: unexpected catalog header");
      header_seen = true;
      continue;
    }
    auto f = split_csv_row(line, row);
    if (f.size() != 14) {
      fail(errc::parse_error, "row " + std::to_string(row) + ": expected 14 fields, got " + std::to_string(f.size()));
    }
    InstanceOffer o;
    o.provider = f[0];
    o.name = f[1];
    try {
      o.architecture = parse_platform(f[2]);
    } catch (const error&) {
      fail(errc::parse_error, "row " + std::to_string(row) + ": unknown architecture '" + f[2] + "'");
    }
    o.vcpus = parse_num<int>(f[3], "vcpus", row);
    if (!f[4].empty()) o.physical_cpus = parse_num<int>(f[4], "physical_cpus", row);
    o.memory_gb = parse_num<double>(f[5], "memory_gb", row);
    if (!f[6].empty() || !f[7].empty() || !f[8].empty()) {
      Accelerator a;
      a.kind = f[6];
      a.count = f[7].empty() ? 0 : parse_num<int>(f[7], "accel_count", row);
      a.mem_gb_per_device = f[8].empty() ? 0 : parse_num<double>(f[8], "accel_mem_gb", row);
      o.accelerator = a;
    }
    if (f[9] == "true") {
      o.premium_storage = true;
    } else if (f[9] == "false") {
      o.premium_storage = false;
    } else {
      fail(errc::parse_error, "row " + std::to_string(row) + ": premium_storage must be true or false");
    }
    o.price_per_hour_usd = parse_num<double>(f[10], "price_per_hour_usd", row);
    try {
      o.cpu_vendor = parse_cpu_vendor(f[11]);
      o.isa_features = IsaSet::parse(f[13]);
    } catch (const error& e) {
      fail(errc::parse_error, "row " + std::to_string(row) + ": " + e.what());
    }
    o.cpu_generation = parse_num<int>(f[12], "cpu_generation", row);
    try {
      validate_offer(o);
    } catch (const error& e) {
      fail(errc::invariant_violation, "row " + std::to_string(row) + ": " + e.what());
    }
    if (!seen.emplace(o.provider, o.name).second) {
      fail(errc::duplicate_offer, "row " + std::to_string(row) + ": duplicate offer " + o.provider + "/" + o.name);
    }
    cat.offers.push_back(std::move(o));
  }
  if (!header_seen) fail(errc::parse_error, "row 1: missing catalog header");
  return cat;
}

Catalog load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::unreadable_file, "cannot read catalog '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  // FNV-1a over the bytes pins the snapshot to the exact file content.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream label;
  label << path.filename().string() << "@" << std::hex << h;
  return parse_catalog_csv(text, label.str());
}

std::string to_csv(const std::vector<InstanceOffer>& offers) {
  std::string out(kCatalogHeader);
  out += '\n';
  for (const auto& o : offers) {
    out += o.provider + "," + o.name + "," + std::string(to_string(o.architecture)) + "," + std::to_string(o.vcpus) +
           "," + (o.physical_cpus ? std::to_string(*o.physical_cpus) : "") + "," + fmt_number(o.memory_gb) + ",";
    if (o.accelerator) {
      out += o.accelerator->kind + "," + std::to_string(o.accelerator->count) + "," +
             fmt_number(o.accelerator->mem_gb_per_device) + ",";
    } else {
      out += ",,,";
    }
    out += std::string(o.premium_storage ? "true" : "false") + "," + fmt_number(o.price_per_hour_usd) + "," +
           std::string(to_string(o.cpu_vendor)) + "," + std::to_string(o.cpu_generation) + "," +
           o.isa_features.to_string('|') + "\n";
  }
  return out;
}

bool exists(const Catalog& catalog, std::string_view provider, std::string_view name) {
  return catalog.find(provider, name) != nullptr;
}

// ---------------------------------------------------------------------------
// Feasibility

std::vector<std::string> hard_violations(const InstanceOffer& o, const ConstraintBundle& b) {
  std::vector<std::string> v;
  const double need = effective_instance_memory_gb(b);
  if (!(o.memory_gb >= need)) {
    v.push_back("memory: " + fmt_number(o.memory_gb) + " GB below the " + fmt_number(need) + " GB requirement");
  }
  if (b.platform.value != Platform::any && o.architecture != b.platform.value) {
    v.push_back("architecture: " + std::string(to_string(o.architecture)) + " offered, " +
                std::string(to_string(b.platform.value)) + " required");
  }
  if (!o.isa_features.includes(b.isa_features.value)) {
    v.push_back("isa: missing " + (b.isa_features.value - o.isa_features).to_string('|'));
  }
  if (b.gpu_required.value) {
    if (!o.accelerator) {
      v.push_back("accelerator: none present, GPU required");
    } else if (o.accelerator->count < b.gpu_count.value) {
      v.push_back("accelerator: " + std::to_string(o.accelerator->count) + " devices, " +
                  std::to_string(b.gpu_count.value) + " required");
    } else if (o.accelerator->mem_gb_per_device < b.gpu_mem_gb.value) {
      v.push_back("accelerator: " + fmt_number(o.accelerator->mem_gb_per_device) + " GB per device, " +
                  fmt_number(b.gpu_mem_gb.value) + " GB required");
    }
  }
  if (b.io_intensity.value == IoIntensity::heavy && !o.premium_storage) {
    v.push_back("storage: heavy I/O requires premium storage");
  }
  return v;
}

bool is_feasible(const InstanceOffer& offer, const ConstraintBundle& bundle) {
  return hard_violations(offer, bundle).empty();
}

std::vector<InstanceOffer> filter_feasible(const Catalog& catalog, const ConstraintBundle& bundle) {
  std::vector<InstanceOffer> out;
  for (const auto& o : catalog.offers) {
    if (is_feasible(o, bundle)) out.push_back(o);
  }
  return out;
}

std::vector<std::size_t> memory_tier_histogram(const std::vector<InstanceOffer>& offers,
                                               const std::vector<double>& edges) {
  if (edges.size() < 2) fail(errc::unsorted_edges, "histogram needs at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i - 1] < edges[i])) fail(errc::unsorted_edges, "histogram edges must be strictly ascending");
  }
  std::vector<std::size_t> bins(edges.size() - 1, 0);
  for (const auto& o : offers) {
    auto it = std::upper_bound(edges.begin(), edges.end(), o.memory_gb);
    if (it == edges.begin() || it == edges.end()) continue;
    ++bins[static_cast<std::size_t>(it - edges.begin()) - 1];
  }
  return bins;
}

std::vector<std::size_t> memory_tier_histogram(const Catalog& catalog, const std::vector<double>& edges) {
  return memory_tier_histogram(catalog.offers, edges);
}

// ---------------------------------------------------------------------------

json to_json(const InstanceOffer& o) {
  json j{{"provider", o.provider},
         {"name", o.name},
         {"architecture", to_string(o.architecture)},
         {"vcpus", o.vcpus},
         {"memory_gb", o.memory_gb},
         {"premium_storage", o.premium_storage},
         {"price_per_hour_usd", o.price_per_hour_usd},
         {"cpu_vendor", to_string(o.cpu_vendor)},
         {"cpu_generation", o.cpu_generation},
         {"isa_features", o.isa_features.names()}};
  j["physical_cpus"] = o.physical_cpus ? json(*o.physical_cpus) : json(nullptr);
  if (o.accelerator) {
    j["accelerator"] = {{"kind", o.accelerator->kind},
                        {"count", o.accelerator->count},
                        {"mem_gb_per_device", o.accelerator->mem_gb_per_device}};
  } else {
    j["accelerator"] = nullptr;
  }
  return j;
}

InstanceOffer offer_from_json(const json& j) {
  InstanceOffer o;
  try {
    o.provider = j.at("provider").get<std::string>();
    o.name = j.at("name").get<std::string>();
    o.architecture = parse_platform(j.at("architecture").get<std::string>());
    o.vcpus = j.at("vcpus").get<int>();
    if (j.contains("physical_cpus") && !j["physical_cpus"].is_null()) o.physical_cpus = j["physical_cpus"].get<int>();
    o.memory_gb = j.at("memory_gb").get<double>();
    if (j.contains("accelerator") && !j["accelerator"].is_null()) {
      const auto& a = j["accelerator"];
      o.accelerator = Accelerator{a.at("kind").get<std::string>(), a.at("count").get<int>(),
                                  a.at("mem_gb_per_device").get<double>()};
    }
    o.premium_storage = j.at("premium_storage").get<bool>();
    o.price_per_hour_usd = j.at("price_per_hour_usd").get<double>();
    o.cpu_vendor = parse_cpu_vendor(j.at("cpu_vendor").get<std::string>());
    o.cpu_generation = j.at("cpu_generation").get<int>();
    for (const auto& f : j.at("isa_features")) o.isa_features.insert(parse_isa_feature(f.get<std::string>()));
  } catch (const json::exception& e) {
    fail(errc::parse_error, std::string("malformed instance offer: ") + e.what());
  }
  return o;
}

}  // namespace incisor
