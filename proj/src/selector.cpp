#include "incisor/selector.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "incisor/error.hpp"

namespace incisor {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

int vendor_rank(CpuVendor v) {
  switch (v) {
    case CpuVendor::amd: return 0;
    case CpuVendor::intel: return 1;
    default: return 2;
  }
}

}  // namespace

double PenaltyWeights::max_product() const {
  // too_few_vcpus and excess_vcpus are mutually exclusive
  return std::max(too_few_vcpus, excess_vcpus) * excess_memory * unneeded_accelerator * unneeded_premium_storage;
}

double penalty_product(const InstanceOffer& o, const ConstraintBundle& b, const PenaltyWeights& w,
                       std::vector<std::string>* applied) {
  double p = 1.0;
  auto apply = [&](double factor, std::string what) {
    p *= factor;
    if (applied) applied->push_back(std::move(what) + " x" + num(factor));
  };
  const int cpus = std::max(1, b.cpu_count.value);
  const double need = effective_instance_memory_gb(b);
  if (o.vcpus < cpus) {
    apply(w.too_few_vcpus, std::to_string(o.vcpus) + " vCPUs below the " + std::to_string(cpus) + " required");
  } else if (o.vcpus > w.excess_vcpu_factor * cpus) {
    apply(w.excess_vcpus, std::to_string(o.vcpus) + " vCPUs exceed " + num(w.excess_vcpu_factor) + "x the " +
                              std::to_string(cpus) + " required");
  }
  if (o.memory_gb > w.excess_memory_factor * need) {
    apply(w.excess_memory,
          num(o.memory_gb) + " GB exceeds " + num(w.excess_memory_factor) + "x the " + num(need) + " GB required");
  }
  if (o.accelerator && !b.gpu_required.value) apply(w.unneeded_accelerator, "unneeded accelerator");
  if (o.premium_storage && b.io_intensity.value == IoIntensity::minimal) {
    apply(w.unneeded_premium_storage, "premium storage for minimal I/O");
  }
  return p;
}

double next_memory_tier(const std::vector<InstanceOffer>& feasible) {
  if (feasible.empty()) return 0;
  double lo = feasible.front().memory_gb;
  for (const auto& o : feasible) lo = std::min(lo, o.memory_gb);
  double tier = 0;
  for (const auto& o : feasible) {
    if (o.memory_gb > lo && (tier == 0 || o.memory_gb < tier)) tier = o.memory_gb;
  }
  return tier;
}

std::vector<InstancePreference> rank_instances(const std::vector<InstanceOffer>& feasible,
                                               const ConstraintBundle& bundle, const PenaltyWeights& weights,
                                               std::size_t limit) {
  if (feasible.empty()) fail(errc::no_feasible_instance, "no instance satisfies the hard constraints");

  struct Scored {
    const InstanceOffer* offer;
    double score;
    bool headroom;
    std::vector<std::string> penalties;
  };
  const bool low_mem_confidence = bundle.mem_hwm_gb.confidence == Confidence::low;
  const double tier = low_mem_confidence ? next_memory_tier(feasible) : 0;

  std::vector<Scored> scored;
  scored.reserve(feasible.size());
  for (const auto& o : feasible) {
    Scored s{&o, 0, tier > 0 && o.memory_gb >= tier, {}};
    s.score = o.price_per_hour_usd * penalty_product(o, bundle, weights, &s.penalties);
    scored.push_back(std::move(s));
  }

  std::sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
    if (tier > 0 && a.headroom != b.headroom) return a.headroom;
    if (a.score != b.score) return a.score < b.score;
    if (a.offer->cpu_generation != b.offer->cpu_generation) return a.offer->cpu_generation > b.offer->cpu_generation;
    int va = vendor_rank(a.offer->cpu_vendor);
    int vb = vendor_rank(b.offer->cpu_vendor);
    if (va != vb) return va < vb;
    if (a.offer->name != b.offer->name) return a.offer->name < b.offer->name;
    return a.offer->provider < b.offer->provider;
  });

  const double need = effective_instance_memory_gb(bundle);
  std::vector<InstancePreference> out;
  for (std::size_t i = 0; i < scored.size() && out.size() < limit; ++i) {
    const auto& s = scored[i];
    const auto& o = *s.offer;
    std::string why = o.provider + "/" + o.name + ": " + num(o.memory_gb) + " GB for " + num(need) +
                      " GB required, " + std::to_string(o.vcpus) + " vCPUs";
    if (o.physical_cpus) why += " (" + std::to_string(*o.physical_cpus) + " physical)";
    why += " for " + std::to_string(bundle.cpu_count.value) + " required, $" + num(o.price_per_hour_usd) + "/h";
    why += s.penalties.empty() ? "; no soft penalties" : "; penalties:";
    for (std::size_t k = 0; k < s.penalties.size(); ++k) why += (k ? ", " : " ") + s.penalties[k];
    why += "; " + std::string(to_string(o.cpu_vendor)) + " generation " + std::to_string(o.cpu_generation);
    if (s.headroom) why += "; preferred for memory headroom (estimate has low confidence, tier >= " + num(tier) + " GB)";
    out.push_back({static_cast<int>(out.size()) + 1, o, why, s.score});
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ViolationKind k) noexcept {
  switch (k) {
    case ViolationKind::nonexistent: return "nonexistent";
    case ViolationKind::memory: return "memory";
    case ViolationKind::architecture: return "architecture";
    case ViolationKind::isa: return "isa";
    case ViolationKind::accelerator: return "accelerator";
    case ViolationKind::storage: return "storage";
    case ViolationKind::duplicate: return "duplicate";
    case ViolationKind::rank_order: return "rank_order";
  }
  return "unknown";
}

std::vector<PreferenceViolation> validate_preferences(const std::vector<InstancePreference>& prefs,
                                                      const Catalog& catalog, const ConstraintBundle& bundle) {
  static const std::map<std::string, ViolationKind, std::less<>> kinds{
      {"memory", ViolationKind::memory},
      {"architecture", ViolationKind::architecture},
      {"isa", ViolationKind::isa},
      {"accelerator", ViolationKind::accelerator},
      {"storage", ViolationKind::storage},
  };
  std::vector<PreferenceViolation> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t i = 0; i < prefs.size(); ++i) {
    const auto& p = prefs[i];
    if (p.rank != static_cast<int>(i) + 1) {
      out.push_back({p.rank, ViolationKind::rank_order,
                     "rank " + std::to_string(p.rank) + " at position " + std::to_string(i + 1)});
    }
    if (!seen.emplace(p.offer.provider, p.offer.name).second) {
      out.push_back({p.rank, ViolationKind::duplicate, p.offer.provider + "/" + p.offer.name + " listed twice"});
    }
    const InstanceOffer* real = catalog.find(p.offer.provider, p.offer.name);
    if (!real) {
      out.push_back({p.rank, ViolationKind::nonexistent,
                     p.offer.provider + "/" + p.offer.name + " does not exist in catalog " + catalog.snapshot_label});
      continue;
    }
    for (const auto& v : hard_violations(*real, bundle)) {
      auto colon = v.find(':');
      out.push_back({p.rank, kinds.at(v.substr(0, colon)), p.offer.name + ": " + v.substr(colon + 2)});
    }
  }
  return out;
}

std::vector<InstancePreference> drop_violations(const std::vector<InstancePreference>& prefs,
                                                const std::vector<PreferenceViolation>& violations,
                                                std::vector<std::string>& log) {
  std::vector<InstancePreference> kept;
  for (std::size_t i = 0; i < prefs.size(); ++i) {
    const auto& p = prefs[i];
    std::string reasons;
    for (const auto& v : violations) {
      // rank_order alone is repaired by renumbering, not a reason to drop
      if (v.rank != p.rank || v.kind == ViolationKind::rank_order) continue;
      if (v.kind == ViolationKind::duplicate) {
        bool first = std::none_of(prefs.begin(), prefs.begin() + static_cast<long>(i), [&](const auto& q) {
          return q.offer.provider == p.offer.provider && q.offer.name == p.offer.name;
        });
        if (first) continue;
      }
      reasons += (reasons.empty() ? "" : "; ") + std::string(to_string(v.kind)) + " (" + v.detail + ")";
    }
    if (!reasons.empty()) {
      log.push_back("dropped candidate " + std::to_string(p.rank) + " " + p.offer.provider + "/" + p.offer.name +
                    ": " + reasons);
      continue;
    }
    InstancePreference q = p;
    q.rank = static_cast<int>(kept.size()) + 1;
    kept.push_back(std::move(q));
  }
  return kept;
}

// ---------------------------------------------------------------------------

json preferences_to_json(const std::vector<InstancePreference>& prefs) {
  json items = json::array();
  for (const auto& p : prefs) {
    items.push_back({{"rank", p.rank},
                     {"provider", p.offer.provider},
                     {"name", p.offer.name},
                     {"rationale", p.rationale},
                     {"score", p.score}});
  }
  return {{"schema", kPreferencesSchema}, {"items", items}};
}

std::vector<InstancePreference> preferences_from_json(const json& doc, const Catalog& catalog) {
  std::vector<InstancePreference> out;
  try {
    if (doc.at("schema").get<std::string>() != kPreferencesSchema) {
      fail(errc::schema_violation, "preferences schema must be " + std::string(kPreferencesSchema));
    }
    for (const auto& item : doc.at("items")) {
      InstancePreference p;
      p.rank = item.at("rank").get<int>();
      std::string provider = item.at("provider").get<std::string>();
      std::string name = item.at("name").get<std::string>();
      if (const auto* o = catalog.find(provider, name)) {
        p.offer = *o;
      } else {
        p.offer.provider = provider;
        p.offer.name = name;
      }
      p.rationale = item.value("rationale", "");
      p.score = item.value("score", 0.0);
      out.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    fail(errc::schema_violation, std::string("malformed preference list: ") + e.what());
  }
  return out;
}

json to_json(const InstancePreference& p) {
  return {{"rank", p.rank}, {"offer", to_json(p.offer)}, {"rationale", p.rationale}, {"score", p.score}};
}

InstancePreference preference_from_json(const json& j) {
  InstancePreference p;
  p.rank = j.at("rank").get<int>();
  p.offer = offer_from_json(j.at("offer"));
  p.rationale = j.at("rationale").get<std::string>();
  p.score = j.at("score").get<double>();
  return p;
}

}  // namespace incisor
