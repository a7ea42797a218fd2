#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <thread>

#include "incisor/agent.hpp"
#include "incisor/error.hpp"
#include "incisor/json_schema.hpp"

namespace incisor {

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(errc::unreadable_file, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_text(p));
  } catch (const json::exception& e) {
    fail(errc::parse_error, p.string() + ": " + e.what());
  }
}

// Sorted keys come for free from json objects; path-like strings are
// normalized so "./a//b" and "a/b" share a key.
json canonical_args(const json& v) {
  if (v.is_object()) {
    json out = json::object();
    for (const auto& [k, x] : v.items()) out[k] = canonical_args(x);
    return out;
  }
  if (v.is_array()) {
    json out = json::array();
    for (const auto& x : v) out.push_back(canonical_args(x));
    return out;
  }
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (s.find('/') != std::string::npos && s.find("://") == std::string::npos && s.find(' ') == std::string::npos) {
      auto n = fs::path(s).lexically_normal().string();
      if (n.size() > 1 && n.back() == '/') n.pop_back();
      return n;
    }
  }
  return v;
}

std::string safe_dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

long long token_cost(std::size_t chars) { return static_cast<long long>((chars + 3) / 4); }

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void validate_budgets(const Budgets& b) {
  if (b.max_iterations_per_subtask <= 0) fail(errc::invariant_violation, "max_iterations_per_subtask must be positive");
  if (b.max_total_tool_calls <= 0) fail(errc::invariant_violation, "max_total_tool_calls must be positive");
  if (!(b.per_tool_timeout_s > 0)) fail(errc::invariant_violation, "per_tool_timeout_s must be positive");
  if (b.token_budget <= 0) fail(errc::invariant_violation, "token_budget must be positive");
}

json to_json(const Subtask& s) {
  return {{"id", s.id},
          {"description", s.description},
          {"target_dimensions", s.target_dimensions},
          {"depends_on", s.depends_on}};
}

Subtask subtask_from_json(const json& j) {
  try {
    Subtask s;
    s.id = j.at("id").get<int>();
    s.description = j.value("description", "");
    s.target_dimensions = j.at("target_dimensions").get<std::vector<std::string>>();
    s.depends_on = j.value("depends_on", std::vector<int>{});
    return s;
  } catch (const json::exception& e) {
    fail(errc::decomposition_invalid, std::string("malformed subtask: ") + e.what());
  }
}

std::vector<std::string> AgentConfig::dimensions() const {
  std::vector<std::string> out;
  if (auto p = output_schema.find("properties"); p != output_schema.end() && p->is_object()) {
    for (const auto& [key, _] : p->items()) {
      if (key != "schema") out.push_back(key);
    }
  }
  // Keep the constraint dimensions in their canonical order.
  std::stable_sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
    auto rank = [](const std::string& s) {
      auto d = parse_dimension(s);
      if (!d) return static_cast<int>(kAllDimensions.size());
      return static_cast<int>(std::find(kAllDimensions.begin(), kAllDimensions.end(), *d) - kAllDimensions.begin());
    };
    return rank(a) < rank(b);
  });
  return out;
}

bool AgentConfig::tool_enabled(std::string_view tool) const {
  return std::find(tool_registry.begin(), tool_registry.end(), tool) != tool_registry.end();
}

void validate_agent_config(const AgentConfig& c) {
  if (auto problems = check_schema_document(c.output_schema); !problems.empty()) {
    fail(errc::invariant_violation, "agent " + c.name + ": output schema invalid: " + problems.front());
  }
  if (c.dimensions().empty()) fail(errc::invariant_violation, "agent " + c.name + ": schema has no output properties");
  if (c.tool_registry.empty()) fail(errc::invariant_violation, "agent " + c.name + ": tool registry is empty");
  validate_budgets(c.budgets);
}

AgentConfig load_agent_config(const fs::path& dir) {
  AgentConfig c;
  c.driver_prompt = read_text(dir / "prompt.md");
  c.output_schema = read_json(dir / "schema.json");
  json cfg = read_json(dir / "config.json");
  try {
    c.name = cfg.value("name", dir.filename().string());
    if (auto b = cfg.find("budgets"); b != cfg.end()) {
      c.budgets.max_iterations_per_subtask = b->value("max_iterations_per_subtask", c.budgets.max_iterations_per_subtask);
      c.budgets.max_total_tool_calls = b->value("max_total_tool_calls", c.budgets.max_total_tool_calls);
      c.budgets.per_tool_timeout_s = b->value("per_tool_timeout_s", c.budgets.per_tool_timeout_s);
      c.budgets.token_budget = b->value("token_budget", c.budgets.token_budget);
    }
    c.tool_registry = cfg.at("tools").get<std::vector<std::string>>();
    for (const auto& s : cfg.value("subtasks", json::array())) c.subtasks.push_back(subtask_from_json(s));
  } catch (const json::exception& e) {
    fail(errc::parse_error, (dir / "config.json").string() + ": " + e.what());
  }
  validate_agent_config(c);
  return c;
}

fs::path default_config_root() {
  if (const char* env = std::getenv("INCISOR_CONFIG_DIR"); env && *env) return env;
  return fs::path(INCISOR_DATA_DIR) / "configs";
}

// ---------------------------------------------------------------------------
// Tools

std::string ToolCall::cache_key() const { return tool + " " + safe_dump(canonical_args(args)); }

std::string_view to_string(ToolStatus s) noexcept {
  switch (s) {
    case ToolStatus::ok: return "ok";
    case ToolStatus::error: return "error";
    case ToolStatus::timeout: return "timeout";
  }
  return "unknown";
}

void ToolRegistry::add(std::string name, ToolFn fn) { tools_[std::move(name)] = Entry{std::move(fn)}; }

bool ToolRegistry::has(std::string_view name) const { return tools_.find(name) != tools_.end(); }

std::vector<std::string> ToolRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : tools_) out.push_back(k);
  return out;
}

ToolResult ToolRegistry::execute(const ToolCall& call, std::chrono::milliseconds timeout) const {
  auto it = tools_.find(call.tool);
  if (it == tools_.end()) return {ToolStatus::error, json{{"error", "unknown tool '" + call.tool + "'"}}, 0, false};

  struct Shared {
    std::promise<ToolResult> done;
  };
  auto shared = std::make_shared<Shared>();
  auto future = shared->done.get_future();
  ToolFn fn = it->second.fn;
  auto count = it->second.count;
  json args = call.args;
  const auto start = std::chrono::steady_clock::now();

  std::thread worker([shared, fn, count, args]() {
    ++*count;
    ToolResult r;
    try {
      r.payload = fn(args);
      r.status = ToolStatus::ok;
    } catch (const std::exception& e) {
      r.status = ToolStatus::error;
      r.payload = json{{"error", e.what()}};
    } catch (...) {
      r.status = ToolStatus::error;
      r.payload = json{{"error", "unknown failure"}};
    }
    shared->done.set_value(std::move(r));
  });

  if (future.wait_for(timeout) != std::future_status::ready) {
    worker.detach();  // the worker only touches state it co-owns
    double waited = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {ToolStatus::timeout, json{{"error", "timed out after " + std::to_string(timeout.count()) + " ms"}},
            waited, false};
  }
  worker.join();
  ToolResult r = future.get();
  r.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::size_t ToolRegistry::executions(std::string_view name) const {
  auto it = tools_.find(name);
  return it == tools_.end() ? 0 : it->second.count->load();
}

std::size_t ToolRegistry::total_executions() const {
  std::size_t n = 0;
  for (const auto& [_, e] : tools_) n += e.count->load();
  return n;
}

std::map<std::string, std::size_t> ToolRegistry::execution_counts() const {
  std::map<std::string, std::size_t> out;
  for (const auto& [k, e] : tools_) out[k] = e.count->load();
  return out;
}

std::optional<ToolResult> ToolCache::find(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ToolCache::store(const std::string& key, const ToolResult& result) {
  std::lock_guard lock(mu_);
  entries_.emplace(key, result);
}

std::size_t ToolCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// Findings

json to_json(const Finding& f) {
  return {{"subtask_id", f.subtask_id},
          {"dimension", f.dimension},
          {"value", f.value},
          {"confidence", std::string(to_string(f.confidence))},
          {"source", f.source},
          {"detail", f.detail},
          {"measured", f.measured}};
}

Finding finding_from_json(const json& j, int subtask_id) {
  Finding f;
  f.subtask_id = subtask_id;
  f.dimension = j.at("dimension").get<std::string>();
  f.value = j.at("value");
  f.confidence = parse_confidence(j.value("confidence", "low"));
  f.source = j.value("source", "");
  f.detail = j.value("detail", "");
  f.measured = j.value("measured", false);
  return f;
}

// ---------------------------------------------------------------------------
// Decomposition

std::vector<std::string> check_decomposition(const std::vector<Subtask>& subtasks,
                                             const std::vector<std::string>& dimensions) {
  std::vector<std::string> problems;
  if (subtasks.empty()) problems.push_back("no subtasks");
  std::set<int> ids;
  for (const auto& s : subtasks) {
    if (!ids.insert(s.id).second) problems.push_back("duplicate subtask id " + std::to_string(s.id));
    if (s.target_dimensions.empty()) problems.push_back("subtask " + std::to_string(s.id) + " targets nothing");
    for (const auto& d : s.target_dimensions) {
      if (std::find(dimensions.begin(), dimensions.end(), d) == dimensions.end()) {
        problems.push_back("subtask " + std::to_string(s.id) + " targets unknown dimension '" + d + "'");
      }
    }
  }
  for (const auto& d : dimensions) {
    bool covered = std::any_of(subtasks.begin(), subtasks.end(), [&](const Subtask& s) {
      return std::find(s.target_dimensions.begin(), s.target_dimensions.end(), d) != s.target_dimensions.end();
    });
    if (!covered) problems.push_back("dimension '" + d + "' is not covered");
  }
  for (const auto& s : subtasks) {
    for (int dep : s.depends_on) {
      if (!ids.count(dep)) problems.push_back("subtask " + std::to_string(s.id) + " depends on unknown id " +
                                              std::to_string(dep));
    }
  }
  if (problems.empty() && dependency_order(subtasks).size() != subtasks.size()) {
    problems.push_back("depends_on contains a cycle");
  }
  return problems;
}

std::vector<Subtask> dependency_order(const std::vector<Subtask>& subtasks) {
  // Kahn's algorithm, always taking the earliest ready subtask. Cycles leave
  // their members out, which check_decomposition reports.
  std::vector<Subtask> out;
  std::set<int> done;
  std::vector<bool> used(subtasks.size(), false);
  bool progress = true;
  while (progress) {
    progress = false;
    for (std::size_t i = 0; i < subtasks.size(); ++i) {
      if (used[i]) continue;
      const auto& deps = subtasks[i].depends_on;
      if (std::all_of(deps.begin(), deps.end(), [&](int d) { return done.count(d) > 0; })) {
        used[i] = true;
        done.insert(subtasks[i].id);
        out.push_back(subtasks[i]);
        progress = true;
        break;
      }
    }
  }
  return out;
}

std::vector<Subtask> fixed_decomposition(const AgentConfig& config) {
  const auto dims = config.dimensions();
  auto known = [&](const std::string& d) { return std::find(dims.begin(), dims.end(), d) != dims.end(); };

  std::vector<Subtask> out;
  std::set<int> kept;
  int next_id = 1;
  for (auto s : config.subtasks) {
    std::erase_if(s.target_dimensions, [&](const std::string& d) { return !known(d); });
    if (s.target_dimensions.empty()) continue;
    kept.insert(s.id);
    next_id = std::max(next_id, s.id + 1);
    out.push_back(std::move(s));
  }
  for (auto& s : out) std::erase_if(s.depends_on, [&](int d) { return !kept.count(d); });
  for (const auto& d : dims) {
    bool covered = std::any_of(out.begin(), out.end(), [&](const Subtask& s) {
      return std::find(s.target_dimensions.begin(), s.target_dimensions.end(), d) != s.target_dimensions.end();
    });
    if (!covered) out.push_back({next_id++, "estimate " + d, {d}, {}});
  }
  return out;
}

std::vector<Subtask> decompose(const AgentConfig& config, const std::string& input_digest, Reasoner& reasoner,
                               std::vector<std::string>* log) {
  const auto dims = config.dimensions();
  std::optional<std::vector<Subtask>> proposed;
  try {
    proposed = reasoner.propose_decomposition(config, input_digest);
  } catch (const std::exception& e) {
    if (log) log->push_back(std::string("decomposition request failed: ") + e.what());
  }
  if (proposed) {
    auto problems = check_decomposition(*proposed, dims);
    if (problems.empty()) {
      if (log) log->push_back("using the reasoner's decomposition (" + std::to_string(proposed->size()) + " subtasks)");
      return *proposed;
    }
    if (log) log->push_back("reasoner decomposition rejected (" + problems.front() + "); using the fixed sequence");
  }
  auto fallback = fixed_decomposition(config);
  if (auto problems = check_decomposition(fallback, dims); !problems.empty()) {
    fail(errc::decomposition_invalid, "fixed decomposition for " + config.name + " is invalid: " + problems.front());
  }
  return fallback;
}

// ---------------------------------------------------------------------------
// Subtask loop

SubtaskFindings run_subtask(const Subtask& subtask, Reasoner& reasoner, const ToolRegistry& tools, ToolCache& cache,
                            const AgentConfig& config, const std::string& input_digest,
                            const std::vector<SubtaskFindings>& prior, BudgetState& state) {
  SubtaskFindings out;
  out.subtask_id = subtask.id;
  const Budgets& b = config.budgets;
  const auto timeout = std::chrono::milliseconds(static_cast<long long>(std::ceil(b.per_tool_timeout_s * 1000)));
  SubtaskContext ctx{config, subtask, input_digest, prior, out.observations};

  state.tokens += token_cost(input_digest.size());
  bool finished = false;
  std::string stop_reason;
  while (!finished) {
    if (out.iterations >= b.max_iterations_per_subtask) {
      stop_reason = "iteration budget (" + std::to_string(b.max_iterations_per_subtask) + ") exhausted";
      break;
    }
    if (state.tool_calls >= b.max_total_tool_calls) {
      stop_reason = "tool-call budget (" + std::to_string(b.max_total_tool_calls) + ") exhausted";
      break;
    }
    if (state.tokens >= b.token_budget) {
      stop_reason = "token budget (" + std::to_string(b.token_budget) + ") exhausted";
      break;
    }

    Action action;
    try {
      action = reasoner.next_action(ctx);
    } catch (const std::exception& e) {
      ++out.iterations;
      stop_reason = std::string("reasoner failed: ") + e.what();
      break;
    }
    ++out.iterations;
    state.tokens += token_cost(action.thought.size());

    if (action.kind == Action::Kind::finish) {
      for (auto& f : action.findings) {
        f.subtask_id = subtask.id;
        out.findings.push_back(std::move(f));
      }
      finished = true;
      break;
    }

    Observation obs{action.call, {}};
    state.tokens += token_cost(action.call.tool.size() + safe_dump(action.call.args).size());
    if (!config.tool_enabled(action.call.tool) || !tools.has(action.call.tool)) {
      obs.result = {ToolStatus::error, json{{"error", "tool '" + action.call.tool + "' is not enabled for this agent"}},
                    0, false};
    } else {
      ++state.tool_calls;
      const std::string key = action.call.cache_key();
      if (auto hit = cache.find(key)) {
        obs.result = *hit;
        obs.result.cached = true;
        obs.result.elapsed_s = 0;
      } else {
        obs.result = tools.execute(action.call, timeout);
        // Timeouts are not cached: the abandoned worker may still be running.
        if (obs.result.status != ToolStatus::timeout) cache.store(key, obs.result);
      }
    }
    state.tokens += token_cost(safe_dump(obs.result.payload).size());
    out.observations.push_back(std::move(obs));
  }

  if (!finished) {
    out.budget_exhausted = true;
    std::vector<Finding> salvage;
    try {
      salvage = reasoner.best_effort(ctx);
    } catch (const std::exception&) {
    }
    for (auto& f : salvage) {
      f.subtask_id = subtask.id;
      f.confidence = Confidence::low;
      f.detail += (f.detail.empty() ? "" : "; ") + std::string("best effort: ") + stop_reason;
      out.findings.push_back(std::move(f));
    }
    out.notes.push_back("subtask " + std::to_string(subtask.id) + " stopped: " + stop_reason + "; " +
                        std::to_string(out.findings.size()) + " best-effort findings at low confidence");
  }
  // Findings only count toward the dimensions this subtask owns.
  std::erase_if(out.findings, [&](const Finding& f) {
    return std::find(subtask.target_dimensions.begin(), subtask.target_dimensions.end(), f.dimension) ==
           subtask.target_dimensions.end();
  });
  return out;
}

// ---------------------------------------------------------------------------
// Synthesis

namespace {

bool value_fits(Dimension d, const json& v) {
  try {
    switch (d) {
      case Dimension::mem_hwm_gb:
      case Dimension::gpu_mem_gb:
      case Dimension::disk_gb:
        return v.is_number() && std::isfinite(v.get<double>());
      case Dimension::cpu_count:
      case Dimension::gpu_count:
        return v.is_number_integer();
      case Dimension::platform:
        return v.is_string() && (parse_platform(v.get<std::string>()), true);
      case Dimension::isa_features:
        if (!v.is_array()) return false;
        for (const auto& x : v) {
          if (!x.is_string()) return false;
          parse_isa_feature(x.get<std::string>());
        }
        return true;
      case Dimension::gpu_required:
        return v.is_boolean();
      case Dimension::io_intensity:
        return v.is_string() && (parse_io_intensity(v.get<std::string>()), true);
    }
  } catch (const error&) {
  }
  return false;
}

int tier(const Finding& f) { return (f.measured ? 10 : 0) + static_cast<int>(f.confidence); }

// Merge equal-tier values toward the safer direction.
json conservative_merge(Dimension d, const std::vector<const Finding*>& top, std::vector<std::string>& notes) {
  json v = top.front()->value;
  for (std::size_t i = 1; i < top.size(); ++i) {
    const json& x = top[i]->value;
    switch (d) {
      case Dimension::mem_hwm_gb:
      case Dimension::gpu_mem_gb:
      case Dimension::disk_gb:
        if (x.get<double>() > v.get<double>()) v = x;
        break;
      case Dimension::cpu_count:
      case Dimension::gpu_count:
        if (x.get<long long>() > v.get<long long>()) v = x;
        break;
      case Dimension::platform: {
        auto a = parse_platform(v.get<std::string>());
        auto b = parse_platform(x.get<std::string>());
        if (a == Platform::any) {
          v = x;
        } else if (b != Platform::any && b != a) {
          notes.push_back("platform findings disagree (" + v.get<std::string>() + " vs " + x.get<std::string>() +
                          "); kept the first");
        }
        break;
      }
      case Dimension::isa_features: {
        IsaSet s;
        for (const auto& f : v) s.insert(parse_isa_feature(f.get<std::string>()));
        for (const auto& f : x) s.insert(parse_isa_feature(f.get<std::string>()));
        v = s.closure().names();
        break;
      }
      case Dimension::gpu_required:
        v = v.get<bool>() || x.get<bool>();
        break;
      case Dimension::io_intensity:
        if (parse_io_intensity(x.get<std::string>()) > parse_io_intensity(v.get<std::string>())) v = x;
        break;
    }
  }
  return v;
}

json default_value(Dimension d) {
  json b = to_json(default_bundle());
  return b.at(std::string(to_string(d))).at("value");
}

std::string cap(std::string s, std::size_t n) {
  if (s.size() > n) {
    s.resize(n - 3);
    s += "...";
  }
  return s;
}

}  // namespace

json synthesize(const std::vector<SubtaskFindings>& findings, const AgentConfig& config, std::vector<std::string>* log) {
  std::vector<std::string> notes;
  json doc = json::object();
  if (auto p = config.output_schema.find("properties"); p != config.output_schema.end()) {
    if (auto s = p->find("schema"); s != p->end() && s->contains("const")) doc["schema"] = s->at("const");
  }

  for (const auto& dim_name : config.dimensions()) {
    std::vector<const Finding*> all;
    for (const auto& sf : findings) {
      for (const auto& f : sf.findings) {
        if (f.dimension == dim_name) all.push_back(&f);
      }
    }
    auto dim = parse_dimension(dim_name);
    if (!dim) {
      // Opaque output field: the best-ranked finding wins outright.
      const Finding* best = nullptr;
      for (const auto* f : all) {
        if (!best || tier(*f) > tier(*best)) best = f;
      }
      doc[dim_name] = best ? best->value : json::array();
      if (!best) notes.push_back("no finding for " + dim_name);
      continue;
    }

    std::erase_if(all, [&](const Finding* f) {
      if (value_fits(*dim, f->value)) return false;
      notes.push_back("discarded " + dim_name + " finding from subtask " + std::to_string(f->subtask_id) +
                      " with unusable value " + f->value.dump());
      return true;
    });
    if (all.empty()) {
      doc[dim_name] = {{"value", default_value(*dim)},
                       {"confidence", "low"},
                       {"rationale", "no finding for " + dim_name + "; default value"},
                       {"evidence_refs", json::array()}};
      continue;
    }

    int best_tier = 0;
    for (const auto* f : all) best_tier = std::max(best_tier, tier(*f));
    std::vector<const Finding*> top;
    std::vector<const Finding*> rest;
    for (const auto* f : all) (tier(*f) == best_tier ? top : rest).push_back(f);

    json value = conservative_merge(*dim, top, notes);
    std::string rationale;
    std::vector<std::string> refs;
    for (const auto* f : top) {
      if (!f->detail.empty()) rationale += (rationale.empty() ? "" : "; ") + f->detail;
      if (!f->source.empty() && std::find(refs.begin(), refs.end(), f->source) == refs.end()) {
        refs.push_back(f->source);
      }
    }
    if (top.front()->measured && !rest.empty()) {
      rationale += "; measured history overrides " + std::to_string(rest.size()) + " static finding(s)";
    } else if (!rest.empty()) {
      rationale += "; outranked: ";
      for (std::size_t i = 0; i < rest.size(); ++i) {
        rationale += (i ? ", " : "") + rest[i]->value.dump() + " (" + std::string(to_string(rest[i]->confidence)) + ")";
      }
    }
    if (top.size() > 1) rationale += "; equal-confidence findings merged conservatively";
    const Finding* lead = top.front();
    Confidence conf = lead->measured ? Confidence::high : lead->confidence;
    doc[dim_name] = {{"value", value},
                     {"confidence", std::string(to_string(conf))},
                     {"rationale", cap(rationale, 1200)},
                     {"evidence_refs", refs}};
  }

  if (auto problems = validate_json_schema(doc, config.output_schema); !problems.empty()) {
    std::string msg = config.name + " output violates its schema: " + problems.front();
    if (problems.size() > 1) msg += " (+" + std::to_string(problems.size() - 1) + " more)";
    fail(errc::schema_violation, msg);
  }
  if (log) log->insert(log->end(), notes.begin(), notes.end());
  return doc;
}

StageReport run_agent(const AgentConfig& config, const std::string& input_digest, Reasoner& reasoner,
                      const ToolRegistry& tools, ToolCache& cache) {
  BudgetState usage;
  return run_agent(config, input_digest, reasoner, tools, cache, usage);
}

StageReport run_agent(const AgentConfig& config, const std::string& input_digest, Reasoner& reasoner,
                      const ToolRegistry& tools, ToolCache& cache, BudgetState& usage) {
  StageReport report;
  report.agent = config.name;
  report.subtasks = dependency_order(decompose(config, input_digest, reasoner, &report.log));
  for (const auto& s : report.subtasks) {
    auto f = run_subtask(s, reasoner, tools, cache, config, input_digest, report.findings, usage);
    report.log.insert(report.log.end(), f.notes.begin(), f.notes.end());
    report.findings.push_back(std::move(f));
  }
  report.usage = usage;
  report.output = synthesize(report.findings, config, &report.log);
  return report;
}

}  // namespace incisor
