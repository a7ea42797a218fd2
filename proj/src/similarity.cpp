#include "incisor/similarity.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <unordered_map>

#include "incisor/error.hpp"

namespace incisor {

std::string_view to_string(GraphKind k) noexcept {
  return k == GraphKind::call_graph ? "call_graph" : "invocation_graph";
}

GraphKind parse_graph_kind(std::string_view s) {
  if (s == "call_graph") return GraphKind::call_graph;
  if (s == "invocation_graph") return GraphKind::invocation_graph;
  fail(errc::invalid_graph, "unknown graph kind '" + std::string(s) + "'");
}

int EvidenceGraph::add_node(std::string label) {
  int id = 0;
  for (const auto& n : nodes) id = std::max(id, n.id + 1);
  nodes.push_back({id, std::move(label)});
  return id;
}

void validate_graph(const EvidenceGraph& g) {
  std::set<int> ids;
  for (const auto& n : g.nodes) {
    if (!ids.insert(n.id).second) fail(errc::invalid_graph, "duplicate node id " + std::to_string(n.id));
    if (n.label.empty()) fail(errc::invalid_graph, "node " + std::to_string(n.id) + " has an empty label");
  }
  for (const auto& [s, d] : g.edges) {
    if (!ids.count(s) || !ids.count(d)) {
      fail(errc::invalid_graph, "edge " + std::to_string(s) + "->" + std::to_string(d) + " references a missing node");
    }
  }
}

json to_json(const EvidenceGraph& g) {
  json nodes = json::array();
  for (const auto& n : g.nodes) nodes.push_back({{"id", n.id}, {"label", n.label}});
  json edges = json::array();
  for (const auto& [s, d] : g.edges) edges.push_back(json::array({s, d}));
  return {{"kind", to_string(g.kind)}, {"nodes", nodes}, {"edges", edges}};
}

EvidenceGraph graph_from_json(const json& j) {
  EvidenceGraph g;
  try {
    g.kind = parse_graph_kind(j.at("kind").get<std::string>());
    for (const auto& n : j.at("nodes")) g.nodes.push_back({n.at("id").get<int>(), n.at("label").get<std::string>()});
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) fail(errc::invalid_graph, "edge must be a [src, dst] pair");
      g.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
  } catch (const json::exception& ex) {
    fail(errc::invalid_graph, std::string("malformed evidence graph: ") + ex.what());
  }
  validate_graph(g);
  return g;
}

EvidenceGraph load_evidence_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(errc::unreadable_file, "cannot read '" + path.string() + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(errc::invalid_graph, "'" + path.string() + "' is not valid JSON");
  return graph_from_json(j);
}

// ---------------------------------------------------------------------------

std::string_view classify_token(std::string_view t) {
  if (t.empty()) return "word";
  auto numeric = [](std::string_view s, bool allow_float) {
    if (s.empty()) return false;
    if (s[0] == '+' || s[0] == '-') s.remove_prefix(1);
    if (s.empty()) return false;
    if (!allow_float) return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc{} && p == s.data() + s.size() && std::isfinite(v);
  };
  if (numeric(t, false)) return "int";
  if (numeric(t, true)) return "float";
  if (t[0] == '-') return "flag";
  if (t.find('/') != std::string_view::npos || t[0] == '.' || t[0] == '~') return "path";
  return "word";
}

EvidenceGraph build_invocation_graph(const InvocationContext& ctx) {
  EvidenceGraph g;
  g.kind = GraphKind::invocation_graph;
  int root = g.add_node("invocation");
  for (const auto& a : ctx.args) {
    std::string type(classify_token(a));
    int arg = g.add_node("arg:" + type);
    int val = g.add_node(type + ":" + a);
    g.edges.emplace_back(root, arg);
    g.edges.emplace_back(arg, val);
  }
  for (const auto& [name, value] : ctx.env) {  // std::map: sorted by name
    int var = g.add_node("env:" + name);
    int val = g.add_node(std::string(classify_token(value)) + ":" + value);
    g.edges.emplace_back(root, var);
    g.edges.emplace_back(var, val);
  }
  return g;
}

EvidenceGraph call_graph_from_listing(const DisassemblyListing& listing) {
  EvidenceGraph g;
  std::unordered_map<std::string, int> ids;
  auto node = [&](const std::string& label) {
    auto it = ids.find(label);
    if (it != ids.end()) return it->second;
    int id = static_cast<int>(g.nodes.size());
    g.nodes.push_back({id, label});
    ids.emplace(label, id);
    return id;
  };
  std::set<std::pair<int, int>> seen;
  for (const auto& span : listing.symbol_spans) {
    int src = node(span.name);
    for (std::size_t i = span.begin; i < span.end; ++i) {
      const auto& line = listing.lines[i];
      if (!is_call(line)) continue;
      auto t = call_target(line);
      if (!t) continue;
      int dst = node(*t);
      if (seen.insert({src, dst}).second) g.edges.emplace_back(src, dst);
    }
  }
  return g;
}

EvidenceGraph import_graph(const ImportScan& scan, std::string_view entry_module) {
  EvidenceGraph g;
  std::map<std::string, int> ids;
  auto node = [&](const std::string& label) {
    auto [it, fresh] = ids.emplace(label, static_cast<int>(g.nodes.size()));
    if (fresh) g.nodes.push_back({it->second, label});
    return it->second;
  };
  node(std::string(entry_module));
  for (const auto& m : scan.modules) node(m);
  for (const auto& [from, to] : scan.edges) {
    int s = node(from);
    int d = node(to);
    if (s != d) g.edges.emplace_back(s, d);
  }
  return g;
}

EvidenceGraph symbol_graph(const ElfMetadata& meta) {
  EvidenceGraph g;
  int root = g.add_node("binary");
  std::set<std::string> names;
  for (const auto& s : meta.symbols) names.insert(s.name);
  for (const auto& d : meta.dynamic_deps) names.insert("lib:" + d);
  int next = 1;
  for (const auto& n : names) {
    g.nodes.push_back({next, n});
    g.edges.emplace_back(root, next++);
  }
  return g;
}

std::set<std::string> reachable_labels(const EvidenceGraph& g, const std::vector<std::string>& roots) {
  std::unordered_map<int, std::vector<int>> out;
  std::unordered_map<int, const std::string*> label;
  for (const auto& n : g.nodes) label[n.id] = &n.label;
  for (const auto& [s, d] : g.edges) out[s].push_back(d);
  std::set<int> seen;
  std::deque<int> queue;
  for (const auto& n : g.nodes) {
    if (std::find(roots.begin(), roots.end(), n.label) != roots.end() && seen.insert(n.id).second) {
      queue.push_back(n.id);
    }
  }
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop_front();
    for (int w : out[v]) {
      if (seen.insert(w).second) queue.push_back(w);
    }
  }
  std::set<std::string> result;
  for (int id : seen) result.insert(*label[id]);
  return result;
}

// ---------------------------------------------------------------------------

std::uint64_t WlCompressor::intern(const std::string& signature) {
  auto [it, fresh] = table_.emplace(signature, table_.size());
  return it->second;
}

std::vector<LabelCounts> wl_relabel(const EvidenceGraph& g, int iterations, WlCompressor& table) {
  validate_graph(g);
  const std::size_t n = g.nodes.size();
  std::unordered_map<int, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index[g.nodes[i].id] = i;
  std::vector<std::vector<std::size_t>> nbrs(n);
  for (const auto& [s, d] : g.edges) {
    nbrs[index[s]].push_back(index[d]);
    nbrs[index[d]].push_back(index[s]);
  }

  std::vector<std::uint64_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = table.intern("0:" + g.nodes[i].label);

  std::vector<LabelCounts> out;
  auto count = [&] {
    LabelCounts c;
    for (auto l : labels) ++c[l];
    out.push_back(std::move(c));
  };
  count();
  for (int it = 1; it <= iterations; ++it) {
    std::vector<std::uint64_t> next(n);
    for (std::size_t v = 0; v < n; ++v) {
      std::vector<std::uint64_t> ms;
      ms.reserve(nbrs[v].size());
      for (auto w : nbrs[v]) ms.push_back(labels[w]);
      std::sort(ms.begin(), ms.end());
      std::string sig = std::to_string(it) + ":" + std::to_string(labels[v]) + "(";
      for (auto l : ms) sig += std::to_string(l) + ",";
      sig += ")";
      next[v] = table.intern(sig);
    }
    labels = std::move(next);
    count();
  }
  return out;
}

std::vector<LabelCounts> wl_relabel(const EvidenceGraph& g, int iterations) {
  WlCompressor table;
  return wl_relabel(g, iterations, table);
}

namespace {

std::uint64_t dot(const std::vector<LabelCounts>& a, const std::vector<LabelCounts>& b) {
  std::uint64_t k = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    for (const auto& [label, ca] : a[i]) {
      auto it = b[i].find(label);
      if (it != b[i].end()) k += ca * it->second;
    }
  }
  return k;
}

}  // namespace

std::uint64_t wl_kernel(const EvidenceGraph& g1, const EvidenceGraph& g2, int iterations) {
  if (g1.kind != g2.kind) {
    fail(errc::kind_mismatch, "cannot compare a " + std::string(to_string(g1.kind)) + " with a " +
                                  std::string(to_string(g2.kind)));
  }
  WlCompressor table;
  auto a = wl_relabel(g1, iterations, table);
  auto b = wl_relabel(g2, iterations, table);
  return dot(a, b);
}

double normalized_similarity(const EvidenceGraph& g1, const EvidenceGraph& g2, int iterations) {
  if (g1.kind != g2.kind) {
    fail(errc::kind_mismatch, "cannot compare a " + std::string(to_string(g1.kind)) + " with a " +
                                  std::string(to_string(g2.kind)));
  }
  WlCompressor table;
  auto a = wl_relabel(g1, iterations, table);
  auto b = wl_relabel(g2, iterations, table);
  std::uint64_t k11 = dot(a, a);
  std::uint64_t k22 = dot(b, b);
  if (k11 == 0 || k22 == 0) fail(errc::empty_graph, "similarity is undefined for an empty graph");
  std::uint64_t k12 = dot(a, b);
  double s = k11 == k22 ? static_cast<double>(k12) / static_cast<double>(k11)
                        : static_cast<double>(k12) / std::sqrt(static_cast<double>(k11) * static_cast<double>(k22));
  return std::clamp(s, 0.0, 1.0);
}

// ---------------------------------------------------------------------------

std::vector<SimilarityMatch> find_similar_jobs(const EvidenceGraph& query_exec, const EvidenceGraph& query_inv,
                                               const std::vector<HistoryEntry>& history,
                                               const SimilarityOptions& options) {
  std::vector<SimilarityMatch> candidates;
  if (query_exec.empty()) return candidates;
  for (const auto& h : history) {
    if (h.exec_graph.empty() || h.exec_graph.kind != query_exec.kind) continue;
    double es = normalized_similarity(query_exec, h.exec_graph, options.iterations);
    if (es < options.exec_threshold) continue;
    SimilarityMatch m;
    m.job_id = h.job_id;
    m.created_at = h.created_at;
    m.executable_score = es;
    m.success = h.success;
    m.failure_reason = h.failure_reason;
    if (!query_inv.empty() && !h.inv_graph.empty() && h.inv_graph.kind == query_inv.kind) {
      m.invocation_score = normalized_similarity(query_inv, h.inv_graph, options.iterations);
    }
    m.note = "executable similarity passed the " + std::to_string(options.exec_threshold) +
             " threshold; invocation similarity ranks without a threshold";
    candidates.push_back(std::move(m));
  }

  std::sort(candidates.begin(), candidates.end(), [](const SimilarityMatch& a, const SimilarityMatch& b) {
    if (a.invocation_score != b.invocation_score) return a.invocation_score > b.invocation_score;
    if (a.created_at != b.created_at) return a.created_at > b.created_at;
    return a.job_id < b.job_id;
  });

  std::vector<SimilarityMatch> out;
  std::size_t successes = 0;
  std::set<std::string> reasons;
  for (auto& m : candidates) {
    if (m.success) {
      if (successes < options.max_successes) {
        ++successes;
        out.push_back(std::move(m));
      }
    } else if (reasons.insert(m.failure_reason).second) {
      out.push_back(std::move(m));
    }
  }
  return out;
}

json to_json(const SimilarityMatch& m) {
  json j{{"job_id", m.job_id},
         {"created_at", m.created_at},
         {"executable_score", m.executable_score},
         {"invocation_score", m.invocation_score},
         {"outcome", m.success ? "success" : "failure"}};
  if (!m.success) j["failure_reason"] = m.failure_reason;
  if (!m.note.empty()) j["note"] = m.note;
  return j;
}

}  // namespace incisor
