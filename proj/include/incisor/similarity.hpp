#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "incisor/analysis.hpp"
#include "incisor/constraints.hpp"
#include "incisor/submission.hpp"

namespace incisor {

enum class GraphKind { call_graph, invocation_graph };

std::string_view to_string(GraphKind k) noexcept;
GraphKind parse_graph_kind(std::string_view s);

struct GraphNode {
  int id = 0;
  std::string label;
  bool operator==(const GraphNode&) const = default;
};

struct EvidenceGraph {
  GraphKind kind = GraphKind::call_graph;
  std::vector<GraphNode> nodes;
  std::vector<std::pair<int, int>> edges;  // directed src -> dst

  bool empty() const { return nodes.empty(); }
  int add_node(std::string label);  // next free id
  bool operator==(const EvidenceGraph&) const = default;
};

// Throws invalid_graph on duplicate ids, dangling edges or empty labels.
void validate_graph(const EvidenceGraph& g);

json to_json(const EvidenceGraph& g);
EvidenceGraph graph_from_json(const json& j);
EvidenceGraph load_evidence_graph(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Graph construction

// "flag", "int", "float", "path" or "word".
std::string_view classify_token(std::string_view token);

EvidenceGraph build_invocation_graph(const InvocationContext& ctx);

// Symbols become nodes; calls between spans (and into external targets) become edges.
EvidenceGraph call_graph_from_listing(const DisassemblyListing& listing);

// Entry module plus its imports, as reported by scan_python_imports.
EvidenceGraph import_graph(const ImportScan& scan, std::string_view entry_module);

// Fallback when neither a listing nor an evidence file is available: a star
// from a "binary" root to every defined and imported symbol name.
EvidenceGraph symbol_graph(const ElfMetadata& meta);

inline const std::vector<std::string> kEntrySymbols{"main", "_start", "MAIN__"};

// Labels reachable along out-edges from any node whose label is in roots.
std::set<std::string> reachable_labels(const EvidenceGraph& g, const std::vector<std::string>& roots = kEntrySymbols);

// ---------------------------------------------------------------------------
// Weisfeiler-Lehman subtree kernel

inline constexpr int kDefaultWlIterations = 3;
inline constexpr double kDefaultExecThreshold = 0.8;

// Maps label signatures to compact ids. Share one instance across the graphs
// being compared so equal signatures get equal ids.
class WlCompressor {
 public:
  std::uint64_t intern(const std::string& signature);
  std::size_t size() const { return table_.size(); }

 private:
  std::map<std::string, std::uint64_t> table_;
};

using LabelCounts = std::map<std::uint64_t, std::uint64_t>;

// One label multiset per iteration 0..h.
std::vector<LabelCounts> wl_relabel(const EvidenceGraph& g, int iterations, WlCompressor& table);
std::vector<LabelCounts> wl_relabel(const EvidenceGraph& g, int iterations);

std::uint64_t wl_kernel(const EvidenceGraph& g1, const EvidenceGraph& g2, int iterations = kDefaultWlIterations);

double normalized_similarity(const EvidenceGraph& g1, const EvidenceGraph& g2,
                             int iterations = kDefaultWlIterations);

// ---------------------------------------------------------------------------
// History matching

struct HistoryEntry {
  std::string job_id;
  std::string created_at;  // ISO-8601 UTC, sortable
  EvidenceGraph exec_graph;
  EvidenceGraph inv_graph;
  bool success = false;
  std::string failure_reason;
};

struct SimilarityMatch {
  std::string job_id;
  std::string created_at;
  double executable_score = 0;
  double invocation_score = 0;
  bool success = false;
  std::string failure_reason;
  std::string note;
};

struct SimilarityOptions {
  int iterations = kDefaultWlIterations;
  double exec_threshold = kDefaultExecThreshold;
  std::size_t max_successes = 3;
};

std::vector<SimilarityMatch> find_similar_jobs(const EvidenceGraph& query_exec, const EvidenceGraph& query_inv,
                                               const std::vector<HistoryEntry>& history,
                                               const SimilarityOptions& options = {});

json to_json(const SimilarityMatch& m);

// ---------------------------------------------------------------------------
// Job-level graphs

// Executable-side graph for a submitted job: a call-graph evidence file when
// one accompanies the job, else the listing's call graph, the binary's symbol
// table, the Python import graph or a shell script's command graph.
EvidenceGraph build_exec_graph(const JobSpec& job, const DisassemblerAdapter& adapter);

// The call-graph evidence file attached to a job, if any (`*.cg.json`).
std::optional<std::filesystem::path> call_graph_evidence(const JobSpec& job);

}  // namespace incisor
