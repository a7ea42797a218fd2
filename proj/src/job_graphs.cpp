#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "incisor/analysis.hpp"
#include "incisor/error.hpp"
#include "incisor/similarity.hpp"

namespace incisor {

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<fs::path> evidence_files(const JobSpec& job) {
  std::vector<fs::path> out;
  for (const auto& a : job.aux_artifacts) {
    if (a.role == ArtifactRole::evidence_file) out.push_back(a.readable());
  }
  return out;
}

// Root "shell" linked to each command word the script runs, in order, with
// consecutive commands chained so the graph keeps some of the script's shape.
EvidenceGraph shell_graph(const fs::path& script) {
  EvidenceGraph g;
  int root = g.add_node("shell");
  std::ifstream in(script);
  std::string line;
  int prev = root;
  std::map<std::string, int> ids;
  while (std::getline(in, line)) {
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::vector<ShellToken> tokens;
    try {
      tokens = shell_tokenize(line);
    } catch (const error&) {
      continue;  // unbalanced quotes on one line, e.g. a heredoc body
    }
    auto word = std::find_if(tokens.begin(), tokens.end(), [](const ShellToken& t) { return t.assignment_name_len == 0; });
    if (word == tokens.end()) continue;
    std::string label = "cmd:" + fs::path(word->text).filename().string();
    auto [it, fresh] = ids.emplace(label, 0);
    if (fresh) it->second = g.add_node(label);
    g.edges.emplace_back(root, it->second);
    if (prev != root) g.edges.emplace_back(prev, it->second);
    prev = it->second;
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  return g;
}

}  // namespace

std::optional<fs::path> call_graph_evidence(const JobSpec& job) {
  for (const auto& p : evidence_files(job)) {
    if (ends_with(p.filename().string(), ".cg.json")) return p;
  }
  return std::nullopt;
}

EvidenceGraph build_exec_graph(const JobSpec& job, const DisassemblerAdapter& adapter) {
  if (auto cg = call_graph_evidence(job)) return load_evidence_graph(*cg);

  const fs::path& entry = job.analysis_entry();
  switch (job.workload_kind) {
    case WorkloadKind::compiled_binary: {
      auto ev = evidence_files(job);
      auto dis = adapter.disassemble(entry, ev);
      if (!dis.listing.empty()) {
        auto g = call_graph_from_listing(dis.listing);
        if (!g.empty()) return g;
      }
      return symbol_graph(parse_elf_header(entry));
    }
    case WorkloadKind::interpreted_entry_point: {
      std::vector<fs::path> roots;
      for (const auto& a : job.aux_artifacts) {
        if (a.role == ArtifactRole::source_tree) roots.push_back(a.readable());
      }
      auto scan = scan_python_imports(entry, roots);
      return import_graph(scan, entry.stem().string());
    }
    case WorkloadKind::shell_script:
      return shell_graph(entry);
  }
  return {};
}

}  // namespace incisor
