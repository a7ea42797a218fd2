#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "incisor/analysis.hpp"
#include "incisor/catalog.hpp"
#include "incisor/constraints.hpp"
#include "incisor/records.hpp"
#include "incisor/selector.hpp"
#include "incisor/similarity.hpp"
#include "incisor/submission.hpp"

namespace incisor {

// ---------------------------------------------------------------------------
// Configuration

struct Budgets {
  int max_iterations_per_subtask = 12;
  int max_total_tool_calls = 120;
  double per_tool_timeout_s = 60;
  long long token_budget = 200000;  // ~4 characters per token

  bool operator==(const Budgets&) const = default;
};

// Throws invariant_violation unless every budget is positive.
void validate_budgets(const Budgets& b);

struct Subtask {
  int id = 0;
  std::string description;
  std::vector<std::string> target_dimensions;
  std::vector<int> depends_on;

  bool operator==(const Subtask&) const = default;
};

json to_json(const Subtask& s);
Subtask subtask_from_json(const json& j);

struct AgentConfig {
  std::string name;
  std::string driver_prompt;
  json output_schema;
  Budgets budgets;
  std::vector<std::string> tool_registry;
  std::vector<Subtask> subtasks;  // the fixed decomposition

  // Top-level output properties the agent must produce (schema properties
  // other than "schema").
  std::vector<std::string> dimensions() const;
  bool tool_enabled(std::string_view tool) const;
};

// Throws invariant_violation when the schema is unusable, the registry is
// empty or the budgets are not positive.
void validate_agent_config(const AgentConfig& c);

// Reads <dir>/prompt.md, <dir>/schema.json and <dir>/config.json.
AgentConfig load_agent_config(const std::filesystem::path& dir);

// INCISOR_CONFIG_DIR, else the configs/ directory shipped with the sources.
std::filesystem::path default_config_root();

// ---------------------------------------------------------------------------
// Tools and the shared results cache

struct ToolCall {
  std::string tool;
  json args = json::object();

  // Tool name plus the arguments with sorted keys and lexically normalized
  // path strings.
  std::string cache_key() const;
};

enum class ToolStatus { ok, error, timeout };
std::string_view to_string(ToolStatus s) noexcept;

struct ToolResult {
  ToolStatus status = ToolStatus::ok;
  json payload;
  double elapsed_s = 0;
  bool cached = false;
};

using ToolFn = std::function<json(const json& args)>;

class ToolRegistry {
 public:
  void add(std::string name, ToolFn fn);
  bool has(std::string_view name) const;
  std::vector<std::string> names() const;

  // Runs the tool on a worker thread. A call that outlives the timeout is
  // abandoned (the worker is detached) and reported as a timeout; thrown
  // exceptions become error results.
  ToolResult execute(const ToolCall& call, std::chrono::milliseconds timeout) const;

  // How many times the underlying tool actually ran.
  std::size_t executions(std::string_view name) const;
  std::size_t total_executions() const;
  std::map<std::string, std::size_t> execution_counts() const;

 private:
  struct Entry {
    ToolFn fn;
    std::shared_ptr<std::atomic<std::size_t>> count = std::make_shared<std::atomic<std::size_t>>(0);
  };
  std::map<std::string, Entry, std::less<>> tools_;
};

class ToolCache {
 public:
  std::optional<ToolResult> find(const std::string& key) const;
  void store(const std::string& key, const ToolResult& result);
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, ToolResult> entries_;
};

// ---------------------------------------------------------------------------
// Findings

struct Finding {
  int subtask_id = 0;
  std::string dimension;
  json value;
  Confidence confidence = Confidence::low;
  std::string source;  // tool or rule that produced it
  std::string detail;
  bool measured = false;  // observed at runtime by an earlier job, not inferred

  bool operator==(const Finding&) const = default;
};

json to_json(const Finding& f);
Finding finding_from_json(const json& j, int subtask_id);

struct Observation {
  ToolCall call;
  ToolResult result;
};

struct SubtaskFindings {
  int subtask_id = 0;
  std::vector<Finding> findings;
  std::vector<std::string> notes;
  std::vector<Observation> observations;
  int iterations = 0;
  bool budget_exhausted = false;
};

// ---------------------------------------------------------------------------
// Reasoners

struct SubtaskContext {
  const AgentConfig& config;
  const Subtask& subtask;
  const std::string& input_digest;
  const std::vector<SubtaskFindings>& prior;
  const std::vector<Observation>& observations;
};

struct Action {
  enum class Kind { call_tool, finish };
  Kind kind = Kind::finish;
  ToolCall call;
  std::vector<Finding> findings;
  std::string thought;
};

class Reasoner {
 public:
  virtual ~Reasoner() = default;
  virtual std::string name() const = 0;
  // nullopt: the reasoner has no opinion and the fixed decomposition is used.
  virtual std::optional<std::vector<Subtask>> propose_decomposition(const AgentConfig& config,
                                                                    const std::string& input_digest) = 0;
  virtual Action next_action(const SubtaskContext& ctx) = 0;
  // Findings to salvage from whatever was observed when the budget ran out.
  virtual std::vector<Finding> best_effort(const SubtaskContext&) { return {}; }
};

// Deterministic analyst that encodes the manual analysis order: platform and
// ISA from the binary, then threads, memory, accelerators, I/O and disk.
class RuleBasedReasoner : public Reasoner {
 public:
  std::string name() const override { return "rules"; }
  std::optional<std::vector<Subtask>> propose_decomposition(const AgentConfig&, const std::string&) override {
    return std::nullopt;
  }
  Action next_action(const SubtaskContext& ctx) override;
  std::vector<Finding> best_effort(const SubtaskContext& ctx) override;
};

struct RemoteReasonerOptions {
  std::string endpoint;  // http://host:port/path
  std::string model;
  std::string api_key;
  std::chrono::seconds timeout{120};
  std::optional<std::filesystem::path> transcript;  // jsonl, one line per exchange

  // INCISOR_REASONER_ENDPOINT (required), INCISOR_REASONER_MODEL,
  // INCISOR_REASONER_API_KEY. Throws remote_reasoner when no endpoint is set.
  static RemoteReasonerOptions from_environment();
};

// Chat-completion client. Replies must carry a JSON object in
// choices[0].message.content.
class RemoteReasoner : public Reasoner {
 public:
  explicit RemoteReasoner(RemoteReasonerOptions options);
  std::string name() const override { return "remote"; }
  std::optional<std::vector<Subtask>> propose_decomposition(const AgentConfig& config,
                                                            const std::string& input_digest) override;
  Action next_action(const SubtaskContext& ctx) override;

  std::size_t requests() const { return requests_; }

 private:
  json complete(const std::string& system, const std::string& user);

  RemoteReasonerOptions options_;
  std::size_t requests_ = 0;
};

// ---------------------------------------------------------------------------
// Harness

// Problems with a proposed decomposition; empty when it covers every
// dimension, ids are unique and depends_on is acyclic over known ids.
std::vector<std::string> check_decomposition(const std::vector<Subtask>& subtasks,
                                             const std::vector<std::string>& dimensions);

// The configured sequence restricted to the schema's dimensions, plus one
// subtask for each dimension it leaves uncovered.
std::vector<Subtask> fixed_decomposition(const AgentConfig& config);

// Throws decomposition_invalid only if the fallback is itself invalid.
std::vector<Subtask> decompose(const AgentConfig& config, const std::string& input_digest, Reasoner& reasoner,
                               std::vector<std::string>* log = nullptr);

// Subtasks in dependency order, stable with respect to the input order.
std::vector<Subtask> dependency_order(const std::vector<Subtask>& subtasks);

struct BudgetState {
  int tool_calls = 0;
  long long tokens = 0;
};

SubtaskFindings run_subtask(const Subtask& subtask, Reasoner& reasoner, const ToolRegistry& tools, ToolCache& cache,
                            const AgentConfig& config, const std::string& input_digest,
                            const std::vector<SubtaskFindings>& prior, BudgetState& state);

// Merges the findings into one output document (constraint-bundle/1 for the
// estimation agent) and validates it against the schema. Throws
// schema_violation.
json synthesize(const std::vector<SubtaskFindings>& findings, const AgentConfig& config,
                std::vector<std::string>* log = nullptr);

struct StageReport {
  std::string agent;
  std::vector<Subtask> subtasks;
  std::vector<SubtaskFindings> findings;
  json output;
  std::vector<std::string> log;
  BudgetState usage;
};

// Decompose, run each subtask, synthesize. `usage` carries tool-call and
// token consumption across agents that share one job's budget.
StageReport run_agent(const AgentConfig& config, const std::string& input_digest, Reasoner& reasoner,
                      const ToolRegistry& tools, ToolCache& cache, BudgetState& usage);
StageReport run_agent(const AgentConfig& config, const std::string& input_digest, Reasoner& reasoner,
                      const ToolRegistry& tools, ToolCache& cache);

// ---------------------------------------------------------------------------
// Tool suites

struct EstimationContext {
  JobSpec job;
  DisassemblerAdapter adapter;
  HistoryEvidence history;

  std::mutex mu;  // guards the memo below; tools may run on abandoned threads
  std::map<std::string, std::shared_ptr<const DisassemblerAdapter::Result>> listings;
  std::map<std::string, std::shared_ptr<const ElfMetadata>> elf;
  std::map<std::string, std::shared_ptr<const std::vector<std::string>>> strings;

  std::shared_ptr<const DisassemblerAdapter::Result> listing_for(const std::filesystem::path& p);
  std::shared_ptr<const ElfMetadata> elf_for(const std::filesystem::path& p);
  std::shared_ptr<const std::vector<std::string>> strings_for(const std::filesystem::path& p);
  std::vector<std::filesystem::path> evidence_files() const;
};

void add_estimation_tools(ToolRegistry& registry, std::shared_ptr<EstimationContext> ctx);

struct SelectionContext {
  Catalog catalog;
};

void add_selection_tools(ToolRegistry& registry, std::shared_ptr<const SelectionContext> ctx);

// Shared arithmetic tool (calculate()).
void add_calculator_tool(ToolRegistry& registry);

json estimation_digest(const JobSpec& job, const HistoryEvidence& history);
json selection_digest(const ConstraintBundle& bundle, const Catalog& catalog);

// ---------------------------------------------------------------------------
// Two-stage pipeline

struct PipelineOptions {
  std::filesystem::path config_root = default_config_root();
  DisassemblerAdapter adapter = DisassemblerAdapter::from_environment();
  SimilarityOptions similarity;
  std::optional<Budgets> budgets;  // replaces the configured budgets when set
};

struct PipelineResult {
  ConstraintBundle bundle;
  std::vector<InstancePreference> preferences;
  bool bypassed = false;
  EvidenceGraph exec_graph;
  EvidenceGraph inv_graph;
  HistoryEvidence history;
  std::optional<StageReport> estimation;
  std::optional<StageReport> selection;
  std::map<std::string, std::size_t> tool_executions;
  std::vector<std::string> log;
};

// Throws schema_violation, instance_not_found (bypass naming an unknown
// instance) or no_feasible_instance.
PipelineResult run_pipeline(const JobSpec& job, const Catalog& catalog, const RecordStore* store,
                            Reasoner& reasoner, const PipelineOptions& options = {});

}  // namespace incisor
