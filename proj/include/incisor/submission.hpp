#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "incisor/constraints.hpp"

namespace incisor {

namespace fs = std::filesystem;

using EnvMap = std::map<std::string, std::string>;

struct InvocationContext {
  std::string command;
  std::vector<std::string> args;
  EnvMap env;
  std::vector<fs::path> wrapper_scripts;

  bool operator==(const InvocationContext&) const = default;
};

enum class WorkloadKind { compiled_binary, shell_script, interpreted_entry_point };

std::string_view to_string(WorkloadKind k) noexcept;
WorkloadKind parse_workload_kind(std::string_view s);

enum class ArtifactRole { source_tree, docs, build_files, evidence_file };

std::string_view to_string(ArtifactRole r) noexcept;
ArtifactRole parse_artifact_role(std::string_view s);

struct AuxArtifact {
  ArtifactRole role = ArtifactRole::evidence_file;
  fs::path path;
  std::optional<fs::path> staged;  // read-only snapshot under the job directory

  const fs::path& readable() const { return staged ? *staged : path; }
  bool operator==(const AuxArtifact&) const = default;
};

struct JobSpec {
  std::string job_id;
  WorkloadKind workload_kind = WorkloadKind::compiled_binary;
  fs::path entry_path;
  std::optional<fs::path> staged_entry;
  InvocationContext invocation;
  std::vector<AuxArtifact> aux_artifacts;
  std::optional<UserOverrides> user_overrides;
  std::vector<std::string> history_refs;

  const fs::path& analysis_entry() const { return staged_entry ? *staged_entry : entry_path; }
  bool bypasses_recommendation() const { return user_overrides && user_overrides->bypasses_recommendation(); }
  bool operator==(const JobSpec&) const = default;
};

// POSIX-style field splitting with single/double quotes and backslash escapes.
// No globbing, no parameter expansion.
struct ShellToken {
  std::string text;
  // Length of an unquoted NAME prefix followed by '=', or 0 when the token is
  // not an assignment word.
  std::size_t assignment_name_len = 0;
};

std::vector<ShellToken> shell_tokenize(std::string_view command);
std::string shell_quote(std::string_view word);

InvocationContext parse_invocation(std::string_view raw_command, const EnvMap& extra_env = {});

// "K=V ... args" with quoting such that parse_invocation reproduces env and args.
std::string render_invocation(const InvocationContext& ctx);

WorkloadKind classify_workload(const fs::path& entry_path);
WorkloadKind classify_workload_bytes(std::string_view head_bytes, const fs::path& name);

bool is_valid_job_id(std::string_view id) noexcept;

// Timestamp-ordered ids, strictly increasing within a process and tagged with
// the pid so concurrent processes do not collide.
class JobIdGenerator {
 public:
  std::string next();

 private:
  std::mutex mu_;
  long long last_us_ = 0;
};

std::string new_job_id();

struct NormalizeContext {
  fs::path working_dir = fs::current_path();
  // When set, artifacts are copied into <store_root>/jobs/<job_id>/artifacts/.
  std::optional<fs::path> store_root;
  std::optional<std::string> job_id;
};

// options keys mirror the CLI flags: job-src, docs, build-files, evidence,
// wrapper, job-history, ram, cloud, instance-type, constraints.
JobSpec normalize_submission(std::string_view raw_command, const std::map<std::string, std::string>& options,
                             const NormalizeContext& ctx = {});

json to_json(const InvocationContext& ctx);
InvocationContext invocation_from_json(const json& j);
json to_json(const JobSpec& spec);
JobSpec job_spec_from_json(const json& j);

}  // namespace incisor
