#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace incisor {

enum class errc {
  empty_command,
  unbalanced_quote,
  unreadable_file,
  unknown_workload_kind,
  conflicting_overrides,
  invalid_job_id,
  not_an_elf,
  truncated_header,
  unsupported_class,
  malformed_thread_count,
  syntax_unreadable,
  parse_error,
  division_by_zero,
  kind_mismatch,
  empty_graph,
  invalid_graph,
  decomposition_invalid,
  schema_violation,
  duplicate_offer,
  invariant_violation,
  unsorted_edges,
  no_feasible_instance,
  instance_not_found,
  all_candidates_exhausted,
  store_unwritable,
  duplicate_job_id,
  not_found,
  tool_failure,
  remote_reasoner,
};

std::string_view to_string(errc code) noexcept;

// Every failure the library reports is an incisor::error carrying one of the
// codes above; callers that need to distinguish cases switch on code().
class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

}  // namespace incisor
