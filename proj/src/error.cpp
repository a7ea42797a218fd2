#include "incisor/error.hpp"

namespace incisor {

std::string_view to_string(errc code) noexcept {
  switch (code) {
    case errc::empty_command: return "EmptyCommand";
    case errc::unbalanced_quote: return "UnbalancedQuote";
    case errc::unreadable_file: return "UnreadableFile";
    case errc::unknown_workload_kind: return "UnknownWorkloadKind";
    case errc::conflicting_overrides: return "ConflictingOverrides";
    case errc::invalid_job_id: return "InvalidJobId";
    case errc::not_an_elf: return "NotAnElf";
    case errc::truncated_header: return "TruncatedHeader";
    case errc::unsupported_class: return "UnsupportedClass";
    case errc::malformed_thread_count: return "MalformedThreadCount";
    case errc::syntax_unreadable: return "SyntaxUnreadable";
    case errc::parse_error: return "ParseError";
    case errc::division_by_zero: return "DivisionByZero";
    case errc::kind_mismatch: return "KindMismatch";
    case errc::empty_graph: return "EmptyGraph";
    case errc::invalid_graph: return "InvalidGraph";
    case errc::decomposition_invalid: return "DecompositionInvalid";
    case errc::schema_violation: return "SchemaViolation";
    case errc::duplicate_offer: return "DuplicateOffer";
    case errc::invariant_violation: return "InvariantViolation";
    case errc::unsorted_edges: return "UnsortedEdges";
    case errc::no_feasible_instance: return "NoFeasibleInstance";
    case errc::instance_not_found: return "InstanceNotFound";
    case errc::all_candidates_exhausted: return "AllCandidatesExhausted";
    case errc::store_unwritable: return "StoreUnwritable";
    case errc::duplicate_job_id: return "DuplicateJobId";
    case errc::not_found: return "NotFound";
    case errc::tool_failure: return "ToolFailure";
    case errc::remote_reasoner: return "RemoteReasoner";
  }
  return "Unknown";
}

}  // namespace incisor
