#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "incisor/constraints.hpp"
#include "incisor/submission.hpp"

namespace incisor {

// ---------------------------------------------------------------------------
// ELF metadata

enum class ElfClass { elf32, elf64 };

struct ElfMachine {
  enum class Kind { x86_64, aarch64, other };
  Kind kind = Kind::other;
  int code = 0;  // raw e_machine

  static constexpr int kX86_64 = 62;
  static constexpr int kAArch64 = 183;

  static ElfMachine from_code(int code);
  std::string name() const;
  bool operator==(const ElfMachine&) const = default;
};

struct ElfSymbol {
  std::string name;
  bool defined = false;
  bool operator==(const ElfSymbol&) const = default;
};

struct ElfMetadata {
  ElfMachine machine;
  ElfClass elf_class = ElfClass::elf64;
  bool little_endian = true;
  std::vector<std::string> dynamic_deps;  // DT_NEEDED, in file order
  std::vector<ElfSymbol> symbols;         // .dynsym then .symtab, deduplicated

  Platform platform() const;
  bool has_symbol_containing(std::string_view needle) const;
  bool has_dep_containing(std::string_view needle) const;
};

ElfMetadata parse_elf_header(const std::filesystem::path& path);
ElfMetadata parse_elf_bytes(std::span<const unsigned char> bytes);

// Printable runs of at least min_len characters, as `strings` reports them.
std::vector<std::string> extract_strings(const std::filesystem::path& path, std::size_t min_len = 4,
                                         std::size_t max_count = 200000);

// ---------------------------------------------------------------------------
// Disassembly listings (objdump-style text)

struct DisassemblyLine {
  std::string address;
  std::string bytes;
  std::string mnemonic;
  std::string operands;
};

struct SymbolSpan {
  std::string name;
  std::size_t begin = 0;  // first line index
  std::size_t end = 0;    // one past the last line index
};

struct DisassemblyListing {
  std::vector<DisassemblyLine> lines;
  std::vector<SymbolSpan> symbol_spans;  // ordered, non-overlapping

  bool empty() const { return lines.empty(); }
  const SymbolSpan* find_span(std::string_view name) const;
  const SymbolSpan* span_of_line(std::size_t line) const;
};

DisassemblyListing parse_listing(std::string_view text);
DisassemblyListing load_listing(const std::filesystem::path& path);

// Symbol named by the last "<...>" in an operand string, without @plt/@version
// suffixes or +offset.
std::optional<std::string> call_target(const DisassemblyLine& line);
bool is_call(const DisassemblyLine& line);

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string out;
};

ProcessResult run_process(const std::vector<std::string>& argv, std::chrono::milliseconds timeout);

// Produces listings either by running an external disassembler (configured via
// INCISOR_DISASSEMBLER) or, in fixture-only mode, by reading `.dis` files.
class DisassemblerAdapter {
 public:
  DisassemblerAdapter() = default;
  explicit DisassemblerAdapter(std::optional<std::filesystem::path> executable,
                               std::chrono::milliseconds timeout = std::chrono::seconds(60))
      : executable_(std::move(executable)), timeout_(timeout) {}

  static DisassemblerAdapter from_environment();

  bool fixture_only() const { return !executable_.has_value(); }

  struct Result {
    DisassemblyListing listing;
    std::string origin;  // "external:<exe>", "fixture:<path>" or "none"
  };

  Result disassemble(const std::filesystem::path& binary,
                     std::span<const std::filesystem::path> evidence_files = {}) const;

 private:
  std::optional<std::filesystem::path> executable_;
  std::chrono::milliseconds timeout_{60000};
};

// ---------------------------------------------------------------------------
// Evidence detectors

struct EvidenceFinding {
  Dimension dimension;
  json value;
  Confidence confidence = Confidence::low;
  std::string source;
  std::string detail;
};

struct EvidenceReport {
  std::vector<EvidenceFinding> findings;
};

IsaSet detect_isa_features(const DisassemblyListing& listing);

struct AllocationSite {
  std::string address;
  std::string symbol;     // enclosing symbol span, empty when outside any span
  std::string allocator;  // e.g. "malloc"
  std::optional<std::uint64_t> bytes;
  std::string detail;
};

inline const std::set<std::string> kDefaultAllocators{"malloc", "calloc", "aligned_alloc"};
inline constexpr std::size_t kAllocationScanWindow = 8;

std::vector<AllocationSite> extract_allocation_sizes(const DisassemblyListing& listing,
                                                     const std::set<std::string>& allocators = kDefaultAllocators);

Estimate<double> estimate_memory_gb(const std::vector<AllocationSite>& sites,
                                    const std::optional<std::set<std::string>>& reachable_filter = std::nullopt);

Estimate<int> detect_parallelism(const ElfMetadata& meta, const DisassemblyListing& listing, const EnvMap& env,
                                 const std::vector<std::string>& args = {},
                                 const std::vector<std::string>& strings = {});

struct AccelIoFindings {
  Estimate<bool> gpu_required;
  Estimate<int> gpu_count;
  Estimate<double> gpu_mem_gb;
  Estimate<IoIntensity> io_intensity;
};

AccelIoFindings detect_accel_and_io(const ElfMetadata& meta, const DisassemblyListing& listing,
                                    const std::vector<std::string>& strings = {});

struct ImportScan {
  std::set<std::string> modules;        // top-level names, local and external
  std::set<std::string> local_modules;  // subset resolved under the module roots
  std::vector<std::string> unknown_imports;
  std::vector<std::pair<std::string, std::string>> edges;  // importer -> imported (top-level names)
};

ImportScan scan_python_imports(const std::filesystem::path& entry_path,
                               const std::vector<std::filesystem::path>& module_roots = {});

// ---------------------------------------------------------------------------
// Calculator: exact rational arithmetic with byte units.

using Rational = boost::multiprecision::cpp_rational;

struct CalcResult {
  Rational exact;
  std::string unit;  // empty for dimensionless results

  double value() const { return exact.convert_to<double>(); }
  std::string text() const;
};

CalcResult calculate(std::string_view expression);

}  // namespace incisor
