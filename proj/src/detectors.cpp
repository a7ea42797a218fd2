#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "incisor/analysis.hpp"
#include "incisor/error.hpp"

namespace incisor {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool contains(std::string_view hay, std::string_view needle) { return hay.find(needle) != std::string_view::npos; }

// Operands split on commas outside (), [] and {}.
std::vector<std::string> split_operands(std::string_view ops) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char c : ops) {
    if (c == '(' || c == '[' || c == '{') ++depth;
    if (c == ')' || c == ']' || c == '}') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(cur);
      cur.clear();
      continue;
    }
    cur += c;
  }
  if (!cur.empty() || !out.empty()) out.push_back(cur);
  for (auto& o : out) {
    auto b = o.find_first_not_of(' ');
    auto e = o.find_last_not_of(' ');
    o = b == std::string::npos ? std::string{} : o.substr(b, e - b + 1);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// ISA

IsaSet detect_isa_features(const DisassemblyListing& listing) {
  IsaSet found;
  for (const auto& line : listing.lines) {
    const auto& m = line.mnemonic;
    const auto& ops = line.operands;
    if (contains(ops, "zmm") || contains(ops, "{k") || contains(ops, "{%k") || contains(m, "{k")) {
      found.insert(IsaFeature::avx512);
    }
    if (m.empty() || m[0] != 'v') continue;
    bool ymm = contains(ops, "ymm");
    if (ymm || contains(ops, "xmm")) found.insert(IsaFeature::avx);
    if (!ymm) continue;
    bool int_vector = m.starts_with("vp") && !m.starts_with("vpermil") && !m.starts_with("vperm2f128");
    bool avx2_only = m.starts_with("vbroadcasti128") || m.starts_with("vinserti128") ||
                     m.starts_with("vextracti128") || m.starts_with("vperm2i128") || m.starts_with("vgather") ||
                     m.starts_with("vpgather");
    if (int_vector || avx2_only) found.insert(IsaFeature::avx2);
  }
  return found.closure();
}

// ---------------------------------------------------------------------------
// Allocation sites

namespace {

// Register aliases per integer argument slot: SysV x86-64 and AAPCS64.
const std::array<std::vector<std::string>, 4> kArgRegs{{
    {"rdi", "edi", "di", "dil", "x0", "w0"},
    {"rsi", "esi", "si", "sil", "x1", "w1"},
    {"rdx", "edx", "dx", "dl", "x2", "w2"},
    {"rcx", "ecx", "cx", "cl", "x3", "w3"},
}};

// Argument slots whose product is the requested size.
std::vector<int> size_args(std::string_view allocator) {
  if (allocator == "calloc") return {0, 1};
  if (allocator == "aligned_alloc" || allocator == "realloc" || allocator == "memalign") return {1};
  if (allocator == "posix_memalign") return {2};
  return {0};
}

std::string bare_register(std::string_view operand) {
  std::string s(operand);
  if (!s.empty() && s[0] == '%') s.erase(0, 1);
  return lower(s);
}

int register_slot(std::string_view operand) {
  std::string r = bare_register(operand);
  for (int i = 0; i < static_cast<int>(kArgRegs.size()); ++i) {
    if (std::find(kArgRegs[i].begin(), kArgRegs[i].end(), r) != kArgRegs[i].end()) return i;
  }
  return -1;
}

std::optional<std::uint64_t> parse_immediate(std::string_view operand) {
  std::string s(operand);
  if (!s.empty() && (s[0] == '$' || s[0] == '#')) {
    s.erase(0, 1);
  } else if (s.empty() || !std::isdigit(static_cast<unsigned char>(s[0]))) {
    return std::nullopt;  // a bare token in AT&T syntax is a memory reference
  }
  std::uint64_t v = 0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    b += 2;
    base = 16;
  }
  auto [p, ec] = std::from_chars(b, e, v, base);
  if (ec != std::errc{} || p != e) return std::nullopt;
  return v;
}

constexpr std::string_view kNonWriting[] = {"cmp", "test", "push", "bt", "nop", "endbr64", "cmpl", "cmpq", "testl",
                                            "testq", "pushq", "jmp", "ret", "retq"};

bool writes_nothing(std::string_view m) {
  if (m.starts_with("j") || m.starts_with("cmp") || m.starts_with("test") || m.starts_with("nop")) return true;
  return std::find(std::begin(kNonWriting), std::end(kNonWriting), m) != std::end(kNonWriting);
}

struct Write {
  int slot = -1;
  std::optional<std::uint64_t> imm;  // nullopt: register-computed
};

// What an instruction does to the argument registers, if anything.
std::optional<Write> argument_write(const DisassemblyLine& line) {
  if (writes_nothing(line.mnemonic)) return std::nullopt;
  auto ops = split_operands(line.operands);
  if (ops.empty()) return std::nullopt;
  const bool att = line.operands.find('%') != std::string::npos || line.operands.find('$') != std::string::npos;
  const std::string& dst = att ? ops.back() : ops.front();
  int slot = register_slot(dst);
  if (slot < 0) return std::nullopt;

  Write w;
  w.slot = slot;
  const auto& m = line.mnemonic;
  bool is_mov = m == "mov" || m == "movl" || m == "movq" || m == "movabs" || m == "movabsq" || m == "movz" ||
                (m == "movw" && !att);
  if (ops.size() == 2 && is_mov) {
    w.imm = parse_immediate(att ? ops.front() : ops.back());
  } else if (ops.size() == 2 && (m == "xor" || m == "xorl" || m == "xorq" || m == "sub" || m == "subl") &&
             bare_register(ops.front()) == bare_register(ops.back())) {
    w.imm = 0;  // zeroing idiom
  }
  return w;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

}  // namespace

std::vector<AllocationSite> extract_allocation_sizes(const DisassemblyListing& listing,
                                                     const std::set<std::string>& allocators) {
  std::vector<AllocationSite> sites;
  for (std::size_t i = 0; i < listing.lines.size(); ++i) {
    const auto& line = listing.lines[i];
    if (!is_call(line)) continue;
    auto target = call_target(line);
    if (!target || !allocators.count(*target)) continue;

    AllocationSite site;
    site.address = line.address;
    site.allocator = *target;
    const SymbolSpan* span = listing.span_of_line(i);
    std::size_t lo = span ? span->begin : 0;
    if (span) site.symbol = span->name;
    if (i - lo > kAllocationScanWindow) lo = i - kAllocationScanWindow;

    std::vector<int> wanted = size_args(*target);
    std::vector<std::optional<Write>> found(wanted.size());
    for (std::size_t j = i; j-- > lo;) {
      const auto& prev = listing.lines[j];
      if (is_call(prev)) break;  // argument registers are clobbered across calls
      auto w = argument_write(prev);
      if (!w) continue;
      for (std::size_t k = 0; k < wanted.size(); ++k) {
        if (!found[k] && w->slot == wanted[k]) found[k] = w;
      }
      if (std::all_of(found.begin(), found.end(), [](const auto& f) { return f.has_value(); })) break;
    }

    std::uint64_t bytes = 1;
    bool known = true;
    std::string parts;
    for (std::size_t k = 0; k < wanted.size(); ++k) {
      if (!parts.empty()) parts += " x ";
      if (!found[k] || !found[k]->imm) {
        known = false;
        parts += "arg" + std::to_string(wanted[k]) + "=?";
        continue;
      }
      bytes *= *found[k]->imm;
      parts += hex(*found[k]->imm);
    }
    if (known) site.bytes = bytes;
    site.detail = site.allocator + "(" + parts + ") at " + site.address +
                  (site.symbol.empty() ? std::string{} : " in " + site.symbol) +
                  (known ? " = " + std::to_string(bytes) + " bytes" : ": size not an immediate");
    sites.push_back(std::move(site));
  }
  return sites;
}

Estimate<double> estimate_memory_gb(const std::vector<AllocationSite>& sites,
                                    const std::optional<std::set<std::string>>& reachable_filter) {
  constexpr double kGiB = 1073741824.0;
  long double total = 0;
  int known = 0;
  int unknown = 0;
  int filtered = 0;
  for (const auto& s : sites) {
    if (reachable_filter && !reachable_filter->count(s.symbol)) {
      ++filtered;
      continue;
    }
    if (s.bytes) {
      total += static_cast<long double>(*s.bytes);
      ++known;
    } else {
      ++unknown;
    }
  }

  Estimate<double> e;
  std::ostringstream why;
  if (known == 0) {
    e.value = kNoEvidenceMemoryGb;
    e.confidence = Confidence::low;
    why << "no allocation site with an immediate size";
    if (unknown) why << " (" << unknown << " register-computed sites)";
    why << "; using the " << kNoEvidenceMemoryGb << " GB no-evidence placeholder";
  } else {
    e.value = static_cast<double>(total / kGiB);
    e.confidence = unknown == 0 ? Confidence::high : Confidence::medium;
    why << "sum of " << known << " immediate allocation sizes = " << static_cast<std::uint64_t>(total) << " bytes";
    if (unknown) why << "; " << unknown << " sites with register-computed sizes excluded";
  }
  if (filtered) why << "; " << filtered << (filtered == 1 ? " site" : " sites") << " outside reachable code ignored";
  e.rationale = why.str();
  e.evidence_refs = {"extract_allocation_sizes"};
  if (reachable_filter) e.evidence_refs.push_back("reachability");
  return e;
}

// ---------------------------------------------------------------------------
// Parallelism

namespace {

bool omp_symbol(std::string_view s) {
  return s.starts_with("omp_") || s.starts_with("GOMP_") || s.starts_with("__kmpc_");
}

bool mpi_symbol(std::string_view s) { return s.starts_with("MPI_") || s.starts_with("PMPI_"); }

int parse_count(std::string_view what, std::string_view text) {
  std::string_view first = text.substr(0, text.find(','));  // OMP_NUM_THREADS may list nesting levels
  while (!first.empty() && first.front() == ' ') first.remove_prefix(1);
  while (!first.empty() && first.back() == ' ') first.remove_suffix(1);
  long long v = 0;
  auto [p, ec] = std::from_chars(first.data(), first.data() + first.size(), v);
  if (first.empty() || ec != std::errc{} || p != first.data() + first.size() || v < 1 || v > 1 << 20) {
    fail(errc::malformed_thread_count, std::string(what) + "='" + std::string(text) + "' is not a positive integer");
  }
  return static_cast<int>(v);
}

bool is_launcher(std::string_view a) {
  auto name = a.substr(a.rfind('/') == std::string_view::npos ? 0 : a.rfind('/') + 1);
  return name == "mpirun" || name == "mpiexec" || name == "srun" || name == "mpiexec.hydra" || name == "aprun";
}

std::optional<int> launcher_ranks(const std::vector<std::string>& args) {
  if (args.empty() || !is_launcher(args[0])) return std::nullopt;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const auto& a = args[i];
    if ((a == "-np" || a == "-n" || a == "--np" || a == "--ntasks") && i + 1 < args.size()) {
      return parse_count(a, args[i + 1]);
    }
    for (std::string_view p : {"-np=", "--np=", "--ntasks=", "-n="}) {
      if (a.starts_with(p)) return parse_count(p.substr(0, p.size() - 1), std::string_view(a).substr(p.size()));
    }
  }
  return std::nullopt;
}

}  // namespace

Estimate<int> detect_parallelism(const ElfMetadata& meta, const DisassemblyListing& listing, const EnvMap& env,
                                 const std::vector<std::string>& args, const std::vector<std::string>& strings) {
  std::vector<std::string> omp_evidence;
  std::vector<std::string> mpi_evidence;
  bool pthreads = false;

  for (const auto& d : meta.dynamic_deps) {
    if (contains(d, "libgomp") || contains(d, "libomp") || contains(d, "libiomp")) omp_evidence.push_back("dep " + d);
    if (contains(d, "libmpi") || contains(d, "libmpich")) mpi_evidence.push_back("dep " + d);
  }
  for (const auto& s : meta.symbols) {
    if (omp_symbol(s.name)) omp_evidence.push_back("symbol " + s.name);
    if (mpi_symbol(s.name)) mpi_evidence.push_back("symbol " + s.name);
    if (s.name == "pthread_create") pthreads = true;
  }
  for (const auto& line : listing.lines) {
    if (!is_call(line)) continue;
    auto t = call_target(line);
    if (!t) continue;
    if (omp_symbol(*t)) omp_evidence.push_back("call " + *t);
    if (mpi_symbol(*t)) mpi_evidence.push_back("call " + *t);
    if (*t == "pthread_create") pthreads = true;
  }
  for (const auto& s : strings) {
    if (omp_symbol(s)) omp_evidence.push_back("string " + s);
    if (mpi_symbol(s)) mpi_evidence.push_back("string " + s);
  }

  std::optional<int> threads;
  if (auto it = env.find("OMP_NUM_THREADS"); it != env.end()) threads = parse_count("OMP_NUM_THREADS", it->second);
  std::optional<int> ranks = launcher_ranks(args);

  auto summary = [](const std::vector<std::string>& ev) {
    std::string s = ev.front();
    if (ev.size() > 1) s += " (+" + std::to_string(ev.size() - 1) + " more)";
    return s;
  };

  Estimate<int> e;
  e.value = 1;
  e.confidence = Confidence::low;
  const bool omp = !omp_evidence.empty();
  const bool mpi = !mpi_evidence.empty();
  if (omp) e.evidence_refs.push_back("openmp-markers");
  if (mpi) e.evidence_refs.push_back("mpi-markers");
  if (threads) e.evidence_refs.push_back("env:OMP_NUM_THREADS");
  if (ranks) e.evidence_refs.push_back("launcher-ranks");

  std::ostringstream why;
  const int per_rank = omp && threads ? *threads : 1;
  if (omp && threads) {
    e.value = *threads;
    e.confidence = Confidence::high;
    why << "OpenMP runtime in use (" << summary(omp_evidence) << ") and OMP_NUM_THREADS=" << *threads;
  }
  if (ranks) {
    e.value = per_rank * *ranks;
    e.confidence = mpi ? Confidence::high : Confidence::medium;
    if (why.tellp() > 0) why << "; ";
    why << "launcher starts " << *ranks << " ranks";
    if (mpi) {
      why << " of an MPI program (" << summary(mpi_evidence) << ")";
    } else {
      why << " but no MPI markers were found";
    }
    if (per_rank > 1) why << "; " << *ranks << " ranks x " << per_rank << " threads";
  }
  if (!(omp && threads) && !ranks) {
    if (threads) {
      why << "OMP_NUM_THREADS=" << *threads << " is set but the program shows no OpenMP usage; "
          << "the setting has no effect, assuming 1 CPU";
    } else if (omp) {
      why << "OpenMP runtime in use (" << summary(omp_evidence) << ") but no thread count is configured";
    } else if (mpi) {
      why << "MPI program (" << summary(mpi_evidence) << ") without a launcher rank count";
    } else if (pthreads) {
      why << "pthread_create present but the thread count is not statically visible";
    } else {
      why << "no parallel-construct evidence and no thread configuration; assuming 1 CPU";
    }
  } else if (threads && !omp) {
    why << "; OMP_NUM_THREADS=" << *threads << " ignored, no OpenMP usage";
  }
  e.rationale = why.str();
  return e;
}

// ---------------------------------------------------------------------------
// Accelerators and I/O

namespace {

bool gpu_dep(std::string_view dep) {
  std::string d = lower(dep);
  for (std::string_view m : {"cuda", "cudart", "rocm", "hip", "cublas"}) {
    if (contains(d, m)) return true;
  }
  return false;
}

bool gpu_symbol(std::string_view s) {
  return s.starts_with("cuda") || s.starts_with("__cuda") || s.starts_with("cublas") ||
         (s.starts_with("cu") && s.size() > 2 && std::isupper(static_cast<unsigned char>(s[2]))) ||
         s.starts_with("hip") || s.starts_with("roc");
}

bool gpu_string(std::string_view s) {
  std::string l = lower(s);
  return contains(l, "libcuda") || contains(l, "libcudart") || contains(l, "libcublas") || contains(l, "libamdhip") ||
         contains(l, "librocm");
}

bool heavy_io_symbol(std::string_view s) {
  return s.starts_with("MPI_File_") || s.starts_with("PMPI_File_") || s.starts_with("H5") || s.starts_with("adios") ||
         s.starts_with("nc_") || s.starts_with("ncmpi_");
}

bool heavy_io_dep(std::string_view dep) {
  std::string d = lower(dep);
  return contains(d, "hdf5") || contains(d, "adios") || contains(d, "pnetcdf");
}

constexpr std::string_view kLargeFileSymbols[] = {"fopen64", "open64", "lseek64", "pread64", "pwrite64",
                                                  "mmap64",  "fseeko64", "ftello64", "sendfile64", "openat64"};

bool large_file_symbol(std::string_view s) {
  return std::find(std::begin(kLargeFileSymbols), std::end(kLargeFileSymbols), s) != std::end(kLargeFileSymbols);
}

}  // namespace

AccelIoFindings detect_accel_and_io(const ElfMetadata& meta, const DisassemblyListing& listing,
                                    const std::vector<std::string>& strings) {
  std::vector<std::string> gpu;
  std::vector<std::string> heavy;
  std::vector<std::string> moderate;

  for (const auto& d : meta.dynamic_deps) {
    if (gpu_dep(d)) gpu.push_back("dep " + d);
    if (heavy_io_dep(d)) heavy.push_back("dep " + d);
  }
  auto scan_symbol = [&](std::string_view name, std::string_view how) {
    if (gpu_symbol(name)) gpu.push_back(std::string(how) + " " + std::string(name));
    if (heavy_io_symbol(name)) heavy.push_back(std::string(how) + " " + std::string(name));
    if (large_file_symbol(name)) moderate.push_back(std::string(how) + " " + std::string(name));
  };
  for (const auto& s : meta.symbols) scan_symbol(s.name, "symbol");
  for (const auto& line : listing.lines) {
    if (!is_call(line)) continue;
    if (auto t = call_target(line)) scan_symbol(*t, "call");
  }
  for (const auto& s : strings) {
    if (gpu_string(s)) gpu.push_back("string " + s);
    if (large_file_symbol(s)) moderate.push_back("string " + s);
  }

  auto first = [](const std::vector<std::string>& v) {
    return v.front() + (v.size() > 1 ? " (+" + std::to_string(v.size() - 1) + " more)" : std::string{});
  };

  AccelIoFindings f;
  if (!gpu.empty()) {
    f.gpu_required = {true, Confidence::high, "GPU library usage: " + first(gpu), {"gpu-markers"}};
    f.gpu_count = {1, Confidence::low, "device count is not statically visible; assuming one device", {}};
    f.gpu_mem_gb = {0.0, Confidence::low, "device memory requirement is not statically visible", {}};
  } else {
    f.gpu_required = {false, Confidence::medium, "no CUDA/ROCm/HIP/cuBLAS dependency or symbol", {"gpu-markers"}};
    f.gpu_count = {0, Confidence::medium, "no GPU required", {"gpu-markers"}};
    f.gpu_mem_gb = {0.0, Confidence::medium, "no GPU required", {"gpu-markers"}};
  }

  if (!heavy.empty()) {
    f.io_intensity = {IoIntensity::heavy, Confidence::high, "parallel I/O library usage: " + first(heavy),
                      {"io-markers"}};
  } else if (!moderate.empty()) {
    f.io_intensity = {IoIntensity::moderate, Confidence::medium, "large-file I/O interfaces: " + first(moderate),
                      {"io-markers"}};
  } else {
    f.io_intensity = {IoIntensity::minimal, Confidence::medium, "no parallel I/O (MPI-IO, HDF5, ADIOS) or large-file markers",
                      {"io-markers"}};
  }
  return f;
}

}  // namespace incisor
