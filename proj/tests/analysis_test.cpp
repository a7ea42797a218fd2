#include <gtest/gtest.h>

#include <random>

#include "fixtures/elf_writer.hpp"
#include "fixtures/generate.hpp"
#include "incisor/analysis.hpp"
#include "incisor/error.hpp"
#include "support/test_support.hpp"

using namespace incisor;
using namespace incisor::testing;
namespace fx = incisor::fixtures;

namespace {

constexpr std::uint64_t kGiB = 1ull << 30;

errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no incisor::error thrown";
  return errc::invariant_violation;
}

DisassemblyListing listing_of(const std::vector<fx::ListingSymbol>& syms) {
  return parse_listing(fx::render_listing("t", syms));
}

std::uint64_t total_bytes(const std::vector<AllocationSite>& sites, const std::set<std::string>* only = nullptr) {
  std::uint64_t t = 0;
  for (const auto& s : sites) {
    if (s.bytes && (!only || only->count(s.symbol))) t += *s.bytes;
  }
  return t;
}

std::vector<std::string> names(const ElfMetadata& m) {
  std::vector<std::string> out;
  for (const auto& s : m.symbols) out.push_back(s.name);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// ELF

TEST(Elf, CgFixtureHeaderDepsAndSymbols) {
  auto meta = parse_elf_header(cg_binary());
  EXPECT_EQ(meta.elf_class, ElfClass::elf64);
  EXPECT_TRUE(meta.little_endian);
  EXPECT_EQ(meta.machine.kind, ElfMachine::Kind::x86_64);
  EXPECT_EQ(meta.platform(), Platform::x86_64);
  EXPECT_EQ(meta.dynamic_deps, (std::vector<std::string>{"libgomp.so.1", "libm.so.6", "libc.so.6"}));
  EXPECT_TRUE(meta.has_symbol_containing("GOMP_parallel"));
  EXPECT_TRUE(meta.has_dep_containing("gomp"));
  auto n = names(meta);
  EXPECT_EQ(n.size(), 11u);
  EXPECT_EQ(n.front(), "main");
}

TEST(Elf, ThirtyTwoBitBigEndianAarch64Image) {
  fx::ElfImage img;
  img.is64 = false;
  img.little_endian = false;
  img.machine = 183;
  img.needed = {"libfoo.so"};
  img.symbols = {{"main", true}, {"puts", false}};
  auto bytes = fx::build_elf(img);
  auto meta = parse_elf_bytes(bytes);
  EXPECT_EQ(meta.elf_class, ElfClass::elf32);
  EXPECT_FALSE(meta.little_endian);
  EXPECT_EQ(meta.platform(), Platform::aarch64);
  EXPECT_EQ(meta.dynamic_deps, std::vector<std::string>{"libfoo.so"});
  ASSERT_EQ(meta.symbols.size(), 2u);
  EXPECT_TRUE(meta.symbols[0].defined);
  EXPECT_FALSE(meta.symbols[1].defined);
}

TEST(Elf, UnknownMachineMapsToAny) {
  fx::ElfImage img;
  img.machine = 243;  // RISC-V
  auto meta = parse_elf_bytes(fx::build_elf(img));
  EXPECT_EQ(meta.machine.kind, ElfMachine::Kind::other);
  EXPECT_EQ(meta.machine.code, 243);
  EXPECT_EQ(meta.platform(), Platform::any);
}

TEST(Elf, MalformedInputsAreTyped) {
  std::vector<unsigned char> bytes = fx::build_elf(fx::ElfImage{});
  EXPECT_EQ(code_of([&] { parse_elf_bytes(std::span(bytes).first(3)); }), errc::truncated_header);
  EXPECT_EQ(code_of([&] { parse_elf_bytes(std::span(bytes).first(40)); }), errc::truncated_header);
  auto bad = bytes;
  bad[4] = 7;
  EXPECT_EQ(code_of([&] { parse_elf_bytes(bad); }), errc::unsupported_class);
  bad = bytes;
  bad[1] = 'X';
  EXPECT_EQ(code_of([&] { parse_elf_bytes(bad); }), errc::not_an_elf);
  EXPECT_EQ(code_of([] { parse_elf_header(fixture("jobs/python/reduce.py")); }), errc::not_an_elf);
  EXPECT_EQ(code_of([] { parse_elf_header("/no/such/file"); }), errc::unreadable_file);
}

TEST(Elf, CorruptSectionTableFallsBackToHeaderFields) {
  auto bytes = fx::build_elf(fx::cg_elf());
  // Point the section table past the end of the file.
  bytes[40] = 0xff;
  bytes[41] = 0xff;
  bytes[42] = 0xff;
  auto meta = parse_elf_bytes(bytes);
  EXPECT_EQ(meta.platform(), Platform::x86_64);
  EXPECT_TRUE(meta.symbols.empty());
  EXPECT_TRUE(meta.dynamic_deps.empty());
}

TEST(Elf, RandomTruncationNeverCrashes) {
  auto bytes = fx::build_elf(fx::cg_elf());
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    auto copy = bytes;
    copy.resize(rng() % bytes.size());
    for (int k = 0; k < 4 && !copy.empty(); ++k) copy[rng() % copy.size()] = static_cast<unsigned char>(rng());
    try {
      parse_elf_bytes(copy);
    } catch (const error&) {
    }
  }
  SUCCEED();
}

TEST(Strings, ExtractsPrintableRuns) {
  TempDir dir("strings");
  std::string blob = std::string("\x01\x02", 2) + "libgomp.so.1" + std::string("\x00\xff", 2) + "abc" +
                     std::string("\x00", 1) + "GOMP_parallel";
  write_file(dir / "b", blob);
  auto s = extract_strings(dir / "b");
  EXPECT_EQ(s, (std::vector<std::string>{"libgomp.so.1", "GOMP_parallel"}));
}

// ---------------------------------------------------------------------------
// Listings

TEST(Listing, ParsesSpansAndCalls) {
  auto l = load_listing(fixture("jobs/cg/cg.D.x.dis"));
  ASSERT_EQ(l.symbol_spans.size(), 6u);
  EXPECT_EQ(l.symbol_spans[0].name, "main");
  EXPECT_EQ(l.symbol_spans[1].name, "alloc_space");
  const auto* span = l.find_span("alloc_space");
  ASSERT_NE(span, nullptr);
  EXPECT_EQ(span->end - span->begin, 25u);
  std::size_t calls = 0;
  for (const auto& line : l.lines) calls += is_call(line);
  EXPECT_EQ(calls, 14u);  // grep -c call on the fixture
}

TEST(Listing, CallTargetStripsPltAndOffsets) {
  DisassemblyLine a{"1", "", "call", "401030 <malloc@plt>"};
  DisassemblyLine b{"2", "", "callq", "*0x2fe2(%rip)        # 404018 <free@GLIBC_2.2.5>"};
  DisassemblyLine c{"3", "", "bl", "4005d0 <compute+0x10>"};
  DisassemblyLine d{"4", "", "mov", "$0x1,%eax"};
  EXPECT_EQ(call_target(a), "malloc");
  EXPECT_EQ(call_target(b), "free");
  EXPECT_EQ(call_target(c), "compute");
  EXPECT_TRUE(is_call(a));
  EXPECT_TRUE(is_call(c));
  EXPECT_FALSE(is_call(d));
}

TEST(Listing, IntelSyntaxAndContinuationLines) {
  std::string text =
      "0000000000001000 <main>:\n"
      "    1000:\tbf 00 00 00 40       \tmov    edi,0x40000000\n"
      "    1005:\te8 00 00 00 00       \tcall   1010 <malloc@plt>\n"
      "    100a:\t48 b8 00 00 00 00 00 \tmovabs rax,0x0\n"
      "    1011:\t00 00 00 \n";
  auto l = parse_listing(text);
  ASSERT_EQ(l.lines.size(), 3u);
  auto sites = extract_allocation_sizes(l);
  ASSERT_EQ(sites.size(), 1u);
  EXPECT_EQ(sites[0].bytes, 0x40000000u);
  EXPECT_EQ(sites[0].symbol, "main");
}

// ---------------------------------------------------------------------------
// Allocation sizes

TEST(Allocations, CgReachableAllocationsSumToSixteenGiB) {
  auto l = load_listing(fixture("jobs/cg/cg.D.x.dis"));
  auto sites = extract_allocation_sizes(l);
  ASSERT_EQ(sites.size(), 8u);
  // 2 x 0xfbc5200 + 0x1000000 * 8 + 3 x 0x100000000 + 0xd8875c00
  const std::uint64_t expected = 2ull * 0xfbc5200 + 0x1000000ull * 8 + 3ull * 0x100000000 + 0xd8875c00ull;
  ASSERT_EQ(expected, 16 * kGiB);
  std::set<std::string> alloc_space{"alloc_space"};
  EXPECT_EQ(total_bytes(sites, &alloc_space), 16 * kGiB);
  EXPECT_EQ(total_bytes(sites), 17 * kGiB);  // the debug buffer is unreachable

  auto cg = load_evidence_graph(fixture("jobs/cg/cg.D.x.cg.json"));
  auto reachable = reachable_labels(cg);
  EXPECT_FALSE(reachable.count("init_debug_buffers"));
  auto e = estimate_memory_gb(sites, reachable);
  EXPECT_DOUBLE_EQ(e.value, 16.0);
  EXPECT_EQ(e.confidence, Confidence::high);
  auto unfiltered = estimate_memory_gb(sites);
  EXPECT_DOUBLE_EQ(unfiltered.value, 17.0);
}

TEST(Allocations, CallocMultipliesBothArguments) {
  auto l = listing_of({{"f", {"mov $0x8,%esi", "mov $0x1000000,%edi", "call <calloc@plt>"}}});
  auto sites = extract_allocation_sizes(l);
  ASSERT_EQ(sites.size(), 1u);
  EXPECT_EQ(sites[0].bytes, 0x8000000u);
}

TEST(Allocations, RegisterComputedSizesAreUnknown) {
  auto l = listing_of({{"f", {"mov %rbx,%rdi", "call <malloc@plt>", "mov $0x100,%edi", "call <malloc@plt>"}}});
  auto sites = extract_allocation_sizes(l);
  ASSERT_EQ(sites.size(), 2u);
  EXPECT_FALSE(sites[0].bytes);
  EXPECT_EQ(sites[1].bytes, 0x100u);
  auto e = estimate_memory_gb(sites);
  EXPECT_EQ(e.confidence, Confidence::medium);
}

TEST(Allocations, ArgumentsDoNotLeakAcrossCalls) {
  auto l = listing_of({{"f", {"mov $0x100,%edi", "call <helper>", "call <malloc@plt>"}}});
  auto sites = extract_allocation_sizes(l);
  ASSERT_EQ(sites.size(), 1u);
  EXPECT_FALSE(sites[0].bytes);
}

TEST(Allocations, ZeroingIdiomAndAlignedAlloc) {
  auto l = listing_of({{"f", {"mov $0x1000,%esi", "mov $0x40,%edi", "call <aligned_alloc@plt>", "xor %edi,%edi",
                              "call <malloc@plt>"}}});
  auto sites = extract_allocation_sizes(l);
  ASSERT_EQ(sites.size(), 2u);
  EXPECT_EQ(sites[0].bytes, 0x1000u);
  EXPECT_EQ(sites[1].bytes, 0u);
}

TEST(Allocations, NoEvidenceGivesLowPlaceholder) {
  auto e = estimate_memory_gb({});
  EXPECT_EQ(e.value, kNoEvidenceMemoryGb);
  EXPECT_EQ(e.confidence, Confidence::low);
}

// ---------------------------------------------------------------------------
// ISA

TEST(Isa, CgListingNeedsAvxOnly) {
  EXPECT_EQ(detect_isa_features(load_listing(fixture("jobs/cg/cg.D.x.dis"))), IsaSet{IsaFeature::avx});
}

TEST(Isa, IntegerYmmIsAvx2AndZmmIsAvx512) {
  EXPECT_EQ(detect_isa_features(listing_of({{"f", {"vpaddd %ymm1,%ymm2,%ymm3"}}})),
            (IsaSet{IsaFeature::avx, IsaFeature::avx2}));
  EXPECT_EQ(detect_isa_features(listing_of({{"f", {"vaddpd %zmm1,%zmm2,%zmm3"}}})),
            (IsaSet{IsaFeature::avx, IsaFeature::avx2, IsaFeature::avx512}));
  EXPECT_EQ(detect_isa_features(listing_of({{"f", {"vpaddd %xmm1,%xmm2,%xmm3"}}})), IsaSet{IsaFeature::avx});
  EXPECT_TRUE(detect_isa_features(listing_of({{"f", {"addsd %xmm1,%xmm0", "paddd %xmm1,%xmm2"}}})).empty());
}

TEST(Isa, DetectedSetsAreAlwaysClosed) {
  const std::vector<std::string> pool{"vaddpd %ymm0,%ymm1,%ymm2", "vpxor %ymm0,%ymm0,%ymm0", "vmovdqu64 %zmm0,(%rax)",
                                      "addsd %xmm0,%xmm1", "vmovsd %xmm0,(%rax)", "vgatherdpd %ymm1,(%rax,%xmm2,8),%ymm3"};
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> ins;
    for (int k = 0; k < 4; ++k) ins.push_back(pool[rng() % pool.size()]);
    EXPECT_TRUE(detect_isa_features(listing_of({{"f", ins}})).is_closed());
  }
}

// ---------------------------------------------------------------------------
// Parallelism

TEST(Parallelism, OpenMpWithThreadCountIsHighConfidence) {
  auto meta = parse_elf_header(cg_binary());
  auto e = detect_parallelism(meta, {}, {{"OMP_NUM_THREADS", "8"}});
  EXPECT_EQ(e.value, 8);
  EXPECT_EQ(e.confidence, Confidence::high);
}

TEST(Parallelism, ThreadCountWithoutOpenMpIsIgnored) {
  auto meta = parse_elf_header(fixture("jobs/serial/heat.x"));
  auto e = detect_parallelism(meta, load_listing(fixture("jobs/serial/heat.x.dis")), {{"OMP_NUM_THREADS", "1024"}});
  EXPECT_EQ(e.value, 1);
  EXPECT_EQ(e.confidence, Confidence::low);
  EXPECT_NE(e.rationale.find("no OpenMP usage"), std::string::npos);
}

TEST(Parallelism, LauncherRanksMultiplyThreads) {
  auto meta = parse_elf_header(cg_binary());
  auto e = detect_parallelism(meta, {}, {{"OMP_NUM_THREADS", "4"}}, {"mpirun", "-np", "4", "./cg.D.x"});
  EXPECT_EQ(e.value, 16);
  EXPECT_EQ(e.confidence, Confidence::medium);  // no MPI markers in this binary
  fx::ElfImage img;
  img.needed = {"libmpi.so.40"};
  img.symbols = {{"MPI_Init", false}};
  auto mpi = parse_elf_bytes(fx::build_elf(img));
  auto m = detect_parallelism(mpi, {}, {}, {"srun", "--ntasks=32", "./app"});
  EXPECT_EQ(m.value, 32);
  EXPECT_EQ(m.confidence, Confidence::high);
}

TEST(Parallelism, MalformedThreadCount) {
  ElfMetadata meta;
  EXPECT_EQ(code_of([&] { detect_parallelism(meta, {}, {{"OMP_NUM_THREADS", "eight"}}); }),
            errc::malformed_thread_count);
  EXPECT_EQ(code_of([&] { detect_parallelism(meta, {}, {{"OMP_NUM_THREADS", "0"}}); }), errc::malformed_thread_count);
  EXPECT_EQ(detect_parallelism(meta, listing_of({{"f", {"call <omp_get_num_threads@plt>"}}}),
                               {{"OMP_NUM_THREADS", "6,2"}})
                .value,
            6);
}

// ---------------------------------------------------------------------------
// Accelerators and I/O

TEST(AccelIo, CgHasNoGpuAndMinimalIo) {
  auto meta = parse_elf_header(cg_binary());
  auto f = detect_accel_and_io(meta, load_listing(fixture("jobs/cg/cg.D.x.dis")));
  EXPECT_FALSE(f.gpu_required.value);
  EXPECT_EQ(f.gpu_count.value, 0);
  EXPECT_EQ(f.io_intensity.value, IoIntensity::minimal);
}

TEST(AccelIo, CudaAndHdf5Markers) {
  fx::ElfImage img;
  img.needed = {"libcudart.so.12", "libhdf5.so.200"};
  img.symbols = {{"cudaMalloc", false}, {"H5Fopen", false}};
  auto f = detect_accel_and_io(parse_elf_bytes(fx::build_elf(img)), {});
  EXPECT_TRUE(f.gpu_required.value);
  EXPECT_EQ(f.gpu_required.confidence, Confidence::high);
  EXPECT_EQ(f.gpu_count.value, 1);
  EXPECT_EQ(f.io_intensity.value, IoIntensity::heavy);
}

TEST(AccelIo, LargeFileInterfacesAreModerate) {
  fx::ElfImage img;
  img.symbols = {{"pread64", false}};
  auto f = detect_accel_and_io(parse_elf_bytes(fx::build_elf(img)), {});
  EXPECT_EQ(f.io_intensity.value, IoIntensity::moderate);
}

// ---------------------------------------------------------------------------
// Python imports

TEST(PythonImports, ResolvesLocalModulesUnderRoots) {
  auto scan = scan_python_imports(fixture("jobs/python/reduce.py"), {fixture("jobs/python/lib")});
  for (const char* m : {"sys", "h5py", "numpy", "stats"}) EXPECT_TRUE(scan.modules.count(m)) << m;
  EXPECT_EQ(scan.local_modules, std::set<std::string>{"stats"});
  // stats itself imports numpy
  bool stats_numpy = false;
  for (const auto& [a, b] : scan.edges) stats_numpy |= a == "stats" && b == "numpy";
  EXPECT_TRUE(stats_numpy);
}

TEST(PythonImports, HandlesFromRelativeAndMultiNameForms) {
  TempDir dir("py");
  write_file(dir / "main.py",
             "import os, json as j\n"
             "from . import sibling\n"
             "from pkg.sub import thing\n"
             "if True:\n    import cupy\n"
             "s = 'import fake'\n"
             "# import commented\n"
             "x = __import__(name)\n");
  write_file(dir / "pkg/__init__.py", "");
  write_file(dir / "pkg/sub.py", "import h5py\n");
  auto scan = scan_python_imports(dir / "main.py", {dir.path()});
  for (const char* m : {"os", "json", "pkg", "cupy", "h5py"}) EXPECT_TRUE(scan.modules.count(m)) << m;
  EXPECT_FALSE(scan.modules.count("fake"));
  EXPECT_FALSE(scan.modules.count("commented"));
  EXPECT_TRUE(scan.local_modules.count("pkg"));
  EXPECT_FALSE(scan.unknown_imports.empty());  // the dynamic __import__
}

// ---------------------------------------------------------------------------
// Calculator

TEST(Calculator, ExactByteUnitConversion) {
  auto r = calculate("0xFBC5200 B in MiB");
  EXPECT_EQ(r.text(), "251.77001953125 MiB");
  EXPECT_EQ(r.exact, Rational(264000000, 1048576));
  EXPECT_EQ(calculate("17179869184 B in GiB").text(), "16 GiB");
  EXPECT_EQ(calculate("16 GB + 2 GB").text(), "18 GB");
  EXPECT_EQ(calculate("2 * 0xfbc5200 + 8 * 0x1000000 + 3 * 0x100000000 + 0xd8875c00").exact, Rational(16ull << 30));
  EXPECT_EQ(calculate("1/3 + 1/6").exact, Rational(1, 2));
}

TEST(Calculator, Errors) {
  EXPECT_EQ(code_of([] { calculate("1 / (2 - 2)"); }), errc::division_by_zero);
  EXPECT_EQ(code_of([] { calculate(""); }), errc::parse_error);
  EXPECT_EQ(code_of([] { calculate("3 +"); }), errc::parse_error);
  EXPECT_EQ(code_of([] { calculate("1 GB + 2"); }), errc::parse_error);
}

// ---------------------------------------------------------------------------
// Disassembler adapter

TEST(Disassembler, FixtureModeReadsSiblingListing) {
  DisassemblerAdapter adapter;
  std::vector<fs::path> ev{fixture("jobs/cg/cg.D.x.dis")};
  auto r = adapter.disassemble(cg_binary(), ev);
  EXPECT_FALSE(r.listing.empty());
  EXPECT_TRUE(r.origin.starts_with("fixture:"));
  TempDir dir("dis");
  fs::copy_file(cg_binary(), dir / "lonely.x");
  auto none = adapter.disassemble(dir / "lonely.x", {});
  EXPECT_TRUE(none.listing.empty());
  EXPECT_EQ(none.origin, "none");
}

TEST(Disassembler, ExternalToolIsPreferredAndFailuresFallBack) {
  TempDir dir("dis");
  write_file(dir / "fake-objdump", "#!/bin/sh\ncat '" + fixture("jobs/serial/heat.x.dis").string() + "'\n");
  fs::permissions(dir / "fake-objdump", fs::perms::owner_all);
  write_file(dir / "broken", "#!/bin/sh\nexit 3\n");
  fs::permissions(dir / "broken", fs::perms::owner_all);
  std::vector<fs::path> ev{fixture("jobs/cg/cg.D.x.dis")};

  auto r = DisassemblerAdapter(dir / "fake-objdump").disassemble(cg_binary(), ev);
  EXPECT_TRUE(r.origin.starts_with("external:"));
  EXPECT_NE(r.listing.find_span("relax"), nullptr);

  auto f = DisassemblerAdapter(dir / "broken").disassemble(cg_binary(), ev);
  EXPECT_TRUE(f.origin.starts_with("fixture:"));
}

TEST(Disassembler, HungToolTimesOut) {
  TempDir dir("dis");
  write_file(dir / "hang", "#!/bin/sh\nsleep 30\n");
  fs::permissions(dir / "hang", fs::perms::owner_all);
  fs::copy_file(cg_binary(), dir / "lonely.x");
  auto start = std::chrono::steady_clock::now();
  auto r = DisassemblerAdapter(dir / "hang", std::chrono::milliseconds(200)).disassemble(dir / "lonely.x", {});
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(5));
  EXPECT_EQ(r.origin, "none");
}
