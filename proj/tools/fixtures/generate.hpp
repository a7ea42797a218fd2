#pragma once

// Deterministic fixture content shared by the generator and the tests that
// check the shipped copies.

#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "fixtures/elf_writer.hpp"

namespace incisor::fixtures {

struct ListingSymbol {
  std::string name;
  std::vector<std::string> instructions;  // "mnemonic operands", AT&T syntax
};

// objdump -d style text. Call targets are written as "call <sym>" in the
// input and get an address filled in.
inline std::string render_listing(const std::string& file, const std::vector<ListingSymbol>& symbols) {
  std::vector<std::uint64_t> start;
  std::uint64_t addr = 0x401000;
  for (const auto& s : symbols) {
    start.push_back(addr);
    addr += 0x10 * (s.instructions.size() + 1);
  }
  auto address_of = [&](const std::string& name) -> std::uint64_t {
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      if (symbols[i].name == name) return start[i];
    }
    return 0x401000 - 0x100 + 0x10 * (name.size() % 8);  // a PLT slot
  };

  std::string out = "\n" + file + ":     file format elf64-x86-64\n\n\nDisassembly of section .text:\n";
  char buf[256];
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    std::snprintf(buf, sizeof buf, "\n%016llx <%s>:\n", static_cast<unsigned long long>(start[i]),
                  symbols[i].name.c_str());
    out += buf;
    std::uint64_t a = start[i];
    for (const auto& ins : symbols[i].instructions) {
      std::string text = ins;
      if (ins.rfind("call <", 0) == 0) {
        std::string target = ins.substr(6, ins.size() - 7);
        std::string bare = target.substr(0, target.find('@'));
        std::snprintf(buf, sizeof buf, "call   %llx <%s>", static_cast<unsigned long long>(address_of(bare)),
                      target.c_str());
        text = buf;
      } else {
        auto sp = ins.find(' ');
        if (sp != std::string::npos) {
          std::string m = ins.substr(0, sp);
          m.resize(std::max<std::size_t>(m.size() + 1, 7), ' ');
          text = m + ins.substr(sp + 1);
        }
      }
      std::snprintf(buf, sizeof buf, "  %llx:\t%-21s\t%s\n", static_cast<unsigned long long>(a), "90 90 90 90",
                    text.c_str());
      out += buf;
      a += 0x10;
    }
  }
  return out;
}

// NPB CG class D, as far as memory sizing is concerned: alloc_space requests
// exactly 16 GiB, split over malloc and calloc calls with immediate sizes.
inline std::vector<ListingSymbol> cg_symbols() {
  return {
      {"main",
       {"push %rbp", "mov %rsp,%rbp", "sub $0x20,%rsp", "call <alloc_space>", "call <makea>",
        "lea 0x2f00(%rip),%rdi", "xor %esi,%esi", "call <GOMP_parallel@plt>", "call <conj_grad>",
        "vmovsd 0x10(%rsp),%xmm0", "xor %eax,%eax", "leave", "ret"}},
      {"alloc_space",
       {"push %rbx", "mov $0xfbc5200,%edi", "call <malloc@plt>", "mov %rax,0x2e00(%rip)",
        "mov $0xfbc5200,%edi", "call <malloc@plt>", "mov %rax,0x2e08(%rip)", "mov $0x8,%esi",
        "mov $0x1000000,%edi", "call <calloc@plt>", "mov %rax,0x2e10(%rip)", "movabs $0x100000000,%rdi",
        "call <malloc@plt>", "mov %rax,0x2e18(%rip)", "movabs $0x100000000,%rdi", "call <malloc@plt>",
        "mov %rax,0x2e20(%rip)", "movabs $0x100000000,%rdi", "call <malloc@plt>", "mov %rax,0x2e28(%rip)",
        "mov $0xd8875c00,%edi", "call <malloc@plt>", "mov %rax,0x2e30(%rip)", "pop %rbx", "ret"}},
      {"makea",
       {"push %r12", "mov 0x2e00(%rip),%rdi", "call <sparse>", "vxorpd %ymm0,%ymm0,%ymm0",
        "vmovupd %ymm0,(%rdi)", "pop %r12", "ret"}},
      {"sparse", {"mov %rdi,%rax", "vmovsd (%rax),%xmm0", "vaddsd %xmm1,%xmm0,%xmm0", "ret"}},
      {"conj_grad",
       {"push %rbp", "vxorpd %ymm2,%ymm2,%ymm2", "vmovupd (%rsi,%rax,8),%ymm0", "vmulpd (%rdx,%rax,8),%ymm0,%ymm0",
        "vaddpd %ymm0,%ymm2,%ymm2", "vbroadcastsd 0x8(%rsp),%ymm3", "vextractf128 $0x1,%ymm2,%xmm1",
        "vaddpd %xmm1,%xmm2,%xmm2", "call <omp_get_thread_num@plt>", "vzeroupper", "pop %rbp", "ret"}},
      // Compiled in but never called; must not count toward the estimate.
      {"init_debug_buffers",
       {"push %rbx", "mov $0x40000000,%edi", "call <malloc@plt>", "mov %rax,0x2f00(%rip)", "pop %rbx", "ret"}},
  };
}

inline std::string cg_call_graph_json() {
  return R"({
  "kind": "call_graph",
  "nodes": [
    {"id": 0, "label": "main"},
    {"id": 1, "label": "alloc_space"},
    {"id": 2, "label": "makea"},
    {"id": 3, "label": "sparse"},
    {"id": 4, "label": "conj_grad"},
    {"id": 5, "label": "init_debug_buffers"},
    {"id": 6, "label": "malloc"},
    {"id": 7, "label": "calloc"},
    {"id": 8, "label": "GOMP_parallel"},
    {"id": 9, "label": "omp_get_thread_num"}
  ],
  "edges": [[0, 1], [0, 2], [0, 4], [0, 8], [1, 6], [1, 7], [2, 3], [4, 9], [5, 6]]
}
)";
}

inline ElfImage cg_elf() {
  ElfImage img;
  img.needed = {"libgomp.so.1", "libm.so.6", "libc.so.6"};
  img.symbols = {{"main", true},        {"alloc_space", true},       {"makea", true},
                 {"sparse", true},      {"conj_grad", true},         {"init_debug_buffers", true},
                 {"malloc", false},     {"calloc", false},           {"GOMP_parallel", false},
                 {"omp_get_thread_num", false}, {"omp_get_num_threads", false}};
  return img;
}

// A serial stencil code: no OpenMP anywhere, scalar SSE only.
inline std::vector<ListingSymbol> serial_symbols() {
  return {
      {"main",
       {"push %rbp", "mov %rsp,%rbp", "movabs $0x80000000,%rdi", "call <malloc@plt>", "mov %rax,%rbx",
        "mov %rbx,%rdi", "call <relax>", "xor %eax,%eax", "pop %rbp", "ret"}},
      {"relax", {"movsd (%rdi),%xmm0", "addsd 0x8(%rdi),%xmm0", "mulsd %xmm1,%xmm0", "movsd %xmm0,(%rdi)", "ret"}},
  };
}

inline ElfImage serial_elf() {
  ElfImage img;
  img.needed = {"libm.so.6", "libc.so.6"};
  img.symbols = {{"main", true}, {"relax", true}, {"malloc", false}, {"free", false}};
  return img;
}

// ---------------------------------------------------------------------------
// Synthetic catalog with a fixed memory-tier layout around the 18 GB
// threshold: 85 offers below it, 79 in [18, 32), 630 at 32 GB and above.
// Every offer at or above 18 GB is x86_64 with AVX so that the CG bundle
// admits all of them.

inline constexpr int kSyntheticBelow = 85;
inline constexpr int kSyntheticMid = 79;
inline constexpr int kSyntheticHigh = 630;

inline std::string synthetic_catalog_csv(std::uint64_t seed = 794) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  auto unit = [&]() { return static_cast<double>(rng() >> 11) / 9007199254740992.0; };

  const std::vector<double> below{1, 2, 4, 8, 16};
  const std::vector<double> mid{20, 24, 28, 30};
  const std::vector<double> high{32, 48, 64, 96, 128, 192, 256, 384, 512, 768};
  const std::vector<std::string> providers{"aws", "gcp", "azure"};

  struct Row {
    std::string line;
  };
  std::vector<std::string> rows;
  int serial = 0;
  auto make = [&](double mem, char tier) {
    const std::string provider = providers[serial % 3];
    const double ratio = std::vector<double>{2, 4, 8}[pick(3)];
    int vcpus = std::max(1, static_cast<int>(mem / ratio));
    bool arm = tier == 'b' && pick(5) == 0;
    std::string isa;
    std::string vendor;
    int gen = 0;
    if (arm) {
      vendor = "arm";
      gen = 2 + static_cast<int>(pick(2));
    } else if (pick(5) < 2) {
      isa = "avx|avx2|avx512";
      vendor = "intel";
      gen = 3 + static_cast<int>(pick(3));
    } else {
      isa = "avx|avx2";
      vendor = "amd";
      gen = 2 + static_cast<int>(pick(3));
    }
    std::string accel = ",,";
    double price = vcpus * 0.034 + mem * 0.0045;
    if (tier == 'h' && pick(20) == 0) {
      int count = 1 + static_cast<int>(pick(4));
      accel = "nvidia-a10g," + std::to_string(count) + ",24";
      price += 1.006 * count;
    }
    bool premium = pick(10) == 0;
    if (premium) price += 0.05;
    price *= 0.85 + 0.3 * unit();
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,syn-%c%s-%04d,%s,%d,%d,%g,%s,%s,%.4f,%s,%d,%s", provider.c_str(), tier,
                  arm ? "g" : "x", serial, arm ? "aarch64" : "x86_64", vcpus, std::max(1, vcpus / 2), mem,
                  accel.c_str(), premium ? "true" : "false", price, vendor.c_str(), gen, isa.c_str());
    rows.push_back(buf);
    ++serial;
  };
  for (int i = 0; i < kSyntheticBelow; ++i) make(below[pick(below.size())], 'b');
  for (int i = 0; i < kSyntheticMid; ++i) make(mid[pick(mid.size())], 'm');
  for (int i = 0; i < kSyntheticHigh; ++i) make(high[pick(high.size())], 'h');
  for (std::size_t i = rows.size() - 1; i > 0; --i) std::swap(rows[i], rows[pick(i + 1)]);

  std::string out =
      "provider,name,architecture,vcpus,physical_cpus,memory_gb,accel_kind,accel_count,accel_mem_gb,premium_storage,"
      "price_per_hour_usd,cpu_vendor,cpu_generation,isa_features\n";
  for (const auto& r : rows) out += r + "\n";
  return out;
}

}  // namespace incisor::fixtures
