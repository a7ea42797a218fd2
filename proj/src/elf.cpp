#include <algorithm>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include "incisor/analysis.hpp"
#include "incisor/error.hpp"

namespace incisor {

ElfMachine ElfMachine::from_code(int code) {
  ElfMachine m;
  m.code = code;
  if (code == kX86_64) {
    m.kind = Kind::x86_64;
  } else if (code == kAArch64) {
    m.kind = Kind::aarch64;
  } else {
    m.kind = Kind::other;
  }
  return m;
}

std::string ElfMachine::name() const {
  switch (kind) {
    case Kind::x86_64: return "x86_64";
    case Kind::aarch64: return "aarch64";
    case Kind::other: break;
  }
  return "other(" + std::to_string(code) + ")";
}

Platform ElfMetadata::platform() const {
  switch (machine.kind) {
    case ElfMachine::Kind::x86_64: return Platform::x86_64;
    case ElfMachine::Kind::aarch64: return Platform::aarch64;
    case ElfMachine::Kind::other: break;
  }
  return Platform::any;
}

bool ElfMetadata::has_symbol_containing(std::string_view needle) const {
  return std::any_of(symbols.begin(), symbols.end(),
                     [&](const ElfSymbol& s) { return s.name.find(needle) != std::string::npos; });
}

bool ElfMetadata::has_dep_containing(std::string_view needle) const {
  return std::any_of(dynamic_deps.begin(), dynamic_deps.end(),
                     [&](const std::string& d) { return d.find(needle) != std::string::npos; });
}

namespace {

constexpr std::uint32_t kShtSymtab = 2;
constexpr std::uint32_t kShtDynamic = 6;
constexpr std::uint32_t kShtDynsym = 11;
constexpr std::uint64_t kDtNull = 0;
constexpr std::uint64_t kDtNeeded = 1;

class Reader {
 public:
  Reader(std::span<const unsigned char> bytes, bool little) : bytes_(bytes), little_(little) {}

  bool in_bounds(std::uint64_t off, std::uint64_t len) const {
    return off <= bytes_.size() && len <= bytes_.size() - off;
  }

  std::uint64_t uint(std::uint64_t off, int width) const {
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      std::uint64_t b = bytes_[off + static_cast<std::uint64_t>(i)];
      v |= little_ ? b << (8 * i) : b << (8 * (width - 1 - i));
    }
    return v;
  }

  std::string cstr(std::uint64_t off, std::uint64_t limit) const {
    std::string s;
    while (off < limit && off < bytes_.size() && bytes_[off] != 0) s += static_cast<char>(bytes_[off++]);
    return s;
  }

 private:
  std::span<const unsigned char> bytes_;
  bool little_;
};

struct Section {
  std::uint32_t type = 0;
  std::uint64_t offset = 0;
  std::uint64_t size = 0;
  std::uint32_t link = 0;
  std::uint64_t entsize = 0;
};

}  // namespace

ElfMetadata parse_elf_bytes(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4) fail(errc::truncated_header, "file is too short to hold an ELF identification");
  if (bytes[0] != 0x7f || bytes[1] != 'E' || bytes[2] != 'L' || bytes[3] != 'F') {
    fail(errc::not_an_elf, "missing ELF magic");
  }
  if (bytes.size() < 16) fail(errc::truncated_header, "truncated ELF identification");

  ElfMetadata meta;
  switch (bytes[4]) {
    case 1: meta.elf_class = ElfClass::elf32; break;
    case 2: meta.elf_class = ElfClass::elf64; break;
    default: fail(errc::unsupported_class, "EI_CLASS " + std::to_string(bytes[4]) + " is neither ELF32 nor ELF64");
  }
  meta.little_endian = bytes[5] != 2;
  const bool is64 = meta.elf_class == ElfClass::elf64;
  const std::size_t header_size = is64 ? 64 : 52;
  if (bytes.size() < header_size) fail(errc::truncated_header, "truncated ELF header");

  Reader r(bytes, meta.little_endian);
  meta.machine = ElfMachine::from_code(static_cast<int>(r.uint(18, 2)));

  const int word = is64 ? 8 : 4;
  const std::uint64_t shoff = r.uint(is64 ? 40 : 32, word);
  const std::uint64_t shentsize = r.uint(is64 ? 58 : 46, 2);
  const std::uint64_t shnum = r.uint(is64 ? 60 : 48, 2);
  if (shoff == 0 || shnum == 0 || shentsize < (is64 ? 64u : 40u) || !r.in_bounds(shoff, shentsize * shnum)) {
    return meta;  // no usable section table: header fields only
  }

  std::vector<Section> sections;
  sections.reserve(shnum);
  for (std::uint64_t i = 0; i < shnum; ++i) {
    std::uint64_t base = shoff + i * shentsize;
    Section s;
    s.type = static_cast<std::uint32_t>(r.uint(base + 4, 4));
    if (is64) {
      s.offset = r.uint(base + 24, 8);
      s.size = r.uint(base + 32, 8);
      s.link = static_cast<std::uint32_t>(r.uint(base + 40, 4));
      s.entsize = r.uint(base + 56, 8);
    } else {
      s.offset = r.uint(base + 16, 4);
      s.size = r.uint(base + 20, 4);
      s.link = static_cast<std::uint32_t>(r.uint(base + 24, 4));
      s.entsize = r.uint(base + 36, 4);
    }
    sections.push_back(s);
  }

  auto strtab_of = [&](const Section& s) -> const Section* {
    if (s.link >= sections.size()) return nullptr;
    const Section& t = sections[s.link];
    if (!r.in_bounds(t.offset, t.size)) return nullptr;
    return &t;
  };

  for (const auto& s : sections) {
    if (s.type != kShtDynamic || !r.in_bounds(s.offset, s.size)) continue;
    const Section* strtab = strtab_of(s);
    if (!strtab) continue;
    const std::uint64_t ent = is64 ? 16 : 8;
    for (std::uint64_t off = s.offset; off + ent <= s.offset + s.size; off += ent) {
      std::uint64_t tag = r.uint(off, word);
      std::uint64_t val = r.uint(off + static_cast<std::uint64_t>(word), word);
      if (tag == kDtNull) break;
      if (tag == kDtNeeded && val < strtab->size) {
        meta.dynamic_deps.push_back(r.cstr(strtab->offset + val, strtab->offset + strtab->size));
      }
    }
  }

  std::unordered_set<std::string> seen;
  for (std::uint32_t wanted : {kShtDynsym, kShtSymtab}) {
    for (const auto& s : sections) {
      if (s.type != wanted || !r.in_bounds(s.offset, s.size)) continue;
      const Section* strtab = strtab_of(s);
      if (!strtab) continue;
      const std::uint64_t ent = is64 ? 24 : 16;
      // index 0 is the reserved null symbol
      for (std::uint64_t off = s.offset + ent; off + ent <= s.offset + s.size; off += ent) {
        std::uint64_t name_off = r.uint(off, 4);
        unsigned info = static_cast<unsigned>(r.uint(off + (is64 ? 4 : 12), 1));
        std::uint64_t shndx = r.uint(off + (is64 ? 6 : 14), 2);
        unsigned type = info & 0xf;
        if (type == 3 || type == 4) continue;  // STT_SECTION, STT_FILE
        if (name_off >= strtab->size) continue;
        std::string name = r.cstr(strtab->offset + name_off, strtab->offset + strtab->size);
        if (name.empty()) continue;
        bool defined = shndx != 0;
        std::string key = name + (defined ? "#d" : "#u");
        if (!seen.insert(key).second) continue;
        meta.symbols.push_back(ElfSymbol{std::move(name), defined});
      }
    }
  }
  return meta;
}

ElfMetadata parse_elf_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::unreadable_file, "cannot read '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_elf_bytes(bytes);
}

std::vector<std::string> extract_strings(const std::filesystem::path& path, std::size_t min_len,
                                         std::size_t max_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::unreadable_file, "cannot read '" + path.string() + "'");
  std::vector<std::string> out;
  std::string cur;
  char c;
  while (in.get(c) && out.size() < max_count) {
    auto u = static_cast<unsigned char>(c);
    if ((u >= 0x20 && u < 0x7f) || u == '\t') {
      cur += c;
    } else {
      if (cur.size() >= min_len) out.push_back(cur);
      cur.clear();
    }
  }
  if (cur.size() >= min_len && out.size() < max_count) out.push_back(cur);
  return out;
}

}  // namespace incisor
