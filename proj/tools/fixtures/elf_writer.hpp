#pragma once

// Minimal ELF image builder for fixtures: header, .dynstr, .dynsym, .dynamic
// and .shstrtab. Enough for the header/deps/symbol reader, nothing runnable.

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace incisor::fixtures {

struct ElfImage {
  bool is64 = true;
  bool little_endian = true;
  std::uint16_t machine = 62;  // EM_X86_64
  std::vector<std::string> needed;
  std::vector<std::pair<std::string, bool>> symbols;  // name, defined
};

namespace detail {

class Buffer {
 public:
  explicit Buffer(bool little) : little_(little) {}

  void put(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) {
      int shift = little_ ? i : width - 1 - i;
      bytes_.push_back(static_cast<unsigned char>(v >> (8 * shift)));
    }
  }
  void put_at(std::size_t at, std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) {
      int shift = little_ ? i : width - 1 - i;
      bytes_[at + i] = static_cast<unsigned char>(v >> (8 * shift));
    }
  }
  void raw(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void pad_to(std::size_t n) { bytes_.resize(std::max(bytes_.size(), n), 0); }
  void align(std::size_t a) { pad_to((bytes_.size() + a - 1) / a * a); }
  std::size_t size() const { return bytes_.size(); }
  std::vector<unsigned char>& bytes() { return bytes_; }

 private:
  bool little_;
  std::vector<unsigned char> bytes_;
};

// String table with a leading NUL; returns offsets.
struct StrTab {
  std::string data{'\0'};
  std::uint32_t add(const std::string& s) {
    auto off = static_cast<std::uint32_t>(data.size());
    data += s;
    data.push_back('\0');
    return off;
  }
};

}  // namespace detail

inline std::vector<unsigned char> build_elf(const ElfImage& img) {
  using detail::Buffer;
  const bool b64 = img.is64;
  const int word = b64 ? 8 : 4;
  const std::size_t ehsize = b64 ? 64 : 52;
  const std::size_t symsize = b64 ? 24 : 16;
  const std::size_t dynsize = b64 ? 16 : 8;
  const std::size_t shsize = b64 ? 64 : 40;

  detail::StrTab dynstr;
  std::vector<std::uint32_t> needed_off;
  for (const auto& n : img.needed) needed_off.push_back(dynstr.add(n));
  std::vector<std::uint32_t> sym_off;
  for (const auto& s : img.symbols) sym_off.push_back(dynstr.add(s.first));

  detail::StrTab shstr;
  const std::uint32_t n_dynstr = shstr.add(".dynstr");
  const std::uint32_t n_dynsym = shstr.add(".dynsym");
  const std::uint32_t n_dynamic = shstr.add(".dynamic");
  const std::uint32_t n_text = shstr.add(".text");
  const std::uint32_t n_shstr = shstr.add(".shstrtab");

  Buffer b(img.little_endian);
  b.pad_to(ehsize);

  const std::size_t dynstr_at = b.size();
  b.raw(dynstr.data);
  b.align(8);

  const std::size_t dynsym_at = b.size();
  b.pad_to(b.size() + symsize);  // null symbol
  for (std::size_t i = 0; i < img.symbols.size(); ++i) {
    const bool defined = img.symbols[i].second;
    const unsigned info = (1u << 4) | 2u;  // STB_GLOBAL, STT_FUNC
    const std::uint16_t shndx = defined ? 4 : 0;  // .text
    if (b64) {
      b.put(sym_off[i], 4);
      b.put(info, 1);
      b.put(0, 1);
      b.put(shndx, 2);
      b.put(defined ? 0x401000 + 0x100 * i : 0, 8);
      b.put(0, 8);
    } else {
      b.put(sym_off[i], 4);
      b.put(defined ? 0x8049000 + 0x100 * i : 0, 4);
      b.put(0, 4);
      b.put(info, 1);
      b.put(0, 1);
      b.put(shndx, 2);
    }
  }
  const std::size_t dynsym_size = b.size() - dynsym_at;

  const std::size_t dynamic_at = b.size();
  for (auto off : needed_off) {
    b.put(1, word);  // DT_NEEDED
    b.put(off, word);
  }
  b.put(0, word);  // DT_NULL
  b.put(0, word);
  const std::size_t dynamic_size = b.size() - dynamic_at;

  const std::size_t text_at = b.size();
  b.raw(std::string("\x55\x48\x89\xe5\x31\xc0\x5d\xc3", 8));  // push rbp; mov rbp,rsp; xor eax,eax; pop; ret
  const std::size_t text_size = b.size() - text_at;

  const std::size_t shstr_at = b.size();
  b.raw(shstr.data);
  b.align(8);

  struct Sh {
    std::uint32_t name, type;
    std::uint64_t flags, offset, size;
    std::uint32_t link, info;
    std::uint64_t align, entsize;
  };
  const std::vector<Sh> sections{
      {0, 0, 0, 0, 0, 0, 0, 0, 0},
      {n_dynstr, 3, 2, dynstr_at, dynstr.data.size(), 0, 0, 1, 0},
      {n_dynsym, 11, 2, dynsym_at, dynsym_size, 1, 1, 8, symsize},
      {n_dynamic, 6, 3, dynamic_at, dynamic_size, 1, 0, 8, dynsize},
      {n_text, 1, 6, text_at, text_size, 0, 0, 16, 0},
      {n_shstr, 3, 0, shstr_at, shstr.data.size(), 0, 0, 1, 0},
  };
  const std::size_t shoff = b.size();
  for (const auto& s : sections) {
    b.put(s.name, 4);
    b.put(s.type, 4);
    b.put(s.flags, word);
    b.put(0, word);  // addr
    b.put(s.offset, word);
    b.put(s.size, word);
    b.put(s.link, 4);
    b.put(s.info, 4);
    b.put(s.align, word);
    b.put(s.entsize, word);
  }

  auto& out = b.bytes();
  out[0] = 0x7f;
  out[1] = 'E';
  out[2] = 'L';
  out[3] = 'F';
  out[4] = b64 ? 2 : 1;
  out[5] = img.little_endian ? 1 : 2;
  out[6] = 1;  // EV_CURRENT
  b.put_at(16, 2, 2);  // ET_EXEC
  b.put_at(18, img.machine, 2);
  b.put_at(20, 1, 4);
  if (b64) {
    b.put_at(24, 0x401000, 8);  // entry
    b.put_at(40, shoff, 8);
    b.put_at(52, ehsize, 2);
    b.put_at(58, shsize, 2);
    b.put_at(60, sections.size(), 2);
    b.put_at(62, sections.size() - 1, 2);
  } else {
    b.put_at(24, 0x8049000, 4);
    b.put_at(32, shoff, 4);
    b.put_at(40, ehsize, 2);
    b.put_at(46, shsize, 2);
    b.put_at(48, sections.size(), 2);
    b.put_at(50, sections.size() - 1, 2);
  }
  return out;
}

}  // namespace incisor::fixtures
