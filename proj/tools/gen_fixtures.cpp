// Writes the generated fixtures (ELF images, listings, call graphs and the
// synthetic catalog) under the given fixtures directory.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "fixtures/generate.hpp"

namespace fs = std::filesystem;
using namespace incisor::fixtures;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  fs::permissions(p, fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec, fs::perm_options::add);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: gen_fixtures <fixtures-dir>\n";
    return 2;
  }
  const fs::path root = argv[1];
  write_bytes(root / "jobs/cg/cg.D.x", build_elf(cg_elf()));
  write_text(root / "jobs/cg/cg.D.x.dis", render_listing("cg.D.x", cg_symbols()));
  write_text(root / "jobs/cg/cg.D.x.cg.json", cg_call_graph_json());
  write_bytes(root / "jobs/serial/heat.x", build_elf(serial_elf()));
  write_text(root / "jobs/serial/heat.x.dis", render_listing("heat.x", serial_symbols()));
  write_text(root / "catalogs/synthetic-794.csv", synthetic_catalog_csv());
  std::cout << "fixtures written under " << root.string() << "\n";
  return 0;
}
