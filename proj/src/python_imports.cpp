#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "incisor/analysis.hpp"
#include "incisor/error.hpp"

namespace incisor {

namespace {

struct LogicalLine {
  std::string text;  // string literals blanked to ""
  int lineno = 0;
};

// Joins physical lines into logical statements: bracket nesting, backslash
// continuations, ';' separators. String contents are dropped so that import
// statements quoted in docstrings are not mistaken for code.
std::vector<LogicalLine> logical_lines(std::string_view src, const fs::path& path) {
  if (src.find('\0') != std::string_view::npos) {
    fail(errc::syntax_unreadable, "'" + path.string() + "' contains NUL bytes");
  }
  std::vector<LogicalLine> out;
  std::string cur;
  int start_line = 1;
  int line = 1;
  int depth = 0;

  auto flush = [&] {
    auto b = cur.find_first_not_of(" \t");
    if (b != std::string::npos) out.push_back({cur.substr(b), start_line});
    cur.clear();
    start_line = line;
  };

  std::size_t i = 0;
  while (i < src.size()) {
    char c = src[i];
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    if (c == '\'' || c == '"') {
      bool triple = i + 2 < src.size() && src[i + 1] == c && src[i + 2] == c;
      std::size_t q = triple ? 3 : 1;
      i += q;
      bool closed = false;
      while (i < src.size()) {
        if (src[i] == '\\') {
          if (i + 1 < src.size() && src[i + 1] == '\n') ++line;
          i += 2;
          continue;
        }
        if (src[i] == '\n') {
          if (!triple) break;  // unterminated single-line string; recover at end of line
          ++line;
        }
        if (src[i] == c && (!triple || (i + 2 < src.size() && src[i + 1] == c && src[i + 2] == c))) {
          i += q;
          closed = true;
          break;
        }
        ++i;
      }
      if (!closed && triple) fail(errc::syntax_unreadable, path.string() + ": unterminated triple-quoted string");
      cur += "\"\"";
      continue;
    }
    if (c == '\\' && i + 1 < src.size() && src[i + 1] == '\n') {
      cur += ' ';
      i += 2;
      ++line;
      continue;
    }
    if (c == '(' || c == '[' || c == '{') ++depth;
    if ((c == ')' || c == ']' || c == '}') && depth > 0) --depth;
    if (c == '\n') {
      ++line;
      ++i;
      if (depth == 0) {
        flush();
      } else {
        cur += ' ';
      }
      continue;
    }
    if (c == ';' && depth == 0) {
      ++i;
      flush();
      start_line = line;
      continue;
    }
    cur += c;
    ++i;
  }
  flush();
  return out;
}

bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string w;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == ',' || c == '(' || c == ')') {
      if (!w.empty()) out.push_back(w);
      w.clear();
      if (c == ',') out.emplace_back(",");
      continue;
    }
    w += c;
  }
  if (!w.empty()) out.push_back(w);
  return out;
}

struct ImportStmt {
  int level = 0;                  // leading dots of a relative import
  std::string module;             // dotted name, may be empty for "from . import x"
  std::vector<std::string> names; // imported names for from-imports
};

// Parses "import a.b as c, d" and "from x import y" forms.
std::vector<ImportStmt> parse_import(std::string_view text) {
  std::vector<ImportStmt> out;
  auto w = words(text);
  if (w.empty()) return out;
  if (w[0] == "import") {
    bool expect_name = true;
    for (std::size_t i = 1; i < w.size(); ++i) {
      if (w[i] == ",") {
        expect_name = true;
      } else if (w[i] == "as") {
        ++i;
      } else if (expect_name) {
        out.push_back({0, w[i], {}});
        expect_name = false;
      }
    }
  } else if (w[0] == "from" && w.size() >= 3) {
    ImportStmt s;
    std::string_view mod = w[1];
    while (!mod.empty() && mod.front() == '.') {
      ++s.level;
      mod.remove_prefix(1);
    }
    s.module = std::string(mod);
    auto imp = std::find(w.begin(), w.end(), "import");
    if (imp == w.end()) return out;
    for (auto it = imp + 1; it != w.end(); ++it) {
      if (*it == "," || *it == "*") continue;
      if (*it == "as") {
        ++it;
        if (it == w.end()) break;
        continue;
      }
      s.names.push_back(*it);
    }
    out.push_back(std::move(s));
  }
  return out;
}

bool calls(std::string_view text, std::string_view fn) {
  for (auto pos = text.find(fn); pos != std::string_view::npos; pos = text.find(fn, pos + 1)) {
    bool left_ok = pos == 0 || !is_ident_char(text[pos - 1]);
    std::size_t after = pos + fn.size();
    while (after < text.size() && text[after] == ' ') ++after;
    if (left_ok && after < text.size() && text[after] == '(') return true;
  }
  return false;
}

std::string top_level(std::string_view dotted) { return std::string(dotted.substr(0, dotted.find('.'))); }

std::vector<fs::path> module_files(const fs::path& base, std::string_view dotted) {
  // base/a/b.py or base/a/b/__init__.py, plus the package __init__ files on the way
  std::vector<fs::path> files;
  fs::path dir = base;
  std::string_view rest = dotted;
  std::error_code ec;
  while (!rest.empty()) {
    auto dot = rest.find('.');
    std::string part(rest.substr(0, dot));
    rest = dot == std::string_view::npos ? std::string_view{} : rest.substr(dot + 1);
    fs::path as_file = dir / (part + ".py");
    fs::path as_pkg = dir / part;
    if (fs::is_regular_file(as_file, ec)) {
      files.push_back(as_file);
      break;
    }
    if (!fs::is_directory(as_pkg, ec)) break;
    if (fs::is_regular_file(as_pkg / "__init__.py", ec)) files.push_back(as_pkg / "__init__.py");
    dir = as_pkg;
  }
  return files;
}

bool resolves_under(const fs::path& base, std::string_view top) {
  std::error_code ec;
  return fs::is_regular_file(base / (std::string(top) + ".py"), ec) || fs::is_directory(base / std::string(top), ec);
}

class Scanner {
 public:
  // roots: the entry script's directory first, then any extra module roots
  explicit Scanner(std::vector<fs::path> roots) : roots_(std::move(roots)) {}

  void scan(const fs::path& file, const std::string& importer) {
    std::error_code ec;
    fs::path key = fs::weakly_canonical(file, ec);
    if (ec) key = file;
    if (!visited_.insert(key).second) return;

    std::ifstream in(file, std::ios::binary);
    if (!in) fail(errc::unreadable_file, "cannot read '" + file.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    std::string src = ss.str();

    for (const auto& ll : logical_lines(src, file)) {
      for (std::string_view fn : {"__import__", "import_module"}) {
        if (calls(ll.text, fn)) {
          result_.unknown_imports.push_back(file.filename().string() + ":" + std::to_string(ll.lineno) +
                                            ": dynamic import via " + std::string(fn) + "()");
        }
      }
      for (const auto& stmt : parse_import(ll.text)) handle(file, importer, stmt);
    }
  }

  ImportScan take() { return std::move(result_); }

 private:
  void handle(const fs::path& file, const std::string& importer, const ImportStmt& stmt) {
    if (stmt.level == 0 && stmt.module == "__future__") return;
    if (stmt.level > 0) {
      fs::path base = file.parent_path();
      for (int l = 1; l < stmt.level; ++l) base = base.parent_path();
      if (stmt.module.empty()) {
        for (const auto& n : stmt.names) follow(base, n, importer);
      } else {
        follow(base, stmt.module, importer);
      }
      return;
    }
    std::string top = top_level(stmt.module);
    if (top.empty()) return;
    result_.modules.insert(top);
    result_.edges.emplace_back(importer, top);
    for (const auto& base : roots_) {
      if (!resolves_under(base, top)) continue;
      result_.local_modules.insert(top);
      follow(base, stmt.module, top);
      for (const auto& n : stmt.names) follow(base, stmt.module + "." + n, top);
      break;
    }
  }

  void follow(const fs::path& base, std::string_view dotted, const std::string& importer) {
    for (const auto& f : module_files(base, dotted)) scan(f, importer);
  }

  std::vector<fs::path> roots_;
  std::set<fs::path> visited_;
  ImportScan result_;
};

}  // namespace

ImportScan scan_python_imports(const fs::path& entry_path, const std::vector<fs::path>& module_roots) {
  std::vector<fs::path> roots{entry_path.parent_path()};
  for (const auto& r : module_roots) roots.push_back(r);
  Scanner scanner(std::move(roots));
  scanner.scan(entry_path, entry_path.stem().string());
  ImportScan out = scanner.take();
  std::sort(out.edges.begin(), out.edges.end());
  out.edges.erase(std::unique(out.edges.begin(), out.edges.end()), out.edges.end());
  return out;
}

}  // namespace incisor
