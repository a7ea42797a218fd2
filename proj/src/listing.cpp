#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "incisor/analysis.hpp"
#include "incisor/error.hpp"

namespace incisor {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool is_hex(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
}

// "48 83 ec 08" style raw bytes column
bool looks_like_bytes(std::string_view s) {
  std::istringstream in{std::string(s)};
  std::string tok;
  bool any = false;
  while (in >> tok) {
    if (tok.size() != 2 || !is_hex(tok)) return false;
    any = true;
  }
  return any;
}

constexpr std::string_view kPrefixes[] = {"rep", "repz", "repe", "repnz", "repne", "lock", "notrack", "bnd", "data16",
                                          "addr32", "cs", "ds"};

bool is_prefix(std::string_view w) {
  return std::find(std::begin(kPrefixes), std::end(kPrefixes), w) != std::end(kPrefixes);
}

void split_instruction(std::string_view text, std::string& mnemonic, std::string& operands) {
  std::string rest = trim(text);
  while (!rest.empty()) {
    auto sp = rest.find_first_of(" \t");
    std::string word = rest.substr(0, sp);
    std::string tail = sp == std::string::npos ? std::string{} : trim(std::string_view(rest).substr(sp));
    if (is_prefix(word) && !tail.empty()) {
      rest = tail;
      continue;
    }
    mnemonic = word;
    operands = tail;
    return;
  }
}

// "0000000000401136 <alloc_space>:"
bool parse_symbol_header(std::string_view line, std::string& name) {
  std::string t = trim(line);
  if (t.size() < 5 || t.back() != ':') return false;
  auto lt = t.find(" <");
  if (lt == std::string::npos || !is_hex(std::string_view(t).substr(0, lt))) return false;
  if (t[t.size() - 2] != '>') return false;
  name = t.substr(lt + 2, t.size() - lt - 4);
  return !name.empty();
}

}  // namespace

const SymbolSpan* DisassemblyListing::find_span(std::string_view name) const {
  for (const auto& s : symbol_spans) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

const SymbolSpan* DisassemblyListing::span_of_line(std::size_t line) const {
  auto it = std::upper_bound(symbol_spans.begin(), symbol_spans.end(), line,
                             [](std::size_t l, const SymbolSpan& s) { return l < s.begin; });
  if (it == symbol_spans.begin()) return nullptr;
  --it;
  return line < it->end ? &*it : nullptr;
}

DisassemblyListing parse_listing(std::string_view text) {
  DisassemblyListing listing;
  std::optional<SymbolSpan> open;
  auto close_span = [&] {
    if (open) {
      open->end = listing.lines.size();
      listing.symbol_spans.push_back(*open);
      open.reset();
    }
  };

  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view raw = text.substr(pos, eol - pos);
    pos = eol + 1;

    std::string name;
    if (parse_symbol_header(raw, name)) {
      close_span();
      open = SymbolSpan{name, listing.lines.size(), listing.lines.size()};
      continue;
    }
    if (raw.starts_with("Disassembly of section")) {
      close_span();
      continue;
    }

    auto colon = raw.find(':');
    if (colon == std::string_view::npos) continue;
    std::string addr = trim(raw.substr(0, colon));
    if (!is_hex(addr) || colon + 1 >= raw.size()) continue;
    std::string_view rest = raw.substr(colon + 1);
    if (!rest.empty() && rest.front() == '\t') rest.remove_prefix(1);

    std::vector<std::string> fields;
    std::size_t fpos = 0;
    while (fpos <= rest.size()) {
      auto tab = rest.find('\t', fpos);
      if (tab == std::string_view::npos) tab = rest.size();
      fields.emplace_back(rest.substr(fpos, tab - fpos));
      fpos = tab + 1;
    }

    DisassemblyLine line;
    line.address = addr;
    if (fields.size() == 1) {
      if (looks_like_bytes(fields[0])) continue;  // continuation of a long encoding
      split_instruction(fields[0], line.mnemonic, line.operands);
    } else if (fields.size() == 2) {
      line.bytes = trim(fields[0]);
      split_instruction(fields[1], line.mnemonic, line.operands);
    } else {
      line.bytes = trim(fields[0]);
      std::string extra;
      split_instruction(fields[1], line.mnemonic, extra);
      std::string ops = extra;
      for (std::size_t i = 2; i < fields.size(); ++i) {
        std::string f = trim(fields[i]);
        if (f.empty()) continue;
        if (!ops.empty()) ops += ' ';
        ops += f;
      }
      line.operands = ops;
    }
    if (line.mnemonic.empty()) continue;
    listing.lines.push_back(std::move(line));
  }
  close_span();
  return listing;
}

DisassemblyListing load_listing(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(errc::unreadable_file, "cannot read listing '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_listing(ss.str());
}

bool is_call(const DisassemblyLine& line) {
  const auto& m = line.mnemonic;
  return m == "call" || m == "callq" || m == "calll" || m == "bl" ||
         (m == "jmp" && line.operands.find("@plt>") != std::string::npos);
}

std::optional<std::string> call_target(const DisassemblyLine& line) {
  auto gt = line.operands.rfind('>');
  if (gt == std::string::npos) return std::nullopt;
  auto lt = line.operands.rfind('<', gt);
  if (lt == std::string::npos) return std::nullopt;
  std::string name = line.operands.substr(lt + 1, gt - lt - 1);
  if (auto plus = name.find('+'); plus != std::string::npos) name.resize(plus);
  if (auto at = name.find('@'); at != std::string::npos) name.resize(at);
  if (name.empty()) return std::nullopt;
  return name;
}

ProcessResult run_process(const std::vector<std::string>& argv, std::chrono::milliseconds timeout) {
  ProcessResult result;
  if (argv.empty()) return result;
  int fds[2];
  if (::pipe(fds) != 0) fail(errc::tool_failure, "pipe() failed");
  pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    fail(errc::tool_failure, "fork() failed");
  }
  if (pid == 0) {
    ::dup2(fds[1], STDOUT_FILENO);
    int devnull = ::open("/dev/null", O_WRONLY);
    if (devnull >= 0) ::dup2(devnull, STDERR_FILENO);
    ::close(fds[0]);
    ::close(fds[1]);
    std::vector<char*> cargv;
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);
    ::execvp(cargv[0], cargv.data());
    ::_exit(127);
  }
  ::close(fds[1]);
  ::fcntl(fds[0], F_SETFL, O_NONBLOCK);

  auto deadline = std::chrono::steady_clock::now() + timeout;
  char buf[65536];
  bool open = true;
  while (open) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      result.timed_out = true;
      break;
    }
    pollfd pfd{fds[0], POLLIN, 0};
    int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 1000)));
    if (rc < 0 && errno != EINTR) break;
    if (rc <= 0) continue;
    ssize_t n = ::read(fds[0], buf, sizeof buf);
    if (n > 0) {
      result.out.append(buf, static_cast<std::size_t>(n));
    } else if (n == 0) {
      open = false;
    } else if (errno != EAGAIN && errno != EINTR) {
      open = false;
    }
  }
  ::close(fds[0]);
  if (result.timed_out) ::kill(pid, SIGKILL);
  int status = 0;
  ::waitpid(pid, &status, 0);
  if (!result.timed_out) result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return result;
}

DisassemblerAdapter DisassemblerAdapter::from_environment() {
  const char* exe = std::getenv("INCISOR_DISASSEMBLER");
  if (exe && *exe) return DisassemblerAdapter(std::filesystem::path(exe));
  return DisassemblerAdapter();
}

DisassemblerAdapter::Result DisassemblerAdapter::disassemble(
    const std::filesystem::path& binary, std::span<const std::filesystem::path> evidence_files) const {
  if (executable_) {
    auto proc = run_process({executable_->string(), "-d", binary.string()}, timeout_);
    if (!proc.timed_out && proc.exit_code == 0) {
      auto listing = parse_listing(proc.out);
      if (!listing.empty()) return {std::move(listing), "external:" + executable_->string()};
    }
  }
  std::vector<std::filesystem::path> candidates;
  for (const auto& p : evidence_files) {
    if (p.extension() == ".dis") candidates.push_back(p);
  }
  std::filesystem::path sibling = binary;
  sibling += ".dis";
  candidates.push_back(sibling);
  for (const auto& c : candidates) {
    std::error_code ec;
    if (std::filesystem::is_regular_file(c, ec)) return {load_listing(c), "fixture:" + c.string()};
  }
  return {DisassemblyListing{}, "none"};
}

}  // namespace incisor
