#include "incisor/submission.hpp"

#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iterator>
#include <sstream>

#include "incisor/error.hpp"

namespace incisor {

std::string_view to_string(WorkloadKind k) noexcept {
  switch (k) {
    case WorkloadKind::compiled_binary: return "compiled_binary";
    case WorkloadKind::shell_script: return "shell_script";
    case WorkloadKind::interpreted_entry_point: return "interpreted_entry_point";
  }
  return "compiled_binary";
}

WorkloadKind parse_workload_kind(std::string_view s) {
  if (s == "compiled_binary") return WorkloadKind::compiled_binary;
  if (s == "shell_script") return WorkloadKind::shell_script;
  if (s == "interpreted_entry_point") return WorkloadKind::interpreted_entry_point;
  fail(errc::unknown_workload_kind, "unknown workload kind '" + std::string(s) + "'");
}

std::string_view to_string(ArtifactRole r) noexcept {
  switch (r) {
    case ArtifactRole::source_tree: return "source_tree";
    case ArtifactRole::docs: return "docs";
    case ArtifactRole::build_files: return "build_files";
    case ArtifactRole::evidence_file: return "evidence_file";
  }
  return "evidence_file";
}

ArtifactRole parse_artifact_role(std::string_view s) {
  if (s == "source_tree") return ArtifactRole::source_tree;
  if (s == "docs") return ArtifactRole::docs;
  if (s == "build_files") return ArtifactRole::build_files;
  if (s == "evidence_file") return ArtifactRole::evidence_file;
  fail(errc::parse_error, "unknown artifact role '" + std::string(s) + "'");
}

namespace {

bool is_name_start(char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; }
bool is_name_char(char c) { return is_name_start(c) || (c >= '0' && c <= '9'); }
bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

bool is_valid_env_name(std::string_view s) {
  if (s.empty() || !is_name_start(s.front())) return false;
  return std::all_of(s.begin(), s.end(), is_name_char);
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      if (auto t = trim(cur); !t.empty()) out.push_back(t);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (auto t = trim(cur); !t.empty()) out.push_back(t);
  return out;
}

std::string read_head(const fs::path& p, std::size_t n) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(errc::unreadable_file, "cannot read '" + p.string() + "'");
  std::string buf(n, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(n));
  buf.resize(static_cast<std::size_t>(in.gcount()));
  return buf;
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

enum class ShebangClass { none, shell, interpreter, unknown };

constexpr std::array<std::string_view, 12> kShells{"sh",  "bash", "dash", "zsh",  "ksh",  "mksh",
                                                    "csh", "tcsh", "fish", "ash",  "yash", "busybox"};
constexpr std::array<std::string_view, 13> kInterpreters{"python", "pypy", "perl",  "ruby", "Rscript",
                                                          "R",      "julia", "node", "lua",  "php",
                                                          "tclsh",  "octave", "deno"};

// "python3.11" -> "python"
std::string strip_version(std::string_view name) {
  auto end = name.find_first_of("0123456789");
  std::string base(name.substr(0, end));
  while (!base.empty() && (base.back() == '.' || base.back() == '-')) base.pop_back();
  return base;
}

ShebangClass classify_program_name(std::string_view program) {
  std::string base = fs::path(std::string(program)).filename().string();
  std::string stem = strip_version(base);
  if (std::find(kShells.begin(), kShells.end(), base) != kShells.end()) return ShebangClass::shell;
  if (std::find(kShells.begin(), kShells.end(), stem) != kShells.end()) return ShebangClass::shell;
  if (std::find(kInterpreters.begin(), kInterpreters.end(), stem) != kInterpreters.end()) {
    return ShebangClass::interpreter;
  }
  return ShebangClass::unknown;
}

ShebangClass classify_shebang(std::string_view head) {
  if (!starts_with(head, "#!")) return ShebangClass::none;
  auto eol = head.find('\n');
  std::string line(head.substr(2, eol == std::string_view::npos ? std::string_view::npos : eol - 2));
  std::istringstream words(line);
  std::vector<std::string> toks{std::istream_iterator<std::string>(words), std::istream_iterator<std::string>()};
  if (toks.empty()) return ShebangClass::unknown;
  std::size_t i = 0;
  if (fs::path(toks[0]).filename() == "env") {
    ++i;
    while (i < toks.size() && toks[i].starts_with("-")) {
      if (toks[i] == "-u" || toks[i] == "--unset") ++i;
      ++i;
    }
    while (i < toks.size() && toks[i].find('=') != std::string::npos) ++i;
    if (i >= toks.size()) return ShebangClass::unknown;
  }
  return classify_program_name(toks[i]);
}

constexpr std::array<std::string_view, 14> kInterpretedExt{".py", ".pyw", ".pl", ".pm", ".rb", ".R", ".r",
                                                            ".jl", ".js",  ".mjs", ".lua", ".php", ".tcl", ".m"};
constexpr std::array<std::string_view, 5> kShellExt{".sh", ".bash", ".zsh", ".ksh", ".csh"};

// Launchers and interpreters that precede the real entry point on a command line.
constexpr std::array<std::string_view, 9> kLaunchers{"mpirun", "mpiexec", "srun",    "env",   "time",
                                                      "numactl", "taskset", "nohup", "stdbuf"};
constexpr std::array<std::string_view, 16> kLauncherValueFlags{
    "-np", "-n", "--np", "-N", "--n", "-c", "--hostfile", "-hostfile", "-H", "--host", "-host",
    "--map-by", "--bind-to", "-ppn", "--ntasks", "-C"};

bool is_launcher_or_interpreter(std::string_view token) {
  auto base = fs::path(std::string(token)).filename().string();
  if (std::find(kLaunchers.begin(), kLaunchers.end(), base) != kLaunchers.end()) return true;
  return classify_program_name(base) != ShebangClass::unknown;
}

std::optional<fs::path> search_path(const std::string& name) {
  const char* path_env = std::getenv("PATH");
  if (!path_env || name.find('/') != std::string::npos) return std::nullopt;
  for (const auto& dir : split_list(path_env, ':')) {
    fs::path candidate = fs::path(dir) / name;
    std::error_code ec;
    if (fs::is_regular_file(candidate, ec)) return candidate;
  }
  return std::nullopt;
}

fs::path resolve_entry(const InvocationContext& inv, const fs::path& cwd) {
  if (inv.args.empty()) fail(errc::empty_command, "command has no executable after environment assignments");
  auto resolve = [&](const std::string& tok) -> std::optional<fs::path> {
    fs::path p(tok);
    if (p.is_relative()) p = cwd / p;
    std::error_code ec;
    if (fs::is_regular_file(p, ec)) return p.lexically_normal();
    return std::nullopt;
  };
  std::size_t i = 0;
  while (i < inv.args.size() && is_launcher_or_interpreter(inv.args[i])) {
    ++i;
    // skip the launcher's own options and env-style assignments
    while (i < inv.args.size() && inv.args[i].starts_with("-")) {
      const auto& flag = inv.args[i];
      bool takes_value = std::find(kLauncherValueFlags.begin(), kLauncherValueFlags.end(), flag) !=
                         kLauncherValueFlags.end();
      i += takes_value ? 2 : 1;
    }
    while (i < inv.args.size() && inv.args[i].find('=') != std::string::npos && !resolve(inv.args[i])) ++i;
  }
  if (i >= inv.args.size()) {
    // A bare interpreter or launcher is itself the entry point.
    const auto& first = inv.args.front();
    if (auto p = resolve(first)) return *p;
    if (auto p = search_path(first)) return *p;
    fail(errc::unreadable_file, "cannot locate an entry point in '" + inv.command + "'");
  }
  if (auto p = resolve(inv.args[i])) return *p;
  if (auto p = search_path(inv.args[i])) return *p;
  fail(errc::unreadable_file, "entry point '" + inv.args[i] + "' does not exist or is not readable");
}

double parse_positive(const std::string& s, const std::string& flag) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    fail(errc::parse_error, "--" + flag + " expects a positive number, got '" + s + "'");
  }
  if (used != s.size() || !(v > 0)) fail(errc::parse_error, "--" + flag + " expects a positive number, got '" + s + "'");
  return v;
}

void copy_readonly(const fs::path& from, const fs::path& to) {
  std::error_code ec;
  fs::create_directories(to.parent_path(), ec);
  if (ec) fail(errc::store_unwritable, "cannot create '" + to.parent_path().string() + "': " + ec.message());
  fs::copy(from, to, fs::copy_options::recursive | fs::copy_options::overwrite_existing, ec);
  if (ec) fail(errc::store_unwritable, "cannot stage '" + from.string() + "': " + ec.message());
  auto strip_write = [](const fs::path& p) {
    std::error_code e;
    if (fs::is_regular_file(p, e)) {
      fs::permissions(p, fs::perms::owner_write | fs::perms::group_write | fs::perms::others_write,
                      fs::perm_options::remove, e);
    }
  };
  if (fs::is_directory(to, ec)) {
    for (const auto& entry : fs::recursive_directory_iterator(to, ec)) strip_write(entry.path());
  } else {
    strip_write(to);
  }
}

}  // namespace

std::vector<ShellToken> shell_tokenize(std::string_view s) {
  std::vector<ShellToken> out;
  ShellToken cur;
  bool in_token = false;
  bool unquoted_so_far = true;
  std::size_t i = 0;

  auto finish = [&] {
    if (in_token) out.push_back(std::move(cur));
    cur = ShellToken{};
    in_token = false;
    unquoted_so_far = true;
  };

  while (i < s.size()) {
    char c = s[i];
    if (is_blank(c)) {
      finish();
      ++i;
      continue;
    }
    if (c == '#' && !in_token) break;  // comment to end of input
    in_token = true;
    if (c == '\\') {
      if (i + 1 >= s.size()) fail(errc::unbalanced_quote, "trailing backslash in command");
      if (s[i + 1] != '\n') cur.text += s[i + 1];
      unquoted_so_far = false;
      i += 2;
    } else if (c == '\'') {
      auto close = s.find('\'', i + 1);
      if (close == std::string_view::npos) fail(errc::unbalanced_quote, "unterminated single quote in command");
      cur.text.append(s.substr(i + 1, close - i - 1));
      unquoted_so_far = false;
      i = close + 1;
    } else if (c == '"') {
      ++i;
      bool closed = false;
      while (i < s.size()) {
        char d = s[i];
        if (d == '"') {
          closed = true;
          ++i;
          break;
        }
        if (d == '\\' && i + 1 < s.size() &&
            (s[i + 1] == '$' || s[i + 1] == '`' || s[i + 1] == '"' || s[i + 1] == '\\' || s[i + 1] == '\n')) {
          if (s[i + 1] != '\n') cur.text += s[i + 1];
          i += 2;
          continue;
        }
        cur.text += d;
        ++i;
      }
      if (!closed) fail(errc::unbalanced_quote, "unterminated double quote in command");
      unquoted_so_far = false;
    } else {
      if (c == '=' && unquoted_so_far && cur.assignment_name_len == 0 && is_valid_env_name(cur.text)) {
        cur.assignment_name_len = cur.text.size();
      }
      cur.text += c;
      ++i;
    }
  }
  finish();
  return out;
}

std::string shell_quote(std::string_view word) {
  auto safe = [](char c) {
    return is_name_char(c) || c == '@' || c == '%' || c == '+' || c == ':' || c == ',' || c == '.' || c == '/' ||
           c == '-';
  };
  if (!word.empty() && std::all_of(word.begin(), word.end(), safe)) return std::string(word);
  std::string out = "'";
  for (char c : word) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  out += '\'';
  return out;
}

InvocationContext parse_invocation(std::string_view raw_command, const EnvMap& extra_env) {
  InvocationContext ctx;
  ctx.command = trim(raw_command);
  if (ctx.command.empty()) fail(errc::empty_command, "run command is empty");
  for (const auto& [name, _] : extra_env) {
    if (!is_valid_env_name(name)) fail(errc::parse_error, "invalid environment variable name '" + name + "'");
  }
  auto tokens = shell_tokenize(ctx.command);
  ctx.env = extra_env;
  std::size_t i = 0;
  for (; i < tokens.size() && tokens[i].assignment_name_len > 0; ++i) {
    const auto& t = tokens[i];
    ctx.env[t.text.substr(0, t.assignment_name_len)] = t.text.substr(t.assignment_name_len + 1);
  }
  for (; i < tokens.size(); ++i) ctx.args.push_back(std::move(tokens[i].text));
  return ctx;
}

std::string render_invocation(const InvocationContext& ctx) {
  std::string out;
  auto append = [&](const std::string& w) {
    if (!out.empty()) out += ' ';
    out += w;
  };
  for (const auto& [name, value] : ctx.env) append(name + "=" + shell_quote(value));
  for (std::size_t i = 0; i < ctx.args.size(); ++i) {
    std::string q = shell_quote(ctx.args[i]);
    // The first argument must not be re-read as an assignment word.
    if (i == 0 && q == ctx.args[i]) {
      auto eq = q.find('=');
      if (eq != std::string::npos && is_valid_env_name(std::string_view(q).substr(0, eq))) q = "'" + q + "'";
    }
    append(q);
  }
  return out;
}

WorkloadKind classify_workload_bytes(std::string_view head, const fs::path& name) {
  if (head.size() >= 4 && head[0] == '\x7f' && head[1] == 'E' && head[2] == 'L' && head[3] == 'F') {
    return WorkloadKind::compiled_binary;
  }
  switch (classify_shebang(head)) {
    case ShebangClass::shell: return WorkloadKind::shell_script;
    case ShebangClass::interpreter: return WorkloadKind::interpreted_entry_point;
    case ShebangClass::none:
    case ShebangClass::unknown: break;
  }
  auto ext = name.extension().string();
  if (std::find(kInterpretedExt.begin(), kInterpretedExt.end(), ext) != kInterpretedExt.end()) {
    return WorkloadKind::interpreted_entry_point;
  }
  if (std::find(kShellExt.begin(), kShellExt.end(), ext) != kShellExt.end()) return WorkloadKind::shell_script;
  fail(errc::unknown_workload_kind, "cannot classify '" + name.string() + "' as binary, shell script or interpreted");
}

WorkloadKind classify_workload(const fs::path& entry_path) {
  std::error_code ec;
  if (!fs::is_regular_file(entry_path, ec)) fail(errc::unreadable_file, "'" + entry_path.string() + "' is not a file");
  return classify_workload_bytes(read_head(entry_path, 512), entry_path);
}

bool is_valid_job_id(std::string_view id) noexcept {
  if (id.empty() || id.size() > 64) return false;
  auto ok = [](char c) { return is_name_char(c) || c == '.' || c == '-'; };
  if (!(is_name_char(id.front()) && id.front() != '_')) return false;
  return std::all_of(id.begin(), id.end(), ok);
}

std::string JobIdGenerator::next() {
  using namespace std::chrono;
  long long now_us = duration_cast<microseconds>(system_clock::now().time_since_epoch()).count();
  long long us = 0;
  {
    std::lock_guard lock(mu_);
    us = std::max(now_us, last_us_ + 1);
    last_us_ = us;
  }
  std::time_t secs = static_cast<std::time_t>(us / 1000000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d%02d%02dT%02d%02d%02d%06lldZ-%08x", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, us % 1000000,
                static_cast<unsigned>(::getpid()));
  return buf;
}

std::string new_job_id() {
  static JobIdGenerator generator;
  return generator.next();
}

JobSpec normalize_submission(std::string_view raw_command, const std::map<std::string, std::string>& options,
                             const NormalizeContext& ctx) {
  auto opt = [&](const std::string& key) -> std::optional<std::string> {
    auto it = options.find(key);
    if (it == options.end() || it->second.empty()) return std::nullopt;
    return it->second;
  };

  JobSpec spec;
  spec.invocation = parse_invocation(raw_command);
  spec.entry_path = resolve_entry(spec.invocation, ctx.working_dir);
  spec.workload_kind = classify_workload(spec.entry_path);

  auto add_paths = [&](const char* key, ArtifactRole role) {
    if (auto v = opt(key)) {
      for (const auto& item : split_list(*v, '\n')) {
        fs::path p(item);
        if (p.is_relative()) p = ctx.working_dir / p;
        std::error_code ec;
        if (!fs::exists(p, ec)) fail(errc::unreadable_file, "--" + std::string(key) + " path '" + item + "' does not exist");
        spec.aux_artifacts.push_back(AuxArtifact{role, p.lexically_normal(), std::nullopt});
      }
    }
  };
  add_paths("job-src", ArtifactRole::source_tree);
  add_paths("docs", ArtifactRole::docs);
  add_paths("build-files", ArtifactRole::build_files);
  add_paths("evidence", ArtifactRole::evidence_file);

  // Evidence files emitted next to the executable by external tools.
  for (const char* suffix : {".dis", ".cg.json"}) {
    fs::path sibling = spec.entry_path;
    sibling += suffix;
    std::error_code ec;
    bool already = std::any_of(spec.aux_artifacts.begin(), spec.aux_artifacts.end(),
                               [&](const AuxArtifact& a) { return a.path == sibling; });
    if (!already && fs::is_regular_file(sibling, ec)) {
      spec.aux_artifacts.push_back(AuxArtifact{ArtifactRole::evidence_file, sibling, std::nullopt});
    }
  }

  if (auto v = opt("wrapper")) {
    for (const auto& item : split_list(*v, '\n')) {
      fs::path p(item);
      if (p.is_relative()) p = ctx.working_dir / p;
      std::error_code ec;
      if (!fs::is_regular_file(p, ec)) fail(errc::unreadable_file, "wrapper script '" + item + "' is not readable");
      spec.invocation.wrapper_scripts.push_back(p.lexically_normal());
    }
  }

  if (auto v = opt("job-history")) {
    for (const auto& id : split_list(*v, ',')) {
      if (!is_valid_job_id(id)) fail(errc::invalid_job_id, "'" + id + "' is not a valid job id");
      spec.history_refs.push_back(id);
    }
  }

  UserOverrides overrides;
  if (auto v = opt("ram")) overrides.ram_gb = parse_positive(*v, "ram");
  if (auto v = opt("cloud")) overrides.cloud = *v;
  if (auto v = opt("instance-type")) overrides.instance_type = *v;
  if (auto v = opt("constraints")) {
    fs::path p(*v);
    if (p.is_relative()) p = ctx.working_dir / p;
    std::ifstream in(p);
    if (!in) fail(errc::unreadable_file, "cannot read constraints file '" + p.string() + "'");
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      fail(errc::parse_error, "constraints file '" + p.string() + "': " + e.what());
    }
    overrides.extra_constraints = partial_bundle_from_json(doc);
  }
  if (overrides.instance_type && overrides.extra_constraints && !overrides.extra_constraints->empty()) {
    fail(errc::conflicting_overrides, "--instance-type bypasses recommendation and cannot be combined with constraints");
  }
  if (!overrides.empty()) spec.user_overrides = overrides;

  spec.job_id = ctx.job_id ? *ctx.job_id : new_job_id();
  if (!is_valid_job_id(spec.job_id)) fail(errc::invalid_job_id, "'" + spec.job_id + "' is not a valid job id");

  if (ctx.store_root) {
    fs::path base = *ctx.store_root / "jobs" / spec.job_id / "artifacts";
    fs::path staged_entry = base / "entry" / spec.entry_path.filename();
    copy_readonly(spec.entry_path, staged_entry);
    spec.staged_entry = staged_entry;
    std::size_t n = 0;
    for (auto& a : spec.aux_artifacts) {
      fs::path dest = base / std::string(to_string(a.role)) / (std::to_string(n++) + "-" + a.path.filename().string());
      copy_readonly(a.path, dest);
      a.staged = dest;
    }
  }
  return spec;
}

json to_json(const InvocationContext& ctx) {
  json wrappers = json::array();
  for (const auto& w : ctx.wrapper_scripts) wrappers.push_back(w.string());
  return json{{"command", ctx.command}, {"args", ctx.args}, {"env", ctx.env}, {"wrapper_scripts", wrappers}};
}

InvocationContext invocation_from_json(const json& j) {
  InvocationContext ctx;
  ctx.command = j.at("command").get<std::string>();
  ctx.args = j.at("args").get<std::vector<std::string>>();
  ctx.env = j.at("env").get<EnvMap>();
  for (const auto& w : j.at("wrapper_scripts")) ctx.wrapper_scripts.emplace_back(w.get<std::string>());
  return ctx;
}

json to_json(const JobSpec& spec) {
  json aux = json::array();
  for (const auto& a : spec.aux_artifacts) {
    json item{{"role", std::string(to_string(a.role))}, {"path", a.path.string()}};
    if (a.staged) item["staged"] = a.staged->string();
    aux.push_back(item);
  }
  json j{{"job_id", spec.job_id},
         {"workload_kind", std::string(to_string(spec.workload_kind))},
         {"entry_path", spec.entry_path.string()},
         {"invocation", to_json(spec.invocation)},
         {"aux_artifacts", aux},
         {"history_refs", spec.history_refs}};
  if (spec.staged_entry) j["staged_entry"] = spec.staged_entry->string();
  if (spec.user_overrides) j["user_overrides"] = to_json(*spec.user_overrides);
  return j;
}

JobSpec job_spec_from_json(const json& j) {
  JobSpec spec;
  spec.job_id = j.at("job_id").get<std::string>();
  spec.workload_kind = parse_workload_kind(j.at("workload_kind").get<std::string>());
  spec.entry_path = j.at("entry_path").get<std::string>();
  if (auto it = j.find("staged_entry"); it != j.end()) spec.staged_entry = fs::path(it->get<std::string>());
  spec.invocation = invocation_from_json(j.at("invocation"));
  for (const auto& a : j.at("aux_artifacts")) {
    AuxArtifact art;
    art.role = parse_artifact_role(a.at("role").get<std::string>());
    art.path = a.at("path").get<std::string>();
    if (auto it = a.find("staged"); it != a.end()) art.staged = fs::path(it->get<std::string>());
    spec.aux_artifacts.push_back(std::move(art));
  }
  if (auto it = j.find("user_overrides"); it != j.end()) spec.user_overrides = overrides_from_json(*it);
  spec.history_refs = j.at("history_refs").get<std::vector<std::string>>();
  return spec;
}

}  // namespace incisor
