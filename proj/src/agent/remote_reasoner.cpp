#include <cstdlib>
#include <fstream>

#include <httplib.h>

#include "incisor/agent.hpp"
#include "incisor/error.hpp"
#include "incisor/records.hpp"

namespace incisor {

namespace {

std::string dump(const json& j, int indent = -1) { return j.dump(indent, ' ', false, json::error_handler_t::replace); }

std::string clip(std::string s, std::size_t n) {
  if (s.size() > n) {
    s.resize(n);
    s += "...(truncated)";
  }
  return s;
}

// Models often wrap JSON replies in a fenced block.
std::string strip_fences(std::string s) {
  auto first = s.find("```");
  if (first == std::string::npos) return s;
  auto body = s.find('\n', first);
  auto last = s.rfind("```");
  if (body == std::string::npos || last <= body) return s;
  return s.substr(body + 1, last - body - 1);
}

struct Endpoint {
  std::string origin;  // scheme://host:port
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(errc::remote_reasoner, "endpoint '" + url + "' lacks a scheme");
  std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http") {
    fail(errc::remote_reasoner, "endpoint scheme '" + scheme + "' is not supported; this build speaks plain http");
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

RemoteReasonerOptions RemoteReasonerOptions::from_environment() {
  RemoteReasonerOptions o;
  const char* endpoint = std::getenv("INCISOR_REASONER_ENDPOINT");
  if (!endpoint || !*endpoint) fail(errc::remote_reasoner, "INCISOR_REASONER_ENDPOINT is not set");
  o.endpoint = endpoint;
  if (const char* m = std::getenv("INCISOR_REASONER_MODEL"); m && *m) o.model = m;
  if (const char* k = std::getenv("INCISOR_REASONER_API_KEY"); k && *k) o.api_key = k;
  return o;
}

RemoteReasoner::RemoteReasoner(RemoteReasonerOptions options) : options_(std::move(options)) {
  split_endpoint(options_.endpoint);  // reject bad endpoints up front
}

json RemoteReasoner::complete(const std::string& system, const std::string& user) {
  ++requests_;
  Endpoint ep = split_endpoint(options_.endpoint);
  json request{{"messages", json::array({{{"role", "system"}, {"content", system}}, {{"role", "user"}, {"content", user}}})},
               {"temperature", 0},
               {"response_format", {{"type", "json_object"}}}};
  if (!options_.model.empty()) request["model"] = options_.model;

  json entry{{"at", utc_timestamp()}, {"request", request}};
  auto log_entry = [&]() {
    if (!options_.transcript) return;
    std::error_code ec;
    fs::create_directories(options_.transcript->parent_path(), ec);
    std::ofstream out(*options_.transcript, std::ios::app);
    out << dump(entry) << "\n";
  };

  httplib::Client client(ep.origin);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  client.set_write_timeout(options_.timeout);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

  auto res = client.Post(ep.path, headers, dump(request), "application/json");
  if (!res) {
    entry["error"] = httplib::to_string(res.error());
    log_entry();
    fail(errc::remote_reasoner, "request to " + options_.endpoint + " failed: " + httplib::to_string(res.error()));
  }
  entry["status"] = res->status;
  entry["response"] = res->body;
  log_entry();
  if (res->status != 200) {
    fail(errc::remote_reasoner, "endpoint returned HTTP " + std::to_string(res->status) + ": " + clip(res->body, 300));
  }
  try {
    json body = json::parse(res->body);
    std::string content = body.at("choices").at(0).at("message").at("content").get<std::string>();
    return json::parse(strip_fences(content));
  } catch (const json::exception& e) {
    fail(errc::remote_reasoner, std::string("unusable completion: ") + e.what());
  }
}

std::optional<std::vector<Subtask>> RemoteReasoner::propose_decomposition(const AgentConfig& config,
                                                                          const std::string& input_digest) {
  std::string user = "Break the task into subtasks.\n"
                     "Dimensions to cover: " + dump(config.dimensions()) + "\n"
                     "Tools: " + dump(config.tool_registry) + "\n"
                     "Input:\n" + input_digest + "\n\n"
                     "Reply with {\"subtasks\": [{\"id\": int, \"description\": str, \"target_dimensions\": [str], "
                     "\"depends_on\": [int]}]}";
  json reply = complete(config.driver_prompt, user);
  std::vector<Subtask> out;
  for (const auto& s : reply.at("subtasks")) out.push_back(subtask_from_json(s));
  return out;
}

Action RemoteReasoner::next_action(const SubtaskContext& ctx) {
  json prior = json::array();
  for (const auto& sf : ctx.prior) {
    for (const auto& f : sf.findings) prior.push_back(to_json(f));
  }
  json observed = json::array();
  for (const auto& o : ctx.observations) {
    observed.push_back({{"tool", o.call.tool},
                        {"arguments", o.call.args},
                        {"status", std::string(to_string(o.result.status))},
                        {"result", clip(dump(o.result.payload), 4000)}});
  }
  std::string user = "Subtask: " + dump(to_json(ctx.subtask)) + "\n"
                     "Tools: " + dump(ctx.config.tool_registry) + "\n"
                     "Input:\n" + ctx.input_digest + "\n"
                     "Findings so far: " + dump(prior) + "\n"
                     "Observations: " + dump(observed) + "\n\n"
                     "Reply with either {\"action\": \"call_tool\", \"tool\": str, \"arguments\": {...}, \"thought\": str} "
                     "or {\"action\": \"finish\", \"findings\": [{\"dimension\": str, \"value\": any, \"confidence\": "
                     "\"low|medium|high\", \"detail\": str}], \"thought\": str}";
  json reply = complete(ctx.config.driver_prompt, user);

  Action a;
  a.thought = reply.value("thought", "");
  const std::string kind = reply.value("action", "");
  if (kind == "call_tool") {
    a.kind = Action::Kind::call_tool;
    a.call.tool = reply.value("tool", "");
    a.call.args = reply.value("arguments", json::object());
    return a;
  }
  if (kind != "finish") fail(errc::remote_reasoner, "unknown action '" + kind + "'");
  a.kind = Action::Kind::finish;
  for (const auto& f : reply.value("findings", json::array())) {
    try {
      Finding x = finding_from_json(f, ctx.subtask.id);
      if (x.source.empty()) x.source = "remote";
      x.measured = false;  // only the harness's own history evidence counts as measured
      a.findings.push_back(std::move(x));
    } catch (const std::exception&) {
      // malformed findings are dropped; synthesis falls back to defaults
    }
  }
  return a;
}

}  // namespace incisor
