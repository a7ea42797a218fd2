#include "incisor/json_schema.hpp"

#include <cmath>
#include <set>

namespace incisor {

namespace {

bool has_type(const json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  if (t == "number") return v.is_number();
  if (t == "integer") {
    if (v.is_number_integer()) return true;
    if (v.is_number_float()) {
      double d = v.get<double>();
      return std::isfinite(d) && std::floor(d) == d;
    }
    return false;
  }
  return false;
}

const std::set<std::string> kTypes{"object", "array", "string", "boolean", "null", "number", "integer"};

void validate(const json& v, const json& s, const std::string& ptr, std::vector<std::string>& out) {
  if (s.is_boolean()) {
    if (!s.get<bool>()) out.push_back(ptr + ": no value allowed here");
    return;
  }
  if (!s.is_object()) return;
  const std::string where = ptr.empty() ? "/" : ptr;

  if (auto t = s.find("type"); t != s.end()) {
    bool ok = false;
    if (t->is_string()) {
      ok = has_type(v, t->get<std::string>());
    } else if (t->is_array()) {
      for (const auto& alt : *t) ok = ok || (alt.is_string() && has_type(v, alt.get<std::string>()));
    }
    if (!ok) {
      out.push_back(where + ": expected type " + t->dump() + ", got " + v.type_name());
      return;  // further keywords would only repeat the mismatch
    }
  }
  if (auto e = s.find("enum"); e != s.end() && e->is_array()) {
    bool found = false;
    for (const auto& option : *e) found = found || option == v;
    if (!found) out.push_back(where + ": " + v.dump() + " is not one of " + e->dump());
  }
  if (auto c = s.find("const"); c != s.end() && *c != v) {
    out.push_back(where + ": expected " + c->dump());
  }

  if (v.is_number()) {
    const double d = v.get<double>();
    if (auto m = s.find("minimum"); m != s.end() && m->is_number() && d < m->get<double>()) {
      out.push_back(where + ": " + v.dump() + " below minimum " + m->dump());
    }
    if (auto m = s.find("maximum"); m != s.end() && m->is_number() && d > m->get<double>()) {
      out.push_back(where + ": " + v.dump() + " above maximum " + m->dump());
    }
    if (auto m = s.find("exclusiveMinimum"); m != s.end() && m->is_number() && d <= m->get<double>()) {
      out.push_back(where + ": " + v.dump() + " must exceed " + m->dump());
    }
    if (auto m = s.find("exclusiveMaximum"); m != s.end() && m->is_number() && d >= m->get<double>()) {
      out.push_back(where + ": " + v.dump() + " must be below " + m->dump());
    }
  }

  if (v.is_string()) {
    const auto n = v.get_ref<const std::string&>().size();
    if (auto m = s.find("minLength"); m != s.end() && m->is_number_unsigned() && n < m->get<std::size_t>()) {
      out.push_back(where + ": string shorter than " + m->dump());
    }
    if (auto m = s.find("maxLength"); m != s.end() && m->is_number_unsigned() && n > m->get<std::size_t>()) {
      out.push_back(where + ": string longer than " + m->dump());
    }
  }

  if (v.is_array()) {
    if (auto m = s.find("minItems"); m != s.end() && m->is_number_unsigned() && v.size() < m->get<std::size_t>()) {
      out.push_back(where + ": fewer than " + m->dump() + " items");
    }
    if (auto m = s.find("maxItems"); m != s.end() && m->is_number_unsigned() && v.size() > m->get<std::size_t>()) {
      out.push_back(where + ": more than " + m->dump() + " items");
    }
    if (auto u = s.find("uniqueItems"); u != s.end() && u->is_boolean() && u->get<bool>()) {
      std::set<std::string> seen;
      for (const auto& item : v) {
        if (!seen.insert(item.dump()).second) {
          out.push_back(where + ": duplicate item " + item.dump());
          break;
        }
      }
    }
    if (auto items = s.find("items"); items != s.end()) {
      for (std::size_t i = 0; i < v.size(); ++i) validate(v[i], *items, ptr + "/" + std::to_string(i), out);
    }
  }

  if (v.is_object()) {
    if (auto req = s.find("required"); req != s.end() && req->is_array()) {
      for (const auto& key : *req) {
        if (key.is_string() && !v.contains(key.get<std::string>())) {
          out.push_back(where + ": missing required property '" + key.get<std::string>() + "'");
        }
      }
    }
    const json* props = nullptr;
    if (auto p = s.find("properties"); p != s.end() && p->is_object()) props = &*p;
    for (const auto& [key, value] : v.items()) {
      if (props && props->contains(key)) {
        validate(value, props->at(key), ptr + "/" + key, out);
      } else if (auto ap = s.find("additionalProperties"); ap != s.end()) {
        if (ap->is_boolean() && !ap->get<bool>()) {
          out.push_back(where + ": unexpected property '" + key + "'");
        } else if (ap->is_object()) {
          validate(value, *ap, ptr + "/" + key, out);
        }
      }
    }
  }
}

void check(const json& s, const std::string& ptr, std::vector<std::string>& out) {
  const std::string where = ptr.empty() ? "/" : ptr;
  if (s.is_boolean()) return;
  if (!s.is_object()) {
    out.push_back(where + ": schema must be an object or boolean");
    return;
  }
  if (auto t = s.find("type"); t != s.end()) {
    auto known = [](const json& x) { return x.is_string() && kTypes.count(x.get<std::string>()) > 0; };
    bool ok = known(*t);
    if (t->is_array()) {
      ok = !t->empty();
      for (const auto& x : *t) ok = ok && known(x);
    }
    if (!ok) out.push_back(where + "/type: unknown type " + t->dump());
  }
  if (auto e = s.find("enum"); e != s.end() && (!e->is_array() || e->empty())) {
    out.push_back(where + "/enum: must be a non-empty array");
  }
  for (const char* k : {"minimum", "maximum", "exclusiveMinimum", "exclusiveMaximum"}) {
    if (auto m = s.find(k); m != s.end() && !m->is_number()) out.push_back(where + "/" + k + ": must be a number");
  }
  for (const char* k : {"minItems", "maxItems", "minLength", "maxLength"}) {
    if (auto m = s.find(k); m != s.end() && !m->is_number_unsigned()) {
      out.push_back(where + "/" + k + ": must be a non-negative integer");
    }
  }
  if (auto u = s.find("uniqueItems"); u != s.end() && !u->is_boolean()) {
    out.push_back(where + "/uniqueItems: must be a boolean");
  }
  if (auto r = s.find("required"); r != s.end()) {
    bool ok = r->is_array();
    if (ok) {
      for (const auto& k : *r) ok = ok && k.is_string();
    }
    if (!ok) out.push_back(where + "/required: must be an array of strings");
  }
  if (auto p = s.find("properties"); p != s.end()) {
    if (!p->is_object()) {
      out.push_back(where + "/properties: must be an object");
    } else {
      for (const auto& [key, sub] : p->items()) check(sub, ptr + "/properties/" + key, out);
    }
  }
  if (auto ap = s.find("additionalProperties"); ap != s.end()) check(*ap, ptr + "/additionalProperties", out);
  if (auto items = s.find("items"); items != s.end()) check(*items, ptr + "/items", out);
}

}  // namespace

std::vector<std::string> validate_json_schema(const json& doc, const json& schema) {
  std::vector<std::string> out;
  validate(doc, schema, "", out);
  return out;
}

std::vector<std::string> check_schema_document(const json& schema) {
  std::vector<std::string> out;
  check(schema, "", out);
  return out;
}

}  // namespace incisor
