#include "medmsa/ppl/value.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ostream>

#include <nlohmann/json.hpp>

namespace medmsa::ppl {

bool Value::is_data() const {
  if (is_undefined() || is_callable()) return false;
  if (is_list()) {
    for (const auto& x : as_list())
      if (!x.is_data()) return false;
  }
  if (is_record()) {
    for (const auto& [k, x] : as_record())
      if (!x.is_data()) return false;
  }
  return true;
}

bool Value::truthy() const {
  if (is_undefined()) return false;
  if (is_bool()) return as_bool();
  if (is_number()) return as_number() != 0.0;
  if (is_string()) return !as_string().empty();
  return true;
}

const char* Value::type_name() const {
  if (is_undefined()) return "undefined";
  if (is_bool()) return "boolean";
  if (is_number()) return "number";
  if (is_string()) return "string";
  if (is_list()) return "list";
  if (is_record()) return "record";
  return "function";
}

bool operator==(const Value& a, const Value& b) {
  if (a.v_.index() != b.v_.index()) return false;
  if (a.is_list()) return a.as_list() == b.as_list();
  if (a.is_record()) return a.as_record() == b.as_record();
  return a.v_ == b.v_;
}

std::string format_number(double d) {
  if (d == 0) return "0";
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), d);
  (void)ec;
  return std::string(buf.data(), end);
}

namespace {

nlohmann::ordered_json to_json_compact(const Value& v) {
  if (v.is_bool()) return v.as_bool();
  if (v.is_number()) return v.as_number();
  if (v.is_string()) return v.as_string();
  if (v.is_list()) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& x : v.as_list()) arr.push_back(to_json_compact(x));
    return arr;
  }
  if (v.is_record()) {
    auto obj = nlohmann::ordered_json::object();
    for (const auto& [k, x] : v.as_record()) obj[k] = to_json_compact(x);
    return obj;
  }
  return nullptr;
}

}  // namespace

std::string canonical_string(const Value& v) {
  if (v.is_bool()) return v.as_bool() ? "true" : "false";
  if (v.is_number()) return format_number(v.as_number());
  if (v.is_string()) return v.as_string();
  if (v.is_list() || v.is_record()) return to_json_compact(v).dump();
  return v.type_name();
}

std::string cache_key(const Value& v) {
  if (v.is_undefined()) return "u";
  if (v.is_bool()) return v.as_bool() ? "T" : "F";
  if (v.is_number()) return "n" + format_number(v.as_number());
  if (v.is_string()) return "s" + std::to_string(v.as_string().size()) + ":" + v.as_string();
  if (v.is_list()) {
    std::string out = "[" + std::to_string(v.as_list().size());
    for (const auto& x : v.as_list()) out += "," + cache_key(x);
    return out + "]";
  }
  if (v.is_record()) {
    std::string out = "{" + std::to_string(v.as_record().size());
    for (const auto& [k, x] : v.as_record())
      out += "," + std::to_string(k.size()) + ":" + k + "=" + cache_key(x);
    return out + "}";
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "f%p", static_cast<const void*>(v.as_callable().get()));
  return buf;
}

std::ostream& operator<<(std::ostream& os, const Value& v) {
  if (v.is_data()) return os << canonical_string(v);
  return os << '<' << v.type_name() << '>';
}

}  // namespace medmsa::ppl
