#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace medmsa::ppl {

class Value;
struct Callable;

using List = std::vector<Value>;
// Records keep field insertion order; query records render in source order.
using Record = std::vector<std::pair<std::string, Value>>;

// Runtime value of a MedPPL expression.
//
// Data values are booleans, finite numbers, strings, lists and records.
// Functions exist only at runtime (closures, memoized closures) and never
// appear in samples. Undefined is the result of a function body that falls
// off its end.
class Value {
 public:
  struct Undefined {
    bool operator==(const Undefined&) const = default;
  };

  Value() = default;
  Value(bool b) : v_(b) {}  // NOLINT
  Value(double d) : v_(d) {}  // NOLINT
  Value(int i) : v_(static_cast<double>(i)) {}  // NOLINT
  Value(std::string s) : v_(std::move(s)) {}  // NOLINT
  Value(const char* s) : v_(std::string(s)) {}  // NOLINT
  Value(List l) : v_(std::make_shared<const List>(std::move(l))) {}  // NOLINT
  Value(Record r) : v_(std::make_shared<const Record>(std::move(r))) {}  // NOLINT
  explicit Value(std::shared_ptr<const Callable> f) : v_(std::move(f)) {}

  bool is_undefined() const { return std::holds_alternative<Undefined>(v_); }
  bool is_bool() const { return std::holds_alternative<bool>(v_); }
  bool is_number() const { return std::holds_alternative<double>(v_); }
  bool is_string() const { return std::holds_alternative<std::string>(v_); }
  bool is_list() const { return std::holds_alternative<std::shared_ptr<const List>>(v_); }
  bool is_record() const { return std::holds_alternative<std::shared_ptr<const Record>>(v_); }
  bool is_callable() const { return std::holds_alternative<std::shared_ptr<const Callable>>(v_); }
  // True for values that may be stored in a sample (no functions, no undefined).
  bool is_data() const;

  bool as_bool() const { return std::get<bool>(v_); }
  double as_number() const { return std::get<double>(v_); }
  const std::string& as_string() const { return std::get<std::string>(v_); }
  const List& as_list() const { return *std::get<std::shared_ptr<const List>>(v_); }
  const Record& as_record() const { return *std::get<std::shared_ptr<const Record>>(v_); }
  const std::shared_ptr<const Callable>& as_callable() const {
    return std::get<std::shared_ptr<const Callable>>(v_);
  }

  // JavaScript truthiness: false, 0, "" and undefined are falsy.
  bool truthy() const;

  const char* type_name() const;

  friend bool operator==(const Value& a, const Value& b);

 private:
  std::variant<Undefined, bool, double, std::string, std::shared_ptr<const List>,
               std::shared_ptr<const Record>, std::shared_ptr<const Callable>>
      v_;
};

// Shortest decimal text that round-trips to the same double ("3", "0.25",
// "1e-06").
std::string format_number(double d);

// Canonical string used as a distribution key: booleans "true"/"false",
// numbers via format_number, strings verbatim, lists and records as compact
// JSON.
std::string canonical_string(const Value& v);

std::ostream& operator<<(std::ostream& os, const Value& v);

// Injective encoding (type-tagged) used for mem cache keys.
std::string cache_key(const Value& v);

}  // namespace medmsa::ppl
