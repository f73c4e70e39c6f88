#pragma once

// Minimal TOML reader covering the subset the config files use: comments,
// bare keys, basic strings, numbers, booleans, arrays (single- or multi-line),
// [tables] and [[arrays of tables]]. No dotted keys, no datetimes.

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace wellflow::toml_lite {

class Value;
using Array = std::vector<Value>;
using Table = std::map<std::string, Value>;

class Value {
 public:
  using Storage = std::variant<std::string, double, bool, Array, Table>;

  Value() : v_(Table{}) {}
  Value(Storage v) : v_(std::move(v)) {}

  bool is_string() const { return std::holds_alternative<std::string>(v_); }
  bool is_number() const { return std::holds_alternative<double>(v_); }
  bool is_bool() const { return std::holds_alternative<bool>(v_); }
  bool is_array() const { return std::holds_alternative<Array>(v_); }
  bool is_table() const { return std::holds_alternative<Table>(v_); }

  const std::string& as_string() const { return get<std::string>("string"); }
  double as_number() const { return get<double>("number"); }
  bool as_bool() const { return get<bool>("boolean"); }
  const Array& as_array() const { return get<Array>("array"); }
  Array& as_array() { return std::get<Array>(v_); }
  const Table& as_table() const { return get<Table>("table"); }
  Table& as_table() { return std::get<Table>(v_); }

 private:
  template <class T>
  const T& get(const char* what) const {
    if (!std::holds_alternative<T>(v_))
      throw std::runtime_error(std::string("config value is not a ") + what);
    return std::get<T>(v_);
  }
  Storage v_;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_number(line) {}
  int line_number;
};

Table parse(const std::string& text);
Table parse_file(const std::string& path);

// Lookup helpers; `required` variants throw with the key name in the message.
const Value* find(const Table& t, const std::string& key);
const Value& require(const Table& t, const std::string& key);
std::string get_string(const Table& t, const std::string& key, const std::string& fallback);
double get_number(const Table& t, const std::string& key, double fallback);
bool get_bool(const Table& t, const std::string& key, bool fallback);
std::vector<double> number_array(const Value& v);

}  // namespace wellflow::toml_lite
