#include "wellflow/toml_lite.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace wellflow::toml_lite {

namespace {

struct Cursor {
  const std::string& text;
  std::size_t pos = 0;
  int line = 1;

  bool eof() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }
  char take() {
    char c = text[pos++];
    if (c == '\n') ++line;
    return c;
  }
  void skip_ws_inline() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos;
  }
  // whitespace, newlines and comments
  void skip_ws_and_comments() {
    while (!eof()) {
      char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        take();
      } else if (c == '#') {
        while (!eof() && peek() != '\n') ++pos;
      } else {
        break;
      }
    }
  }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line); }
};

bool is_bare_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

std::string parse_key(Cursor& c) {
  c.skip_ws_inline();
  if (c.eof()) c.fail("expected key");
  std::string key;
  if (c.peek() == '"') {
    c.take();
    while (!c.eof() && c.peek() != '"') key += c.take();
    if (c.eof()) c.fail("unterminated quoted key");
    c.take();
  } else {
    while (!c.eof() && is_bare_key_char(c.peek())) key += c.take();
  }
  if (key.empty()) c.fail("empty key");
  return key;
}

Value parse_value(Cursor& c);

Value parse_string(Cursor& c) {
  c.take();  // opening quote
  std::string out;
  while (!c.eof() && c.peek() != '"') {
    char ch = c.take();
    if (ch == '\\') {
      if (c.eof()) c.fail("dangling escape in string");
      char e = c.take();
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: c.fail(std::string("unsupported escape \\") + e);
      }
    } else if (ch == '\n') {
      c.fail("newline in basic string");
    } else {
      out += ch;
    }
  }
  if (c.eof()) c.fail("unterminated string");
  c.take();  // closing quote
  return Value(std::move(out));
}

Value parse_array(Cursor& c) {
  c.take();  // '['
  Array arr;
  for (;;) {
    c.skip_ws_and_comments();
    if (c.eof()) c.fail("unterminated array");
    if (c.peek() == ']') {
      c.take();
      break;
    }
    arr.push_back(parse_value(c));
    c.skip_ws_and_comments();
    if (c.eof()) c.fail("unterminated array");
    if (c.peek() == ',') {
      c.take();
    } else if (c.peek() != ']') {
      c.fail("expected ',' or ']' in array");
    }
  }
  return Value(std::move(arr));
}

Value parse_number_or_bool(Cursor& c) {
  std::string token;
  while (!c.eof()) {
    char ch = c.peek();
    if (is_bare_key_char(ch) || ch == '+' || ch == '.') {
      token += c.take();
    } else {
      break;
    }
  }
  if (token == "true") return Value(true);
  if (token == "false") return Value(false);
  if (token.empty()) c.fail("expected value");
  std::string cleaned;
  for (char ch : token)
    if (ch != '_') cleaned += ch;
  char* end = nullptr;
  const double num = std::strtod(cleaned.c_str(), &end);
  if (end != cleaned.c_str() + cleaned.size())
    c.fail("cannot parse value '" + token + "'");
  return Value(num);
}

Value parse_value(Cursor& c) {
  c.skip_ws_inline();
  if (c.eof()) c.fail("expected value");
  char ch = c.peek();
  if (ch == '"') return parse_string(c);
  if (ch == '[') return parse_array(c);
  return parse_number_or_bool(c);
}

void expect_line_end(Cursor& c) {
  c.skip_ws_inline();
  if (c.eof()) return;
  if (c.peek() == '#') {
    while (!c.eof() && c.peek() != '\n') ++c.pos;
    return;
  }
  if (c.peek() == '\n' || c.peek() == '\r') return;
  c.fail("unexpected trailing content");
}

}  // namespace

Table parse(const std::string& text) {
  Cursor c{text};
  Table root;
  Table* current = &root;

  for (;;) {
    c.skip_ws_and_comments();
    if (c.eof()) break;

    if (c.peek() == '[') {
      c.take();
      const bool array_of_tables = !c.eof() && c.peek() == '[';
      if (array_of_tables) c.take();
      const std::string name = parse_key(c);
      c.skip_ws_inline();
      if (c.eof() || c.peek() != ']') c.fail("expected ']' after table name");
      c.take();
      if (array_of_tables) {
        if (c.eof() || c.peek() != ']') c.fail("expected ']]' after table-array name");
        c.take();
      }
      expect_line_end(c);

      auto it = root.find(name);
      if (array_of_tables) {
        if (it == root.end()) it = root.emplace(name, Value(Array{})).first;
        if (!it->second.is_array()) c.fail("'" + name + "' is not a table array");
        // std::map mapped values are pointer-stable, so `current` stays valid
        // while keys are inserted; it is re-taken at every table header.
        Array& stored = it->second.as_array();
        stored.emplace_back(Value(Table{}));
        current = &stored.back().as_table();
      } else {
        if (it == root.end()) it = root.emplace(name, Value(Table{})).first;
        if (!it->second.is_table()) c.fail("'" + name + "' is not a table");
        current = &it->second.as_table();
      }
      continue;
    }

    const std::string key = parse_key(c);
    c.skip_ws_inline();
    if (c.eof() || c.peek() != '=') c.fail("expected '=' after key '" + key + "'");
    c.take();
    Value v = parse_value(c);
    expect_line_end(c);
    if (current->count(key)) c.fail("duplicate key '" + key + "'");
    current->emplace(key, std::move(v));
  }
  return root;
}

Table parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const Value* find(const Table& t, const std::string& key) {
  auto it = t.find(key);
  return it == t.end() ? nullptr : &it->second;
}

const Value& require(const Table& t, const std::string& key) {
  const Value* v = find(t, key);
  if (!v) throw std::runtime_error("missing required config key '" + key + "'");
  return *v;
}

std::string get_string(const Table& t, const std::string& key, const std::string& fallback) {
  const Value* v = find(t, key);
  return v ? v->as_string() : fallback;
}

double get_number(const Table& t, const std::string& key, double fallback) {
  const Value* v = find(t, key);
  return v ? v->as_number() : fallback;
}

bool get_bool(const Table& t, const std::string& key, bool fallback) {
  const Value* v = find(t, key);
  return v ? v->as_bool() : fallback;
}

std::vector<double> number_array(const Value& v) {
  std::vector<double> out;
  for (const Value& e : v.as_array()) out.push_back(e.as_number());
  return out;
}

}  // namespace wellflow::toml_lite
