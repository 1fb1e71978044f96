#include "memore/toml.hpp"

#include <cctype>
#include <charconv>
#include <string>
#include <vector>

#include "memore/error.hpp"

namespace memore::toml {

using nlohmann::json;

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  json run() {
    json root = json::object();
    json* table = &root;
    while (true) {
      skip_ws_comments_newlines();
      if (eof()) break;
      if (peek() == '[') {
        table = header(root);
      } else {
        key_value(*table);
      }
      end_of_line();
    }
    return root;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::InvalidConfig, "config line " + std::to_string(line_) + ": " + what);
  }

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }
  char get() {
    if (eof()) fail("unexpected end of input");
    char c = s_[pos_++];
    if (c == '\n') ++line_;
    return c;
  }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    get();
  }

  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) get();
  }
  void skip_comment() {
    if (peek() == '#') {
      while (!eof() && peek() != '\n') get();
    }
  }
  void skip_ws_comments_newlines() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (peek() == '\r' || peek() == '\n') {
        get();
      } else {
        break;
      }
    }
  }
  void end_of_line() {
    skip_ws();
    skip_comment();
    if (peek() == '\r') get();
    if (!eof() && peek() != '\n') fail("unexpected text after value");
  }

  std::string bare_or_quoted_key() {
    skip_ws();
    if (peek() == '"') return basic_string();
    if (peek() == '\'') return literal_string();
    std::string k;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' ||
                      peek() == '-')) {
      k += get();
    }
    if (k.empty()) fail("expected a key");
    return k;
  }

  std::vector<std::string> dotted_key() {
    std::vector<std::string> parts{bare_or_quoted_key()};
    skip_ws();
    while (peek() == '.') {
      get();
      parts.push_back(bare_or_quoted_key());
      skip_ws();
    }
    return parts;
  }

  json* descend(json& base, const std::vector<std::string>& path, std::size_t count) {
    json* t = &base;
    for (std::size_t i = 0; i < count; ++i) {
      json& next = (*t)[path[i]];
      if (next.is_null()) next = json::object();
      if (next.is_array() && !next.empty() && next.back().is_object()) {
        t = &next.back();
      } else if (next.is_object()) {
        t = &next;
      } else {
        fail("key '" + path[i] + "' is not a table");
      }
    }
    return t;
  }

  json* header(json& root) {
    expect('[');
    const bool array = peek() == '[';
    if (array) get();
    auto path = dotted_key();
    expect(']');
    if (array) expect(']');
    json* parent = descend(root, path, path.size() - 1);
    json& slot = (*parent)[path.back()];
    if (array) {
      if (slot.is_null()) slot = json::array();
      if (!slot.is_array()) fail("'" + path.back() + "' is not an array of tables");
      slot.push_back(json::object());
      return &slot.back();
    }
    if (slot.is_null()) slot = json::object();
    if (!slot.is_object()) fail("'" + path.back() + "' is already a value");
    return &slot;
  }

  void key_value(json& table) {
    auto path = dotted_key();
    skip_ws();
    expect('=');
    skip_ws();
    json v = value();
    json* t = descend(table, path, path.size() - 1);
    if (t->contains(path.back())) fail("duplicate key '" + path.back() + "'");
    (*t)[path.back()] = std::move(v);
  }

  json value() {
    char c = peek();
    if (c == '"') return basic_string();
    if (c == '\'') return literal_string();
    if (c == '[') return array();
    if (c == '{') return inline_table();
    if (s_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    return number();
  }

  std::string basic_string() {
    expect('"');
    std::string out;
    while (true) {
      char c = get();
      if (c == '"') break;
      if (c == '\n') fail("newline in string");
      if (c != '\\') {
        out += c;
        continue;
      }
      char e = get();
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '\\': out += '\\'; break;
        case '"': out += '"'; break;
        default: fail(std::string("unsupported escape \\") + e);
      }
    }
    return out;
  }

  std::string literal_string() {
    expect('\'');
    std::string out;
    while (true) {
      char c = get();
      if (c == '\'') break;
      if (c == '\n') fail("newline in string");
      out += c;
    }
    return out;
  }

  json array() {
    expect('[');
    json out = json::array();
    while (true) {
      skip_ws_comments_newlines();
      if (peek() == ']') {
        get();
        return out;
      }
      out.push_back(value());
      skip_ws_comments_newlines();
      if (peek() == ',') {
        get();
      } else if (peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  json inline_table() {
    expect('{');
    json out = json::object();
    skip_ws();
    if (peek() == '}') {
      get();
      return out;
    }
    while (true) {
      key_value(out);
      skip_ws();
      if (peek() == ',') {
        get();
        continue;
      }
      expect('}');
      return out;
    }
  }

  json number() {
    std::string tok;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' ||
                      peek() == '-' || peek() == '.' || peek() == '_')) {
      char c = get();
      if (c != '_') tok += c;
    }
    if (tok.empty()) fail("expected a value");
    const bool floating = tok.find_first_of(".eE") != std::string::npos || tok == "inf" ||
                          tok == "nan";
    const char* b = tok.data() + (tok[0] == '+' ? 1 : 0);
    const char* e = tok.data() + tok.size();
    if (floating) {
      double d = 0;
      auto [p, ec] = std::from_chars(b, e, d);
      if (ec != std::errc() || p != e) fail("bad number '" + tok + "'");
      return d;
    }
    std::int64_t i = 0;
    auto [p, ec] = std::from_chars(b, e, i);
    if (ec != std::errc() || p != e) fail("bad value '" + tok + "'");
    return i;
  }
};

}  // namespace

json parse(std::string_view text) { return Parser(text).run(); }

}  // namespace memore::toml
