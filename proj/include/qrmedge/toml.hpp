#pragma once
// Minimal TOML reader covering the subset the scenario configuration
// uses: top-level key/value pairs, [table] and [[array-of-tables]]
// headers (single segment, no dotting), strings with the usual escapes,
// integers, floats, booleans, and (nested, possibly multi-line) arrays.
// Anything outside that subset is rejected with a line number.

#include <cctype>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace qrmedge::toml {

struct ParseError : std::runtime_error {
    ParseError(int line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line(line) {}
    int line;
};

struct Value;
using Array = std::vector<Value>;

struct Value {
    std::variant<std::int64_t, double, bool, std::string, Array> data;

    bool is_int() const { return std::holds_alternative<std::int64_t>(data); }
    bool is_float() const { return std::holds_alternative<double>(data); }
    bool is_bool() const { return std::holds_alternative<bool>(data); }
    bool is_string() const { return std::holds_alternative<std::string>(data); }
    bool is_array() const { return std::holds_alternative<Array>(data); }

    std::int64_t as_int() const { return std::get<std::int64_t>(data); }
    // Integers coerce to double so `100` is accepted where 100.0 is meant.
    double as_float() const {
        return is_int() ? static_cast<double>(as_int()) : std::get<double>(data);
    }
    bool as_bool() const { return std::get<bool>(data); }
    const std::string& as_string() const { return std::get<std::string>(data); }
    const Array& as_array() const { return std::get<Array>(data); }
};

struct Table {
    std::map<std::string, Value> values;
    std::map<std::string, Table> tables;
    std::map<std::string, std::vector<Table>> table_arrays;

    const Value* find(const std::string& key) const {
        auto it = values.find(key);
        return it == values.end() ? nullptr : &it->second;
    }
};

namespace detail {

class Parser {
  public:
    explicit Parser(std::string_view text) : text_(text) {}

    Table parse() {
        Table root;
        Table* current = &root;
        for (;;) {
            skip_blank();
            if (eof()) break;
            if (peek() == '[') {
                current = parse_header(root);
            } else {
                parse_key_value(*current);
            }
        }
        return root;
    }

  private:
    bool eof() const { return pos_ >= text_.size(); }
    char peek() const { return text_[pos_]; }

    char take() {
        char c = text_[pos_++];
        if (c == '\n') ++line_;
        return c;
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line_, msg); }

    void skip_inline_ws() {
        while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
    }

    // Whitespace, comments, and newlines between statements.
    void skip_blank() {
        for (;;) {
            skip_inline_ws();
            if (eof()) return;
            if (peek() == '#') {
                while (!eof() && peek() != '\n') ++pos_;
            } else if (peek() == '\n' || peek() == '\r') {
                take_newline();
            } else {
                return;
            }
        }
    }

    void take_newline() {
        if (peek() == '\r') ++pos_;
        if (!eof() && peek() == '\n') take();
    }

    void expect_line_end() {
        skip_inline_ws();
        if (eof()) return;
        if (peek() == '#') {
            while (!eof() && peek() != '\n') ++pos_;
        }
        if (eof()) return;
        if (peek() == '\n' || peek() == '\r') take_newline();
        else fail("unexpected trailing characters");
    }

    static bool is_key_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    }

    std::string parse_key() {
        std::string key;
        while (!eof() && is_key_char(peek())) key.push_back(take());
        if (key.empty()) fail("expected a key");
        return key;
    }

    Table* parse_header(Table& root) {
        take();  // '['
        const bool is_array = !eof() && peek() == '[';
        if (is_array) take();
        skip_inline_ws();
        const std::string name = parse_key();
        skip_inline_ws();
        if (eof() || peek() == '.') fail("dotted table names are not supported");
        if (take() != ']') fail("expected ']' after table name");
        if (is_array && (eof() || take() != ']')) fail("expected ']]' after table array name");
        expect_line_end();
        if (is_array) {
            root.table_arrays[name].emplace_back();
            return &root.table_arrays[name].back();
        }
        auto [it, inserted] = root.tables.try_emplace(name);
        if (!inserted) fail("table [" + name + "] defined twice");
        return &it->second;
    }

    void parse_key_value(Table& table) {
        const std::string key = parse_key();
        skip_inline_ws();
        if (eof() || take() != '=') fail("expected '=' after key '" + key + "'");
        skip_inline_ws();
        Value v = parse_value();
        expect_line_end();
        if (!table.values.emplace(key, std::move(v)).second)
            fail("key '" + key + "' defined twice");
    }

    Value parse_value() {
        if (eof()) fail("expected a value");
        const char c = peek();
        if (c == '"') return parse_string();
        if (c == '[') return parse_array();
        if (c == 't' || c == 'f') return parse_bool();
        if (c == '-' || c == '+' || std::isdigit(static_cast<unsigned char>(c)))
            return parse_number();
        fail("unsupported value syntax");
    }

    Value parse_string() {
        take();  // opening quote
        std::string out;
        for (;;) {
            if (eof()) fail("unterminated string");
            char c = take();
            if (c == '"') break;
            if (c == '\n') fail("newline inside string");
            if (c == '\\') {
                if (eof()) fail("unterminated escape");
                char e = take();
                switch (e) {
                    case '"': out.push_back('"'); break;
                    case '\\': out.push_back('\\'); break;
                    case 'n': out.push_back('\n'); break;
                    case 't': out.push_back('\t'); break;
                    case 'r': out.push_back('\r'); break;
                    default: fail("unsupported escape sequence");
                }
            } else {
                out.push_back(c);
            }
        }
        return Value{out};
    }

    Value parse_bool() {
        if (text_.compare(pos_, 4, "true") == 0) {
            pos_ += 4;
            return Value{true};
        }
        if (text_.compare(pos_, 5, "false") == 0) {
            pos_ += 5;
            return Value{false};
        }
        fail("expected true or false");
    }

    Value parse_number() {
        const std::size_t start = pos_;
        bool is_float = false;
        if (peek() == '-' || peek() == '+') ++pos_;
        while (!eof()) {
            const char c = peek();
            if (std::isdigit(static_cast<unsigned char>(c))) {
                ++pos_;
            } else if (c == '.' || c == 'e' || c == 'E') {
                is_float = true;
                ++pos_;
                if (!eof() && (peek() == '-' || peek() == '+') && (c == 'e' || c == 'E')) ++pos_;
            } else {
                break;
            }
        }
        const std::string token(text_.substr(start, pos_ - start));
        try {
            if (is_float) return Value{std::stod(token)};
            return Value{static_cast<std::int64_t>(std::stoll(token))};
        } catch (const std::exception&) {
            fail("bad number '" + token + "'");
        }
    }

    Value parse_array() {
        take();  // '['
        Array items;
        for (;;) {
            skip_array_blank();
            if (eof()) fail("unterminated array");
            if (peek() == ']') {
                take();
                break;
            }
            items.push_back(parse_value());
            skip_array_blank();
            if (eof()) fail("unterminated array");
            if (peek() == ',') {
                take();
            } else if (peek() != ']') {
                fail("expected ',' or ']' in array");
            }
        }
        return Value{std::move(items)};
    }

    // Inside arrays, newlines and comments are insignificant.
    void skip_array_blank() {
        for (;;) {
            skip_inline_ws();
            if (eof()) return;
            if (peek() == '#') {
                while (!eof() && peek() != '\n') ++pos_;
            } else if (peek() == '\n' || peek() == '\r') {
                take_newline();
            } else {
                return;
            }
        }
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    int line_ = 1;
};

}  // namespace detail

inline Table parse(std::string_view text) { return detail::Parser(text).parse(); }

}  // namespace qrmedge::toml
