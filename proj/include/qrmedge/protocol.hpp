#pragma once
// Wire format for node<->collector traffic: one UTF-8 JSON object per
// message, fixed field order, numbers capped at 6 decimal places, a
// single LF terminator, and a hard 1024-byte line limit.
//
// The schema is closed on purpose: a message carrying any field outside
// its fixed set is rejected, which is what keeps image-sized payloads off
// the wire. See docs/protocol.md for byte-level examples.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "qrmedge/domain.hpp"

namespace qrmedge {

inline constexpr std::size_t kMaxLineBytes = 1024;

// First message on a connection: declares the node and its class list.
struct HelloMsg {
    std::string node_id;
    double capacity_wh = 0.0;
    ModeId initial_mode = 0;
    std::vector<std::string> class_labels;

    bool operator==(const HelloMsg&) const = default;
};

struct TelemetryMsg {
    TelemetrySample sample;
    bool operator==(const TelemetryMsg&) const = default;
};

struct ReconfigMsg {
    ReconfigCommand command;
    bool operator==(const ReconfigMsg&) const = default;
};

struct AckMsg {
    std::uint64_t command_id = 0;
    std::string node_id;
    bool operator==(const AckMsg&) const = default;
};

struct ByeMsg {
    std::string node_id;
    std::string reason;
    bool operator==(const ByeMsg&) const = default;
};

using WireMessage = std::variant<HelloMsg, TelemetryMsg, ReconfigMsg, AckMsg, ByeMsg>;

enum class DecodeErrorKind {
    Oversized,      // line longer than kMaxLineBytes
    MalformedJson,  // not one valid JSON object
    UnknownType,    // "type" missing or not a known discriminator
    UnknownField,   // closed-schema violation
    MissingField,
    WrongFieldType,
    OutOfRange,
};

struct DecodeError {
    DecodeErrorKind kind = DecodeErrorKind::MalformedJson;
    std::string detail;
};

inline const char* to_string(DecodeErrorKind k) {
    switch (k) {
        case DecodeErrorKind::Oversized: return "oversized";
        case DecodeErrorKind::MalformedJson: return "malformed_json";
        case DecodeErrorKind::UnknownType: return "unknown_type";
        case DecodeErrorKind::UnknownField: return "unknown_field";
        case DecodeErrorKind::MissingField: return "missing_field";
        case DecodeErrorKind::WrongFieldType: return "wrong_field_type";
        case DecodeErrorKind::OutOfRange: return "out_of_range";
    }
    return "unknown";
}

namespace wire {

inline constexpr std::size_t kMaxNodeIdChars = 64;
inline constexpr std::size_t kMaxTextChars = 256;
inline constexpr std::size_t kMaxClassLabels = 128;

inline void append_escaped(std::string& out, std::string_view s) {
    out.push_back('"');
    for (char ch : s) {
        switch (ch) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(ch) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", ch);
                    out += buf;
                } else {
                    out.push_back(ch);
                }
        }
    }
    out.push_back('"');
}

// Number rendering: at most 6 decimal places, trailing zeros trimmed.
inline void append_number(std::string& out, double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("wire: non-finite number");
    char buf[48];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 6);
    if (ec != std::errc{}) throw std::invalid_argument("wire: number formatting failed");
    std::size_t n = static_cast<std::size_t>(end - buf);
    while (n > 0 && buf[n - 1] == '0') --n;
    if (n > 0 && buf[n - 1] == '.') --n;
    if (std::string_view(buf, n) == "-0") out += "0";
    else out.append(buf, n);
}

inline void require_text(std::string_view what, std::string_view s, std::size_t max_chars,
                         bool allow_empty) {
    if (!allow_empty && s.empty())
        throw std::invalid_argument("wire: empty " + std::string(what));
    if (s.size() > max_chars)
        throw std::invalid_argument("wire: " + std::string(what) + " too long");
}

inline void require_range(std::string_view what, double v, double lo, double hi) {
    if (!std::isfinite(v) || v < lo || v > hi)
        throw std::invalid_argument("wire: " + std::string(what) + " out of range");
}

}  // namespace wire

// Serializes m to its single-line form, LF included. Throws
// std::invalid_argument on semantically invalid fields and
// std::length_error when the encoding exceeds kMaxLineBytes.
inline std::string encode(const WireMessage& m) {
    using namespace wire;
    std::string out;
    out.reserve(256);

    auto field = [&out](std::string_view name, bool first = false) {
        if (!first) out.push_back(',');
        out.push_back('"');
        out += name;
        out += "\":";
    };

    std::visit(
        [&](const auto& msg) {
            using T = std::decay_t<decltype(msg)>;
            out.push_back('{');
            if constexpr (std::is_same_v<T, HelloMsg>) {
                require_text("node_id", msg.node_id, kMaxNodeIdChars, false);
                if (!(msg.capacity_wh > 0.0) || !std::isfinite(msg.capacity_wh))
                    throw std::invalid_argument("wire: capacity_wh must be > 0");
                if (msg.class_labels.empty() || msg.class_labels.size() > kMaxClassLabels)
                    throw std::invalid_argument("wire: class_labels count out of range");
                field("type", true);
                out += "\"hello\"";
                field("node_id");
                append_escaped(out, msg.node_id);
                field("capacity_wh");
                append_number(out, msg.capacity_wh);
                field("initial_mode");
                out += std::to_string(msg.initial_mode);
                field("class_labels");
                out.push_back('[');
                for (std::size_t i = 0; i < msg.class_labels.size(); ++i) {
                    require_text("class label", msg.class_labels[i], kMaxTextChars, false);
                    if (i) out.push_back(',');
                    append_escaped(out, msg.class_labels[i]);
                }
                out.push_back(']');
            } else if constexpr (std::is_same_v<T, TelemetryMsg>) {
                const TelemetrySample& s = msg.sample;
                require_text("node_id", s.node_id, kMaxNodeIdChars, false);
                if (s.timestamp_ms < 0) throw std::invalid_argument("wire: negative timestamp");
                require_range("gpu_power_w", s.gpu_power_w, 0.0, 1e6);
                require_range("device_power_w", s.device_power_w, 0.0, 1e6);
                require_range("temperature_c", s.temperature_c, -273.15, 1000.0);
                require_range("fps", s.fps, 0.0, 1e6);
                require_range("battery_pct", s.battery_pct, 0.0, 100.0);
                require_range("confidence", s.confidence, 0.0, 1.0);
                require_text("label", s.label, kMaxTextChars, true);
                field("type", true);
                out += "\"telemetry\"";
                field("node_id");
                append_escaped(out, s.node_id);
                field("timestamp_ms");
                out += std::to_string(s.timestamp_ms);
                field("mode");
                out += std::to_string(s.mode);
                field("gpu_power_w");
                append_number(out, s.gpu_power_w);
                field("device_power_w");
                append_number(out, s.device_power_w);
                field("temperature_c");
                append_number(out, s.temperature_c);
                field("fps");
                append_number(out, s.fps);
                field("battery_pct");
                append_number(out, s.battery_pct);
                field("label");
                append_escaped(out, s.label);
                field("confidence");
                append_number(out, s.confidence);
            } else if constexpr (std::is_same_v<T, ReconfigMsg>) {
                const ReconfigCommand& c = msg.command;
                require_text("node_id", c.node_id, kMaxNodeIdChars, false);
                if (c.command_id == 0) throw std::invalid_argument("wire: command_id must be >= 1");
                if (c.issued_at_ms < 0) throw std::invalid_argument("wire: negative timestamp");
                field("type", true);
                out += "\"reconfig\"";
                field("command_id");
                out += std::to_string(c.command_id);
                field("node_id");
                append_escaped(out, c.node_id);
                field("target_mode");
                out += std::to_string(c.target_mode);
                field("issued_at_ms");
                out += std::to_string(c.issued_at_ms);
            } else if constexpr (std::is_same_v<T, AckMsg>) {
                require_text("node_id", msg.node_id, kMaxNodeIdChars, false);
                if (msg.command_id == 0)
                    throw std::invalid_argument("wire: command_id must be >= 1");
                field("type", true);
                out += "\"ack\"";
                field("command_id");
                out += std::to_string(msg.command_id);
                field("node_id");
                append_escaped(out, msg.node_id);
            } else if constexpr (std::is_same_v<T, ByeMsg>) {
                require_text("node_id", msg.node_id, kMaxNodeIdChars, false);
                require_text("reason", msg.reason, kMaxTextChars, true);
                field("type", true);
                out += "\"bye\"";
                field("node_id");
                append_escaped(out, msg.node_id);
                field("reason");
                append_escaped(out, msg.reason);
            }
            out.push_back('}');
        },
        m);

    out.push_back('\n');
    if (out.size() > kMaxLineBytes)
        throw std::length_error("wire: encoded message exceeds " +
                                std::to_string(kMaxLineBytes) + " bytes");
    return out;
}

namespace wire {

// Tracks which fields of the closed schema were consumed so unknown and
// missing fields are both reported precisely.
class FieldReader {
  public:
    FieldReader(const nlohmann::json& obj, DecodeError* err) : obj_(obj), err_(err) {}

    bool failed() const { return failed_; }

    std::optional<std::string> text(const char* name, std::size_t max_chars, bool allow_empty) {
        const auto* v = fetch(name);
        if (!v) return std::nullopt;
        if (!v->is_string()) return fail(DecodeErrorKind::WrongFieldType, name), std::nullopt;
        auto s = v->get<std::string>();
        if ((s.empty() && !allow_empty) || s.size() > max_chars)
            return fail(DecodeErrorKind::OutOfRange, name), std::nullopt;
        return s;
    }

    std::optional<double> number(const char* name, double lo, double hi) {
        const auto* v = fetch(name);
        if (!v) return std::nullopt;
        if (!v->is_number()) return fail(DecodeErrorKind::WrongFieldType, name), std::nullopt;
        const double d = v->get<double>();
        if (!std::isfinite(d) || d < lo || d > hi)
            return fail(DecodeErrorKind::OutOfRange, name), std::nullopt;
        return d;
    }

    std::optional<std::uint64_t> unsigned_int(const char* name, std::uint64_t lo,
                                              std::uint64_t hi) {
        const auto* v = fetch(name);
        if (!v) return std::nullopt;
        if (!v->is_number_integer() && !v->is_number_unsigned())
            return fail(DecodeErrorKind::WrongFieldType, name), std::nullopt;
        if (v->is_number_integer() && v->get<std::int64_t>() < 0)
            return fail(DecodeErrorKind::OutOfRange, name), std::nullopt;
        const auto u = v->get<std::uint64_t>();
        if (u < lo || u > hi) return fail(DecodeErrorKind::OutOfRange, name), std::nullopt;
        return u;
    }

    std::optional<std::vector<std::string>> string_array(const char* name, std::size_t max_items,
                                                         std::size_t max_chars) {
        const auto* v = fetch(name);
        if (!v) return std::nullopt;
        if (!v->is_array()) return fail(DecodeErrorKind::WrongFieldType, name), std::nullopt;
        if (v->empty() || v->size() > max_items)
            return fail(DecodeErrorKind::OutOfRange, name), std::nullopt;
        std::vector<std::string> out;
        out.reserve(v->size());
        for (const auto& item : *v) {
            if (!item.is_string())
                return fail(DecodeErrorKind::WrongFieldType, name), std::nullopt;
            auto s = item.get<std::string>();
            if (s.empty() || s.size() > max_chars)
                return fail(DecodeErrorKind::OutOfRange, name), std::nullopt;
            out.push_back(std::move(s));
        }
        return out;
    }

    // Closed-schema check: every present field must have been consumed.
    bool finish() {
        if (failed_) return false;
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (it.key() == "type") continue;
            bool known = false;
            for (const auto& c : consumed_)
                if (c == it.key()) { known = true; break; }
            if (!known) {
                fail(DecodeErrorKind::UnknownField, it.key().c_str());
                return false;
            }
        }
        return true;
    }

  private:
    const nlohmann::json* fetch(const char* name) {
        if (failed_) return nullptr;
        consumed_.emplace_back(name);
        auto it = obj_.find(name);
        if (it == obj_.end()) {
            fail(DecodeErrorKind::MissingField, name);
            return nullptr;
        }
        return &*it;
    }

    void fail(DecodeErrorKind kind, const char* name) {
        if (failed_) return;
        failed_ = true;
        if (err_) *err_ = {kind, name};
    }

    const nlohmann::json& obj_;
    DecodeError* err_;
    std::vector<std::string> consumed_;
    bool failed_ = false;
};

}  // namespace wire

// Telemetry dominates the traffic by orders of magnitude, so lines in
// the exact canonical layout the encoder emits take a scanning fast path.
// Anything else (reordered fields, escapes, whitespace, errors) returns
// nullopt here and goes through the full JSON path; the fast path accepts
// a strict subset and produces identical values on it.
namespace wire {

struct FastCursor {
    const char* p;
    const char* e;

    bool lit(std::string_view s) {
        if (static_cast<std::size_t>(e - p) < s.size() ||
            std::memcmp(p, s.data(), s.size()) != 0)
            return false;
        p += s.size();
        return true;
    }

    // Escape-free string; any backslash, control byte, or length violation
    // punts to the general parser.
    bool text(std::string& out, std::size_t max_chars, bool allow_empty) {
        if (p >= e || *p != '"') return false;
        const char* start = ++p;
        while (p < e && *p != '"') {
            if (*p == '\\' || static_cast<unsigned char>(*p) < 0x20) return false;
            ++p;
        }
        if (p >= e) return false;
        out.assign(start, static_cast<std::size_t>(p - start));
        ++p;
        return (allow_empty || !out.empty()) && out.size() <= max_chars;
    }

    static bool digit(char c) { return c >= '0' && c <= '9'; }

    bool uint_value(std::uint64_t& out, std::uint64_t hi) {
        if (p >= e || !digit(*p)) return false;
        if (*p == '0' && p + 1 < e && digit(p[1])) return false;
        std::uint64_t v = 0;
        while (p < e && digit(*p)) {
            v = v * 10 + static_cast<std::uint64_t>(*p - '0');
            if (v > (std::uint64_t{1} << 62)) return false;
            ++p;
        }
        out = v;
        return v <= hi;
    }

    bool number(double& out, double lo, double hi) {
        const char* start = p;
        if (p < e && *p == '-') ++p;
        if (p >= e || !digit(*p)) return false;
        if (*p == '0' && p + 1 < e && digit(p[1])) return false;
        while (p < e && digit(*p)) ++p;
        if (p < e && *p == '.') {
            ++p;
            if (p >= e || !digit(*p)) return false;
            while (p < e && digit(*p)) ++p;
        }
        if (p < e && (*p == 'e' || *p == 'E')) {
            ++p;
            if (p < e && (*p == '+' || *p == '-')) ++p;
            if (p >= e || !digit(*p)) return false;
            while (p < e && digit(*p)) ++p;
        }
        const auto [unused, ec] = std::from_chars(start, p, out);
        (void)unused;
        return ec == std::errc{} && std::isfinite(out) && out >= lo && out <= hi;
    }
};

inline std::optional<WireMessage> fast_telemetry(std::string_view line) {
    if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.size() + 1 > kMaxLineBytes) return std::nullopt;

    FastCursor c{line.data(), line.data() + line.size()};
    TelemetrySample s;
    std::uint64_t timestamp = 0, mode = 0;
    if (!c.lit("{\"type\":\"telemetry\",\"node_id\":")) return std::nullopt;
    if (!c.text(s.node_id, kMaxNodeIdChars, false)) return std::nullopt;
    if (!c.lit(",\"timestamp_ms\":")) return std::nullopt;
    if (!c.uint_value(timestamp, std::uint64_t{1} << 62)) return std::nullopt;
    if (!c.lit(",\"mode\":")) return std::nullopt;
    if (!c.uint_value(mode, 1u << 16)) return std::nullopt;
    if (!c.lit(",\"gpu_power_w\":")) return std::nullopt;
    if (!c.number(s.gpu_power_w, 0.0, 1e6)) return std::nullopt;
    if (!c.lit(",\"device_power_w\":")) return std::nullopt;
    if (!c.number(s.device_power_w, 0.0, 1e6)) return std::nullopt;
    if (!c.lit(",\"temperature_c\":")) return std::nullopt;
    if (!c.number(s.temperature_c, -273.15, 1000.0)) return std::nullopt;
    if (!c.lit(",\"fps\":")) return std::nullopt;
    if (!c.number(s.fps, 0.0, 1e6)) return std::nullopt;
    if (!c.lit(",\"battery_pct\":")) return std::nullopt;
    if (!c.number(s.battery_pct, 0.0, 100.0)) return std::nullopt;
    if (!c.lit(",\"label\":")) return std::nullopt;
    if (!c.text(s.label, kMaxTextChars, true)) return std::nullopt;
    if (!c.lit(",\"confidence\":")) return std::nullopt;
    if (!c.number(s.confidence, 0.0, 1.0)) return std::nullopt;
    if (!c.lit("}") || c.p != c.e) return std::nullopt;
    s.timestamp_ms = static_cast<std::int64_t>(timestamp);
    s.mode = static_cast<ModeId>(mode);
    return WireMessage{TelemetryMsg{std::move(s)}};
}

}  // namespace wire

// Full schema-driven parse of one line (trailing LF optional). Strict:
// wrong types, out-of-range values, unknown/missing fields and unknown
// discriminators are each reported as their own error kind.
inline std::optional<WireMessage> decode_strict(std::string_view line,
                                                DecodeError* err = nullptr) {
    using namespace wire;
    DecodeError scratch;
    if (!err) err = &scratch;

    if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.size() + 1 > kMaxLineBytes) {
        *err = {DecodeErrorKind::Oversized, std::to_string(line.size() + 1) + " bytes"};
        return std::nullopt;
    }

    const nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        *err = {DecodeErrorKind::MalformedJson, "not a JSON object"};
        return std::nullopt;
    }
    const auto type_it = doc.find("type");
    if (type_it == doc.end() || !type_it->is_string()) {
        *err = {DecodeErrorKind::UnknownType, "missing type field"};
        return std::nullopt;
    }
    const std::string type = type_it->get<std::string>();
    FieldReader fields(doc, err);

    if (type == "hello") {
        HelloMsg m;
        auto node_id = fields.text("node_id", kMaxNodeIdChars, false);
        auto capacity = fields.number("capacity_wh", 1e-9, 1e9);
        auto mode = fields.unsigned_int("initial_mode", 0, 1u << 16);
        auto labels = fields.string_array("class_labels", kMaxClassLabels, kMaxTextChars);
        if (!fields.finish()) return std::nullopt;
        m.node_id = std::move(*node_id);
        m.capacity_wh = *capacity;
        m.initial_mode = static_cast<ModeId>(*mode);
        m.class_labels = std::move(*labels);
        return WireMessage{std::move(m)};
    }
    if (type == "telemetry") {
        TelemetrySample s;
        auto node_id = fields.text("node_id", kMaxNodeIdChars, false);
        auto ts = fields.unsigned_int("timestamp_ms", 0, std::uint64_t{1} << 62);
        auto mode = fields.unsigned_int("mode", 0, 1u << 16);
        auto gpu = fields.number("gpu_power_w", 0.0, 1e6);
        auto dev = fields.number("device_power_w", 0.0, 1e6);
        auto temp = fields.number("temperature_c", -273.15, 1000.0);
        auto fps = fields.number("fps", 0.0, 1e6);
        auto batt = fields.number("battery_pct", 0.0, 100.0);
        auto label = fields.text("label", kMaxTextChars, true);
        auto conf = fields.number("confidence", 0.0, 1.0);
        if (!fields.finish()) return std::nullopt;
        s.node_id = std::move(*node_id);
        s.timestamp_ms = static_cast<std::int64_t>(*ts);
        s.mode = static_cast<ModeId>(*mode);
        s.gpu_power_w = *gpu;
        s.device_power_w = *dev;
        s.temperature_c = *temp;
        s.fps = *fps;
        s.battery_pct = *batt;
        s.label = std::move(*label);
        s.confidence = *conf;
        return WireMessage{TelemetryMsg{std::move(s)}};
    }
    if (type == "reconfig") {
        ReconfigCommand c;
        auto id = fields.unsigned_int("command_id", 1, std::uint64_t{1} << 62);
        auto node_id = fields.text("node_id", kMaxNodeIdChars, false);
        auto mode = fields.unsigned_int("target_mode", 0, 1u << 16);
        auto ts = fields.unsigned_int("issued_at_ms", 0, std::uint64_t{1} << 62);
        if (!fields.finish()) return std::nullopt;
        c.command_id = *id;
        c.node_id = std::move(*node_id);
        c.target_mode = static_cast<ModeId>(*mode);
        c.issued_at_ms = static_cast<std::int64_t>(*ts);
        return WireMessage{ReconfigMsg{std::move(c)}};
    }
    if (type == "ack") {
        AckMsg m;
        auto id = fields.unsigned_int("command_id", 1, std::uint64_t{1} << 62);
        auto node_id = fields.text("node_id", kMaxNodeIdChars, false);
        if (!fields.finish()) return std::nullopt;
        m.command_id = *id;
        m.node_id = std::move(*node_id);
        return WireMessage{std::move(m)};
    }
    if (type == "bye") {
        ByeMsg m;
        auto node_id = fields.text("node_id", kMaxNodeIdChars, false);
        auto reason = fields.text("reason", kMaxTextChars, true);
        if (!fields.finish()) return std::nullopt;
        m.node_id = std::move(*node_id);
        m.reason = std::move(*reason);
        return WireMessage{std::move(m)};
    }
    *err = {DecodeErrorKind::UnknownType, type};
    return std::nullopt;
}

// decode = canonical fast path, then the full parser.
inline std::optional<WireMessage> decode(std::string_view line, DecodeError* err = nullptr) {
    if (auto fast = wire::fast_telemetry(line)) return fast;
    return decode_strict(line, err);
}

// Stream framing: splits a byte stream into LF-terminated lines and
// resynchronizes after oversized garbage so one corrupted line never
// takes down the ones that follow.
class LineSplitter {
  public:
    struct Frame {
        std::string line;  // LF stripped; truncated when oversized
        bool oversized = false;
    };

    void feed(std::string_view bytes) { buffer_.append(bytes); }

    std::optional<Frame> next() {
        const auto lf = buffer_.find('\n');
        if (lf == std::string::npos) {
            if (buffer_.size() >= kMaxLineBytes) {
                // No terminator in a full line's worth of bytes: drop them,
                // keep a capped sample for the error report, wait for LF.
                if (!discarding_) sample_ = buffer_.substr(0, 256);
                discarding_ = true;
                buffer_.clear();
            }
            return std::nullopt;
        }
        Frame f;
        if (discarding_) {
            f.line = std::move(sample_);
            f.oversized = true;
            sample_.clear();
            discarding_ = false;
        } else {
            f.line = buffer_.substr(0, lf);
            f.oversized = f.line.size() + 1 > kMaxLineBytes;
        }
        buffer_.erase(0, lf + 1);
        return f;
    }

  private:
    std::string buffer_;
    std::string sample_;
    bool discarding_ = false;
};

inline std::string_view message_type(const WireMessage& m) {
    switch (m.index()) {
        case 0: return "hello";
        case 1: return "telemetry";
        case 2: return "reconfig";
        case 3: return "ack";
        case 4: return "bye";
    }
    return "?";
}

}  // namespace qrmedge
