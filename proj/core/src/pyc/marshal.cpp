#include "pyxray/pyc/marshal.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>

#include <fmt/format.h>

#include "pyxray/text.hpp"

namespace pyxray::pyc {

std::string py_version::str() const { return fmt::format("{}.{}", major, minor); }

std::string_view to_string(marshal_errc reason) noexcept {
    switch (reason) {
    case marshal_errc::unknown_type_code: return "unknown type code";
    case marshal_errc::bad_ref_index: return "bad ref index";
    case marshal_errc::depth_exceeded: return "depth exceeded";
    case marshal_errc::truncated: return "truncated";
    case marshal_errc::invalid_value: return "invalid value";
    }
    return "invalid value";
}

marshal_error::marshal_error(std::size_t position, marshal_errc reason, const std::string& detail)
    : error(detail.empty() ? fmt::format("marshal error at {}: {}", position, to_string(reason))
                           : fmt::format("marshal error at {}: {} ({})", position, to_string(reason), detail)),
      position_(position), reason_(reason) {}

namespace {

class parser {
public:
    parser(byte_view data, const marshal_options& options) : d_(data), opt_(options) {}

    value_ptr read_object();
    std::size_t position() const { return pos_; }

private:
    [[noreturn]] void fail(marshal_errc reason, std::size_t at, const std::string& detail = {}) const {
        throw marshal_error(opt_.base_offset + at, reason, detail);
    }

    void need(std::size_t n) const {
        if (n > d_.size() - pos_) fail(marshal_errc::truncated, d_.size());
    }

    std::uint8_t u8() {
        need(1);
        return d_[pos_++];
    }

    std::uint32_t u32() {
        need(4);
        auto v = load_u32le(d_, pos_);
        pos_ += 4;
        return v;
    }

    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }

    byte_view take(std::size_t n) {
        need(n);
        auto v = d_.subspan(pos_, n);
        pos_ += n;
        return v;
    }

    std::size_t count(std::size_t at) {
        std::int32_t n = i32();
        if (n < 0) fail(marshal_errc::invalid_value, at, "negative length");
        return static_cast<std::size_t>(n);
    }

    double short_float(std::size_t at) {
        auto text = as_chars(take(u8()));
        double v = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc() || ptr != text.data() + text.size()) {
            // inf / nan spellings
            auto lower = to_lower_ascii(text);
            if (lower == "inf" || lower == "+inf") return std::numeric_limits<double>::infinity();
            if (lower == "-inf") return -std::numeric_limits<double>::infinity();
            if (lower == "nan" || lower == "+nan" || lower == "-nan") return std::numeric_limits<double>::quiet_NaN();
            fail(marshal_errc::invalid_value, at, "bad float literal");
        }
        return v;
    }

    double binary_float() {
        auto raw = take(8);
        std::uint64_t bits = 0;
        for (int i = 7; i >= 0; --i) bits = (bits << 8) | raw[static_cast<std::size_t>(i)];
        return std::bit_cast<double>(bits);
    }

    marshal_value read_long(std::size_t at);
    sequence_value read_sequence(sequence_kind kind, std::size_t n);
    code_ptr read_code(std::size_t at);

    std::int32_t code_int() { return i32(); }
    byte_buffer code_bytes(const char* field);
    std::vector<value_ptr> code_tuple(const char* field);
    std::vector<std::string> code_names(const char* field);
    std::string code_text(const char* field);

    byte_view d_;
    marshal_options opt_;
    std::size_t pos_ = 0;
    std::size_t depth_ = 0;
    std::vector<value_ptr> refs_;
};

struct depth_guard {
    std::size_t& depth;
    ~depth_guard() { --depth; }
};

value_ptr make(auto&& v) {
    auto out = std::make_shared<marshal_value>();
    out->data = std::forward<decltype(v)>(v);
    return out;
}

value_ptr parser::read_object() {
    const std::size_t at = pos_;
    if (++depth_ > opt_.max_depth) {
        --depth_;
        fail(marshal_errc::depth_exceeded, at);
    }
    depth_guard guard{depth_};

    const std::uint8_t raw = u8();
    const char type = static_cast<char>(raw & 0x7F);
    const bool flag = (raw & 0x80) != 0;

    if (type == 'r') {
        std::uint32_t idx = u32();
        if (idx >= refs_.size() || !refs_[idx]) fail(marshal_errc::bad_ref_index, at, fmt::format("index {}", idx));
        return refs_[idx];
    }

    std::optional<std::size_t> slot;
    if (flag) {
        slot = refs_.size();
        refs_.push_back(nullptr);
    }

    value_ptr v;
    switch (type) {
    case '0': v = make(null_value{}); break;
    case 'N': v = make(none_value{}); break;
    case 'F': v = make(false); break;
    case 'T': v = make(true); break;
    case 'S': v = make(stop_iteration_value{}); break;
    case '.': v = make(ellipsis_value{}); break;
    case 'i': v = make(std::int64_t{i32()}); break;
    case 'I': {
        auto raw8 = take(8);
        std::uint64_t bits = 0;
        for (int i = 7; i >= 0; --i) bits = (bits << 8) | raw8[static_cast<std::size_t>(i)];
        v = make(static_cast<std::int64_t>(bits));
        break;
    }
    case 'l': {
        auto out = std::make_shared<marshal_value>(read_long(at));
        v = out;
        break;
    }
    case 'f': v = make(short_float(at)); break;
    case 'g': v = make(binary_float()); break;
    case 'x': {
        complex_value c;
        c.real = short_float(at);
        c.imag = short_float(at);
        v = make(c);
        break;
    }
    case 'y': {
        complex_value c;
        c.real = binary_float();
        c.imag = binary_float();
        v = make(c);
        break;
    }
    case 's': {
        auto n = count(at);
        auto b = take(n);
        v = make(bytes_value{byte_buffer(b.begin(), b.end())});
        break;
    }
    case 'u':
    case 't':
    case 'a':
    case 'A': {
        auto n = count(at);
        v = make(text_value{std::string(as_chars(take(n))), type == 't' || type == 'A'});
        break;
    }
    case 'z':
    case 'Z': {
        auto n = u8();
        v = make(text_value{std::string(as_chars(take(n))), type == 'Z'});
        break;
    }
    case '(': v = make(read_sequence(sequence_kind::tuple, count(at))); break;
    case ')': v = make(read_sequence(sequence_kind::tuple, u8())); break;
    case '[': v = make(read_sequence(sequence_kind::list, count(at))); break;
    case '<': v = make(read_sequence(sequence_kind::set, count(at))); break;
    case '>': v = make(read_sequence(sequence_kind::frozenset, count(at))); break;
    case '{': {
        dict_value dict;
        for (;;) {
            const std::size_t key_at = pos_;
            auto key = read_object();
            if (std::holds_alternative<null_value>(key->data)) break;
            auto value = read_object();
            if (std::holds_alternative<null_value>(value->data)) {
                fail(marshal_errc::invalid_value, key_at, "dict value is NULL");
            }
            dict.entries.emplace_back(std::move(key), std::move(value));
        }
        v = make(std::move(dict));
        break;
    }
    case 'c': v = make(read_code(at)); break;
    default: fail(marshal_errc::unknown_type_code, at, fmt::format("type byte 0x{:02x}", raw));
    }

    if (slot) refs_[*slot] = v;
    return v;
}

marshal_value parser::read_long(std::size_t at) {
    std::int32_t n = i32();
    if (n == std::numeric_limits<std::int32_t>::min()) fail(marshal_errc::invalid_value, at, "long size");
    std::size_t size = static_cast<std::size_t>(n < 0 ? -n : n);
    need(size * 2);
    big_int big;
    big.negative = n < 0;
    for (std::size_t i = 0; i < size; ++i) {
        std::uint16_t digit = static_cast<std::uint16_t>(d_[pos_] | (d_[pos_ + 1] << 8));
        pos_ += 2;
        if (digit > 0x7FFF) fail(marshal_errc::invalid_value, at, "long digit out of range");
        big.digits.push_back(digit);
    }
    if (!big.digits.empty() && big.digits.back() == 0) fail(marshal_errc::invalid_value, at, "unnormalized long");

    marshal_value out;
    if (big.digits.size() <= 4) {
        // at most 60 bits
        std::int64_t v = 0;
        for (std::size_t i = big.digits.size(); i-- > 0;) v = (v << 15) | big.digits[i];
        out.data = big.negative ? -v : v;
    } else if (big.digits.size() == 5 && big.digits[4] < 8) {
        std::uint64_t v = 0;
        for (std::size_t i = 5; i-- > 0;) v = (v << 15) | big.digits[i];
        out.data = big.negative ? -static_cast<std::int64_t>(v) : static_cast<std::int64_t>(v);
    } else {
        out.data = std::move(big);
    }
    return out;
}

sequence_value parser::read_sequence(sequence_kind kind, std::size_t n) {
    if (n > d_.size() - pos_) fail(marshal_errc::truncated, d_.size());
    sequence_value seq;
    seq.kind = kind;
    seq.items.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t item_at = pos_;
        auto item = read_object();
        if (std::holds_alternative<null_value>(item->data)) fail(marshal_errc::invalid_value, item_at, "NULL item");
        seq.items.push_back(std::move(item));
    }
    return seq;
}

byte_buffer parser::code_bytes(const char* field) {
    const std::size_t at = pos_;
    auto v = read_object();
    if (const auto* b = v->bytes()) return *b;
    fail(marshal_errc::invalid_value, at, fmt::format("code field {} is not bytes", field));
}

std::vector<value_ptr> parser::code_tuple(const char* field) {
    const std::size_t at = pos_;
    auto v = read_object();
    const auto* seq = v->sequence();
    if (!seq || seq->kind != sequence_kind::tuple) {
        fail(marshal_errc::invalid_value, at, fmt::format("code field {} is not a tuple", field));
    }
    return seq->items;
}

std::vector<std::string> parser::code_names(const char* field) {
    const std::size_t at = pos_;
    std::vector<std::string> out;
    for (const auto& item : code_tuple(field)) {
        const auto* t = item->text();
        if (!t) fail(marshal_errc::invalid_value, at, fmt::format("code field {} holds a non-string", field));
        out.push_back(*t);
    }
    return out;
}

std::string parser::code_text(const char* field) {
    const std::size_t at = pos_;
    auto v = read_object();
    if (const auto* t = v->text()) return *t;
    fail(marshal_errc::invalid_value, at, fmt::format("code field {} is not a string", field));
}

code_ptr parser::read_code(std::size_t at) {
    if (!opt_.version) fail(marshal_errc::invalid_value, at, "code object in a stream with no interpreter version");
    const py_version ver = *opt_.version;
    if (!is_supported(ver)) fail(marshal_errc::invalid_value, at, "unsupported code object layout");

    auto c = std::make_shared<code_object>();
    c->version = ver;
    c->argcount = code_int();
    if (ver >= py_version{3, 8}) c->posonlyargcount = code_int();
    c->kwonlyargcount = code_int();
    if (ver < py_version{3, 11}) c->nlocals = code_int();
    c->stacksize = code_int();
    c->flags = static_cast<std::uint32_t>(code_int());
    c->code = code_bytes("co_code");
    c->consts = code_tuple("co_consts");
    c->names = code_names("co_names");
    if (ver >= py_version{3, 11}) {
        c->localsplusnames = code_names("co_localsplusnames");
        c->localspluskinds = code_bytes("co_localspluskinds");
        if (c->localspluskinds.size() != c->localsplusnames.size()) {
            fail(marshal_errc::invalid_value, at, "localsplus names and kinds differ in length");
        }
        for (std::size_t i = 0; i < c->localsplusnames.size(); ++i) {
            auto kind = c->localspluskinds[i];
            if (kind & 0x20) c->varnames.push_back(c->localsplusnames[i]);
            if (kind & 0x40) c->cellvars.push_back(c->localsplusnames[i]);
            if (kind & 0x80) c->freevars.push_back(c->localsplusnames[i]);
        }
        c->nlocals = static_cast<std::int32_t>(c->varnames.size());
    } else {
        c->varnames = code_names("co_varnames");
        c->freevars = code_names("co_freevars");
        c->cellvars = code_names("co_cellvars");
    }
    c->filename = code_text("co_filename");
    c->name = code_text("co_name");
    c->qualname = ver >= py_version{3, 11} ? code_text("co_qualname") : c->name;
    c->first_line = code_int();
    c->line_table = code_bytes("co_linetable");
    if (ver >= py_version{3, 11}) c->exception_table = code_bytes("co_exceptiontable");
    if (ver >= py_version{3, 6} && c->code.size() % 2 != 0) {
        fail(marshal_errc::invalid_value, at, "odd-length bytecode");
    }
    return c;
}

// Python-style quoting shared by str and bytes reprs.
char pick_quote(std::string_view raw) {
    return raw.find('\'') != std::string_view::npos && raw.find('"') == std::string_view::npos ? '"' : '\'';
}

std::string repr_text(const std::string& utf8) {
    const char q = pick_quote(utf8);
    std::string out(1, q);
    auto clean = lossy_utf8(as_bytes(utf8));
    for (std::size_t i = 0; i < clean.size(); ++i) {
        auto c = static_cast<unsigned char>(clean[i]);
        if (c == static_cast<unsigned char>(q) || c == '\\') {
            out += '\\';
            out += static_cast<char>(c);
        } else if (c == '\t') {
            out += "\\t";
        } else if (c == '\n') {
            out += "\\n";
        } else if (c == '\r') {
            out += "\\r";
        } else if (c < 0x20 || c == 0x7F) {
            out += fmt::format("\\x{:02x}", c);
        } else if (c == 0xC2 && i + 1 < clean.size() && static_cast<unsigned char>(clean[i + 1]) <= 0xA0) {
            // C1 controls and NBSP are escaped by repr
            out += fmt::format("\\x{:02x}", static_cast<unsigned char>(clean[i + 1]));
            ++i;
        } else {
            out += static_cast<char>(c);
        }
    }
    out += q;
    return out;
}

std::string repr_bytes(const byte_buffer& b) {
    const char q = pick_quote(as_chars(b));
    std::string out = "b";
    out += q;
    for (auto c : b) {
        if (c == static_cast<unsigned char>(q) || c == '\\') {
            out += '\\';
            out += static_cast<char>(c);
        } else if (c == '\t') {
            out += "\\t";
        } else if (c == '\n') {
            out += "\\n";
        } else if (c == '\r') {
            out += "\\r";
        } else if (c < 0x20 || c >= 0x7F) {
            out += fmt::format("\\x{:02x}", c);
        } else {
            out += static_cast<char>(c);
        }
    }
    out += q;
    return out;
}

std::string repr_float(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    auto s = fmt::format("{}", v);
    if (s.find_first_of(".e") == std::string::npos) s += ".0";
    return s;
}

std::string join(const std::vector<value_ptr>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += items[i]->repr();
    }
    return out;
}

} // namespace

std::string big_int::to_string() const {
    if (digits.empty()) return "0";
    std::vector<std::uint32_t> work(digits.begin(), digits.end());
    std::string rev;
    while (!work.empty()) {
        std::uint32_t rem = 0;
        for (std::size_t i = work.size(); i-- > 0;) {
            std::uint32_t cur = (rem << 15) | work[i];
            work[i] = cur / 10000;
            rem = cur % 10000;
        }
        while (!work.empty() && work.back() == 0) work.pop_back();
        for (int k = 0; k < 4; ++k) {
            rev += static_cast<char>('0' + rem % 10);
            rem /= 10;
            if (work.empty() && rem == 0) break;
        }
    }
    while (rev.size() > 1 && rev.back() == '0') rev.pop_back();
    if (negative) rev += '-';
    return {rev.rbegin(), rev.rend()};
}

const std::string* marshal_value::text() const noexcept {
    const auto* t = std::get_if<text_value>(&data);
    return t ? &t->utf8 : nullptr;
}

const byte_buffer* marshal_value::bytes() const noexcept {
    const auto* b = std::get_if<bytes_value>(&data);
    return b ? &b->data : nullptr;
}

const std::int64_t* marshal_value::integer() const noexcept { return std::get_if<std::int64_t>(&data); }

const sequence_value* marshal_value::sequence() const noexcept { return std::get_if<sequence_value>(&data); }

const code_object* marshal_value::code() const noexcept {
    const auto* c = std::get_if<code_ptr>(&data);
    return c ? c->get() : nullptr;
}

std::string marshal_value::repr() const {
    struct visitor {
        std::string operator()(const null_value&) const { return "<NULL>"; }
        std::string operator()(const none_value&) const { return "None"; }
        std::string operator()(bool b) const { return b ? "True" : "False"; }
        std::string operator()(const stop_iteration_value&) const { return "StopIteration"; }
        std::string operator()(const ellipsis_value&) const { return "Ellipsis"; }
        std::string operator()(std::int64_t v) const { return std::to_string(v); }
        std::string operator()(const big_int& v) const { return v.to_string(); }
        std::string operator()(double v) const { return repr_float(v); }
        std::string operator()(const complex_value& c) const {
            auto imag = repr_float(c.imag);
            if (imag.size() > 2 && imag.ends_with(".0")) imag.resize(imag.size() - 2);
            if (c.real == 0 && !std::signbit(c.real)) return imag + "j";
            auto real = repr_float(c.real);
            if (real.size() > 2 && real.ends_with(".0")) real.resize(real.size() - 2);
            return fmt::format("({}{}{}j)", real, std::signbit(c.imag) || std::isnan(c.imag) ? "" : "+", imag);
        }
        std::string operator()(const bytes_value& b) const { return repr_bytes(b.data); }
        std::string operator()(const text_value& t) const { return repr_text(t.utf8); }
        std::string operator()(const sequence_value& s) const {
            switch (s.kind) {
            case sequence_kind::tuple: return s.items.size() == 1 ? "(" + join(s.items) + ",)" : "(" + join(s.items) + ")";
            case sequence_kind::list: return "[" + join(s.items) + "]";
            case sequence_kind::set: return s.items.empty() ? "set()" : "{" + join(s.items) + "}";
            case sequence_kind::frozenset:
                return s.items.empty() ? "frozenset()" : "frozenset({" + join(s.items) + "})";
            }
            return {};
        }
        std::string operator()(const dict_value& d) const {
            std::string out = "{";
            for (std::size_t i = 0; i < d.entries.size(); ++i) {
                if (i) out += ", ";
                out += d.entries[i].first->repr() + ": " + d.entries[i].second->repr();
            }
            return out + "}";
        }
        std::string operator()(const code_ptr&) const { return "<code>"; }
    };
    return std::visit(visitor{}, data);
}

std::vector<const code_object*> code_object::children() const {
    std::vector<const code_object*> out;
    for (const auto& c : consts) {
        if (const auto* child = c->code()) out.push_back(child);
    }
    return out;
}

marshal_result parse_marshal_prefix(byte_view data, const marshal_options& options) {
    parser p(data, options);
    auto v = p.read_object();
    if (std::holds_alternative<null_value>(v->data)) {
        throw marshal_error(options.base_offset, marshal_errc::invalid_value, "stream is a bare NULL");
    }
    return {v, p.position()};
}

value_ptr parse_marshal(byte_view data, const marshal_options& options) {
    return parse_marshal_prefix(data, options).value;
}

} // namespace pyxray::pyc
