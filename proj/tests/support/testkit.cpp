#include "testkit.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <unistd.h>
#include <zlib.h>

#ifndef PYXRAY_FIXTURE_DIR
#error "PYXRAY_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace testkit {

namespace fs = std::filesystem;

fs::path fixture_dir() { return PYXRAY_FIXTURE_DIR; }

byte_buffer read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + p.string());
    return byte_buffer((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

byte_buffer read_fixture(const std::string& relative) { return read_file(fixture_dir() / relative); }

void write_file(const fs::path& p, byte_view data) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!f) throw std::runtime_error("cannot write " + p.string());
}

std::string unescape_field(std::string_view field) {
    std::string out;
    for (std::size_t i = 0; i < field.size(); ++i) {
        char c = field[i];
        if (c != '\\' || i + 1 >= field.size()) {
            out += c;
            continue;
        }
        char n = field[++i];
        switch (n) {
        case '\\': out += '\\'; break;
        case 't': out += '\t'; break;
        case 'n': out += '\n'; break;
        case 'r': out += '\r'; break;
        case 'x':
            out += static_cast<char>(std::stoi(std::string(field.substr(i + 1, 2)), nullptr, 16));
            i += 2;
            break;
        default:
            out += '\\';
            out += n;
        }
    }
    return out;
}

const manifest& manifest::load() {
    static const manifest m = [] {
        manifest out;
        std::ifstream f(fixture_dir() / "manifest.tsv");
        if (!f) throw std::runtime_error("manifest.tsv missing");
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::vector<std::string> fields;
            std::size_t start = 0;
            while (true) {
                auto tab = line.find('\t', start);
                fields.push_back(unescape_field(std::string_view(line).substr(start, tab - start)));
                if (tab == std::string::npos) break;
                start = tab + 1;
            }
            out.rows.push_back(std::move(fields));
        }
        return out;
    }();
    return m;
}

std::vector<std::vector<std::string>> manifest::of(std::string_view kind) const {
    std::vector<std::vector<std::string>> out;
    for (const auto& r : rows) {
        if (!r.empty() && r[0] == kind) out.push_back(r);
    }
    return out;
}

std::vector<std::vector<std::string>> manifest::of(std::string_view kind, std::string_view fixture) const {
    std::vector<std::vector<std::string>> out;
    for (const auto& r : rows) {
        if (r.size() > 1 && r[0] == kind && r[1] == fixture) out.push_back(r);
    }
    return out;
}

temp_dir::temp_dir() {
    std::string templ = (fs::temp_directory_path() / "pyxray-test-XXXXXX").string();
    if (!mkdtemp(templ.data())) throw std::runtime_error("mkdtemp failed");
    path_ = templ;
}

temp_dir::~temp_dir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

// --- gen ----------------------------------------------------------------------

byte_buffer gen::bytes(std::size_t n) {
    byte_buffer out(n);
    for (auto& b : out) b = byte();
    return out;
}

std::string gen::printable(std::size_t n) {
    std::string out(n, ' ');
    for (auto& c : out) c = static_cast<char>(between(0x20, 0x7e));
    return out;
}

std::string gen::identifier(std::size_t max_len) {
    static constexpr std::string_view first = "abcdefghijklmnopqrstuvwxyz_";
    static constexpr std::string_view rest = "abcdefghijklmnopqrstuvwxyz_0123456789";
    std::string out(1, first[below(first.size())]);
    auto n = below(max_len);
    for (std::size_t i = 0; i < n; ++i) out += rest[below(rest.size())];
    return out;
}

byte_buffer gen::mutate(byte_view in, std::size_t edits) {
    byte_buffer out(in.begin(), in.end());
    static constexpr std::uint32_t interesting[] = {0, 1, 0x7f, 0x80, 0xff, 0x7fff, 0xffff, 0x7fffffff, 0x80000000,
                                                    0xffffffff, 0x10, 0x1000};
    for (std::size_t e = 0; e < edits; ++e) {
        switch (below(6)) {
        case 0:
            if (!out.empty()) out[below(out.size())] ^= static_cast<std::uint8_t>(1u << below(8));
            break;
        case 1:
            if (!out.empty()) out[below(out.size())] = byte();
            break;
        case 2:
            if (out.size() >= 4) {
                auto v = interesting[below(std::size(interesting))];
                auto at = below(out.size() - 3);
                bool be = coin();
                for (int i = 0; i < 4; ++i) {
                    int shift = be ? (3 - i) * 8 : i * 8;
                    out[at + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v >> shift);
                }
            }
            break;
        case 3:
            if (out.empty()) break;
            if (coin(0.2)) out.resize(below(out.size()));
            else out.resize(out.size() - below(out.size() / 16 + 1));
            break;
        case 4: {
            auto at = below(out.size() + 1);
            auto chunk = bytes(below(16) + 1);
            out.insert(out.begin() + static_cast<std::ptrdiff_t>(at), chunk.begin(), chunk.end());
            break;
        }
        default:
            if (out.size() > 2) {
                auto at = below(out.size() - 1);
                auto n = std::min<std::size_t>(below(16) + 1, out.size() - at);
                out.erase(out.begin() + static_cast<std::ptrdiff_t>(at),
                          out.begin() + static_cast<std::ptrdiff_t>(at + n));
            }
        }
    }
    return out;
}

byte_buffer concat(std::initializer_list<byte_view> parts) {
    byte_buffer out;
    for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

// --- PE -----------------------------------------------------------------------

namespace {

void put16(byte_buffer& b, std::size_t at, std::uint16_t v) {
    b[at] = static_cast<std::uint8_t>(v);
    b[at + 1] = static_cast<std::uint8_t>(v >> 8);
}
void put32(byte_buffer& b, std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b[at + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v >> (8 * i));
}
void put64(byte_buffer& b, std::size_t at, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) b[at + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v >> (8 * i));
}
std::uint32_t get32(byte_view b, std::size_t at) {
    return b[at] | (b[at + 1] << 8) | (b[at + 2] << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}
std::uint32_t rotl(std::uint32_t v, unsigned n) {
    n &= 31;
    return n ? (v << n) | (v >> (32 - n)) : v;
}
std::size_t align_up(std::size_t v, std::size_t a) { return (v + a - 1) / a * a; }

const std::uint8_t dos_stub[64] = {
    0x0e, 0x1f, 0xba, 0x0e, 0x00, 0xb4, 0x09, 0xcd, 0x21, 0xb8, 0x01, 0x4c, 0xcd, 0x21, 'T', 'h',
    'i',  's',  ' ',  'p',  'r',  'o',  'g',  'r',  'a',  'm',  ' ',  'c',  'a',  'n',  'n', 'o',
    't',  ' ',  'b',  'e',  ' ',  'r',  'u',  'n',  ' ',  'i',  'n',  ' ',  'D',  'O',  'S', ' ',
    'm',  'o',  'd',  'e',  '.',  0x0d, 0x0d, 0x0a, '$',  0,    0,    0,    0,    0,    0,   0};

} // namespace

byte_buffer build_pe(const pe_spec& spec) {
    const std::size_t rich_start = 0x80;
    std::size_t rich_size = 0;
    if (spec.rich == pe_spec::rich_kind::entries) rich_size = 16 + 8 * spec.rich_entries.size() + 8;
    if (spec.rich == pe_spec::rich_kind::zeroed) rich_size = 48;
    const std::size_t e_lfanew = align_up(rich_start + rich_size, 8);

    const std::size_t opt_size = spec.pe32_plus ? 240 : 224;
    const std::size_t sect_table = e_lfanew + 4 + 20 + opt_size;
    const std::size_t headers = align_up(sect_table + 40 * spec.sections.size(), 0x200);

    std::size_t raw_at = headers;
    std::vector<std::size_t> raw_offsets;
    for (const auto& s : spec.sections) {
        raw_offsets.push_back(raw_at);
        raw_at += align_up(s.raw.size(), 0x200);
    }
    byte_buffer img(raw_at, 0);

    img[0] = 'M';
    img[1] = 'Z';
    put16(img, 2, 0x90);
    put16(img, 4, 3);
    put16(img, 8, 4);
    put16(img, 0x0c, 0xffff);
    put16(img, 0x10, 0xb8);
    put16(img, 0x18, 0x40);
    put32(img, 0x3c, static_cast<std::uint32_t>(e_lfanew));
    std::memcpy(img.data() + 0x40, dos_stub, sizeof dos_stub);

    if (spec.rich == pe_spec::rich_kind::entries) {
        std::uint32_t key = static_cast<std::uint32_t>(rich_start);
        for (std::size_t i = 0; i < rich_start; ++i) {
            if (i >= 0x3c && i < 0x40) continue;
            key += rotl(img[i], static_cast<unsigned>(i));
        }
        for (const auto& e : spec.rich_entries) {
            std::uint32_t comp = (e[0] << 16) | (e[1] & 0xffff);
            key += rotl(comp, e[2]);
        }
        std::size_t at = rich_start;
        put32(img, at, 0x536e6144 ^ key); // "DanS"
        for (int i = 1; i < 4; ++i) put32(img, at + 4 * static_cast<std::size_t>(i), key);
        at += 16;
        for (const auto& e : spec.rich_entries) {
            put32(img, at, ((e[0] << 16) | (e[1] & 0xffff)) ^ key);
            put32(img, at + 4, e[2] ^ key);
            at += 8;
        }
        put32(img, at, 0x68636952); // "Rich"
        put32(img, at + 4, key);
    }

    std::size_t p = e_lfanew;
    put32(img, p, 0x00004550);
    p += 4;
    put16(img, p, spec.pe32_plus ? 0x8664 : 0x14c);
    put16(img, p + 2, static_cast<std::uint16_t>(spec.sections.size()));
    put32(img, p + 4, 0x5f000000);
    put16(img, p + 16, static_cast<std::uint16_t>(opt_size));
    put16(img, p + 18, spec.pe32_plus ? 0x0022 : 0x0102);
    p += 20;

    const std::size_t opt = p;
    std::uint32_t code_size = 0, init_size = 0;
    std::uint32_t image_size = 0x1000;
    for (const auto& s : spec.sections) {
        auto vs = s.virtual_size ? s.virtual_size : static_cast<std::uint32_t>(s.raw.size());
        if (s.characteristics & 0x20) code_size += static_cast<std::uint32_t>(align_up(s.raw.size(), 0x200));
        if (s.characteristics & 0x40) init_size += static_cast<std::uint32_t>(align_up(s.raw.size(), 0x200));
        image_size += static_cast<std::uint32_t>(align_up(std::max<std::size_t>(vs, 1), 0x1000));
    }
    put16(img, opt, spec.pe32_plus ? 0x20b : 0x10b);
    img[opt + 2] = 14;
    put32(img, opt + 4, code_size);
    put32(img, opt + 8, init_size);
    put32(img, opt + 16, spec.sections.empty() ? 0 : 0x1000); // entry point
    put32(img, opt + 20, 0x1000);
    std::size_t q;
    if (spec.pe32_plus) {
        put64(img, opt + 24, spec.image_base);
        q = opt + 32;
    } else {
        put32(img, opt + 24, 0x2000);
        put32(img, opt + 28, static_cast<std::uint32_t>(spec.image_base));
        q = opt + 32;
    }
    put32(img, q, 0x1000);    // section alignment
    put32(img, q + 4, 0x200); // file alignment
    put16(img, q + 8, spec.os_major);
    put16(img, q + 12, spec.image_version_major);
    put16(img, q + 14, spec.image_version_minor);
    put16(img, q + 16, spec.subsystem_major);
    put32(img, q + 24, image_size);
    put32(img, q + 28, static_cast<std::uint32_t>(headers));
    put32(img, q + 32, spec.stored_checksum);
    put16(img, q + 36, 3);
    put16(img, q + 38, spec.dll_characteristics);
    std::size_t r = q + 40;
    if (spec.pe32_plus) {
        put64(img, r, 0x100000);
        put64(img, r + 8, 0x1000);
        put64(img, r + 16, 0x100000);
        put64(img, r + 24, 0x1000);
        r += 32;
    } else {
        put32(img, r, 0x100000);
        put32(img, r + 4, 0x1000);
        put32(img, r + 8, 0x100000);
        put32(img, r + 12, 0x1000);
        r += 16;
    }
    put32(img, r + 4, 16); // number of data directories

    std::uint32_t va = 0x1000;
    for (std::size_t i = 0; i < spec.sections.size(); ++i) {
        const auto& s = spec.sections[i];
        std::size_t h = sect_table + 40 * i;
        std::memcpy(img.data() + h, s.name.data(), std::min<std::size_t>(8, s.name.size()));
        auto vs = s.virtual_size ? s.virtual_size : static_cast<std::uint32_t>(s.raw.size());
        put32(img, h + 8, vs);
        put32(img, h + 12, va);
        put32(img, h + 16, static_cast<std::uint32_t>(align_up(s.raw.size(), 0x200)));
        put32(img, h + 20, s.raw.empty() ? 0 : static_cast<std::uint32_t>(raw_offsets[i]));
        put32(img, h + 36, s.characteristics);
        std::copy(s.raw.begin(), s.raw.end(), img.begin() + static_cast<std::ptrdiff_t>(raw_offsets[i]));
        va += static_cast<std::uint32_t>(align_up(std::max<std::size_t>(vs, 1), 0x1000));
    }
    img.insert(img.end(), spec.overlay.begin(), spec.overlay.end());
    return img;
}

std::size_t pe_checksum_offset(byte_view image) { return get32(image, 0x3c) + 4 + 20 + 64; }

std::uint32_t reference_checksum(byte_view file, std::size_t checksum_offset) {
    std::uint64_t sum = 0;
    const std::size_t dwords = (file.size() + 3) / 4;
    for (std::size_t i = 0; i < dwords; ++i) {
        if (i * 4 == checksum_offset) continue;
        std::uint32_t d = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            std::size_t at = i * 4 + k;
            if (at < file.size()) d |= static_cast<std::uint32_t>(file[at]) << (8 * k);
        }
        sum = (sum & 0xffffffffu) + d + (sum >> 32);
        if (sum > 0xffffffffu) sum = (sum & 0xffffffffu) + (sum >> 32);
    }
    sum = (sum & 0xffff) + (sum >> 16);
    sum = sum + (sum >> 16);
    sum &= 0xffff;
    return static_cast<std::uint32_t>(sum + file.size());
}

// --- marshal ------------------------------------------------------------------

std::array<std::uint8_t, 4> magic_for(py v) {
    std::uint16_t n = 0;
    switch (v.minor) {
    case 5: n = 3351; break;
    case 6: n = 3379; break;
    case 7: n = 3394; break;
    case 8: n = 3413; break;
    case 9: n = 3425; break;
    case 10: n = 3439; break;
    case 11: n = 3495; break;
    default: throw std::invalid_argument("no magic for version");
    }
    return {static_cast<std::uint8_t>(n), static_cast<std::uint8_t>(n >> 8), '\r', '\n'};
}

void marshal_writer::u32(std::uint32_t n) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
}

void marshal_writer::int32(std::int32_t n) {
    out.push_back('i');
    u32(static_cast<std::uint32_t>(n));
}

void marshal_writer::text(std::string_view s) {
    bool ascii = std::all_of(s.begin(), s.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; });
    if (ascii && s.size() < 256) {
        out.push_back('z');
        out.push_back(static_cast<std::uint8_t>(s.size()));
    } else {
        out.push_back(ascii ? 'a' : 'u');
        u32(static_cast<std::uint32_t>(s.size()));
    }
    out.insert(out.end(), s.begin(), s.end());
}

void marshal_writer::bytes(byte_view b) {
    out.push_back('s');
    u32(static_cast<std::uint32_t>(b.size()));
    out.insert(out.end(), b.begin(), b.end());
}

void marshal_writer::binary_float(double d) {
    out.push_back('g');
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

void marshal_writer::names(const std::vector<std::string>& list) {
    if (list.size() < 256) {
        out.push_back(')');
        out.push_back(static_cast<std::uint8_t>(list.size()));
    } else {
        out.push_back('(');
        u32(static_cast<std::uint32_t>(list.size()));
    }
    for (const auto& n : list) text(n);
}

void marshal_writer::value(const const_value& v) {
    std::visit(
        [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>) none();
            else if constexpr (std::is_same_v<T, bool>) boolean(x);
            else if constexpr (std::is_same_v<T, std::int32_t>) int32(x);
            else if constexpr (std::is_same_v<T, std::string>) text(x);
            else if constexpr (std::is_same_v<T, byte_buffer>) bytes(x);
            else if constexpr (std::is_same_v<T, double>) binary_float(x);
            else if constexpr (std::is_same_v<T, std::shared_ptr<code_spec>>) code(*x);
            else {
                out.push_back('(');
                u32(static_cast<std::uint32_t>(x->items.size()));
                for (const auto& item : x->items) value(item);
            }
        },
        v);
}

void marshal_writer::code(const code_spec& c) {
    const bool v38 = v_ >= py{3, 8}, v311 = v_ >= py{3, 11};
    out.push_back('c');
    u32(static_cast<std::uint32_t>(c.argcount));
    if (v38) u32(static_cast<std::uint32_t>(c.posonly));
    u32(static_cast<std::uint32_t>(c.kwonly));
    if (!v311) u32(static_cast<std::uint32_t>(c.nlocals));
    u32(static_cast<std::uint32_t>(c.stacksize));
    u32(c.flags);
    bytes(c.code);
    out.push_back('(');
    u32(static_cast<std::uint32_t>(c.consts.size()));
    for (const auto& k : c.consts) value(k);
    names(c.names);
    if (v311) {
        std::vector<std::string> plus;
        byte_buffer kinds;
        for (const auto& n : c.varnames) plus.push_back(n), kinds.push_back(0x20);
        for (const auto& n : c.cellvars) plus.push_back(n), kinds.push_back(0x40);
        for (const auto& n : c.freevars) plus.push_back(n), kinds.push_back(0x80);
        names(plus);
        bytes(kinds);
    } else {
        names(c.varnames);
        names(c.freevars);
        names(c.cellvars);
    }
    text(c.filename);
    text(c.name);
    if (v311) text(c.qualname.empty() ? c.name : c.qualname);
    u32(static_cast<std::uint32_t>(c.first_line));
    bytes(c.line_table);
    if (v311) bytes(c.exception_table);
}

byte_buffer marshal_code(const code_spec& c, py v) {
    marshal_writer w(v);
    w.code(c);
    return std::move(w.out);
}

byte_buffer pyc_file(const code_spec& c, py v) {
    auto m = magic_for(v);
    byte_buffer out(m.begin(), m.end());
    out.resize(v >= py{3, 7} ? 16 : 12, 0);
    auto body = marshal_code(c, v);
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

// --- archives -----------------------------------------------------------------

byte_buffer deflate(byte_view data, int level) {
    uLongf n = compressBound(static_cast<uLong>(data.size()));
    byte_buffer out(n);
    if (compress2(out.data(), &n, data.data(), static_cast<uLong>(data.size()), level) != Z_OK) {
        throw std::runtime_error("compress2 failed");
    }
    out.resize(n);
    return out;
}

namespace {
void be32(byte_buffer& b, std::uint32_t v) {
    for (int i = 3; i >= 0; --i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
} // namespace

byte_buffer build_carchive(const pkg_spec& spec) {
    byte_buffer out;
    byte_buffer toc;
    for (const auto& e : spec.entries) {
        auto stored = e.compress ? deflate(e.data) : e.data;
        auto offset = static_cast<std::uint32_t>(out.size());
        out.insert(out.end(), stored.begin(), stored.end());

        std::size_t len = 18 + e.name.size() + 1;
        if (spec.pad16) len = (len + 15) / 16 * 16;
        be32(toc, static_cast<std::uint32_t>(len));
        be32(toc, offset);
        be32(toc, static_cast<std::uint32_t>(stored.size()));
        be32(toc, static_cast<std::uint32_t>(e.data.size()));
        toc.push_back(e.compress ? 1 : 0);
        toc.push_back(static_cast<std::uint8_t>(e.type));
        toc.insert(toc.end(), e.name.begin(), e.name.end());
        toc.resize(toc.size() + (len - 18 - e.name.size()), 0);
    }
    auto toc_offset = static_cast<std::uint32_t>(out.size());
    out.insert(out.end(), toc.begin(), toc.end());
    std::size_t cookie = spec.v20 ? 24 : 88;
    auto total = static_cast<std::uint32_t>(out.size() + cookie);
    static constexpr std::uint8_t magic[8] = {'M', 'E', 'I', 014, 013, 012, 013, 016};
    out.insert(out.end(), std::begin(magic), std::end(magic));
    be32(out, total);
    be32(out, toc_offset);
    be32(out, static_cast<std::uint32_t>(toc.size()));
    be32(out, spec.py_version);
    if (!spec.v20) {
        byte_buffer lib(64, 0);
        std::copy_n(spec.library.begin(), std::min<std::size_t>(63, spec.library.size()), lib.begin());
        out.insert(out.end(), lib.begin(), lib.end());
    }
    return out;
}

byte_buffer build_pyz(std::array<std::uint8_t, 4> pyc_magic,
                      const std::vector<std::pair<std::string, byte_buffer>>& modules) {
    byte_buffer out(17, 0);
    std::copy_n("PYZ", 3, out.begin());
    std::copy(pyc_magic.begin(), pyc_magic.end(), out.begin() + 4);
    marshal_writer toc(py{3, 10});
    toc.out.push_back('[' | 0x80); // FLAG_REF, as CPython writes lists
    for (int i = 0; i < 4; ++i) toc.out.push_back(static_cast<std::uint8_t>(modules.size() >> (8 * i)));
    for (const auto& [name, body] : modules) {
        auto z = deflate(body);
        auto offset = static_cast<std::int32_t>(out.size());
        out.insert(out.end(), z.begin(), z.end());
        toc.out.push_back(')');
        toc.out.push_back(2);
        toc.text(name);
        toc.out.push_back(')');
        toc.out.push_back(3);
        toc.int32(0);
        toc.int32(offset);
        toc.int32(static_cast<std::int32_t>(z.size()));
    }
    auto toc_offset = static_cast<std::uint32_t>(out.size());
    for (int i = 0; i < 4; ++i) out[8 + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(toc_offset >> (8 * (3 - i)));
    out.insert(out.end(), toc.out.begin(), toc.out.end());
    return out;
}

} // namespace testkit
