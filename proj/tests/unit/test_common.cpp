#include <set>

#include <doctest.h>

#include "pyxray/bytes.hpp"
#include "pyxray/digest.hpp"
#include "pyxray/indicator.hpp"
#include "pyxray/text.hpp"
#include "testkit.hpp"

using namespace pyxray;

TEST_CASE("byte_reader reads little and big endian") {
    const byte_buffer b = {0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08};
    byte_reader r(b);
    CHECK(r.u16le() == 0x0201);
    CHECK(r.u32be() == 0x03040506);
    CHECK(r.remaining() == 2);
    CHECK_THROWS_AS(r.u32le(), bounds_error);
    CHECK(r.position() == 6);
    CHECK(r.u8() == 7);
    CHECK_THROWS_AS(r.seek(9), bounds_error);
}

TEST_CASE("fits is overflow safe") {
    CHECK(fits(10, 0, 10));
    CHECK(fits(10, 10, 0));
    CHECK_FALSE(fits(10, 11, 0));
    CHECK_FALSE(fits(10, 5, ~0ull));
    CHECK_FALSE(fits(10, ~0ull, 2));
}

TEST_CASE("printable_strings finds runs at the minimum length") {
    std::string data = std::string("ab\0hello\0\x01world!", 16);
    auto runs = printable_strings(as_bytes(data), 5);
    REQUIRE(runs.size() == 2);
    CHECK(runs[0].text == "hello");
    CHECK(runs[0].offset == 3);
    CHECK(runs[1].text == "world!");
}

TEST_CASE("escape_bytes round trips arbitrary bytes") {
    testkit::gen g(7);
    for (int i = 0; i < 200; ++i) {
        auto b = g.bytes(g.below(64));
        CHECK(unescape_bytes(escape_bytes(b)) == b);
    }
    CHECK(escape_bytes(as_bytes("a\\b")) == "a\\\\b");
}

TEST_CASE("lossy_utf8 substitutes invalid sequences") {
    const byte_buffer bad = {'a', 0xff, 'b'};
    CHECK_FALSE(is_valid_utf8(bad));
    CHECK(lossy_utf8(bad) == "a\xef\xbf\xbd" "b");
    CHECK(is_valid_utf8(as_bytes("\xc3\xa9t\xc3\xa9")));
}

TEST_CASE("sha256 of the empty string") {
    CHECK(sha256_hex({}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex(as_bytes("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("severity bands") {
    CHECK(severity_for_weight(0) == severity::info);
    CHECK(severity_for_weight(9) == severity::info);
    CHECK(severity_for_weight(10) == severity::low);
    CHECK(severity_for_weight(30) == severity::medium);
    CHECK(severity_for_weight(60) == severity::high);
    CHECK(severity_for_weight(100) == severity::high);
    CHECK(parse_severity("medium") == severity::medium);
    CHECK_FALSE(parse_severity("urgent"));
}

TEST_CASE("every builtin id is unique and resolvable") {
    std::set<std::string_view> seen;
    for (const auto& k : builtin_indicators()) {
        CHECK(seen.insert(k.id).second);
        CHECK(find_builtin(k.id) == &k);
    }
    CHECK(find_builtin("NOT_A_REAL_ID") == nullptr);
    auto ind = make_indicator("ASLR_DISABLED", "0x0");
    CHECK(ind.where.module == source_module::pe);
    CHECK_FALSE(ind.description.empty());
}

TEST_CASE("icontains and case folding") {
    CHECK(icontains("Run PowerShell now", "powershell"));
    CHECK_FALSE(icontains("abc", "abcd"));
    CHECK(istarts_with("CMD.exe /c", "cmd"));
    CHECK(hex_encode(byte_buffer{0x00, 0xab}) == "00ab");
}
