#include <doctest.h>

#include <fmt/format.h>

#include "pyxray/pe/image.hpp"
#include "testkit.hpp"

using namespace pyxray;
using namespace pyxray::pe;

namespace {

testkit::pe_spec clean_spec() {
    testkit::pe_spec s;
    s.rich = testkit::pe_spec::rich_kind::entries;
    s.rich_entries = {{260, 30133, 12}, {259, 30133, 3}};
    s.sections.push_back({".text", 0x60000020, byte_buffer(0x100, 0xcc)});
    s.sections.push_back({".rdata", 0x40000040, byte_buffer(0x80, 0x11)});
    return s;
}

std::vector<std::string> ids(const std::vector<indicator>& list) {
    std::vector<std::string> out;
    for (const auto& i : list) out.push_back(i.id);
    return out;
}

std::string hex(std::uint64_t v) { return fmt::format("0x{:x}", v); }

pe_errc error_of(byte_view data) {
    try {
        parse_pe(data);
    } catch (const pe_error& e) {
        return e.code();
    }
    FAIL("parse_pe accepted the input");
    return pe_errc::not_mz;
}

} // namespace

TEST_CASE("fixture headers match the captured oracle") {
    const auto& m = testkit::manifest::load();
    for (const char* name : {"pe/hello_packaged.exe", "pe/alg1_replica.exe", "pe/plain.exe"}) {
        CAPTURE(name);
        auto data = testkit::read_fixture(name);
        auto img = parse_pe(data);
        for (const auto& row : m.of("pe", name)) {
            const auto& key = row[2];
            const auto& want = row[3];
            CAPTURE(key);
            if (key == "image_base") CHECK(hex(img.optional.image_base) == want);
            else if (key == "dll_characteristics") CHECK(hex(img.optional.dll_characteristics) == want);
            else if (key == "checksum_stored") CHECK(hex(img.optional.checksum) == want);
            else if (key == "checksum_computed") {
                CHECK(hex(img.computed_checksum) == want);
                CHECK(hex(testkit::reference_checksum(data, img.checksum_offset)) == want);
            } else if (key == "image_version")
                CHECK(fmt::format("{}.{}", img.optional.major_image_version, img.optional.minor_image_version) == want);
            else if (key == "e_lfanew") CHECK(hex(img.dos.e_lfanew) == want);
            else if (key == "overlay_offset") CHECK(hex(img.overlay.offset) == want);
            else if (key == "size") CHECK(std::to_string(img.file_size) == want);
            else FAIL("unknown pe key " << key);
        }

        auto sections = m.of("section", name);
        REQUIRE(img.sections.size() == sections.size());
        for (const auto& row : sections) {
            const auto& s = img.sections.at(std::stoul(row[2]));
            CHECK(s.name == row[3]);
            CHECK(std::to_string(s.virtual_size) == row[4]);
            CHECK(std::to_string(s.virtual_address) == row[5]);
            CHECK(std::to_string(s.raw_size) == row[6]);
            CHECK(std::to_string(s.raw_offset) == row[7]);
            CHECK(hex(s.characteristics) == row[8]);
        }

        auto rich = parse_rich_header(img);
        auto rich_rows = m.of("rich", name);
        CHECK(rich.present == !rich_rows.empty());
        REQUIRE(rich.entries.size() == rich_rows.size());
        for (std::size_t i = 0; i < rich_rows.size(); ++i) {
            CHECK(hex(rich.xor_key) == rich_rows[i][2]);
            CHECK(std::to_string(rich.entries[i].product_id) == rich_rows[i][3]);
            CHECK(std::to_string(rich.entries[i].build_id) == rich_rows[i][4]);
            CHECK(std::to_string(rich.entries[i].count) == rich_rows[i][5]);
        }
        if (rich.present) CHECK(rich.computed_key == rich.xor_key);

        auto version = parse_version_info(img);
        auto version_rows = m.of("version", name);
        CHECK(version.exists == !version_rows.empty());
        for (const auto& row : version_rows) {
            const auto* v = version.find(row[2]);
            REQUIRE_MESSAGE(v, row[2]);
            CHECK(*v == row[3]);
        }
    }
}

TEST_CASE("replica fixture carries the tampering artifacts") {
    auto data = testkit::read_fixture("pe/alg1_replica.exe");
    auto img = parse_pe(data);
    auto rich = parse_rich_header(img);
    CHECK_FALSE(rich.present);
    CHECK(rich.region_is_zeroed);
    auto found = ids(pe_indicators(img, rich, parse_version_info(img)));
    for (const char* id : {"RICH_HEADER_ZEROED", "SECTION_BSS_WITH_RAW_DATA", "ASLR_DISABLED", "DEFAULT_IMAGE_BASE",
                           "CHECKSUM_FRESHLY_VALID", "IMAGE_VERSION_UNUSUAL"}) {
        CHECK_MESSAGE(std::count(found.begin(), found.end(), id) == 1, id);
    }
    CHECK(found.size() == 6);
}

TEST_CASE("minimal one-section image") {
    testkit::pe_spec s;
    s.sections.push_back({".text", 0x60000020, byte_buffer(16, 0xc3)});
    auto data = testkit::build_pe(s);
    auto img = parse_pe(data);
    CHECK(img.sections.size() == 1);
    CHECK(img.sections[0].name == ".text");
    CHECK(img.overlay.empty());
    CHECK(img.overlay.offset == data.size());
    CHECK(img.optional.magic == optional_magic_pe32);
    CHECK(img.rich_region.size == 0);
    auto rich = parse_rich_header(img);
    CHECK_FALSE(rich.present);
    CHECK_FALSE(rich.region_is_zeroed);
}

TEST_CASE("PE32+ layout") {
    auto s = clean_spec();
    s.pe32_plus = true;
    s.overlay = byte_buffer(100, 0x5a);
    auto data = testkit::build_pe(s);
    auto img = parse_pe(data);
    CHECK(img.optional.is_pe32_plus());
    CHECK(img.optional.image_base == 0x140000000ull);
    CHECK(img.optional.data_directories.size() == 16);
    CHECK(img.overlay.size == 100);
    CHECK(img.checksum_offset == testkit::pe_checksum_offset(data));
}

TEST_CASE("structural errors") {
    CHECK(error_of({}) == pe_errc::not_mz);
    CHECK(error_of(testkit::view("ZM not a pe")) == pe_errc::not_mz);

    auto data = testkit::build_pe(clean_spec());
    auto img = parse_pe(data);
    const std::size_t table = img.dos.e_lfanew + 24 + img.coff.size_of_optional_header;
    byte_buffer cut(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(table + 40 + 12));
    CHECK(error_of(cut) == pe_errc::truncated);

    byte_buffer bad_sig = data;
    bad_sig[img.dos.e_lfanew] = 'X';
    CHECK(error_of(bad_sig) == pe_errc::bad_pe_signature);

    byte_buffer far = data;
    far[0x3c] = 0xff;
    far[0x3d] = 0xff;
    far[0x3e] = 0xff;
    far[0x3f] = 0x7f;
    CHECK_THROWS_AS(parse_pe(far), pe_error);
}

TEST_CASE("checksum of a zero-filled body matches the reference") {
    testkit::pe_spec s;
    s.sections.push_back({".data", 0xc0000040, byte_buffer(1024, 0)});
    auto data = testkit::build_pe(s);
    auto off = testkit::pe_checksum_offset(data);
    CHECK(compute_pe_checksum(data) == testkit::reference_checksum(data, off));
    CHECK(compute_pe_checksum(data, off) == testkit::reference_checksum(data, off));
}

TEST_CASE("checksum fixed point and single-byte perturbation") {
    auto s = clean_spec();
    s.overlay = byte_buffer(333, 0x41);
    auto data = testkit::build_pe(s);
    auto off = testkit::pe_checksum_offset(data);
    auto sum = compute_pe_checksum(data);
    for (int i = 0; i < 4; ++i) data[off + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(sum >> (8 * i));
    auto img = parse_pe(data);
    CHECK(verify_checksum(img) == checksum_status::match);
    CHECK(compute_pe_checksum(data) == sum);

    data.back() ^= 0x01;
    CHECK(verify_checksum(parse_pe(data)) == checksum_status::mismatch);

    s.stored_checksum = 0;
    CHECK(verify_checksum(parse_pe(testkit::build_pe(s))) == checksum_status::absent);
}

TEST_CASE("checksum agrees with the reference on random images") {
    testkit::gen g(0x5eed);
    for (int n = 0; n < 200; ++n) {
        testkit::pe_spec s;
        s.pe32_plus = g.coin();
        auto count = g.between(1, 5);
        for (std::size_t i = 0; i < count; ++i) {
            s.sections.push_back({"." + g.identifier(5), 0x40000040, g.bytes(g.below(3000))});
        }
        s.overlay = g.bytes(g.below(2000));
        s.stored_checksum = static_cast<std::uint32_t>(g.engine()());
        auto data = testkit::build_pe(s);
        auto off = testkit::pe_checksum_offset(data);
        CAPTURE(n);
        CHECK(compute_pe_checksum(data) == testkit::reference_checksum(data, off));
    }
}

TEST_CASE("checksum of non-PE bytes skips nothing") {
    testkit::gen g(99);
    for (int n = 0; n < 50; ++n) {
        auto data = g.bytes(g.below(500));
        CHECK(compute_pe_checksum(data) == testkit::reference_checksum(data, ~std::size_t{0}));
    }
}

TEST_CASE("rich header with two entries decodes") {
    auto data = testkit::build_pe(clean_spec());
    auto img = parse_pe(data);
    auto rich = parse_rich_header(img);
    REQUIRE(rich.present);
    REQUIRE(rich.entries.size() == 2);
    CHECK(rich.entries[0] == rich_entry{260, 30133, 12});
    CHECK(rich.entries[1] == rich_entry{259, 30133, 3});
    CHECK(rich.offset == 0x80);
    CHECK(rich.computed_key == rich.xor_key);
    CHECK_FALSE(rich.region_is_zeroed);
}

TEST_CASE("zero-filled rich region") {
    auto s = clean_spec();
    s.rich = testkit::pe_spec::rich_kind::zeroed;
    auto img = parse_pe(testkit::build_pe(s));
    auto rich = parse_rich_header(img);
    CHECK_FALSE(rich.present);
    CHECK(rich.region_is_zeroed);
}

TEST_CASE("clean image raises nothing") {
    auto img = parse_pe(testkit::build_pe(clean_spec()));
    auto list = pe_indicators(img, parse_rich_header(img), parse_version_info(img));
    CHECK(ids(list).empty());
}

TEST_CASE("each tampering step in isolation") {
    struct variant {
        const char* id;
        void (*apply)(testkit::pe_spec&);
    };
    const variant cases[] = {
        {"SECTION_BSS_WITH_RAW_DATA", [](testkit::pe_spec& s) { s.sections.push_back({".bss", 0xc0000040, byte_buffer(64, 1)}); }},
        {"RICH_HEADER_ZEROED", [](testkit::pe_spec& s) { s.rich = testkit::pe_spec::rich_kind::zeroed; }},
        {"ASLR_DISABLED", [](testkit::pe_spec& s) { s.dll_characteristics = 0x8100; s.image_base = 0x10000000; }},
        {"SECTION_R_PREFIX_NAME", [](testkit::pe_spec& s) { s.sections.push_back({"_RDATA", 0x40000040, byte_buffer(8, 2)}); }},
        {"IMAGE_VERSION_UNUSUAL", [](testkit::pe_spec& s) { s.image_version_major = 5; s.image_version_minor = 2; }},
        {"CHECKSUM_MISMATCH", [](testkit::pe_spec& s) { s.stored_checksum = 1; }},
    };
    for (const auto& c : cases) {
        CAPTURE(c.id);
        auto s = clean_spec();
        c.apply(s);
        auto img = parse_pe(testkit::build_pe(s));
        auto list = ids(pe_indicators(img, parse_rich_header(img), parse_version_info(img)));
        CHECK(list == std::vector<std::string>{c.id});
    }
}

TEST_CASE("default image base depends on format") {
    auto s = clean_spec();
    s.image_base = 0x400000;
    auto img = parse_pe(testkit::build_pe(s));
    auto list = ids(pe_indicators(img, parse_rich_header(img), parse_version_info(img)));
    CHECK(list == std::vector<std::string>{"DEFAULT_IMAGE_BASE"});

    s = clean_spec();
    s.pe32_plus = true;
    img = parse_pe(testkit::build_pe(s));
    CHECK(ids(pe_indicators(img, parse_rich_header(img), parse_version_info(img))).empty());
}

TEST_CASE("truncated section data is flagged, not thrown") {
    auto data = testkit::build_pe(clean_spec());
    data.resize(data.size() - 0x100);
    auto img = parse_pe(data);
    auto list = ids(pe_indicators(img, parse_rich_header(img), parse_version_info(img)));
    CHECK(std::count(list.begin(), list.end(), "SECTION_DATA_TRUNCATED") == 1);
}

TEST_CASE("serialize_headers reproduces the header bytes") {
    testkit::gen g(3);
    for (int n = 0; n < 50; ++n) {
        auto s = clean_spec();
        s.pe32_plus = g.coin();
        if (g.coin()) s.rich = testkit::pe_spec::rich_kind::zeroed;
        s.dll_characteristics = static_cast<std::uint16_t>(g.engine()());
        s.image_version_major = static_cast<std::uint16_t>(g.below(10));
        auto data = testkit::build_pe(s);
        auto img = parse_pe(data);
        auto headers = serialize_headers(img);
        REQUIRE(headers.size() <= data.size());
        CHECK(std::equal(headers.begin(), headers.end(), data.begin()));
        auto again = parse_pe(data);
        CHECK(serialize_headers(again) == headers);
    }
}
