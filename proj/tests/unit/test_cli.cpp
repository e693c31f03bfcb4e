#include <cstdlib>
#include <sstream>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "testkit.hpp"

using namespace pyxray::cli;

namespace {

struct outcome {
    int code = -1;
    std::string out, err;
};

outcome invoke(std::vector<std::string> args, const std::string& stdin_text = {}) {
    std::istringstream in(stdin_text);
    std::ostringstream out, err;
    outcome o;
    o.code = run(args, in, out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

std::string fixture(const std::string& rel) { return (testkit::fixture_dir() / rel).string(); }

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) {
        if (!l.empty()) out.push_back(l);
    }
    return out;
}

// unset for the lifetime of the guard
struct env_guard {
    explicit env_guard(const char* value) {
        if (value) ::setenv(rules_env, value, 1);
        else ::unsetenv(rules_env);
    }
    ~env_guard() { ::unsetenv(rules_env); }
};

} // namespace

TEST_CASE("verdicts map to exit codes") {
    env_guard env(nullptr);
    auto hello = invoke({"scan", fixture("pe/hello_packaged.exe")});
    CHECK(hello.code == exit_ok);
    CHECK(hello.out.find(": benign (score") != std::string::npos);

    auto replica = invoke({"scan", fixture("pe/alg1_replica.exe")});
    CHECK(replica.code == exit_malicious);
    CHECK(replica.out.find("FINGERPRINT_STRIPPED") != std::string::npos);

    auto both = invoke({"scan", fixture("pe/hello_packaged.exe"), fixture("pe/alg1_replica.exe")});
    CHECK(both.code == exit_malicious);
}

TEST_CASE("usage errors") {
    env_guard env(nullptr);
    CHECK(invoke({}).code == exit_usage);
    CHECK(invoke({"frobnicate"}).code == exit_usage);
    CHECK(invoke({"scan"}).code == exit_usage);
    auto missing = invoke({"scan", fixture("pe/does_not_exist.exe")});
    CHECK(missing.code == exit_usage);
    CHECK(missing.err.find("no such file") != std::string::npos);
    CHECK(invoke({"scan", "--fail-on", "benign", fixture("pe/plain.exe")}).code == exit_usage);
    CHECK(invoke({"scan", "--max-depth", "0", fixture("pe/plain.exe")}).code == exit_usage);
    CHECK(invoke({"extract", fixture("pe/plain.exe")}).code == exit_usage);
    CHECK(invoke({"--help"}).code == exit_ok);
    auto version = invoke({"--version"});
    CHECK(version.code == exit_ok);
    CHECK_FALSE(version.out.empty());
}

TEST_CASE("bad rule files are usage errors") {
    testkit::temp_dir tmp;
    auto bad = tmp.path() / "bad.rules";
    testkit::write_file(bad, testkit::view("X_RULE | strings | low | (unclosed\n"));
    {
        env_guard env(nullptr);
        auto o = invoke({"scan", "--rules", bad.string(), fixture("pe/plain.exe")});
        CHECK(o.code == exit_usage);
        CHECK(o.err.find("line 1") != std::string::npos);
        CHECK(invoke({"scan", "--rules", (tmp.path() / "absent").string(), fixture("pe/plain.exe")}).code == exit_usage);
    }
    {
        env_guard env(bad.string().c_str());
        CHECK(invoke({"scan", fixture("pe/plain.exe")}).code == exit_usage);
    }
}

TEST_CASE("user rules change the outcome") {
    testkit::temp_dir tmp;
    auto rules = tmp.path() / "strict.rules";
    testkit::write_file(rules, testkit::view("@threshold suspicious 2\n@threshold malicious 4\n"));
    env_guard env(nullptr);
    CHECK(invoke({"scan", fixture("pe/hello_packaged.exe")}).code == exit_ok);
    CHECK(invoke({"scan", "--rules", rules.string(), fixture("pe/hello_packaged.exe")}).code == exit_malicious);
    env_guard via_env(rules.string().c_str());
    CHECK(invoke({"scan", fixture("pe/hello_packaged.exe")}).code == exit_malicious);
}

TEST_CASE("fail-on suspicious") {
    env_guard env(nullptr);
    auto shell = fixture("pyc/listing1_shell.cpython-310.pyc");
    auto o = invoke({"scan", "--json", shell});
    auto doc = nlohmann::json::parse(lines_of(o.out).at(0));
    auto v = doc["report"]["verdict"].get<std::string>();
    if (v == "suspicious") {
        CHECK(o.code == exit_ok);
        CHECK(invoke({"scan", "--fail-on", "suspicious", shell}).code == exit_suspicious);
    } else {
        CHECK(v == "malicious");
        CHECK(o.code == exit_malicious);
        CHECK(invoke({"scan", "--fail-on", "suspicious", shell}).code == exit_malicious);
    }
    CHECK(invoke({"scan", "--fail-on", "suspicious", fixture("pe/hello_packaged.exe")}).code == exit_ok);
}

TEST_CASE("json emits one document per line in input order") {
    env_guard env(nullptr);
    std::vector<std::string> files = {"pe/alg1_replica.exe", "pe/hello_packaged.exe", "pe/plain.exe",
                                      "archive/three_entry.pkg"};
    std::vector<std::string> args = {"scan", "--json", "-j", "3"};
    for (const auto& f : files) args.push_back(fixture(f));
    auto o = invoke(args);
    auto lines = lines_of(o.out);
    REQUIRE(lines.size() == files.size());
    for (std::size_t i = 0; i < files.size(); ++i) {
        auto doc = nlohmann::json::parse(lines[i]);
        CHECK(doc["envelope"]["path"] == fixture(files[i]));
        CHECK(doc["schema"].is_string());
    }
    CHECK(o.code == exit_malicious);
}

TEST_CASE("directories and stdin") {
    env_guard env(nullptr);
    auto flat = invoke({"scan", "--json", (testkit::fixture_dir() / "pe").string()});
    CHECK(lines_of(flat.out).size() == 3);
    auto deep = invoke({"scan", "--json", "-r", testkit::fixture_dir().string()});
    CHECK(lines_of(deep.out).size() > 20);

    auto bytes = testkit::read_fixture("pe/alg1_replica.exe");
    auto piped = invoke({"scan", "--json", "-"}, std::string(bytes.begin(), bytes.end()));
    CHECK(piped.code == exit_malicious);
    CHECK(nlohmann::json::parse(lines_of(piped.out).at(0))["envelope"]["path"] == "<stdin>");
}

TEST_CASE("extract subcommand") {
    env_guard env(nullptr);
    testkit::temp_dir tmp;
    auto ok = invoke({"extract", "--out", (tmp.path() / "a").string(), fixture("archive/three_entry.pkg")});
    CHECK(ok.code == exit_ok);
    CHECK(std::filesystem::exists(tmp.path() / "a" / "manifest.tsv"));
    CHECK(ok.out.find("file(s) written") != std::string::npos);

    auto none = invoke({"extract", "--out", (tmp.path() / "b").string(), fixture("pe/plain.exe")});
    CHECK(none.code == exit_no_input);
    CHECK_FALSE(std::filesystem::exists(tmp.path() / "b"));

    auto missing = invoke({"extract", "--out", (tmp.path() / "c").string(), fixture("nope.pkg")});
    CHECK(missing.code == exit_usage);

    auto bytes = testkit::read_fixture("archive/traversal.pkg");
    auto piped = invoke({"extract", "--out", (tmp.path() / "d").string(), "-"}, std::string(bytes.begin(), bytes.end()));
    CHECK(piped.code == exit_ok);
    CHECK_FALSE(std::filesystem::exists(tmp.path() / "escape.txt"));
}
