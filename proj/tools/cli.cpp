#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "pyxray/scan/scan.hpp"

namespace fs = std::filesystem;

namespace pyxray::cli {

namespace {

struct scan_flags {
    std::vector<std::string> paths;
    std::string rules_path;
    bool json = false;
    bool recursive = false;
    std::string fail_on = "malicious";
    std::size_t max_depth = 3;
    unsigned jobs = 0;
};

struct extract_flags {
    std::string out_dir;
    std::string path;
};

std::optional<byte_buffer> read_file(const fs::path& p) {
    std::error_code ec;
    if (fs::is_directory(p, ec)) return std::nullopt;
    std::ifstream f(p, std::ios::binary);
    if (!f) return std::nullopt;
    byte_buffer data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) return std::nullopt;
    return data;
}

byte_buffer read_stream(std::istream& in) {
    return byte_buffer((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// nullopt: usage error already reported
std::optional<report::rule_set> load_rule_set(const std::string& flag, std::ostream& err) {
    std::string path = flag;
    if (path.empty()) {
        if (const char* env = std::getenv(rules_env)) path = env;
    }
    if (path.empty()) return report::rule_set::defaults();
    auto data = read_file(path);
    if (!data) {
        err << "pyxray: cannot read rules file " << path << "\n";
        return std::nullopt;
    }
    try {
        auto user = report::load_rules(as_chars(*data));
        return report::rule_set::merge(report::rule_set::defaults(), user);
    } catch (const error& e) {
        err << "pyxray: " << path << ": " << e.what() << "\n";
        return std::nullopt;
    }
}

struct work_item {
    std::string display;
    fs::path path; // empty for stdin
};

// nullopt: a path does not exist
std::optional<std::vector<work_item>> expand(const scan_flags& flags, std::ostream& err) {
    std::vector<work_item> items;
    for (const auto& p : flags.paths) {
        if (p == "-") {
            items.push_back({"<stdin>", {}});
            continue;
        }
        std::error_code ec;
        fs::path path(p);
        if (!fs::exists(path, ec)) {
            err << "pyxray: " << p << ": no such file or directory\n";
            return std::nullopt;
        }
        if (!fs::is_directory(path, ec)) {
            items.push_back({p, path});
            continue;
        }
        std::vector<fs::path> found;
        auto opts = fs::directory_options::skip_permission_denied;
        if (flags.recursive) {
            for (auto it = fs::recursive_directory_iterator(path, opts, ec); !ec && it != fs::recursive_directory_iterator();
                 it.increment(ec)) {
                if (it->is_regular_file(ec)) found.push_back(it->path());
            }
        } else {
            for (auto it = fs::directory_iterator(path, opts, ec); !ec && it != fs::directory_iterator(); it.increment(ec)) {
                if (it->is_regular_file(ec)) found.push_back(it->path());
            }
        }
        if (ec) err << "pyxray: " << p << ": " << ec.message() << "\n";
        std::sort(found.begin(), found.end());
        for (auto& f : found) items.push_back({f.string(), f});
    }
    return items;
}

int do_scan(const scan_flags& flags, std::istream& in, std::ostream& out, std::ostream& err) {
    auto rules = load_rule_set(flags.rules_path, err);
    if (!rules) return exit_usage;
    auto items = expand(flags, err);
    if (!items) return exit_usage;
    if (items->empty()) {
        err << "pyxray: no files to scan\n";
        return exit_usage;
    }

    scan::scan_options options;
    options.rules = &*rules;
    options.max_depth = flags.max_depth;

    // stdin is read up front on this thread
    std::optional<byte_buffer> stdin_data;
    if (std::any_of(items->begin(), items->end(), [](const work_item& w) { return w.path.empty(); })) {
        stdin_data = read_stream(in);
    }

    std::vector<std::optional<report::scan_report>> results(items->size());
    std::vector<std::string> failures(items->size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < items->size(); i = next++) {
            const auto& item = (*items)[i];
            std::optional<byte_buffer> data = item.path.empty() ? stdin_data : read_file(item.path);
            if (!data) continue;
            try {
                results[i] = scan::scan_bytes(*data, options, item.display);
            } catch (const std::exception& e) {
                failures[i] = e.what();
            }
        }
    };
    unsigned jobs = flags.jobs ? flags.jobs : std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
    jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, items->size()));
    std::vector<std::thread> pool;
    for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    auto fail_on = report::parse_verdict(flags.fail_on).value_or(report::verdict::malicious);
    bool unreadable = false;
    int code = exit_ok;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        if (!r) {
            if (failures[i].empty()) err << "pyxray: cannot read " << (*items)[i].display << "\n";
            else err << "pyxray: " << (*items)[i].display << ": " << failures[i] << "\n";
            unreadable = true;
            continue;
        }
        out << report::serialize_report(*r, flags.json ? report::output_format::json : report::output_format::human);
        out << "\n";
        if (r->verdict == report::verdict::malicious && fail_on <= report::verdict::malicious) {
            code = std::max(code, exit_malicious);
        } else if (r->verdict >= report::verdict::suspicious && fail_on <= report::verdict::suspicious) {
            code = std::max(code, exit_suspicious);
        }
    }
    out.flush();
    return unreadable ? exit_no_input : code;
}

int do_extract(const extract_flags& flags, std::istream& in, std::ostream& out, std::ostream& err) {
    std::optional<byte_buffer> data;
    if (flags.path == "-") {
        data = read_stream(in);
    } else {
        std::error_code ec;
        if (!fs::exists(flags.path, ec)) {
            err << "pyxray: " << flags.path << ": no such file or directory\n";
            return exit_usage;
        }
        data = read_file(flags.path);
    }
    if (!data) {
        err << "pyxray: cannot read " << flags.path << "\n";
        return exit_no_input;
    }
    try {
        auto summary = scan::extract_to_directory(*data, flags.out_dir);
        for (const auto& f : summary.files) out << f.relative_path << "\t" << f.size << "\t" << f.sha256 << "\n";
        for (const auto& e : summary.errors) err << "pyxray: " << e << "\n";
        out << summary.files.size() << " file(s) written to " << flags.out_dir << "\n";
        return exit_ok;
    } catch (const scan::no_archive& e) {
        err << "pyxray: " << flags.path << ": " << e.what() << "\n";
        return exit_no_input;
    } catch (const std::exception& e) {
        err << "pyxray: extract failed: " << e.what() << "\n";
        return exit_no_input;
    }
}

} // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"Static triage for PyInstaller-packaged executables", "pyxray"};
    app.set_version_flag("--version", std::string(version_string()));
    app.require_subcommand(1);

    scan_flags sf;
    auto* scan_cmd = app.add_subcommand("scan", "Scan files and print a scored report");
    scan_cmd->add_option("paths", sf.paths, "Files, directories, or - for stdin")->required();
    scan_cmd->add_option("--rules", sf.rules_path, "Rule file layered over the defaults (env PYXRAY_RULES)");
    scan_cmd->add_flag("--json", sf.json, "JSON output, one document per line");
    scan_cmd->add_flag("-r,--recursive", sf.recursive, "Descend into subdirectories");
    scan_cmd->add_option("--fail-on", sf.fail_on, "Lowest verdict giving a nonzero exit")
        ->check(CLI::IsMember({"suspicious", "malicious"}));
    scan_cmd->add_option("--max-depth", sf.max_depth, "Nesting limit")->check(CLI::Range(1, 16));
    scan_cmd->add_option("-j,--jobs", sf.jobs, "Worker threads")->check(CLI::Range(1, 256));

    extract_flags ef;
    auto* extract_cmd = app.add_subcommand("extract", "Unpack archive entries and PYZ modules");
    extract_cmd->add_option("--out", ef.out_dir, "Output directory")->required();
    extract_cmd->add_option("path", ef.path, "Input file or -")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    if (scan_cmd->parsed()) return do_scan(sf, in, out, err);
    return do_extract(ef, in, out, err);
}

} // namespace pyxray::cli
