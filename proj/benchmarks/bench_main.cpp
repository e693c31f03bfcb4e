#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include <benchmark/benchmark.h>

#include "pyxray/archive/archive.hpp"
#include "pyxray/deobf/deobf.hpp"
#include "pyxray/pe/image.hpp"
#include "pyxray/pyc/analysis.hpp"
#include "pyxray/pyc/pyc.hpp"
#include "pyxray/scan/scan.hpp"

using namespace pyxray;

namespace {

byte_buffer fixture(const std::string& rel) {
    std::ifstream in(std::filesystem::path(PYXRAY_FIXTURE_DIR) / rel, std::ios::binary);
    return byte_buffer(std::istreambuf_iterator<char>(in), {});
}

byte_buffer noise(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    byte_buffer out(n);
    for (auto& b : out) b = static_cast<std::uint8_t>(rng());
    return out;
}

void scan_fixture(benchmark::State& state, const std::string& rel) {
    auto data = fixture(rel);
    for (auto _ : state) benchmark::DoNotOptimize(scan::scan_bytes(data));
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * data.size()));
}

void BM_ScanReplica(benchmark::State& state) { scan_fixture(state, "pe/alg1_replica.exe"); }
void BM_ScanHello(benchmark::State& state) { scan_fixture(state, "pe/hello_packaged.exe"); }
void BM_ScanShellPyc(benchmark::State& state) { scan_fixture(state, "pyc/listing1_shell.cpython-310.pyc"); }

void BM_ScanNoise(benchmark::State& state) {
    auto data = noise(static_cast<std::size_t>(state.range(0)), 1);
    for (auto _ : state) benchmark::DoNotOptimize(scan::scan_bytes(data));
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * data.size()));
}

void BM_Checksum(benchmark::State& state) {
    auto data = noise(static_cast<std::size_t>(state.range(0)), 2);
    for (auto _ : state) benchmark::DoNotOptimize(pe::compute_pe_checksum(data, 0xd8));
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * data.size()));
}

void BM_Entropy(benchmark::State& state) {
    auto data = noise(static_cast<std::size_t>(state.range(0)), 3);
    for (auto _ : state) benchmark::DoNotOptimize(deobf::shannon_entropy(data));
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * data.size()));
}

void BM_XorRecoverCrib(benchmark::State& state) {
    std::string text = "powershell -nop -w hidden -c echo 192.0.2.1 ";
    while (text.size() < static_cast<std::size_t>(state.range(0))) text += "echo sentinel; ";
    auto cipher = deobf::xor_apply(as_bytes(text), byte_buffer{0x5a, 0xc3, 0x11});
    const std::vector<std::string> cribs = {"powershell", "cmd.exe", "http://"};
    for (auto _ : state) benchmark::DoNotOptimize(deobf::xor_recover(cipher, cribs));
}

void BM_XorRecoverNoise(benchmark::State& state) {
    auto data = noise(static_cast<std::size_t>(state.range(0)), 4);
    const std::vector<std::string> cribs = {"powershell", "cmd.exe", "http://"};
    for (auto _ : state) benchmark::DoNotOptimize(deobf::xor_recover(data, cribs));
}

void BM_CookieSearch(benchmark::State& state) {
    auto data = noise(static_cast<std::size_t>(state.range(0)), 5);
    for (auto _ : state) benchmark::DoNotOptimize(archive::find_cookie(data));
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * data.size()));
}

void BM_ParseAndHarvestPyc(benchmark::State& state) {
    auto data = fixture("pyc/bigbytes.cpython-310.pyc");
    for (auto _ : state) {
        auto mod = pyc::parse_pyc(data);
        benchmark::DoNotOptimize(pyc::harvest_strings(*mod.code));
    }
}

} // namespace

BENCHMARK(BM_ScanReplica)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ScanHello)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ScanShellPyc)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ScanNoise)->Arg(64 << 10)->Arg(1 << 20)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Checksum)->Arg(4 << 10)->Arg(1 << 20);
BENCHMARK(BM_Entropy)->Arg(256)->Arg(64 << 10);
BENCHMARK(BM_XorRecoverCrib)->Arg(64)->Arg(1024)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_XorRecoverNoise)->Arg(64)->Arg(1024)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_CookieSearch)->Arg(1 << 20)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ParseAndHarvestPyc)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
