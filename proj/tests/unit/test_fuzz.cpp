#include <doctest.h>

#include "fuzzing.hpp"

TEST_CASE("corpus covers every container kind") {
    auto corpus = testkit::fuzz_corpus(1);
    CHECK(corpus.size() >= 40);
}

TEST_CASE("ten thousand structured mutations without a fault") {
    auto stats = testkit::run_structured_fuzz(20261015, 10'000);
    for (const auto& s : stats.samples) MESSAGE(s);
    CHECK(stats.iterations == 10'000);
    CHECK(stats.faults == 0);
    // a single edit usually breaks a marshal body, so a quarter is plenty
    CHECK(stats.accepted > stats.iterations / 4);
}

TEST_CASE("second seed, scans only") {
    auto stats = testkit::run_structured_fuzz(7, 1'000, 1);
    for (const auto& s : stats.samples) MESSAGE(s);
    CHECK(stats.faults == 0);
}
