#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "uwdiff/rng.hpp"

using namespace uwdiff;

TEST_CASE("identical seeds give identical sequences") {
    SeededRng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
    SeededRng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 100; ++i)
        if (a.next_u64() == b.next_u64()) ++same;
    CHECK(same == 0);
}

TEST_CASE("substreams are order independent") {
    SeededRng root(7);
    SeededRng s3_first = root.substream(3);
    (void)root.next_u64();  // consuming the parent must not shift substreams
    SeededRng s3_second = root.substream(3);
    CHECK(s3_first.next_u64() == s3_second.next_u64());

    SeededRng s1 = root.substream(1), s2 = root.substream(2);
    CHECK(s1.next_u64() != s2.next_u64());
}

TEST_CASE("derive_seed separates purposes and indices") {
    std::set<uint64_t> seen;
    for (uint64_t p = 0; p < 8; ++p)
        for (uint64_t i = 0; i < 64; ++i) seen.insert(derive_seed(99, p, i));
    CHECK(seen.size() == 8 * 64);
    CHECK(derive_seed(99, 1, 2) == derive_seed(99, 1, 2));
    CHECK(derive_seed(99, 1, 2) != derive_seed(100, 1, 2));
}

TEST_CASE("uniform stays inside its interval and fills it") {
    SeededRng rng(5);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double v = rng.uniform(0.0, 1.0);
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
}

TEST_CASE("uniform_int covers both endpoints") {
    SeededRng rng(11);
    bool saw_lo = false, saw_hi = false;
    for (int i = 0; i < 5000; ++i) {
        const int64_t v = rng.uniform_int(3, 9);
        CHECK(v >= 3);
        CHECK(v <= 9);
        saw_lo |= v == 3;
        saw_hi |= v == 9;
    }
    CHECK(saw_lo);
    CHECK(saw_hi);
}

TEST_CASE("normal moments") {
    SeededRng rng(13);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        s += v;
        s2 += v * v;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("bernoulli frequency tracks p") {
    SeededRng rng(17);
    int hits = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) hits += rng.bernoulli(0.25) ? 1 : 0;
    const double f = static_cast<double>(hits) / n;
    CHECK(f > 0.24);
    CHECK(f < 0.26);
    SeededRng r2(18);
    for (int i = 0; i < 100; ++i) CHECK_FALSE(r2.bernoulli(0.0));
    for (int i = 0; i < 100; ++i) CHECK(r2.bernoulli(1.0));
}

TEST_CASE("permutation is a bijection") {
    SeededRng rng(19);
    const auto p = rng.permutation(257);
    std::set<size_t> seen(p.begin(), p.end());
    CHECK(seen.size() == 257);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 256);
}

TEST_CASE("sample_without_replacement yields k distinct indices") {
    SeededRng rng(23);
    const auto s = rng.sample_without_replacement(100, 17);
    CHECK(s.size() == 17);
    std::set<size_t> seen(s.begin(), s.end());
    CHECK(seen.size() == 17);
    for (size_t v : seen) CHECK(v < 100);
}

TEST_CASE("state save and restore resumes the stream") {
    SeededRng rng(29);
    for (int i = 0; i < 10; ++i) (void)rng.next_u64();
    const uint64_t st = rng.state();
    const uint64_t next = rng.next_u64();
    SeededRng other(29);
    other.set_state(st);
    CHECK(other.next_u64() == next);
}
