#include <set>
#include <vector>

#include "doctest.h"

#include "stancebench/hashing.hpp"
#include "stancebench/rng.hpp"

using namespace stancebench;

TEST_CASE("fnv1a64 published test vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("sha256 of known inputs") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("rng is reproducible and seed-sensitive") {
    Rng a(5), b(5), c(6);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
    }
    CHECK(Rng(5).next_u64() != c.next_u64());
}

TEST_CASE("uniform01 and uniform_index stay in range") {
    Rng r(1);
    std::vector<int> hist(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const double u = r.uniform01();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const auto k = r.uniform_index(7);
        REQUIRE(k < 7);
        ++hist[k];
    }
    for (int h : hist) CHECK(h == doctest::Approx(10000).epsilon(0.05));
    CHECK(r.uniform_index(1) == 0);
    CHECK(r.uniform_index(0) == 0);
}

TEST_CASE("normal draws have unit moments") {
    Rng r(3);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        s += x;
        s2 += x * x;
    }
    CHECK(s / n == doctest::Approx(0.0).epsilon(0.01).scale(1.0));
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("shuffle is a permutation") {
    Rng r(9);
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    r.shuffle(v.begin(), v.end());
    std::set<int> s(v.begin(), v.end());
    CHECK(s.size() == 50);
    CHECK(v != std::vector<int>([] {
              std::vector<int> w(50);
              for (int i = 0; i < 50; ++i) w[i] = i;
              return w;
          }()));
}

TEST_CASE("derived seeds are distinct across streams") {
    std::set<std::uint64_t> seeds;
    for (std::uint64_t s = 0; s < 1000; ++s) seeds.insert(derive_seed(42, s));
    CHECK(seeds.size() == 1000);
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}
