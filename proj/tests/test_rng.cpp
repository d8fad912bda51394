#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "hrmsm/rng.hpp"

using namespace hrmsm;

// Reference vectors for philox4x32-10 from the Random123 known-answer tests.
TEST_CASE("philox4x32-10 known answers") {
    auto out = Philox4x32::block({0u, 0u, 0u, 0u}, {0u, 0u});
    CHECK(out[0] == 0x6627e8d5u);
    CHECK(out[1] == 0xe169c58du);
    CHECK(out[2] == 0xbc57ac4cu);
    CHECK(out[3] == 0x9b00dbd8u);

    out = Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                            {0xffffffffu, 0xffffffffu});
    CHECK(out[0] == 0x408f276du);
    CHECK(out[1] == 0x41c83b0eu);
    CHECK(out[2] == 0xa20bc7c6u);
    CHECK(out[3] == 0x6d5451fdu);

    out = Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                            {0xa4093822u, 0x299f31d0u});
    CHECK(out[0] == 0xd16cfe09u);
    CHECK(out[1] == 0x94fdccebu);
    CHECK(out[2] == 0x5001e420u);
    CHECK(out[3] == 0x24126ea1u);
}

TEST_CASE("streams are deterministic and distinct") {
    Rng a(42, Rng::stream_id(3, 7));
    Rng b(42, Rng::stream_id(3, 7));
    Rng c(42, Rng::stream_id(3, 8));
    bool same = true, distinct = false;
    for (int i = 0; i < 64; ++i) {
        auto va = a.next_u64();
        if (va != b.next_u64()) same = false;
        if (va != c.next_u64()) distinct = true;
    }
    CHECK(same);
    CHECK(distinct);
}

TEST_CASE("uniform stays in (0,1] and has the right mean") {
    Rng rng(7, 1);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u <= 1.0);
        sum += u;
    }
    CHECK(std::abs(sum / n - 0.5) < 0.005);
}

TEST_CASE("normal moments") {
    Rng rng(11, 2);
    double sum = 0.0, sumsq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double z = rng.normal();
        sum += z;
        sumsq += z * z;
    }
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("bernoulli matches its probability") {
    Rng rng(5, 9);
    int hits = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i)
        if (rng.bernoulli(0.25)) ++hits;
    CHECK(std::abs(hits / static_cast<double>(n) - 0.25) < 0.01);
}
