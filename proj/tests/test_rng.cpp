#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "kreduce/rng.hpp"

using namespace kreduce;

TEST_CASE("philox 4x32-10 known-answer vectors") {
    // Reference vectors for the 10-round 4x32 generator.
    {
        auto out = philox::block({0u, 0u, 0u, 0u}, 0u, 0u);
        CHECK(out[0] == 0x6627e8d5u);
        CHECK(out[1] == 0xe169c58du);
        CHECK(out[2] == 0xbc57ac4cu);
        CHECK(out[3] == 0x9b00dbd8u);
    }
    {
        auto out = philox::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                 0xffffffffu, 0xffffffffu);
        CHECK(out[0] == 0x408f276du);
        CHECK(out[1] == 0x41c83b0eu);
        CHECK(out[2] == 0xa20bc7c6u);
        CHECK(out[3] == 0x6d5451fdu);
    }
    {
        auto out = philox::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                 0xa4093822u, 0x299f31d0u);
        CHECK(out[0] == 0xd16cfe09u);
        CHECK(out[1] == 0x94fdccebu);
        CHECK(out[2] == 0x5001e420u);
        CHECK(out[3] == 0x24126ea1u);
    }
}

TEST_CASE("streams are deterministic and independent") {
    RandomStream a(42, 7), b(42, 7), c(42, 8);
    bool same = true, differ = false;
    for (int i = 0; i < 64; ++i) {
        const double ua = a.next_uniform();
        same = same && (ua == b.next_uniform());
        differ = differ || (ua != c.next_uniform());
    }
    CHECK(same);
    CHECK(differ);
}

TEST_CASE("uniforms live strictly inside (0,1) with sane moments") {
    RandomStream rs(123, 1);
    double lo = 1.0, hi = 0.0, sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = rs.next_uniform();
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        sum += u;
    }
    CHECK(lo > 0.0);
    CHECK(hi < 1.0);
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("normals have unit variance and vanishing skew") {
    RandomStream rs(2024, 3);
    const int n = 200000;
    double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    for (int i = 0; i < n; ++i) {
        const double g = rs.next_normal();
        s1 += g;
        s2 += g * g;
        s3 += g * g * g;
        s4 += g * g * g * g;
    }
    CHECK(s1 / n == doctest::Approx(0.0).epsilon(1).scale(0.02));
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
    CHECK(s3 / n == doctest::Approx(0.0).epsilon(1).scale(0.05));
    CHECK(s4 / n == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("noise paths scale increments by sqrt(dt) and stay reproducible") {
    NoisePath w1(99, 5, 0.01), w2(99, 5, 0.01), w3(99, 6, 0.01);
    double var = 0.0;
    bool same = true, differ = false;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        const double d = w1.next();
        var += d * d;
        same = same && (d == w2.next());
        differ = differ || (d != w3.next());
    }
    CHECK(same);
    CHECK(differ);
    CHECK(var / n == doctest::Approx(0.01).epsilon(0.03));
}
