#include <cmath>

#include "doctest.h"
#include "dtmix/rng.hpp"

using namespace dtmix;

TEST_CASE("philox4x32-10 known-answer vectors") {
    // Reference vectors from the Random123 distribution (kat_vectors).
    {
        const philox::Block out = philox::generate({0, 0, 0, 0}, 0, 0);
        CHECK(out[0] == 0x6627e8d5u);
        CHECK(out[1] == 0xe169c58du);
        CHECK(out[2] == 0xbc57ac4cu);
        CHECK(out[3] == 0x9b00dbd8u);
    }
    {
        const philox::Block out = philox::generate(
            {0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, 0xffffffffu, 0xffffffffu);
        CHECK(out[0] == 0x408f276du);
        CHECK(out[1] == 0x41c83b0eu);
        CHECK(out[2] == 0xa20bc7c6u);
        CHECK(out[3] == 0x6d5451fdu);
    }
    {
        const philox::Block out = philox::generate(
            {0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, 0xa4093822u, 0x299f31d0u);
        CHECK(out[0] == 0xd16cfe09u);
        CHECK(out[1] == 0x94fdccebu);
        CHECK(out[2] == 0x5001e420u);
        CHECK(out[3] == 0x24126ea1u);
    }
}

TEST_CASE("substreams are reproducible and address-disjoint") {
    const Substream a(42, 3, 7, RngPurpose::AuxChain, 1);
    const Substream b(42, 3, 7, RngPurpose::AuxChain, 1);
    CHECK(a.uniform(5, 2, 0) == b.uniform(5, 2, 0));
    CHECK(a.normal(5, 2, 0) == b.normal(5, 2, 0));

    // Different coordinates of the address change the value.
    CHECK(a.uniform(5, 2, 0) != a.uniform(5, 2, 1));
    CHECK(a.uniform(5, 2, 0) != a.uniform(5, 3, 0));
    CHECK(a.uniform(5, 2, 0) != a.uniform(6, 2, 0));
    const Substream c(42, 3, 7, RngPurpose::FinalChain, 1);
    CHECK(a.uniform(5, 2, 0) != c.uniform(5, 2, 0));
    const Substream d(42, 3, 8, RngPurpose::AuxChain, 1);
    CHECK(a.uniform(5, 2, 0) != d.uniform(5, 2, 0));
    const Substream e(43, 3, 7, RngPurpose::AuxChain, 1);
    CHECK(a.uniform(5, 2, 0) != e.uniform(5, 2, 0));
}

TEST_CASE("uniform range and normal moments") {
    const Substream s(123, 0, 0, RngPurpose::Test, 0);
    double sum = 0.0, sumsq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = s.uniform(static_cast<std::uint32_t>(i), 0, 0);
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const double z = s.normal(static_cast<std::uint32_t>(i), 1, 0);
        sum += z;
        sumsq += z * z;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(double(n)));
    CHECK(std::abs(var - 1.0) < 0.02);
}
