#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mesoed/rng.hpp"

#include <cmath>
#include <set>

using namespace mesoed;

TEST_CASE("draws are deterministic and keyed") {
    const double a = rng::normal(42, 1, 7, 3, rng::Draw::gaussian, 0);
    CHECK(a == rng::normal(42, 1, 7, 3, rng::Draw::gaussian, 0));
    CHECK(a != rng::normal(42, 2, 7, 3, rng::Draw::gaussian, 0));
    CHECK(a != rng::normal(42, 1, 8, 3, rng::Draw::gaussian, 0));
    CHECK(a != rng::normal(42, 1, 7, 4, rng::Draw::gaussian, 0));
    CHECK(a != rng::normal(42, 1, 7, 3, rng::Draw::gaussian, 1));
    CHECK(a != rng::normal(43, 1, 7, 3, rng::Draw::gaussian, 0));
    CHECK(rng::uniform(42, 1, 7, 3, rng::Draw::gaussian, 0) !=
          rng::uniform(42, 1, 7, 3, rng::Draw::poisson, 0));
}

TEST_CASE("philox known-answer vectors") {
    using A4 = std::array<std::uint32_t, 4>;
    using A2 = std::array<std::uint32_t, 2>;
    CHECK(rng::philox4x32(A4{0, 0, 0, 0}, A2{0, 0}) ==
          A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(rng::philox4x32(A4{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                          A2{0xffffffff, 0xffffffff}) ==
          A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(rng::philox4x32(A4{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                          A2{0xa4093822, 0x299f31d0}) ==
          A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("philox output changes with counter and key") {
    std::set<std::uint32_t> seen;
    for (std::uint32_t i = 0; i < 64; ++i) {
        const auto r = rng::philox4x32({i, 0, 0, 0}, {123, 456});
        seen.insert(r[0]);
    }
    CHECK(seen.size() == 64);
}

TEST_CASE("normal draws have unit moments") {
    const int n = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x =
            rng::normal(7, 1, static_cast<std::uint64_t>(i), 0, rng::Draw::gaussian, 0);
        sum += x;
        sum2 += x * x;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(double(n)));
    CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / double(n)));
}

TEST_CASE("uniform draws stay in [0,1) with flat mean") {
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u =
            rng::uniform(9, 1, static_cast<std::uint64_t>(i), 0, rng::Draw::field, 0);
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
    }
    CHECK(std::abs(sum / n - 0.5) < 4.0 / std::sqrt(12.0 * n));
}

TEST_CASE("poisson counts match mean and variance") {
    for (const double mean : {0.3, 3.7, 40.0}) {
        const int n = 100000;
        double sum = 0.0, sum2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double k = static_cast<double>(
                rng::poisson(mean, 11, 1, static_cast<std::uint64_t>(i), 0, 0));
            sum += k;
            sum2 += k * k;
        }
        const double m = sum / n;
        const double v = sum2 / n - m * m;
        const double se_mean = std::sqrt(mean / n);
        CHECK(std::abs(m - mean) < 4.0 * se_mean);
        CHECK(std::abs(v - mean) < 5.0 * mean / std::sqrt(double(n)) + 0.05);
    }
}

TEST_CASE("poisson splitting handles large means") {
    const double mean = 1500.0;
    const int n = 20000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i)
        sum += static_cast<double>(
            rng::poisson(mean, 13, 1, static_cast<std::uint64_t>(i), 0, 0));
    CHECK(std::abs(sum / n - mean) < 4.0 * std::sqrt(mean / n));
    CHECK_THROWS_AS(rng::poisson(-1.0, 1, 1, 0, 0, 0), std::invalid_argument);
}
