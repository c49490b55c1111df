#include "mesoed/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace mesoed::rng {

namespace {

constexpr std::uint32_t kW32A = 0x9E3779B9u;
constexpr std::uint32_t kW32B = 0xBB67AE85u;
constexpr std::uint32_t kM4x32A = 0xD2511F53u;
constexpr std::uint32_t kM4x32B = 0xCD9E8D57u;

inline void mul_hi_lo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo,
                      std::uint32_t& hi) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    lo = static_cast<std::uint32_t>(p);
    hi = static_cast<std::uint32_t>(p >> 32);
}

inline void round_once(std::array<std::uint32_t, 4>& c,
                       const std::array<std::uint32_t, 2>& k) {
    std::uint32_t lo0, hi0, lo1, hi1;
    mul_hi_lo(kM4x32A, c[0], lo0, hi0);
    mul_hi_lo(kM4x32B, c[2], lo1, hi1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

inline std::array<std::uint32_t, 4> block(std::uint64_t seed, std::uint32_t device,
                                          std::uint64_t rep, std::uint32_t step,
                                          std::uint32_t kind, std::uint32_t slot) {
    // 128-bit counter carries (step, kind|slot, rep, device); the 64-bit key
    // carries the global seed. kind lives in the top byte of the slot word.
    std::array<std::uint32_t, 4> ctr = {
        step, (kind << 24) ^ slot, static_cast<std::uint32_t>(rep),
        static_cast<std::uint32_t>(rep >> 32) ^ device};
    std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed),
                                        static_cast<std::uint32_t>(seed >> 32)};
    return philox4x32(ctr, key);
}

inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t u = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return static_cast<double>(u >> 11) * 0x1.0p-53;
}

} // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) {
    for (int r = 0; r < 10; ++r) {
        round_once(counter, key);
        key[0] += kW32A;
        key[1] += kW32B;
    }
    return counter;
}

double uniform(std::uint64_t seed, std::uint32_t device, std::uint64_t rep,
               std::uint32_t step, Draw kind, std::uint32_t slot) {
    const auto r = block(seed, device, rep, step,
                         static_cast<std::uint32_t>(kind), slot);
    return to_unit(r[0], r[1]);
}

double normal(std::uint64_t seed, std::uint32_t device, std::uint64_t rep,
              std::uint32_t step, Draw kind, std::uint32_t slot) {
    const auto r = block(seed, device, rep, step,
                         static_cast<std::uint32_t>(kind), slot);
    const double u1 = 1.0 - to_unit(r[0], r[1]); // (0, 1], keeps log finite
    const double u2 = to_unit(r[2], r[3]);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::uint64_t poisson(double mean, std::uint64_t seed, std::uint32_t device,
                      std::uint64_t rep, std::uint32_t step, std::uint32_t slot) {
    if (!(mean >= 0.0) || !std::isfinite(mean))
        throw std::invalid_argument("rng::poisson: mean must be finite and >= 0");
    if (mean == 0.0) return 0;
    if (mean > 500.0) {
        // exp(-mean) underflows; halve recursively on adjacent slots.
        return poisson(mean / 2.0, seed, device, rep, step, 2 * slot + 1) +
               poisson(mean / 2.0, seed, device, rep, step, 2 * slot + 2);
    }
    const double u = uniform(seed, device, rep, step, Draw::poisson, slot);
    double p = std::exp(-mean);
    double cdf = p;
    std::uint64_t k = 0;
    while (u >= cdf && k < 100000) {
        ++k;
        p *= mean / static_cast<double>(k);
        cdf += p;
    }
    return k;
}

} // namespace mesoed::rng
