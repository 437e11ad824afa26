#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace dtmix {

// Philox4x32-10 counter-based generator (Salmon et al., SC 2011).
// Every random draw in the library is addressed by an explicit
// (seed, iteration, image, purpose, chain, sweep, coordinate, draw)
// tuple, so results do not depend on evaluation order or thread
// scheduling.
namespace philox {

inline constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
inline constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
inline constexpr std::uint32_t kMult0 = 0xD2511F53u;
inline constexpr std::uint32_t kMult1 = 0xCD9E8D57u;

using Block = std::array<std::uint32_t, 4>;

inline void round_once(Block& ctr, std::uint32_t k0, std::uint32_t k1) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMult0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMult1) * ctr[2];
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
}

inline Block generate(const Block& counter, std::uint32_t key0, std::uint32_t key1) {
    Block out = counter;
    for (int r = 0; r < 10; ++r) {
        round_once(out, key0, key1);
        if (r == 9) break;
        key0 += kWeyl0;
        key1 += kWeyl1;
    }
    return out;
}

}  // namespace philox

// What a substream is used for. Folded into the counter so that every
// consumer of randomness owns a disjoint slice of the Philox sequence.
enum class RngPurpose : std::uint32_t {
    AuxChain = 1,    // per-component auxiliary Gibbs chains
    FinalChain = 2,  // the deformation chain at the sampled label
    Label = 3,       // categorical label draw
    InitLabels = 4,  // initial label assignment
    SynthLabel = 5,  // synthetic data: label draw
    SynthBeta = 6,   // synthetic data: deformation draw
    SynthNoise = 7,  // synthetic data: pixel noise
    SampleBeta = 8,  // sampling from a fitted model
    Test = 15,
};

// One logical substream, identified by (seed, iteration, image, purpose,
// chain). Draws inside the stream are addressed by (sweep, coordinate,
// draw); each address maps to exactly one 128-bit Philox block.
class Substream {
public:
    Substream(std::uint64_t seed, std::uint32_t iteration, std::uint32_t image,
              RngPurpose purpose, std::uint32_t chain)
        : key0_(static_cast<std::uint32_t>(seed)),
          key1_(static_cast<std::uint32_t>(seed >> 32)),
          iteration_(iteration),
          image_(image),
          tag_((static_cast<std::uint32_t>(purpose) << 24) | ((chain & 0xFFu) << 16)) {}

    // Uniform double in [0, 1), 53-bit resolution.
    double uniform(std::uint32_t sweep, std::uint32_t coordinate, std::uint32_t draw) const {
        const philox::Block b = block(sweep, coordinate, draw);
        return to_unit(word64(b[0], b[1]));
    }

    // Standard normal via Box-Muller; one block per deviate.
    double normal(std::uint32_t sweep, std::uint32_t coordinate, std::uint32_t draw) const {
        const philox::Block b = block(sweep, coordinate, draw);
        // u1 in (0,1] so the log is finite.
        const double u1 = to_unit_open(word64(b[0], b[1]));
        const double u2 = to_unit(word64(b[2], b[3]));
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

private:
    philox::Block block(std::uint32_t sweep, std::uint32_t coordinate, std::uint32_t draw) const {
        // coordinate < 4096, draw < 16; both hold for every call site
        // (coordinates run over 2*k_g, draws over <= 2 per step).
        const std::uint32_t w1 = tag_ | ((coordinate & 0xFFFu) << 4) | (draw & 0xFu);
        return philox::generate({sweep, w1, image_, iteration_}, key0_, key1_);
    }

    static std::uint64_t word64(std::uint32_t lo, std::uint32_t hi) {
        return (static_cast<std::uint64_t>(hi) << 32) | lo;
    }

    static double to_unit(std::uint64_t x) {  // [0,1)
        return static_cast<double>(x >> 11) * 0x1.0p-53;
    }

    static double to_unit_open(std::uint64_t x) {  // (0,1]
        return (static_cast<double>(x >> 11) + 1.0) * 0x1.0p-53;
    }

    static constexpr double kPi = 3.14159265358979323846;

    std::uint32_t key0_, key1_;
    std::uint32_t iteration_, image_, tag_;
};

}  // namespace dtmix
