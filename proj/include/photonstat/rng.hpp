#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

namespace photonstat {

// Generator identity recorded in stream metadata and run reports.
inline constexpr const char* rng_identity = "mt19937_64+splitmix64-substreams";

// SplitMix64 output function; used only to derive substream seeds.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Substream tags. Each simulation component draws from its own stream so a
// component can be toggled without perturbing the draws of the others.
enum class Substream : std::uint64_t {
    trajectory = 1,  // jump-process waiting times and branch choices
    radiative = 2,   // Bernoulli(phi_F) draws on spontaneous decays
    thinning = 3,    // Bernoulli(eta) detector acceptance
    routing = 4,     // 50/50 beamsplitter channel choice
    background = 5,  // Poissonian background arrival gaps
    jitter = 6,      // Gaussian timing jitter
};

// One named substream of a master seed. The uniform/exponential/normal
// transforms are spelled out here (rather than using <random> distributions)
// because the standard leaves distribution algorithms implementation-defined
// and streams must reproduce bit-identically everywhere.
class RandomStream {
public:
    RandomStream(std::uint64_t master_seed, Substream tag)
        : engine_(derive_seed(master_seed, static_cast<std::uint64_t>(tag))) {}

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe as a log() argument.
    double uniform_pos() {
        return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Exponential waiting time with the given rate [s^-1].
    double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

    // Standard normal via Box-Muller (cosine branch only): always consumes
    // exactly two engine outputs per call.
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
        std::uint64_t state = master;
        std::uint64_t out = 0;
        for (std::uint64_t i = 0; i <= tag; ++i) out = splitmix64_next(state);
        return out;
    }

    std::mt19937_64 engine_;
};

}  // namespace photonstat
