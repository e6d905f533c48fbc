#pragma once

// Test-side oracles, kept independent of the library's implementation paths:
// a direct RK4 integrator for the rate equations, the plain two-exponential
// correlator form, brute-force pair counting, and data generators.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "photonstat/correlator.hpp"
#include "photonstat/montecarlo.hpp"
#include "photonstat/photophysics.hpp"

namespace oracle {

using photonstat::Channel;
using photonstat::PhotonStream;
using photonstat::RateParams;

// Table 1 operating point used throughout the suite (rates in s^-1).
inline RateParams table1() { return {440e6, 87e6, 17e6, 6.1e6}; }

// Fixed-step classic RK4 on the rate equations, written straight from the
// population derivatives.
inline std::array<double, 3> rk4_populations(const RateParams& p, std::array<double, 3> rho,
                                             double t, int steps) {
    const double gamma_total = p.inv_T1 + p.gamma12;
    auto deriv = [&](const std::array<double, 3>& r) {
        return std::array<double, 3>{
            (p.inv_T1 + p.k) * r[1] - p.k * r[0] + p.gamma20 * r[2],
            -(gamma_total + p.k) * r[1] + p.k * r[0],
            p.gamma12 * r[1] - p.gamma20 * r[2],
        };
    };
    const double dt = t / steps;
    for (int s = 0; s < steps; ++s) {
        const auto k1 = deriv(rho);
        std::array<double, 3> tmp;
        for (int i = 0; i < 3; ++i) tmp[i] = rho[i] + 0.5 * dt * k1[i];
        const auto k2 = deriv(tmp);
        for (int i = 0; i < 3; ++i) tmp[i] = rho[i] + 0.5 * dt * k2[i];
        const auto k3 = deriv(tmp);
        for (int i = 0; i < 3; ++i) tmp[i] = rho[i] + dt * k3[i];
        const auto k4 = deriv(tmp);
        for (int i = 0; i < 3; ++i)
            rho[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    return rho;
}

// Textbook two-exponential form of the normalized correlator,
// 1 + A- e^{-(g0-R)t} - A+ e^{-(g0+R)t}, evaluated naively.
inline double g2_two_exponential(const RateParams& p, double t) {
    const double gamma_total = p.inv_T1 + p.gamma12;
    const double g0 = 0.5 * (gamma_total + 2.0 * p.k + p.gamma20);
    const double r = std::sqrt(0.25 * (gamma_total + 2.0 * p.k - p.gamma20) *
                                   (gamma_total + 2.0 * p.k - p.gamma20) -
                               p.gamma12 * p.k);
    const double lm = g0 - r, lp = g0 + r;
    const double prod = g0 * g0 - r * r;
    const double a_minus = (1.0 - p.gamma20 / lm) * prod / (2.0 * r * p.gamma20);
    const double a_plus = (1.0 - p.gamma20 / lp) * prod / (2.0 * r * p.gamma20);
    return 1.0 + a_minus * std::exp(-lm * t) - a_plus * std::exp(-lp * t);
}

// Mean of the analytic g2 over a bin [a, b] (exact integral of the
// two-exponential form); the right comparison value for binned estimates.
inline double g2_bin_average(const RateParams& p, double a, double b) {
    const double gamma_total = p.inv_T1 + p.gamma12;
    const double g0 = 0.5 * (gamma_total + 2.0 * p.k + p.gamma20);
    const double r = std::sqrt(0.25 * (gamma_total + 2.0 * p.k - p.gamma20) *
                                   (gamma_total + 2.0 * p.k - p.gamma20) -
                               p.gamma12 * p.k);
    const double lm = g0 - r, lp = g0 + r;
    const double prod = g0 * g0 - r * r;
    const double a_minus = (1.0 - p.gamma20 / lm) * prod / (2.0 * r * p.gamma20);
    const double a_plus = (1.0 - p.gamma20 / lp) * prod / (2.0 * r * p.gamma20);
    const double w = b - a;
    return 1.0 + a_minus * (std::exp(-lm * a) - std::exp(-lm * b)) / (lm * w) -
           a_plus * (std::exp(-lp * a) - std::exp(-lp * b)) / (lp * w);
}

// O(n^2) pair counter over the same left-closed right-open bin convention
// as the library histogram.
inline std::vector<std::int64_t> brute_force_pairs(const std::vector<std::int64_t>& starts,
                                                   const std::vector<std::int64_t>& stops,
                                                   std::int64_t bin_width_ps,
                                                   std::int64_t lo_edge_ps, std::size_t n_bins) {
    std::vector<std::int64_t> counts(n_bins, 0);
    const std::int64_t hi_edge = lo_edge_ps + static_cast<std::int64_t>(n_bins) * bin_width_ps;
    for (const std::int64_t a : starts) {
        for (const std::int64_t b : stops) {
            const std::int64_t delta = b - a;
            if (delta >= lo_edge_ps && delta < hi_edge)
                ++counts[static_cast<std::size_t>((delta - lo_edge_ps) / bin_width_ps)];
        }
    }
    return counts;
}

// Log-uniform random rates around the experimentally relevant decades.
// Redraws until the closed-form correlator applies (real eigenvalue split).
inline RateParams random_rates(std::mt19937_64& rng, bool with_shelving = true) {
    auto log_uniform = [&](double lo, double hi) {
        std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
        return std::exp(u(rng));
    };
    for (int attempt = 0; attempt < 1000; ++attempt) {
        RateParams p;
        p.k = log_uniform(1e6, 1e10);
        p.inv_T1 = log_uniform(1e6, 1e9);
        p.gamma12 = with_shelving ? log_uniform(1e5, 1e9) : 0.0;
        p.gamma20 = log_uniform(1e5, 1e9);
        if (p.split_radicand() > 1e-6 * p.gamma0() * p.gamma0()) return p;
    }
    return table1();
}

// Two independent Poisson processes on the two channels; the classic
// uncorrelated reference stream.
inline PhotonStream poisson_stream(double rate_a, double rate_b, double duration,
                                   std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    PhotonStream stream;
    stream.meta.duration = duration;
    for (int c = 0; c < 2; ++c) {
        const double rate = c == 0 ? rate_a : rate_b;
        std::exponential_distribution<double> gap(rate);
        for (double t = gap(rng); t < duration; t += gap(rng))
            stream.records.push_back({photonstat::seconds_to_ps(t),
                                      c == 0 ? Channel::A : Channel::B});
    }
    std::sort(stream.records.begin(), stream.records.end());
    return stream;
}

// Stream built from explicit per-channel timestamps (picoseconds).
inline PhotonStream stream_from(const std::vector<std::int64_t>& a,
                                const std::vector<std::int64_t>& b, double duration) {
    PhotonStream stream;
    stream.meta.duration = duration;
    for (const auto t : a) stream.records.push_back({t, Channel::A});
    for (const auto t : b) stream.records.push_back({t, Channel::B});
    std::sort(stream.records.begin(), stream.records.end());
    return stream;
}

}  // namespace oracle
