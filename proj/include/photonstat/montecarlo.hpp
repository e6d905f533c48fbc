#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "photonstat/errors.hpp"
#include "photonstat/photophysics.hpp"
#include "photonstat/rng.hpp"
#include "photonstat/units.hpp"

namespace photonstat {

enum class Channel : std::uint8_t { A = 0, B = 1 };

inline char channel_letter(Channel c) { return c == Channel::A ? 'A' : 'B'; }

// One detection event. Timestamps are integer picoseconds.
struct DetectionRecord {
    std::int64_t t_ps = 0;
    Channel channel = Channel::A;

    friend bool operator<(const DetectionRecord& a, const DetectionRecord& b) {
        return a.t_ps != b.t_ps ? a.t_ps < b.t_ps : a.channel < b.channel;
    }
    friend bool operator==(const DetectionRecord& a, const DetectionRecord& b) {
        return a.t_ps == b.t_ps && a.channel == b.channel;
    }
};

struct EmitterConfig {
    RateParams rates;
    double phi_F = 1.0;       // radiative quantum yield of spontaneous decays
    double duration = 0.0;    // recorded time span [s]
    std::uint64_t seed = 0;
    double burn_in = -1.0;    // discarded lead-in [s]; < 0 selects the default 100/gamma20

    double effective_burn_in() const {
        if (burn_in >= 0.0) return burn_in;
        return rates.gamma20 > 0.0 ? 100.0 / rates.gamma20 : 0.0;
    }

    void validate() const {
        rates.validate();
        if (!(std::isfinite(phi_F) && phi_F > 0.0 && phi_F <= 1.0))
            throw parameter_error("phi_F must be in (0, 1]");
        if (!(std::isfinite(duration) && duration > 0.0))
            throw parameter_error("simulation duration must be > 0");
        if (burn_in >= 0.0 && !std::isfinite(burn_in))
            throw parameter_error("burn-in must be finite");
    }
};

struct DetectorConfig {
    double efficiency = 1.0;        // overall detection probability eta
    double background_rate = 0.0;   // Poissonian background, both channels combined [counts/s]
    double dead_time = 0.0;         // per-detector dead time [s]
    double jitter_sigma = 0.0;      // Gaussian timing jitter std [s]
    double electronic_delay = 0.0;  // offset added to channel B [s]; may be negative

    void validate() const {
        if (!(std::isfinite(efficiency) && efficiency >= 0.0 && efficiency <= 1.0))
            throw parameter_error("efficiency must be in [0, 1]");
        if (!(std::isfinite(background_rate) && background_rate >= 0.0))
            throw parameter_error("background rate must be >= 0");
        if (!(std::isfinite(dead_time) && dead_time >= 0.0))
            throw parameter_error("dead time must be >= 0");
        if (!(std::isfinite(jitter_sigma) && jitter_sigma >= 0.0))
            throw parameter_error("jitter sigma must be >= 0");
        if (!std::isfinite(electronic_delay))
            throw parameter_error("electronic delay must be finite");
    }
};

struct StreamMetadata {
    double duration = 0.0;  // acquisition time span [s]
    EmitterConfig emitter;
    DetectorConfig detector;
    std::uint64_t detector_seed = 0;
    std::string rng = rng_identity;
    std::map<std::string, std::string> extra;  // preserved verbatim on file round trips

    std::int64_t electronic_delay_ps() const {
        return seconds_to_ps(detector.electronic_delay);
    }
};

// Two-channel detection stream, time-ordered.
struct PhotonStream {
    std::vector<DetectionRecord> records;
    StreamMetadata meta;

    std::size_t count(Channel c) const {
        std::size_t n = 0;
        for (const auto& r : records) n += (r.channel == c);
        return n;
    }

    std::vector<std::int64_t> channel_times(Channel c) const {
        std::vector<std::int64_t> out;
        out.reserve(records.size());
        for (const auto& r : records)
            if (r.channel == c) out.push_back(r.t_ps);
        return out;
    }
};

// Aggregates from one simulated trajectory over the recorded window.
struct TrajectoryStats {
    std::array<double, 3> time_in_state{0.0, 0.0, 0.0};
    std::uint64_t n_jumps = 0;
    std::uint64_t n_spontaneous = 0;  // 1 -> 0 decays through the radiative sub-rate
    std::uint64_t n_emitted = 0;      // spontaneous decays that passed the phi_F draw
};

// Exact jump-process (competing exponentials) trajectory of the three-level
// system. Transitions: 0 -> 1 at k; 1 -> 0 at 1/T1 + k (spontaneous +
// stimulated); 1 -> 2 at gamma12; 2 -> 0 at gamma20. An emission timestamp
// is recorded only when the spontaneous sub-rate 1/T1 is drawn AND the
// Bernoulli(phi_F) radiative draw succeeds: stimulated photons join the
// excitation mode and are not detectable. Starts in the ground state at
// -burn_in; only emissions inside [0, duration] are recorded.
inline std::vector<double> simulate_emission(const EmitterConfig& config,
                                             TrajectoryStats* stats = nullptr) {
    config.validate();
    const RateParams& r = config.rates;
    const double duration = config.duration;

    RandomStream trajectory(config.seed, Substream::trajectory);
    RandomStream radiative(config.seed, Substream::radiative);

    std::vector<double> emissions;
    if (r.k > 0.0)
        emissions.reserve(static_cast<std::size_t>(
            std::min(1e9, 1.2 * steady_state(r).rho1 * r.inv_T1 * config.phi_F * duration) + 16));

    const double exit_rate[3] = {r.k, r.inv_T1 + r.k + r.gamma12, r.gamma20};
    int state = 0;
    double t = -config.effective_burn_in();

    auto account = [&](int s, double from, double to) {
        if (!stats) return;
        const double lo = std::max(from, 0.0);
        const double hi = std::min(to, duration);
        if (hi > lo) stats->time_in_state[static_cast<std::size_t>(s)] += hi - lo;
    };

    while (true) {
        const double rate = exit_rate[state];
        if (rate <= 0.0) {  // absorbing state: nothing more will ever happen
            account(state, t, duration);
            break;
        }
        const double t_next = t + trajectory.exponential(rate);
        if (t_next >= duration) {
            account(state, t, duration);
            break;
        }
        account(state, t, t_next);
        t = t_next;
        if (stats && t >= 0.0) ++stats->n_jumps;

        switch (state) {
            case 0:
                state = 1;
                break;
            case 1: {
                const double u = trajectory.uniform() * rate;
                if (u < r.inv_T1) {
                    state = 0;
                    const bool radiates = radiative.bernoulli(config.phi_F);
                    if (t >= 0.0) {
                        if (stats) ++stats->n_spontaneous;
                        if (radiates) {
                            emissions.push_back(t);
                            if (stats) ++stats->n_emitted;
                        }
                    }
                } else if (u < r.inv_T1 + r.k) {
                    state = 0;  // stimulated, no detectable photon
                } else {
                    state = 2;
                }
                break;
            }
            default:
                state = 0;
                break;
        }
    }
    return emissions;
}

namespace detail {

// Homogeneous Poisson arrivals on [0, duration) by sequential exponential gaps.
inline void append_poisson_arrivals(std::vector<double>& out, double rate, double duration,
                                    RandomStream& rng) {
    if (rate <= 0.0) return;
    double t = rng.exponential(rate);
    while (t < duration) {
        out.push_back(t);
        t += rng.exponential(rate);
    }
}

}  // namespace detail

// Detection chain of the HBT setup: Bernoulli(eta) acceptance, 50/50
// beamsplitter routing, per-channel Poissonian background at half the total
// rate, Gaussian jitter, per-channel dead time, and the electronic delay on
// channel B. The acceptance, routing and jitter draws are consumed once per
// emission regardless of outcome, so raising eta only adds events without
// moving the ones already present, and toggling the background leaves the
// signal events untouched. Background arrivals are generated directly as the
// post-jitter process (a jittered stationary Poisson process is again a
// Poisson process of the same rate).
inline PhotonStream detect(const std::vector<double>& emissions, const DetectorConfig& det,
                           std::uint64_t seed, double duration) {
    det.validate();
    if (!(std::isfinite(duration) && duration > 0.0))
        throw parameter_error("stream duration must be > 0");

    RandomStream thinning(seed, Substream::thinning);
    RandomStream routing(seed, Substream::routing);
    RandomStream background(seed, Substream::background);
    RandomStream jitter(seed, Substream::jitter);

    std::array<std::vector<double>, 2> channel;
    channel[0].reserve(emissions.size() / 2 + 16);
    channel[1].reserve(emissions.size() / 2 + 16);

    const bool jittered = det.jitter_sigma > 0.0;
    double previous = -1.0;
    for (double t : emissions) {
        if (t < previous) throw parameter_error("emission timestamps must be sorted ascending");
        previous = t;
        const bool keep = thinning.bernoulli(det.efficiency);
        const bool to_b = routing.bernoulli(0.5);
        const double shift = jittered ? det.jitter_sigma * jitter.normal() : 0.0;
        const double arrival = t + shift;
        // jittered outside the acquisition window -> not registered
        if (keep && arrival >= 0.0 && arrival <= duration)
            channel[to_b ? 1 : 0].push_back(arrival);
    }

    detail::append_poisson_arrivals(channel[0], det.background_rate / 2.0, duration, background);
    detail::append_poisson_arrivals(channel[1], det.background_rate / 2.0, duration, background);

    const std::int64_t delay_ps = seconds_to_ps(det.electronic_delay);

    PhotonStream stream;
    stream.meta.duration = duration;
    stream.meta.emitter.duration = duration;
    stream.meta.detector = det;
    stream.meta.detector_seed = seed;

    for (int c = 0; c < 2; ++c) {
        auto& times = channel[static_cast<std::size_t>(c)];
        std::sort(times.begin(), times.end());
        if (det.dead_time > 0.0) {
            double last_kept = -std::numeric_limits<double>::infinity();
            std::size_t w = 0;
            for (double t : times) {
                if (t - last_kept >= det.dead_time) {
                    times[w++] = t;
                    last_kept = t;
                }
            }
            times.resize(w);
        }
        for (double t : times) {
            std::int64_t t_ps = seconds_to_ps(t);
            if (c == 1) t_ps += delay_ps;
            if (t_ps < 0) continue;  // negative delay can push early B events before zero
            stream.records.push_back({t_ps, c == 0 ? Channel::A : Channel::B});
        }
    }
    std::sort(stream.records.begin(), stream.records.end());
    return stream;
}

// Convenience wrapper: simulate and detect with the two seeds taken from the
// emitter config (the detector chain uses the same master seed; substream
// tags keep all draws independent).
inline PhotonStream simulate_stream(const EmitterConfig& emitter, const DetectorConfig& det,
                                    TrajectoryStats* stats = nullptr) {
    const std::vector<double> emissions = simulate_emission(emitter, stats);
    PhotonStream stream = detect(emissions, det, emitter.seed, emitter.duration);
    stream.meta.emitter = emitter;
    return stream;
}

}  // namespace photonstat
