#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "photonstat/errors.hpp"
#include "photonstat/montecarlo.hpp"
#include "photonstat/units.hpp"

namespace photonstat {

// Binned A-B coincidence counts. Bins are left-closed right-open,
// [delay_min + i*w, delay_min + (i+1)*w), in integer picoseconds; the delay
// axis is reported at bin centers.
struct CoincidenceHistogram {
    std::int64_t bin_width_ps = 0;
    std::int64_t delay_min_ps = 0;
    std::vector<std::int64_t> counts;
    std::uint64_t n_starts = 0;  // channel-A event total
    std::uint64_t n_stops = 0;   // channel-B event total
    double total_time = 0.0;     // acquisition time T [s]
    bool empty_channel_warning = false;

    // filled by normalize()
    bool normalized = false;
    std::vector<double> g2;
    std::vector<double> g2_err;

    std::map<std::string, std::string> meta;

    std::size_t size() const { return std::max(counts.size(), g2.size()); }

    double bin_center_s(std::size_t i) const {
        return (static_cast<double>(delay_min_ps) +
                (static_cast<double>(i) + 0.5) * static_cast<double>(bin_width_ps)) *
               ps_to_s;
    }
    double bin_center_ns(std::size_t i) const { return bin_center_s(i) / ns_to_s; }

    // bins this thin statistically should be down-weighted or ignored by fits
    bool low_statistics(std::size_t i) const { return counts[i] < 10; }

    // counts expected per bin for uncorrelated channels, N1*N2*w*T with
    // N1 = n_starts/T, N2 = n_stops/T
    double uncorrelated_bin_expectation() const {
        return static_cast<double>(n_starts) * static_cast<double>(n_stops) *
               (static_cast<double>(bin_width_ps) * ps_to_s) / total_time;
    }

    // shift the delay axis (e.g. to remove the electronic delay before fitting)
    void shift_delay(std::int64_t offset_ps) { delay_min_ps -= offset_ps; }
};

namespace detail {

inline std::size_t bin_count(std::int64_t span_ps, std::int64_t bin_width_ps) {
    return static_cast<std::size_t>((span_ps + bin_width_ps - 1) / bin_width_ps);
}

inline void validate_binning(std::int64_t bin_width_ps, std::int64_t span_ps) {
    if (bin_width_ps <= 0) throw parameter_error("bin width must be > 0");
    if (span_ps <= 0) throw parameter_error("histogram range must be nonempty");
}

}  // namespace detail

// Start-stop histogram: for every channel-A event (start) the delay to the
// NEXT channel-B event at or after it is recorded. Delays are nonnegative by
// construction; an electronic delay embedded in channel B shifts the whole
// distribution so that negative physical delays appear at positive values.
// Starts whose stop lands outside the range still count toward n_starts
// (normalization uses raw channel rates). Single pass, linear time.
inline CoincidenceHistogram start_stop_histogram(const PhotonStream& stream,
                                                 std::int64_t bin_width_ps,
                                                 std::int64_t delay_min_ps,
                                                 std::int64_t delay_max_ps) {
    detail::validate_binning(bin_width_ps, delay_max_ps - delay_min_ps);

    const std::vector<std::int64_t> starts = stream.channel_times(Channel::A);
    const std::vector<std::int64_t> stops = stream.channel_times(Channel::B);

    CoincidenceHistogram hist;
    hist.bin_width_ps = bin_width_ps;
    hist.delay_min_ps = delay_min_ps;
    hist.counts.assign(detail::bin_count(delay_max_ps - delay_min_ps, bin_width_ps), 0);
    hist.n_starts = starts.size();
    hist.n_stops = stops.size();
    hist.total_time = stream.meta.duration;
    hist.empty_channel_warning = starts.empty() || stops.empty();

    const std::int64_t span = static_cast<std::int64_t>(hist.counts.size()) * bin_width_ps;
    std::size_t j = 0;
    for (const std::int64_t a : starts) {
        while (j < stops.size() && stops[j] < a) ++j;
        if (j == stops.size()) break;
        const std::int64_t delta = stops[j] - a;
        if (delta >= delay_min_ps && delta < delay_min_ps + span)
            ++hist.counts[static_cast<std::size_t>((delta - delay_min_ps) / bin_width_ps)];
    }
    return hist;
}

// Full pair correlation: every A-B pair with signed delay t_B - t_A inside
// the histogram range is counted, via a sliding-window two-pointer sweep.
// The range is symmetric, [-n*w, +n*w) with n = ceil(max_delay/w), so every
// bin is a full bin. Optionally splits the start events across threads;
// counts are additive so the merge is exact.
inline CoincidenceHistogram full_correlation_histogram(const PhotonStream& stream,
                                                       std::int64_t bin_width_ps,
                                                       std::int64_t max_delay_ps,
                                                       unsigned n_threads = 1) {
    detail::validate_binning(bin_width_ps, max_delay_ps);

    const std::vector<std::int64_t> starts = stream.channel_times(Channel::A);
    const std::vector<std::int64_t> stops = stream.channel_times(Channel::B);

    const std::int64_t half_bins = (max_delay_ps + bin_width_ps - 1) / bin_width_ps;
    const std::int64_t lo_edge = -half_bins * bin_width_ps;
    const std::int64_t hi_edge = half_bins * bin_width_ps;

    CoincidenceHistogram hist;
    hist.bin_width_ps = bin_width_ps;
    hist.delay_min_ps = lo_edge;
    hist.counts.assign(static_cast<std::size_t>(2 * half_bins), 0);
    hist.n_starts = starts.size();
    hist.n_stops = stops.size();
    hist.total_time = stream.meta.duration;
    hist.empty_channel_warning = starts.empty() || stops.empty();

    auto sweep = [&](std::size_t begin, std::size_t end, std::vector<std::int64_t>& counts) {
        std::size_t lo = 0;
        for (std::size_t i = begin; i < end; ++i) {
            const std::int64_t a = starts[i];
            while (lo < stops.size() && stops[lo] - a < lo_edge) ++lo;
            for (std::size_t j = lo; j < stops.size(); ++j) {
                const std::int64_t delta = stops[j] - a;
                if (delta >= hi_edge) break;
                ++counts[static_cast<std::size_t>((delta - lo_edge) / bin_width_ps)];
            }
        }
    };

    if (n_threads <= 1 || starts.size() < 4096) {
        sweep(0, starts.size(), hist.counts);
    } else {
        const std::size_t chunks = n_threads;
        std::vector<std::vector<std::int64_t>> partial(
            chunks, std::vector<std::int64_t>(hist.counts.size(), 0));
        std::vector<std::thread> workers;
        const std::size_t step = (starts.size() + chunks - 1) / chunks;
        for (std::size_t c = 0; c < chunks; ++c) {
            const std::size_t begin = c * step;
            const std::size_t end = std::min(starts.size(), begin + step);
            if (begin >= end) break;
            workers.emplace_back([&, begin, end, c] { sweep(begin, end, partial[c]); });
        }
        for (auto& w : workers) w.join();
        for (const auto& part : partial)
            for (std::size_t b = 0; b < part.size(); ++b) hist.counts[b] += part[b];
    }
    return hist;
}

// Normalize to g2 estimates: g2_i = counts_i / (N1 N2 w T) with per-bin
// standard error sqrt(counts_i) over the same denominator. Bins with zero
// counts report g2 = 0 with error 0 and show up via low_statistics().
inline CoincidenceHistogram normalize(const CoincidenceHistogram& hist) {
    if (hist.n_starts == 0 || hist.n_stops == 0)
        throw data_error("cannot normalize: a channel has no events");
    if (!(hist.total_time > 0.0))
        throw data_error("cannot normalize: unknown or zero acquisition time");
    if (hist.bin_width_ps <= 0) throw data_error("cannot normalize: invalid bin width");

    CoincidenceHistogram out = hist;
    const double denom = hist.uncorrelated_bin_expectation();
    out.g2.resize(hist.counts.size());
    out.g2_err.resize(hist.counts.size());
    for (std::size_t i = 0; i < hist.counts.size(); ++i) {
        const double c = static_cast<double>(hist.counts[i]);
        out.g2[i] = c / denom;
        out.g2_err[i] = std::sqrt(c) / denom;
    }
    out.normalized = true;
    return out;
}

// Invert the two-source mixing g2_meas = 1 + rho^2 (g2_true - 1), where
// rho = S/(S+B) is the signal fraction against Poissonian background:
//   g2_corr = (g2_meas - (1 - rho^2)) / rho^2
inline double background_correct(double g2_measured, double signal_fraction) {
    if (!(std::isfinite(signal_fraction) && signal_fraction > 0.0 && signal_fraction <= 1.0))
        throw parameter_error("signal fraction must be in (0, 1]");
    const double rho2 = signal_fraction * signal_fraction;
    return (g2_measured - (1.0 - rho2)) / rho2;
}

}  // namespace photonstat
