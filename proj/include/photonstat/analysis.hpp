#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "photonstat/correlator.hpp"
#include "photonstat/errors.hpp"
#include "photonstat/levmar.hpp"
#include "photonstat/photophysics.hpp"

namespace photonstat {

// (excitation power, detected rate, optional 1-sigma) sample of the
// saturation curve.
struct SaturationPoint {
    double intensity = 0.0;
    double rate = 0.0;
    double sigma = 0.0;  // <= 0 means unweighted
};

struct SaturationData {
    std::vector<SaturationPoint> points;

    void validate() const {
        if (points.size() < 3)
            throw parameter_error("saturation fit needs at least 3 points");
        for (const auto& p : points)
            if (!(std::isfinite(p.intensity) && p.intensity >= 0.0 && std::isfinite(p.rate) &&
                  p.rate >= 0.0))
                throw parameter_error("saturation points must have I >= 0 and R >= 0");
    }
};

// Emission spectrum samples plus the zero-phonon-line integration window.
struct Spectrum {
    std::vector<double> wavelength_nm;
    std::vector<double> intensity;
    double zpl_min_nm = 0.0;
    double zpl_max_nm = 0.0;

    void validate() const {
        if (wavelength_nm.size() != intensity.size() || wavelength_nm.size() < 2)
            throw parameter_error("spectrum needs matching wavelength/intensity arrays, >= 2 samples");
        for (std::size_t i = 1; i < wavelength_nm.size(); ++i)
            if (!(wavelength_nm[i] > wavelength_nm[i - 1]))
                throw parameter_error("spectrum wavelengths must be strictly increasing");
        if (!(zpl_min_nm <= zpl_max_nm))
            throw parameter_error("ZPL window must have min <= max");
        if (zpl_min_nm < wavelength_nm.front() || zpl_max_nm > wavelength_nm.back())
            throw parameter_error("ZPL window must lie inside the sampled range");
    }
};

// Time-resolved fluorescence decay histogram.
struct DecayHistogram {
    std::vector<double> time_ns;
    std::vector<double> counts;

    void validate() const {
        if (time_ns.size() != counts.size() || time_ns.size() < 4)
            throw parameter_error("decay histogram needs matching time/count arrays, >= 4 bins");
        for (std::size_t i = 1; i < time_ns.size(); ++i)
            if (!(time_ns[i] > time_ns[i - 1]))
                throw parameter_error("decay histogram times must be strictly increasing");
        for (double c : counts)
            if (!(std::isfinite(c) && c >= 0.0)) throw parameter_error("counts must be >= 0");
    }
};

struct G2FitOptions {
    bool free_k = false;        // also fit the absorption rate
    bool free_inv_T1 = false;   // also fit the excited-state relaxation rate
    bool fit_contrast = false;  // include a contrast factor c in 1 + c*(g2-1)
    double tau_abs_max = 0.0;   // fit window on |tau| [s]; 0 = use all bins
    FitOptions lm;
};

namespace detail {

struct WeightedPoint {
    double x = 0.0;
    double y = 0.0;
    double sigma = 1.0;
};

// Per-bin Poisson sigma on the g2 scale; zero-count bins get the counts+1
// floor so their weight stays finite. Synthetic histograms without raw
// counts fall back to the stored g2_err, or unit weights.
inline std::vector<WeightedPoint> g2_points(const CoincidenceHistogram& hist) {
    if (!hist.normalized || hist.g2.empty())
        throw data_error("g2 fit needs a normalized histogram");
    const bool have_counts = hist.counts.size() == hist.g2.size() && hist.n_starts > 0 &&
                             hist.n_stops > 0 && hist.total_time > 0.0;
    const double denom = have_counts ? hist.uncorrelated_bin_expectation() : 1.0;
    std::vector<WeightedPoint> pts;
    pts.reserve(hist.g2.size());
    for (std::size_t i = 0; i < hist.g2.size(); ++i) {
        WeightedPoint p;
        p.x = hist.bin_center_s(i);
        p.y = hist.g2[i];
        if (have_counts) {
            const double c = static_cast<double>(hist.counts[i]);
            p.sigma = std::sqrt(c > 0.0 ? c : c + 1.0) / denom;
        } else if (i < hist.g2_err.size() && hist.g2_err[i] > 0.0) {
            p.sigma = hist.g2_err[i];
        }
        pts.push_back(p);
    }
    return pts;
}

}  // namespace detail

// Weighted Levenberg-Marquardt fit of the analytic g2 against a normalized,
// delay-centered histogram. By default only the shelving rates {gamma12,
// gamma20} float, with {k, 1/T1} held fixed; options free the remaining
// rates and an overall contrast factor for uncorrected background. All rates
// are optimized in log space.
inline FitResult fit_g2(const CoincidenceHistogram& hist, const RateParams& fixed,
                        double init_gamma12, double init_gamma20,
                        const G2FitOptions& options = {}) {
    fixed.require_pumped();
    if (!(init_gamma12 > 0.0 && init_gamma20 > 0.0))
        throw parameter_error("initial guesses for gamma12 and gamma20 must be > 0");

    std::vector<detail::WeightedPoint> pts = detail::g2_points(hist);
    if (options.tau_abs_max > 0.0)
        std::erase_if(pts, [&](const detail::WeightedPoint& p) {
            return std::abs(p.x) > options.tau_abs_max;
        });

    std::vector<FitParam> params{{"gamma12", init_gamma12, ParamScale::log},
                                 {"gamma20", init_gamma20, ParamScale::log}};
    if (options.free_k) params.push_back({"k", fixed.k, ParamScale::log});
    if (options.free_inv_T1) params.push_back({"inv_T1", fixed.inv_T1, ParamScale::log});
    if (options.fit_contrast) params.push_back({"contrast", 0.9, ParamScale::log});

    const bool free_k = options.free_k;
    const bool free_t1 = options.free_inv_T1;
    const bool contrast = options.fit_contrast;

    ResidualFn residuals = [pts, fixed, free_k, free_t1, contrast](const Eigen::VectorXd& v) {
        RateParams rates = fixed;
        rates.gamma12 = v[0];
        rates.gamma20 = v[1];
        Eigen::Index next = 2;
        if (free_k) rates.k = v[next++];
        if (free_t1) rates.inv_T1 = v[next++];
        const double c = contrast ? v[next] : 1.0;

        Eigen::VectorXd r(static_cast<Eigen::Index>(pts.size()));
        for (std::size_t i = 0; i < pts.size(); ++i) {
            double model;
            try {
                model = 1.0 + c * (g2_analytic(rates, std::abs(pts[i].x)) - 1.0);
            } catch (const oscillatory_regime_error&) {
                model = std::numeric_limits<double>::quiet_NaN();  // reject this step
            }
            r[static_cast<Eigen::Index>(i)] = (model - pts[i].y) / pts[i].sigma;
        }
        return r;
    };

    return levmar_fit(residuals, params, options.lm);
}

// Fit the saturation law R(I) = R_inf (I/I_s)/(1 + I/I_s) for {R_inf, I_s}.
inline FitResult fit_saturation(const SaturationData& data, const SaturationParams& init,
                                const FitOptions& options = {}) {
    data.validate();
    init.validate();

    const auto& pts = data.points;
    ResidualFn residuals = [&pts](const Eigen::VectorXd& v) {
        const SaturationParams sat{v[0], v[1]};
        Eigen::VectorXd r(static_cast<Eigen::Index>(pts.size()));
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double sigma = pts[i].sigma > 0.0 ? pts[i].sigma : 1.0;
            r[static_cast<Eigen::Index>(i)] =
                (sat.R_inf * pts[i].intensity / (sat.I_s + pts[i].intensity) - pts[i].rate) / sigma;
        }
        return r;
    };

    FitResult result = levmar_fit(residuals,
                                  {{"R_inf", init.R_inf, ParamScale::log},
                                   {"I_s", init.I_s, ParamScale::log}},
                                  options);

    double max_intensity = 0.0;
    for (const auto& p : pts) max_intensity = std::max(max_intensity, p.intensity);
    if (result.value("I_s") > max_intensity) {
        result.flagged = true;
        result.message = "saturation knee lies beyond the sampled powers; R_inf is not identified";
    }
    return result;
}

// Fit A exp(-t/tau) + floor to a decay histogram. The floor is estimated
// jointly, initialized from the mean of the last 10% of bins; weights are
// Poisson with the counts+1 floor on empty bins.
inline FitResult fit_lifetime(const DecayHistogram& data, const FitOptions& options = {}) {
    data.validate();

    const double max_counts = *std::max_element(data.counts.begin(), data.counts.end());
    const double min_counts = *std::min_element(data.counts.begin(), data.counts.end());
    if (max_counts < 10.0 * std::max(1.0, min_counts))
        throw data_error("decay histogram spans less than one decade of counts; "
                         "lifetime is not identifiable");

    const std::size_t n = data.counts.size();
    const std::size_t tail = std::max<std::size_t>(1, n / 10);
    const double floor0 =
        std::accumulate(data.counts.end() - static_cast<std::ptrdiff_t>(tail), data.counts.end(),
                        0.0) /
        static_cast<double>(tail);

    // crude decade-crossing estimate of tau for the initial guess
    const std::size_t peak =
        static_cast<std::size_t>(std::max_element(data.counts.begin(), data.counts.end()) -
                                 data.counts.begin());
    double tau0 = (data.time_ns.back() - data.time_ns.front()) / 3.0;
    for (std::size_t i = peak; i < n; ++i) {
        if (data.counts[i] - floor0 < (max_counts - floor0) / std::numbers::e) {
            if (data.time_ns[i] > data.time_ns[peak])
                tau0 = data.time_ns[i] - data.time_ns[peak];
            break;
        }
    }

    const auto& t = data.time_ns;
    const auto& y = data.counts;
    ResidualFn residuals = [&t, &y](const Eigen::VectorXd& v) {
        const double amp = v[0], tau = v[1], floor = v[2];
        Eigen::VectorXd r(static_cast<Eigen::Index>(t.size()));
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double sigma = std::sqrt(std::max(y[i], 1.0));
            r[static_cast<Eigen::Index>(i)] = (amp * std::exp(-t[i] / tau) + floor - y[i]) / sigma;
        }
        return r;
    };

    return levmar_fit(residuals,
                      {{"amplitude", max_counts, ParamScale::log},
                       {"tau_ns", tau0, ParamScale::log},
                       {"floor", floor0, ParamScale::linear}},
                      options);
}

// Fraction of the total emission inside the zero-phonon-line window:
// trapezoidal integral over the window (with linear interpolation at its
// edges) divided by the integral over the whole spectrum, after an optional
// constant baseline subtraction. Always in [0, 1].
inline double debye_waller(const Spectrum& spec, double baseline = 0.0) {
    spec.validate();

    const auto& wl = spec.wavelength_nm;
    std::vector<double> signal(spec.intensity.size());
    for (std::size_t i = 0; i < signal.size(); ++i)
        signal[i] = std::max(0.0, spec.intensity[i] - baseline);

    auto value_at = [&](double x) {
        const auto it = std::lower_bound(wl.begin(), wl.end(), x);
        const std::size_t hi = static_cast<std::size_t>(it - wl.begin());
        if (hi == 0) return signal.front();
        if (hi == wl.size()) return signal.back();
        const std::size_t lo = hi - 1;
        const double f = (x - wl[lo]) / (wl[hi] - wl[lo]);
        return signal[lo] + f * (signal[hi] - signal[lo]);
    };

    auto integrate = [&](double a, double b) {
        if (!(b > a)) return 0.0;
        double total = 0.0;
        double x_prev = a, y_prev = value_at(a);
        for (std::size_t i = 0; i < wl.size(); ++i) {
            if (wl[i] <= a) continue;
            if (wl[i] >= b) break;
            total += 0.5 * (y_prev + signal[i]) * (wl[i] - x_prev);
            x_prev = wl[i];
            y_prev = signal[i];
        }
        total += 0.5 * (y_prev + value_at(b)) * (b - x_prev);
        return total;
    };

    const double total = integrate(wl.front(), wl.back());
    if (!(total > 0.0)) throw data_error("spectrum has zero integrated intensity");
    return std::clamp(integrate(spec.zpl_min_nm, spec.zpl_max_nm) / total, 0.0, 1.0);
}

struct YieldEstimate {
    double phi_F = 0.0;
    bool clamped = false;  // raw estimate exceeded 1 and was clamped
};

// Invert the saturated-emission-rate law for the quantum yield:
//   phi_F = (R_detected/eta) * (2 + gamma12/gamma20) / (1/T1 + gamma12)
inline YieldEstimate quantum_yield(const RateParams& rates, double detected_R_inf,
                                   double efficiency) {
    rates.validate();
    if (!(std::isfinite(efficiency) && efficiency > 0.0 && efficiency <= 1.0))
        throw parameter_error("detection efficiency must be in (0, 1]");
    if (!(std::isfinite(detected_R_inf) && detected_R_inf > 0.0))
        throw parameter_error("detected saturation rate must be > 0");

    double shelving = 2.0;
    if (rates.gamma12 > 0.0) {
        if (rates.gamma20 <= 0.0)
            throw parameter_error("gamma20 = 0 with gamma12 > 0: permanent shelving, no yield");
        shelving += rates.gamma12 / rates.gamma20;
    }
    const double raw = (detected_R_inf / efficiency) * shelving / (rates.inv_T1 + rates.gamma12);
    YieldEstimate est;
    est.clamped = raw > 1.0;
    est.phi_F = est.clamped ? 1.0 : raw;
    return est;
}

// Ratio of the saturated emission rate to the two-level ceiling obtained by
// switching shelving off (gamma12 = 0) at the same 1/T1 and quantum yield.
inline double three_two_ratio(const RateParams& rates) {
    RateParams two_level = rates;
    two_level.gamma12 = 0.0;
    return max_emission_rate(rates, 1.0) / max_emission_rate(two_level, 1.0);
}

}  // namespace photonstat
