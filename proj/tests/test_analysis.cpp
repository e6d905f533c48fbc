#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "photonstat/analysis.hpp"
#include "oracles.hpp"

using namespace photonstat;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// synthetic normalized histogram sampling the analytic g2 on 0.5 ns bins
CoincidenceHistogram exact_g2_histogram(const RateParams& rates, int n_bins,
                                        double contrast = 1.0) {
    CoincidenceHistogram hist;
    hist.bin_width_ps = 500;
    hist.delay_min_ps = 0;
    hist.normalized = true;
    for (int i = 0; i < n_bins; ++i) {
        const double tau = hist.bin_center_s(static_cast<std::size_t>(i));
        hist.g2.push_back(1.0 + contrast * (g2_analytic(rates, tau) - 1.0));
    }
    return hist;
}

}  // namespace

TEST_CASE("g2 fit recovers the shelving rates from exact samples") {
    const RateParams truth = oracle::table1();
    const CoincidenceHistogram hist = exact_g2_histogram(truth, 600);

    const FitResult fit = fit_g2(hist, truth, 10e6, 10e6);
    REQUIRE(fit.converged);
    CHECK_THAT(fit.value("gamma12"), WithinRel(17e6, 1e-6));
    CHECK_THAT(fit.value("gamma20"), WithinRel(6.1e6, 1e-6));
    CHECK(fit.reduced_chi2 < 1e-12);
    CHECK(fit.gradient_norm < 1e-3);
    CHECK(fit.std_errors.minCoeff() >= 0.0);
}

TEST_CASE("g2 fit works from distant initial guesses and random truths") {
    std::mt19937_64 rng(0xfeed01);
    for (int trial = 0; trial < 25; ++trial) {
        const RateParams truth = oracle::random_rates(rng);
        if (truth.gamma20 >= truth.lambda_slow()) continue;  // want visible bunching
        // sample out to several slow time constants
        CoincidenceHistogram hist;
        hist.bin_width_ps = std::max<std::int64_t>(1, seconds_to_ps(0.02 / truth.lambda_slow()));
        hist.delay_min_ps = 0;
        hist.normalized = true;
        for (int i = 0; i < 500; ++i)
            hist.g2.push_back(g2_analytic(truth, hist.bin_center_s(static_cast<std::size_t>(i))));

        const FitResult fit = fit_g2(hist, truth, truth.gamma12 * 3.0, truth.gamma20 / 3.0);
        REQUIRE(fit.converged);
        REQUIRE_THAT(fit.value("gamma12"), WithinRel(truth.gamma12, 1e-6));
        REQUIRE_THAT(fit.value("gamma20"), WithinRel(truth.gamma20, 1e-6));
    }
}

TEST_CASE("g2 fit with a free contrast factor") {
    const RateParams truth = oracle::table1();
    const CoincidenceHistogram hist = exact_g2_histogram(truth, 600, 0.81);

    G2FitOptions options;
    options.fit_contrast = true;
    const FitResult fit = fit_g2(hist, truth, 10e6, 10e6, options);
    REQUIRE(fit.converged);
    CHECK_THAT(fit.value("gamma12"), WithinRel(17e6, 1e-5));
    CHECK_THAT(fit.value("gamma20"), WithinRel(6.1e6, 1e-5));
    CHECK_THAT(fit.value("contrast"), WithinRel(0.81, 1e-5));
}

TEST_CASE("g2 fit flags a flat histogram as non-identifiable") {
    CoincidenceHistogram flat;
    flat.bin_width_ps = 500;
    flat.delay_min_ps = 0;
    flat.normalized = true;
    flat.g2.assign(400, 1.0);

    const FitResult fit = fit_g2(flat, oracle::table1(), 10e6, 10e6);
    CHECK(fit.flagged);
    // whatever degenerate valley the optimizer drifted into, the fitted model
    // must have lost its bunching signal away from the dip
    RateParams fitted = oracle::table1();
    fitted.gamma12 = fit.value("gamma12");
    fitted.gamma20 = fit.value("gamma20");
    double worst = 0.0;
    for (int i = 10; i <= 500; ++i)
        worst = std::max(worst, std::abs(g2_analytic(fitted, i * 0.5e-9) - 1.0));
    CHECK(worst < 0.05);
}

TEST_CASE("g2 fit rejects bad inputs") {
    const RateParams rates = oracle::table1();
    CoincidenceHistogram hist;
    hist.bin_width_ps = 500;
    hist.counts = {1, 2, 3};
    CHECK_THROWS_AS(fit_g2(hist, rates, 1e6, 1e6), data_error);  // not normalized

    CoincidenceHistogram tiny = exact_g2_histogram(rates, 1);
    CHECK_THROWS_AS(fit_g2(tiny, rates, 1e6, 1e6), parameter_error);  // fewer points than params
    CHECK_THROWS_AS(fit_g2(exact_g2_histogram(rates, 100), rates, 0.0, 1e6), parameter_error);
}

TEST_CASE("g2 fit tolerates noisy bins with Poisson weights") {
    const RateParams truth = oracle::table1();
    std::mt19937_64 rng(0xfeed02);
    std::normal_distribution<double> noise(0.0, 1.0);

    CoincidenceHistogram hist = exact_g2_histogram(truth, 400);
    hist.n_starts = 1000000;
    hist.n_stops = 1000000;
    hist.total_time = 1.0;
    const double denom = hist.uncorrelated_bin_expectation();  // counts per unit g2
    for (std::size_t i = 0; i < hist.g2.size(); ++i) {
        const double expected_counts = hist.g2[i] * denom;
        const double observed =
            std::max(0.0, std::round(expected_counts + std::sqrt(expected_counts) * noise(rng)));
        hist.counts.push_back(static_cast<std::int64_t>(observed));
        hist.g2[i] = observed / denom;
        hist.g2_err.push_back(std::sqrt(observed) / denom);
    }

    const FitResult fit = fit_g2(hist, truth, 8e6, 8e6);
    REQUIRE(fit.converged);
    CHECK_THAT(fit.value("gamma12"), WithinRel(truth.gamma12, 0.10));
    CHECK_THAT(fit.value("gamma20"), WithinRel(truth.gamma20, 0.10));
    // the quoted uncertainties should cover the truth within a few sigma
    CHECK(std::abs(fit.value("gamma12") - truth.gamma12) < 5.0 * fit.std_error("gamma12"));
}

TEST_CASE("saturation fit") {
    const SaturationParams truth{75000.0, 1.7};

    SECTION("exact data round trip and scale equivariance") {
        SaturationData data;
        for (int i = 0; i < 30; ++i) {
            const double intensity = 0.1 * truth.I_s * std::pow(100.0, i / 29.0);
            data.points.push_back({intensity, saturation_rate(truth, intensity), 0.0});
        }
        const FitResult fit = fit_saturation(data, {50000.0, 0.5});
        REQUIRE(fit.converged);
        CHECK_THAT(fit.value("R_inf"), WithinRel(75000.0, 1e-8));
        CHECK_THAT(fit.value("I_s"), WithinRel(1.7, 1e-8));
        CHECK(fit.chi2 <= 1e-10);

        SaturationData scaled = data;
        for (auto& p : scaled.points) p.intensity *= 37.0;
        const FitResult fit2 = fit_saturation(scaled, {50000.0, 0.5 * 37.0});
        CHECK_THAT(fit2.value("R_inf"), WithinRel(fit.value("R_inf"), 1e-7));
        CHECK_THAT(fit2.value("I_s"), WithinRel(fit.value("I_s") * 37.0, 1e-7));
    }

    SECTION("under-determined and degenerate inputs") {
        SaturationData two;
        two.points = {{1.0, 100.0, 0.0}, {2.0, 150.0, 0.0}};
        CHECK_THROWS_AS(fit_saturation(two, {100.0, 1.0}), parameter_error);

        // all points deep in the linear regime: knee beyond the data, flagged
        SaturationData linear;
        for (int i = 1; i <= 12; ++i)
            linear.points.push_back(
                {1e-4 * i, saturation_rate(truth, 1e-4 * i), 0.0});
        const FitResult fit = fit_saturation(linear, {1000.0, 0.01});
        CHECK(fit.flagged);
    }

    SECTION("5% noise keeps R_inf within 10%") {
        std::mt19937_64 rng(0xfeed03);
        std::normal_distribution<double> noise(0.0, 0.05);
        for (int rep = 0; rep < 20; ++rep) {
            SaturationData data;
            for (int i = 0; i < 30; ++i) {
                const double intensity = 0.1 * truth.I_s * std::pow(100.0, i / 29.0);
                const double rate = saturation_rate(truth, intensity);
                data.points.push_back({intensity, rate * (1.0 + noise(rng)), 0.05 * rate});
            }
            const FitResult fit = fit_saturation(data, {40000.0, 1.0});
            REQUIRE(fit.converged);
            REQUIRE_THAT(fit.value("R_inf"), WithinRel(75000.0, 0.10));
        }
    }
}

TEST_CASE("lifetime fit") {
    const double tau_truth = 11.5;

    auto decay = [&](double amplitude, double floor, int n_bins, double t_max) {
        DecayHistogram hist;
        for (int i = 0; i < n_bins; ++i) {
            const double t = (i + 0.5) * t_max / n_bins;
            hist.time_ns.push_back(t);
            hist.counts.push_back(amplitude * std::exp(-t / tau_truth) + floor);
        }
        return hist;
    };

    SECTION("exact data round trip") {
        const FitResult fit = fit_lifetime(decay(5000.0, 0.0, 120, 70.0));
        REQUIRE(fit.converged);
        CHECK_THAT(fit.value("tau_ns"), WithinRel(tau_truth, 1e-7));
        CHECK_THAT(fit.value("amplitude"), WithinRel(5000.0, 1e-6));
    }

    SECTION("a constant floor is estimated jointly") {
        const FitResult fit = fit_lifetime(decay(5000.0, 80.0, 120, 70.0));
        REQUIRE(fit.converged);
        CHECK_THAT(fit.value("tau_ns"), WithinRel(tau_truth, 1e-6));
        CHECK_THAT(fit.value("floor"), WithinAbs(80.0, 1e-3));
    }

    SECTION("constant histogram is not identifiable") {
        DecayHistogram flat;
        for (int i = 0; i < 50; ++i) {
            flat.time_ns.push_back(i + 0.5);
            flat.counts.push_back(400.0);
        }
        CHECK_THROWS_AS(fit_lifetime(flat), data_error);
    }

    SECTION("Poisson noise at 1e5 total counts stays within 2%") {
        std::mt19937_64 rng(0xfeed04);
        for (int rep = 0; rep < 10; ++rep) {
            DecayHistogram hist = decay(0.0, 0.0, 100, 60.0);
            double shape_sum = 0.0;
            for (double t : hist.time_ns) shape_sum += std::exp(-t / tau_truth);
            const double amplitude = 1e5 / shape_sum;
            for (std::size_t i = 0; i < hist.counts.size(); ++i) {
                std::poisson_distribution<long> pois(amplitude *
                                                     std::exp(-hist.time_ns[i] / tau_truth));
                hist.counts[i] = static_cast<double>(pois(rng));
            }
            const FitResult fit = fit_lifetime(hist);
            REQUIRE(fit.converged);
            REQUIRE_THAT(fit.value("tau_ns"), WithinRel(tau_truth, 0.02));
        }
    }
}

TEST_CASE("Debye-Waller factor") {
    SECTION("all intensity inside the window") {
        Spectrum spec;
        for (int i = 0; i <= 100; ++i) {
            spec.wavelength_nm.push_back(795.0 + 0.2 * i);
            spec.intensity.push_back(1.0);
        }
        spec.zpl_min_nm = 795.0;
        spec.zpl_max_nm = 815.0;
        CHECK_THAT(debye_waller(spec), WithinAbs(1.0, 1e-12));

        spec.zpl_min_nm = spec.zpl_max_nm = 802.0;  // zero-width window
        CHECK(debye_waller(spec) == 0.0);
    }

    SECTION("synthetic 0.7/0.3 ZPL plus sideband") {
        // narrow Gaussian ZPL at 802 nm (1.2 nm FWHM) with weight 0.7 plus a
        // broad phonon wing reaching 850 nm with weight 0.3; the wing leaks
        // ~0.001 into the ZPL window, so the true ratio is 0.7011
        Spectrum spec;
        const double sigma_zpl = 1.2 / 2.3548200450309493;  // FWHM -> sigma
        const double sigma_wing = 9.0;
        for (int i = 0; i <= 4000; ++i) {
            const double wl = 780.0 + (870.0 - 780.0) * i / 4000.0;
            const double zpl = 0.7 / (sigma_zpl * std::sqrt(2.0 * std::numbers::pi)) *
                               std::exp(-0.5 * std::pow((wl - 802.0) / sigma_zpl, 2));
            const double wing = 0.3 / (sigma_wing * std::sqrt(2.0 * std::numbers::pi)) *
                                std::exp(-0.5 * std::pow((wl - 828.0) / sigma_wing, 2));
            spec.wavelength_nm.push_back(wl);
            spec.intensity.push_back(zpl + wing);
        }
        spec.zpl_min_nm = 802.0 - 2.5;
        spec.zpl_max_nm = 802.0 + 2.5;
        CHECK_THAT(debye_waller(spec), WithinAbs(0.70, 0.01));
        CHECK_THAT(debye_waller(spec), WithinAbs(0.7011, 0.001));
    }

    SECTION("baseline subtraction and bounds") {
        Spectrum spec;
        for (int i = 0; i <= 200; ++i) {
            const double wl = 790.0 + 0.2 * i;
            spec.wavelength_nm.push_back(wl);
            spec.intensity.push_back(5.0 + (std::abs(wl - 802.0) < 1.0 ? 100.0 : 0.0));
        }
        spec.zpl_min_nm = 800.0;
        spec.zpl_max_nm = 804.0;
        const double with_baseline = debye_waller(spec, 5.0);
        CHECK_THAT(with_baseline, WithinAbs(1.0, 1e-9));
        const double without = debye_waller(spec);
        CHECK(without < with_baseline);
        CHECK(without >= 0.0);
        CHECK(without <= 1.0);

        Spectrum dark = spec;
        for (auto& v : dark.intensity) v = 0.0;
        CHECK_THROWS_AS(debye_waller(dark), data_error);
    }
}

TEST_CASE("quantum yield") {
    const RateParams rates = oracle::table1();

    SECTION("the quoted operating point gives 0.7") {
        const YieldEstimate est = quantum_yield(rates, 75000.0, 0.005);
        CHECK_THAT(est.phi_F, WithinAbs(0.70, 0.02));
        CHECK_FALSE(est.clamped);
    }

    SECTION("inverse identity against the emission-rate formula") {
        std::mt19937_64 rng(0xfeed05);
        std::uniform_real_distribution<double> phi_dist(0.05, 1.0);
        for (int trial = 0; trial < 200; ++trial) {
            const RateParams p = oracle::random_rates(rng);
            const double phi = phi_dist(rng);
            const double eta = 0.005;
            const double detected = max_emission_rate(p, phi) * eta;
            REQUIRE_THAT(quantum_yield(p, detected, eta).phi_F, WithinRel(phi, 1e-13));
        }
    }

    SECTION("two-level form") {
        RateParams two_level = rates;
        two_level.gamma12 = 0.0;
        const double detected = 100.0;
        const double eta = 0.01;
        CHECK_THAT(quantum_yield(two_level, detected, eta).phi_F,
                   WithinRel(2.0 * detected / (eta * two_level.inv_T1), 1e-12));
    }

    SECTION("clamping and domain errors") {
        const YieldEstimate est = quantum_yield(rates, 1e6, 0.005);
        CHECK(est.clamped);
        CHECK(est.phi_F == 1.0);
        CHECK_THROWS_AS(quantum_yield(rates, 75000.0, 0.0), parameter_error);
        RateParams stuck = rates;
        stuck.gamma20 = 0.0;
        CHECK_THROWS_AS(quantum_yield(stuck, 75000.0, 0.005), parameter_error);
    }
}

TEST_CASE("three-to-two-level rate ratio") {
    const RateParams rates = oracle::table1();

    CHECK_THAT(three_two_ratio(rates), WithinRel(0.49944890568414423, 1e-12));
    CHECK_THAT(three_two_ratio(rates), WithinAbs(0.50, 0.02));

    RateParams two_level = rates;
    two_level.gamma12 = 0.0;
    CHECK(three_two_ratio(two_level) == 1.0);

    SECTION("fast shelf recovery pushes the ratio through the numerator") {
        RateParams fast = rates;
        fast.gamma20 = 1e6 * fast.gamma12;
        const double expected = (fast.inv_T1 + fast.gamma12) /
                                (2.0 + fast.gamma12 / fast.gamma20) / (fast.inv_T1 / 2.0);
        CHECK_THAT(three_two_ratio(fast), WithinRel(expected, 1e-12));
        CHECK(three_two_ratio(fast) > 1.0);
        CHECK_THAT(three_two_ratio(fast),
                   WithinRel((1.0 + fast.gamma12 / fast.inv_T1), 1e-5));
    }
}

TEST_CASE("fit objective never increases from the initial guess") {
    std::mt19937_64 rng(0xfeed06);
    std::normal_distribution<double> noise(0.0, 0.02);
    const RateParams truth = oracle::table1();

    CoincidenceHistogram hist = exact_g2_histogram(truth, 300);
    for (auto& g : hist.g2) g += noise(rng);
    for (std::size_t i = 0; i < hist.g2.size(); ++i) hist.g2_err.push_back(0.02);

    auto cost_at = [&](double g12, double g20) {
        RateParams p = truth;
        p.gamma12 = g12;
        p.gamma20 = g20;
        double c = 0.0;
        for (std::size_t i = 0; i < hist.g2.size(); ++i) {
            const double r = (g2_analytic(p, hist.bin_center_s(i)) - hist.g2[i]) / 0.02;
            c += r * r;
        }
        return c / static_cast<double>(hist.g2.size() - 2);
    };

    const double init_g12 = 5e6, init_g20 = 20e6;
    const FitResult fit = fit_g2(hist, truth, init_g12, init_g20);
    CHECK(fit.reduced_chi2 <= cost_at(init_g12, init_g20));
    CHECK(fit.reduced_chi2 <= 1.3);  // consistent with unit-variance residuals
}
