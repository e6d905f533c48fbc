#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "photonstat/analysis.hpp"
#include "photonstat/correlator.hpp"
#include "photonstat/errors.hpp"
#include "photonstat/io.hpp"
#include "photonstat/montecarlo.hpp"
#include "photonstat/photophysics.hpp"
#include "photonstat/units.hpp"

namespace photonstat::cli {

// Stable exit codes: 0 success, 2 usage/config error, 3 data error,
// 4 fit non-convergence.
inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 2;
inline constexpr int exit_data = 3;
inline constexpr int exit_fit = 4;

namespace detail {

struct RateFlags {
    double k_mhz = 0.0, inv_t1_mhz = 0.0, gamma12_mhz = 0.0, gamma20_mhz = 0.0;

    void attach(CLI::App* app, bool required = true) {
        attach_pump(app, required);
        auto* g12 = app->add_option("--gamma12-mhz", gamma12_mhz, "Intersystem crossing rate [MHz]");
        auto* g20 = app->add_option("--gamma20-mhz", gamma20_mhz, "Metastable decay rate [MHz]");
        for (auto* opt : {g12, g20}) {
            opt->check(CLI::NonNegativeNumber);
            if (required) opt->required();
        }
    }

    // only k and 1/T1 (the rates held fixed during a g2 fit)
    void attach_pump(CLI::App* app, bool required = true) {
        auto* k = app->add_option("--k-mhz", k_mhz, "Absorption (pump) rate [MHz]");
        auto* t = app->add_option("--inv-t1-mhz", inv_t1_mhz, "Excited-state relaxation rate 1/T1 [MHz]");
        for (auto* opt : {k, t}) {
            opt->check(CLI::NonNegativeNumber);
            if (required) opt->required();
        }
    }

    RateParams to_params() const {
        return {k_mhz * mhz_to_hz, inv_t1_mhz * mhz_to_hz, gamma12_mhz * mhz_to_hz,
                gamma20_mhz * mhz_to_hz};
    }
};

inline std::string fmt(double v) {
    std::ostringstream s;
    s.precision(10);
    s << v;
    return s.str();
}

inline void print_fit_report(std::ostream& out, const std::string& what, const FitResult& fit,
                             const std::vector<std::pair<std::string, std::string>>& extra = {}) {
    out << "fit " << what << (fit.converged ? " converged" : " DID NOT CONVERGE") << " after "
        << fit.n_iterations << " iterations\n";
    if (extra.empty()) {
        for (std::size_t i = 0; i < fit.names.size(); ++i)
            out << "  " << fit.names[i] << " = " << fmt(fit.values[static_cast<Eigen::Index>(i)])
                << " +- " << fmt(fit.std_errors[static_cast<Eigen::Index>(i)]) << "\n";
    } else {
        for (const auto& [key, value] : extra) out << "  " << key << " = " << value << "\n";
    }
    out << "  reduced_chi2 = " << fmt(fit.reduced_chi2) << "  (n_data = " << fit.n_data << ")\n";
    if (fit.flagged) out << "  WARNING: " << fit.message << "\n";
}

inline std::string machine_report(const FitResult& fit,
                                  const std::vector<std::pair<std::string, std::string>>& extra) {
    std::ostringstream out;
    for (std::size_t i = 0; i < fit.names.size(); ++i) {
        out << fit.names[i] << " = "
            << photonstat::detail::format_double(fit.values[static_cast<Eigen::Index>(i)]) << "\n";
        out << fit.names[i] << "_err = "
            << photonstat::detail::format_double(fit.std_errors[static_cast<Eigen::Index>(i)])
            << "\n";
    }
    out << "reduced_chi2 = " << photonstat::detail::format_double(fit.reduced_chi2) << "\n";
    out << "converged = " << (fit.converged ? 1 : 0) << "\n";
    out << "n_iterations = " << fit.n_iterations << "\n";
    out << "flagged = " << (fit.flagged ? 1 : 0) << "\n";
    for (const auto& [key, value] : extra) out << key << " = " << value << "\n";
    return out.str();
}

inline void maybe_svg(const std::string& svg_path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<double>& x, const std::vector<SvgSeries>& series) {
    if (svg_path.empty()) return;
    atomic_write(svg_path, svg_line_plot(title, x_label, y_label, x, series));
}

}  // namespace detail

// Build and run the photonstat command line. `args` excludes the program
// name and is in natural order.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    CLI::App app{"photonstat: three-level single-photon-emitter simulation and analysis"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from a key = value file");
    app.allow_config_extras(false);  // unknown keys are rejected
    std::string save_config;
    app.add_option("--save-config", save_config, "Write the parsed configuration to a file");

    int exit_code = exit_ok;

    // ------------------------------------------------------------------ simulate
    auto sim_rates = std::make_shared<detail::RateFlags>();
    auto* sim = app.add_subcommand("simulate", "Simulate an emitter and its detection stream");
    sim_rates->attach(sim);
    auto sim_opts = std::make_shared<EmitterConfig>();
    auto det_opts = std::make_shared<DetectorConfig>();
    auto sim_misc = std::make_shared<std::map<std::string, double>>();
    (*sim_misc)["dead_time_ns"] = 0.0;
    (*sim_misc)["jitter_ns"] = 0.0;
    (*sim_misc)["delay_ns"] = 0.0;
    auto sim_out = std::make_shared<std::string>();
    sim->add_option("--phi-f", sim_opts->phi_F, "Radiative quantum yield")
        ->check(CLI::Range(1e-12, 1.0));
    sim->add_option("--duration-s", sim_opts->duration, "Recorded acquisition time [s]")
        ->required()
        ->check(CLI::PositiveNumber);
    sim->add_option("--seed", sim_opts->seed, "Master seed; all randomness flows from it");
    sim->add_option("--burn-in-s", sim_opts->burn_in,
                    "Discarded lead-in [s]; negative selects the 100/gamma20 default");
    sim->add_option("--efficiency", det_opts->efficiency, "Detection probability eta")
        ->check(CLI::Range(0.0, 1.0));
    sim->add_option("--background-cps", det_opts->background_rate,
                    "Total Poissonian background rate [counts/s]")
        ->check(CLI::NonNegativeNumber);
    sim->add_option("--dead-time-ns", (*sim_misc)["dead_time_ns"], "Per-detector dead time [ns]")
        ->check(CLI::NonNegativeNumber);
    sim->add_option("--jitter-ns", (*sim_misc)["jitter_ns"], "Gaussian timing jitter sigma [ns]")
        ->check(CLI::NonNegativeNumber);
    sim->add_option("--delay-ns", (*sim_misc)["delay_ns"], "Electronic delay on channel B [ns]");
    sim->add_option("--out", *sim_out, "Output timestamp file")->required();

    sim->callback([&, sim_rates, sim_opts, det_opts, sim_misc, sim_out] {
        EmitterConfig emitter = *sim_opts;
        emitter.rates = sim_rates->to_params();
        DetectorConfig det = *det_opts;
        det.dead_time = ns_to_seconds((*sim_misc)["dead_time_ns"]);
        det.jitter_sigma = ns_to_seconds((*sim_misc)["jitter_ns"]);
        det.electronic_delay = ns_to_seconds((*sim_misc)["delay_ns"]);
        emitter.validate();
        det.validate();

        TrajectoryStats stats;
        PhotonStream stream = simulate_stream(emitter, det, &stats);
        write_stream_file(*sim_out, stream);

        const std::size_t n_a = stream.count(Channel::A);
        const std::size_t n_b = stream.count(Channel::B);
        out << "simulate: seed=" << emitter.seed << " rng=" << stream.meta.rng << "\n";
        out << "  emitted " << stats.n_emitted << " photons in " << emitter.duration << " s ("
            << detail::fmt(static_cast<double>(stats.n_emitted) / emitter.duration)
            << " photons/s)\n";
        out << "  detected A=" << n_a << " B=" << n_b << " total=" << n_a + n_b << " ("
            << detail::fmt(static_cast<double>(n_a + n_b) / emitter.duration) << " counts/s)\n";
        out << "  wrote " << *sim_out << "\n";
    });

    // ----------------------------------------------------------------- correlate
    auto* corr = app.add_subcommand("correlate", "Build a coincidence histogram from a stream");
    auto corr_opts = std::make_shared<std::map<std::string, double>>();
    (*corr_opts)["bin_width_ns"] = 0.5;
    (*corr_opts)["min_ns"] = std::numeric_limits<double>::quiet_NaN();
    (*corr_opts)["max_ns"] = std::numeric_limits<double>::quiet_NaN();
    (*corr_opts)["max_delay_ns"] = std::numeric_limits<double>::quiet_NaN();
    (*corr_opts)["duration_s"] = 0.0;
    auto corr_mode = std::make_shared<std::string>("full");
    auto corr_in = std::make_shared<std::string>();
    auto corr_outfile = std::make_shared<std::string>();
    auto corr_norm = std::make_shared<bool>(true);
    corr->add_option("--in", *corr_in, "Input timestamp file")->required()->check(CLI::ExistingFile);
    corr->add_option("--mode", *corr_mode, "Pairing scheme")
        ->check(CLI::IsMember({"full", "startstop"}));
    corr->add_option("--bin-width-ns", (*corr_opts)["bin_width_ns"], "Histogram bin width [ns]")
        ->check(CLI::PositiveNumber);
    corr->add_option("--min-ns", (*corr_opts)["min_ns"],
                     "Start-stop: left edge of the delay range [ns]");
    corr->add_option("--max-ns", (*corr_opts)["max_ns"],
                     "Start-stop: right edge of the delay range [ns]");
    corr->add_option("--max-delay-ns", (*corr_opts)["max_delay_ns"],
                     "Full mode: histogram spans +-max-delay [ns]");
    corr->add_option("--duration-s", (*corr_opts)["duration_s"],
                     "Override the acquisition time used for normalization [s]");
    corr->add_flag("--normalize,!--no-normalize", *corr_norm, "Attach g2 values (default on)");
    corr->add_option("--out", *corr_outfile, "Output histogram CSV")->required();

    corr->callback([&, corr_opts, corr_mode, corr_in, corr_outfile, corr_norm] {
        PhotonStream stream = read_stream_file(*corr_in);
        if (stream.records.empty()) throw data_error("stream '" + *corr_in + "' has no records");
        if ((*corr_opts)["duration_s"] > 0.0) stream.meta.duration = (*corr_opts)["duration_s"];

        const std::int64_t w_ps = seconds_to_ps(ns_to_seconds((*corr_opts)["bin_width_ns"]));
        if (w_ps <= 0) throw parameter_error("bin width must be at least 1 ps");
        const double delay_ns = stream.meta.detector.electronic_delay / ns_to_s;

        CoincidenceHistogram hist;
        if (*corr_mode == "startstop") {
            double min_ns = (*corr_opts)["min_ns"];
            double max_ns = (*corr_opts)["max_ns"];
            if (std::isnan(min_ns)) min_ns = std::max(0.0, delay_ns - 200.0);
            if (std::isnan(max_ns)) max_ns = delay_ns + 200.0;
            hist = start_stop_histogram(stream, w_ps, seconds_to_ps(ns_to_seconds(min_ns)),
                                        seconds_to_ps(ns_to_seconds(max_ns)));
        } else {
            double max_delay_ns = (*corr_opts)["max_delay_ns"];
            if (std::isnan(max_delay_ns)) max_delay_ns = std::abs(delay_ns) + 200.0;
            hist = full_correlation_histogram(stream, w_ps,
                                              seconds_to_ps(ns_to_seconds(max_delay_ns)),
                                              thread_budget());
        }
        if (*corr_norm) hist = normalize(hist);
        hist.meta["electronic_delay_ps"] =
            std::to_string(stream.meta.electronic_delay_ps());
        write_histogram_file(*corr_outfile, hist);

        out << "correlate: mode=" << *corr_mode << " bins=" << hist.size()
            << " n_starts=" << hist.n_starts << " n_stops=" << hist.n_stops << "\n";
        if (hist.empty_channel_warning) out << "  WARNING: a channel has no events\n";
        out << "  wrote " << *corr_outfile << "\n";
    });

    // ----------------------------------------------------------------------- fit
    auto* fit = app.add_subcommand("fit", "Fit models to measured or simulated data");
    fit->require_subcommand(1);

    // fit g2
    auto* fit_g2_cmd = fit->add_subcommand("g2", "Fit the correlator model to a g2 histogram");
    auto g2_rates = std::make_shared<detail::RateFlags>();
    g2_rates->attach_pump(fit_g2_cmd);
    auto g2o = std::make_shared<std::map<std::string, double>>();
    (*g2o)["init_gamma12_mhz"] = 10.0;
    (*g2o)["init_gamma20_mhz"] = 10.0;
    (*g2o)["delay_ns"] = std::numeric_limits<double>::quiet_NaN();
    (*g2o)["fit_window_ns"] = 0.0;
    auto g2_in = std::make_shared<std::string>();
    auto g2_report = std::make_shared<std::string>();
    auto g2_flags = std::make_shared<G2FitOptions>();
    fit_g2_cmd->add_option("--in", *g2_in, "Normalized histogram CSV")
        ->required()
        ->check(CLI::ExistingFile);
    fit_g2_cmd->add_option("--init-gamma12-mhz", (*g2o)["init_gamma12_mhz"],
                           "Initial guess for gamma12 [MHz]")
        ->check(CLI::PositiveNumber);
    fit_g2_cmd->add_option("--init-gamma20-mhz", (*g2o)["init_gamma20_mhz"],
                           "Initial guess for gamma20 [MHz]")
        ->check(CLI::PositiveNumber);
    fit_g2_cmd->add_option("--delay-ns", (*g2o)["delay_ns"],
                           "Delay-axis center to subtract [ns]; default from file metadata");
    fit_g2_cmd->add_option("--fit-window-ns", (*g2o)["fit_window_ns"],
                           "Use only bins with |tau| below this [ns]; 0 = all");
    fit_g2_cmd->add_flag("--free-k", g2_flags->free_k, "Also fit the absorption rate");
    fit_g2_cmd->add_flag("--free-inv-t1", g2_flags->free_inv_T1,
                         "Also fit the excited-state relaxation rate");
    fit_g2_cmd->add_flag("--fit-contrast", g2_flags->fit_contrast,
                         "Additionally fit with a free background-contrast factor and report both");
    fit_g2_cmd->add_option("--out", *g2_report, "Write a machine-readable key = value report");

    fit_g2_cmd->callback([&, g2_rates, g2o, g2_in, g2_report, g2_flags] {
        CoincidenceHistogram hist = read_histogram_file(*g2_in);
        if (!hist.normalized) hist = normalize(hist);

        double delay_ns = (*g2o)["delay_ns"];
        std::int64_t delay_ps = 0;
        if (std::isnan(delay_ns)) {
            const auto it = hist.meta.find("electronic_delay_ps");
            if (it != hist.meta.end())
                delay_ps = photonstat::detail::parse_int<std::int64_t>(it->second,
                                                                       "electronic_delay_ps");
        } else {
            delay_ps = seconds_to_ps(ns_to_seconds(delay_ns));
        }
        hist.shift_delay(delay_ps);

        const RateParams fixed = g2_rates->to_params();
        G2FitOptions options = *g2_flags;
        options.fit_contrast = false;
        options.tau_abs_max = ns_to_seconds((*g2o)["fit_window_ns"]);
        FitResult plain = fit_g2(hist, fixed, (*g2o)["init_gamma12_mhz"] * mhz_to_hz,
                                 (*g2o)["init_gamma20_mhz"] * mhz_to_hz, options);

        auto to_mhz_report = [](const FitResult& r) {
            std::vector<std::pair<std::string, std::string>> rows;
            for (std::size_t i = 0; i < r.names.size(); ++i) {
                const bool is_rate = r.names[i] != "contrast";
                const double scale = is_rate ? 1.0 / mhz_to_hz : 1.0;
                rows.emplace_back(r.names[i] + (is_rate ? "_mhz" : ""),
                                  detail::fmt(r.values[static_cast<Eigen::Index>(i)] * scale) +
                                      " +- " +
                                      detail::fmt(r.std_errors[static_cast<Eigen::Index>(i)] *
                                                  scale));
            }
            return rows;
        };

        detail::print_fit_report(out, "g2", plain, to_mhz_report(plain));
        FitResult final = plain;
        if (g2_flags->fit_contrast) {
            G2FitOptions with_c = *g2_flags;
            with_c.tau_abs_max = options.tau_abs_max;
            FitResult contrast = fit_g2(hist, fixed, (*g2o)["init_gamma12_mhz"] * mhz_to_hz,
                                        (*g2o)["init_gamma20_mhz"] * mhz_to_hz, with_c);
            detail::print_fit_report(out, "g2 (free contrast)", contrast,
                                     to_mhz_report(contrast));
            final = contrast;
        }
        if (!g2_report->empty())
            atomic_write(*g2_report, detail::machine_report(final, {}));
        if (!plain.converged || !final.converged) exit_code = exit_fit;
    });

    // fit saturation
    auto* fit_sat = fit->add_subcommand("saturation", "Fit the saturation law to (I, R) points");
    auto sat_in = std::make_shared<std::string>();
    auto sat_report = std::make_shared<std::string>();
    auto sat_init = std::make_shared<SaturationParams>();
    fit_sat->add_option("--in", *sat_in, "CSV with columns I,R[,sigma]")
        ->required()
        ->check(CLI::ExistingFile);
    fit_sat->add_option("--init-rinf-cps", sat_init->R_inf,
                        "Initial R_inf [counts/s]; 0 = from data");
    fit_sat->add_option("--init-is", sat_init->I_s, "Initial I_s [input power units]; 0 = from data");
    fit_sat->add_option("--out", *sat_report, "Write a machine-readable report");

    fit_sat->callback([&, sat_in, sat_report, sat_init] {
        SaturationData data;
        for (const auto& row : read_numeric_csv(*sat_in, 2))
            data.points.push_back({row[0], row[1], row.size() > 2 ? row[2] : 0.0});

        SaturationParams init = *sat_init;
        if (init.R_inf <= 0.0)
            for (const auto& p : data.points) init.R_inf = std::max(init.R_inf, 1.5 * p.rate);
        if (init.I_s <= 0.0) {
            std::vector<double> powers;
            for (const auto& p : data.points) powers.push_back(p.intensity);
            std::nth_element(powers.begin(), powers.begin() + powers.size() / 2, powers.end());
            init.I_s = std::max(powers[powers.size() / 2], 1e-12);
        }
        FitResult fitres = fit_saturation(data, init);
        detail::print_fit_report(out, "saturation", fitres);
        if (!sat_report->empty()) atomic_write(*sat_report, detail::machine_report(fitres, {}));
        if (!fitres.converged) exit_code = exit_fit;
    });

    // fit lifetime
    auto* fit_tau = fit->add_subcommand("lifetime", "Fit a monoexponential decay");
    auto tau_in = std::make_shared<std::string>();
    auto tau_report = std::make_shared<std::string>();
    fit_tau->add_option("--in", *tau_in, "CSV with columns t_ns,counts")
        ->required()
        ->check(CLI::ExistingFile);
    fit_tau->add_option("--out", *tau_report, "Write a machine-readable report");

    fit_tau->callback([&, tau_in, tau_report] {
        DecayHistogram data;
        for (const auto& row : read_numeric_csv(*tau_in, 2)) {
            data.time_ns.push_back(row[0]);
            data.counts.push_back(row[1]);
        }
        FitResult fitres = fit_lifetime(data);
        detail::print_fit_report(out, "lifetime", fitres);
        if (!tau_report->empty()) atomic_write(*tau_report, detail::machine_report(fitres, {}));
        if (!fitres.converged) exit_code = exit_fit;
    });

    // fit dw
    auto* fit_dw = fit->add_subcommand("dw", "Debye-Waller factor of a spectrum");
    auto dw_in = std::make_shared<std::string>();
    auto dw_opts = std::make_shared<std::map<std::string, double>>();
    (*dw_opts)["zpl_min_nm"] = 0.0;
    (*dw_opts)["zpl_max_nm"] = 0.0;
    (*dw_opts)["baseline"] = 0.0;
    fit_dw->add_option("--in", *dw_in, "CSV with columns wavelength_nm,intensity")
        ->required()
        ->check(CLI::ExistingFile);
    fit_dw->add_option("--zpl-min-nm", (*dw_opts)["zpl_min_nm"], "ZPL window lower edge [nm]")
        ->required();
    fit_dw->add_option("--zpl-max-nm", (*dw_opts)["zpl_max_nm"], "ZPL window upper edge [nm]")
        ->required();
    fit_dw->add_option("--baseline", (*dw_opts)["baseline"],
                       "Constant baseline subtracted before integration");

    fit_dw->callback([&, dw_in, dw_opts] {
        Spectrum spec;
        for (const auto& row : read_numeric_csv(*dw_in, 2)) {
            spec.wavelength_nm.push_back(row[0]);
            spec.intensity.push_back(row[1]);
        }
        spec.zpl_min_nm = (*dw_opts)["zpl_min_nm"];
        spec.zpl_max_nm = (*dw_opts)["zpl_max_nm"];
        const double dw = debye_waller(spec, (*dw_opts)["baseline"]);
        out << "debye_waller = " << detail::fmt(dw) << "\n";
    });

    // fit yield
    auto* fit_yield = fit->add_subcommand("yield", "Quantum yield from the saturated count rate");
    auto yield_rates = std::make_shared<detail::RateFlags>();
    yield_rates->attach(fit_yield);
    auto yield_opts = std::make_shared<std::map<std::string, double>>();
    (*yield_opts)["rinf_cps"] = 0.0;
    (*yield_opts)["efficiency"] = 0.0;
    fit_yield->add_option("--rinf-cps", (*yield_opts)["rinf_cps"],
                          "Detected saturation rate R_inf [counts/s]")
        ->required()
        ->check(CLI::PositiveNumber);
    fit_yield->add_option("--efficiency", (*yield_opts)["efficiency"],
                          "Overall detection efficiency eta")
        ->required()
        ->check(CLI::Range(1e-12, 1.0));

    fit_yield->callback([&, yield_rates, yield_opts] {
        const YieldEstimate est = quantum_yield(yield_rates->to_params(),
                                                (*yield_opts)["rinf_cps"],
                                                (*yield_opts)["efficiency"]);
        out << "phi_f = " << detail::fmt(est.phi_F) << "\n";
        if (est.clamped) out << "  WARNING: raw estimate exceeded 1 and was clamped\n";
    });

    // --------------------------------------------------------------------- model
    auto* model = app.add_subcommand("model", "Sample the analytic curves");
    model->require_subcommand(1);

    // model g2
    auto* model_g2 = model->add_subcommand("g2", "Analytic g2(t)");
    auto mg2_rates = std::make_shared<detail::RateFlags>();
    mg2_rates->attach(model_g2);
    auto mg2_opts = std::make_shared<std::map<std::string, double>>();
    (*mg2_opts)["t_max_ns"] = 300.0;
    (*mg2_opts)["points"] = 600.0;
    auto mg2_out = std::make_shared<std::string>();
    auto mg2_svg = std::make_shared<std::string>();
    model_g2->add_option("--t-max-ns", (*mg2_opts)["t_max_ns"], "Delay range [ns]")
        ->check(CLI::PositiveNumber);
    model_g2->add_option("--points", (*mg2_opts)["points"], "Samples")
        ->check(CLI::Range(2.0, 1e7));
    model_g2->add_option("--out", *mg2_out, "Output CSV")->required();
    model_g2->add_option("--svg", *mg2_svg, "Optional SVG line plot");

    model_g2->callback([&, mg2_rates, mg2_opts, mg2_out, mg2_svg] {
        const RateParams rates = mg2_rates->to_params();
        const int n = static_cast<int>((*mg2_opts)["points"]);
        const double t_max = (*mg2_opts)["t_max_ns"] * ns_to_s;
        std::vector<double> t_ns;
        std::vector<std::vector<double>> rows;
        SvgSeries curve{"g2", {}, ""};
        for (int i = 0; i < n; ++i) {
            const double t = t_max * i / (n - 1);
            const double g = g2_analytic(rates, t);
            t_ns.push_back(t / ns_to_s);
            curve.y.push_back(g);
            rows.push_back({t / ns_to_s, g});
        }
        atomic_write(*mg2_out, serialize_table({"t_ns", "g2"}, rows));
        out << "model g2: wrote " << *mg2_out << "\n";
        detail::maybe_svg(*mg2_svg, "Intensity autocorrelation", "delay [ns]", "g2", t_ns,
                          {curve});
    });

    // model saturation
    auto* model_sat = model->add_subcommand("saturation", "Saturation curve R(I)");
    auto msat_opts = std::make_shared<std::map<std::string, double>>();
    (*msat_opts)["rinf_cps"] = 0.0;
    (*msat_opts)["is_power"] = 0.0;
    (*msat_opts)["i_max"] = 0.0;
    (*msat_opts)["points"] = 100.0;
    auto msat_out = std::make_shared<std::string>();
    auto msat_svg = std::make_shared<std::string>();
    model_sat->add_option("--rinf-cps", (*msat_opts)["rinf_cps"], "Asymptotic rate [counts/s]")
        ->required()
        ->check(CLI::PositiveNumber);
    model_sat->add_option("--is-power", (*msat_opts)["is_power"], "Saturation power I_s")
        ->required()
        ->check(CLI::PositiveNumber);
    model_sat->add_option("--i-max", (*msat_opts)["i_max"], "Power range; default 10*I_s")
        ->check(CLI::PositiveNumber);
    model_sat->add_option("--points", (*msat_opts)["points"], "Samples")->check(CLI::Range(2.0, 1e7));
    model_sat->add_option("--out", *msat_out, "Output CSV")->required();
    model_sat->add_option("--svg", *msat_svg, "Optional SVG line plot");

    model_sat->callback([&, msat_opts, msat_out, msat_svg] {
        const SaturationParams sat{(*msat_opts)["rinf_cps"], (*msat_opts)["is_power"]};
        const double i_max =
            (*msat_opts)["i_max"] > 0.0 ? (*msat_opts)["i_max"] : 10.0 * sat.I_s;
        const int n = static_cast<int>((*msat_opts)["points"]);
        std::vector<double> xs;
        std::vector<std::vector<double>> rows;
        SvgSeries curve{"R(I)", {}, ""};
        for (int i = 0; i < n; ++i) {
            const double power = i_max * i / (n - 1);
            const double rate = saturation_rate(sat, power);
            xs.push_back(power);
            curve.y.push_back(rate);
            rows.push_back({power, rate});
        }
        atomic_write(*msat_out, serialize_table({"intensity", "rate_cps"}, rows));
        out << "model saturation: wrote " << *msat_out << "\n";
        detail::maybe_svg(*msat_svg, "Saturation curve", "excitation power", "rate [counts/s]",
                          xs, {curve});
    });

    // model populations
    auto* model_pop = model->add_subcommand("populations", "Level populations vs time");
    auto mpop_rates = std::make_shared<detail::RateFlags>();
    mpop_rates->attach(model_pop);
    auto mpop_opts = std::make_shared<std::map<std::string, double>>();
    (*mpop_opts)["t_max_ns"] = 1000.0;
    (*mpop_opts)["points"] = 500.0;
    auto mpop_initial = std::make_shared<std::string>("ground");
    auto mpop_out = std::make_shared<std::string>();
    auto mpop_svg = std::make_shared<std::string>();
    model_pop->add_option("--t-max-ns", (*mpop_opts)["t_max_ns"], "Time range [ns]")
        ->check(CLI::PositiveNumber);
    model_pop->add_option("--points", (*mpop_opts)["points"], "Samples")->check(CLI::Range(2.0, 1e7));
    model_pop->add_option("--initial", *mpop_initial, "Initial state")
        ->check(CLI::IsMember({"ground", "excited", "metastable"}));
    model_pop->add_option("--out", *mpop_out, "Output CSV")->required();
    model_pop->add_option("--svg", *mpop_svg, "Optional SVG line plot");

    model_pop->callback([&, mpop_rates, mpop_opts, mpop_initial, mpop_out, mpop_svg] {
        const RateParams rates = mpop_rates->to_params();
        LevelPopulations initial = LevelPopulations::ground();
        if (*mpop_initial == "excited") initial = {0.0, 1.0, 0.0};
        if (*mpop_initial == "metastable") initial = {0.0, 0.0, 1.0};
        const int n = static_cast<int>((*mpop_opts)["points"]);
        const double t_max = (*mpop_opts)["t_max_ns"] * ns_to_s;
        std::vector<double> t_ns;
        SvgSeries s0{"rho0", {}, "#1f77b4"}, s1{"rho1", {}, "#d62728"}, s2{"rho2", {}, "#2ca02c"};
        std::vector<std::vector<double>> rows;
        for (int i = 0; i < n; ++i) {
            const double t = t_max * i / (n - 1);
            const LevelPopulations pop = propagate(rates, initial, t);
            t_ns.push_back(t / ns_to_s);
            s0.y.push_back(pop.rho0);
            s1.y.push_back(pop.rho1);
            s2.y.push_back(pop.rho2);
            rows.push_back({t / ns_to_s, pop.rho0, pop.rho1, pop.rho2});
        }
        atomic_write(*mpop_out, serialize_table({"t_ns", "rho0", "rho1", "rho2"}, rows));
        out << "model populations: wrote " << *mpop_out << "\n";
        detail::maybe_svg(*mpop_svg, "Level populations", "time [ns]", "occupation", t_ns,
                          {s0, s1, s2});
    });

    // ------------------------------------------------------------------- dispatch
    std::reverse(args.begin(), args.end());
    try {
        app.parse(std::move(args));
        if (!save_config.empty()) atomic_write(save_config, app.config_to_str(false, false));
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
            app.exit(e, out, err);
            return exit_ok;
        }
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const parameter_error& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const data_error& e) {
        err << "error: " << e.what() << "\n";
        return exit_data;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_data;
    }
    return exit_code;
}

}  // namespace photonstat::cli
