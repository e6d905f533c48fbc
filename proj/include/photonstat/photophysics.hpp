#pragma once

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "photonstat/errors.hpp"

namespace photonstat {

// Rates of the three-level emitter, all in s^-1. States: 0 ground,
// 1 excited, 2 metastable (shelving). The radiative transition is 1 -> 0.
struct RateParams {
    double k = 0.0;        // absorption (pump) rate, 0 -> 1
    double inv_T1 = 0.0;   // excited-state relaxation rate 1/T1, 1 -> 0
    double gamma12 = 0.0;  // intersystem crossing rate, 1 -> 2
    double gamma20 = 0.0;  // metastable decay rate, 2 -> 0

    // Total depopulation rate of the excited state, Gamma = 1/T1 + gamma12.
    double total_excited_decay() const { return inv_T1 + gamma12; }

    // Mean of the two nonzero decay eigenvalues, gamma0 = (Gamma + 2k + gamma20)/2.
    double gamma0() const { return 0.5 * (total_excited_decay() + 2.0 * k + gamma20); }

    // Radicand of the eigenvalue split, ((Gamma + 2k - gamma20)/2)^2 - gamma12*k.
    double split_radicand() const {
        const double half = 0.5 * (total_excited_decay() + 2.0 * k - gamma20);
        return half * half - gamma12 * k;
    }

    // Eigenvalue split R; the nonzero eigenvalues of the generator are
    // -(gamma0 -+ R). Throws when the radicand is negative.
    double eigenvalue_split() const {
        const double rad = split_radicand();
        if (rad < 0.0) {
            throw oscillatory_regime_error(
                "eigenvalue split radicand is negative (" + std::to_string(rad) +
                " s^-2): rates put the emitter in the oscillatory regime, outside "
                "the closed-form correlator's domain");
        }
        return std::sqrt(rad);
    }

    // gamma0^2 - R^2 = gamma20*(Gamma + 2k) + gamma12*k, computed from the
    // product form (all terms positive, no cancellation).
    double eigenvalue_product() const {
        return gamma20 * (total_excited_decay() + 2.0 * k) + gamma12 * k;
    }

    // Slow decay rate gamma0 - R, evaluated as (gamma0^2 - R^2)/(gamma0 + R)
    // so it stays accurate when R approaches gamma0.
    double lambda_slow() const {
        const double fast = lambda_fast();
        if (fast <= 0.0) return 0.0;  // all rates zero
        return eigenvalue_product() / fast;
    }

    // Fast decay rate gamma0 + R.
    double lambda_fast() const { return gamma0() + eigenvalue_split(); }

    void validate() const {
        auto bad = [](double x) { return !std::isfinite(x) || x < 0.0; };
        if (bad(k) || bad(inv_T1) || bad(gamma12) || bad(gamma20))
            throw parameter_error("rates must be finite and >= 0");
        if (inv_T1 <= 0.0)
            throw parameter_error("excited-state relaxation rate 1/T1 must be > 0");
    }

    void require_pumped() const {
        validate();
        if (k <= 0.0) throw parameter_error("operation requires an absorption rate k > 0");
    }
};

// Occupation probabilities of the three levels.
struct LevelPopulations {
    double rho0 = 1.0;  // ground
    double rho1 = 0.0;  // excited
    double rho2 = 0.0;  // metastable

    double sum() const { return rho0 + rho1 + rho2; }

    Eigen::Vector3d to_vector() const { return {rho0, rho1, rho2}; }
    static LevelPopulations from_vector(const Eigen::Vector3d& v) {
        return {v[0], v[1], v[2]};
    }

    void validate(double sum_tol = 1e-9, double neg_tol = 1e-12) const {
        for (double c : {rho0, rho1, rho2}) {
            if (!std::isfinite(c) || c < -neg_tol || c > 1.0 + neg_tol)
                throw parameter_error("population component outside [0, 1]");
        }
        if (std::abs(sum() - 1.0) > sum_tol)
            throw parameter_error("populations must sum to 1");
    }

    static LevelPopulations ground() { return {1.0, 0.0, 0.0}; }
};

// Saturation law parameters: detected rate approaches R_inf as the
// excitation power grows past I_s.
struct SaturationParams {
    double R_inf = 0.0;  // asymptotic count rate [counts/s]
    double I_s = 0.0;    // excitation power at half saturation

    void validate() const {
        if (!(std::isfinite(R_inf) && R_inf > 0.0))
            throw parameter_error("R_inf must be finite and > 0");
        if (!(std::isfinite(I_s) && I_s > 0.0))
            throw parameter_error("I_s must be finite and > 0");
    }
};

// Generator matrix M of the rate equations, d rho/dt = M rho with
// rho = (rho0, rho1, rho2):
//   rho1' = -(Gamma + k) rho1 + k rho0
//   rho0' = (1/T1 + k) rho1 - k rho0 + gamma20 rho2
//   rho2' = gamma12 rho1 - gamma20 rho2
// Every column sums to zero, so the total population is conserved exactly.
inline Eigen::Matrix3d rate_matrix(const RateParams& p) {
    p.validate();
    const double Gamma = p.total_excited_decay();
    Eigen::Matrix3d m;
    m << -p.k, p.inv_T1 + p.k, p.gamma20,
          p.k, -(Gamma + p.k), 0.0,
          0.0, p.gamma12,      -p.gamma20;
    return m;
}

namespace detail {

// exp(A) by scaling and squaring with a Taylor series; adequate for the
// well-conditioned 3x3 generators seen here and used only when the
// eigendecomposition path is ill-separated.
inline Eigen::Matrix3d expm_series(Eigen::Matrix3d a) {
    const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();  // inf-norm
    int squarings = 0;
    if (norm > 0.5) {
        squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
        a *= std::ldexp(1.0, -squarings);
    }
    Eigen::Matrix3d result = Eigen::Matrix3d::Identity();
    Eigen::Matrix3d term = Eigen::Matrix3d::Identity();
    for (int n = 1; n <= 40; ++n) {
        term = (term * a / static_cast<double>(n)).eval();
        result += term;
        if (term.cwiseAbs().maxCoeff() < std::numeric_limits<double>::epsilon()) break;
    }
    for (int i = 0; i < squarings; ++i) result = (result * result).eval();
    return result;
}

}  // namespace detail

// Populations at time t under the rate equations. Uses the spectral form
// exp(tM) x = P0 x + exp(-ls t) P1 x + exp(-lf t) P2 x (Lagrange projectors
// over the known eigenvalues {0, -lambda_slow, -lambda_fast}) when the
// eigenvalues are well separated, otherwise a scaled-and-squared series.
inline LevelPopulations propagate(const RateParams& p, const LevelPopulations& initial,
                                  double t) {
    p.validate();
    initial.validate();
    if (!(std::isfinite(t) && t >= 0.0)) throw parameter_error("propagation time must be >= 0");
    if (t == 0.0) return initial;

    const Eigen::Matrix3d m = rate_matrix(p);
    const Eigen::Vector3d x = initial.to_vector();

    const double rad = p.split_radicand();
    bool spectral = rad >= 0.0;
    double ls = 0.0, lf = 0.0;
    if (spectral) {
        ls = p.lambda_slow();
        lf = p.lambda_fast();
        // need 0, -ls, -lf pairwise separated relative to the largest scale
        const double gap = std::min(ls, lf - ls);
        spectral = lf > 0.0 && gap > 1e-8 * lf;
    }

    Eigen::Vector3d y;
    if (spectral) {
        const Eigen::Vector3d mx = m * x;
        const Eigen::Vector3d p0 = (m * mx + (ls + lf) * mx + ls * lf * x) / (ls * lf);
        const Eigen::Vector3d p1 = -(m * (mx + lf * x)) / (ls * (lf - ls));
        const Eigen::Vector3d p2 = (m * (mx + ls * x)) / (lf * (lf - ls));
        y = p0 + std::exp(-ls * t) * p1 + std::exp(-lf * t) * p2;
    } else {
        y = detail::expm_series(m * t) * x;
    }
    return LevelPopulations::from_vector(y);
}

// Stationary distribution: the normalized null vector of the generator.
//   rho1 = k*gamma20 / (gamma20*(Gamma + 2k) + gamma12*k)
//   rho2 = (gamma12/gamma20) * rho1
inline LevelPopulations steady_state(const RateParams& p) {
    p.require_pumped();
    if (p.gamma20 <= 0.0) {
        if (p.gamma12 > 0.0) return {0.0, 0.0, 1.0};  // metastable state absorbs everything
        // gamma12 = gamma20 = 0: state 2 decoupled, two-level chain on {0, 1}
        const double rho1 = p.k / (p.total_excited_decay() + 2.0 * p.k);
        return {1.0 - rho1, rho1, 0.0};
    }
    const double rho1 = p.k * p.gamma20 / p.eigenvalue_product();
    const double rho2 = (p.gamma12 / p.gamma20) * rho1;
    return {1.0 - rho1 - rho2, rho1, rho2};
}

// Two-photon correlator p(t) [s^-1]:
//   p(t) = (k/T1) [ gamma20/(gamma0^2 - R^2)
//                   + (1 - gamma20/(gamma0 - R)) e^{-(gamma0-R)t} / (2R)
//                   - (1 - gamma20/(gamma0 + R)) e^{-(gamma0+R)t} / (2R) ]
// evaluated in a regrouped form that stays finite as R -> 0 and yields an
// exact 0 at t = 0:
//   p(t) = (k/T1) [ (gamma20/prod)(1 - e^{-ls t}(1 + ls D)) + e^{-ls t} D ]
// with prod = ls*lf, D = (1 - e^{-2Rt})/(2R).
inline double two_photon_correlator(const RateParams& p, double t) {
    p.require_pumped();
    if (!(std::isfinite(t) && t >= 0.0)) throw parameter_error("correlator delay must be >= 0");

    if (p.gamma12 == 0.0 && p.gamma20 == 0.0) {
        // decoupled metastable state: plain two-level correlator
        const double total = p.total_excited_decay() + 2.0 * p.k;
        return p.k * p.inv_T1 * (-std::expm1(-total * t)) / total;
    }

    const double split = p.eigenvalue_split();  // throws in the oscillatory regime
    const double ls = p.lambda_slow();
    const double prod = p.eigenvalue_product();
    const double two_r_t = 2.0 * split * t;
    const double d = (split > 0.0) ? -std::expm1(-two_r_t) / (2.0 * split) : t;
    const double slow = std::exp(-ls * t);
    return p.k * p.inv_T1 *
           ((p.gamma20 / prod) * (1.0 - slow * (1.0 + ls * d)) + slow * d);
}

// Normalized autocorrelation g2(t) = p(t)/p(inf). Antibunched at zero delay
// (exactly 0), 1 at infinity, and exceeds 1 at intermediate delays whenever
// shelving is active (gamma12 > 0).
inline double g2_analytic(const RateParams& p, double t) {
    p.require_pumped();
    if (!(std::isfinite(t) && t >= 0.0)) throw parameter_error("correlator delay must be >= 0");

    if (p.gamma12 == 0.0) {
        // two-level limit: g2(t) = 1 - e^{-(Gamma + 2k) t}
        const double total = p.total_excited_decay() + 2.0 * p.k;
        return -std::expm1(-total * t);
    }
    if (p.gamma20 <= 0.0)
        throw parameter_error(
            "g2 is undefined for gamma20 = 0 with gamma12 > 0: the emitter shelves "
            "permanently and the steady-state emission rate vanishes");

    const double split = p.eigenvalue_split();
    const double ls = p.lambda_slow();
    const double prod = p.eigenvalue_product();
    const double d = (split > 0.0) ? -std::expm1(-2.0 * split * t) / (2.0 * split) : t;
    const double slow = std::exp(-ls * t);
    // g2 = 1 + e^{-ls t} [ (prod/gamma20) D - (1 + ls D) ]; exact 0 at t = 0,
    // exact 1 as t -> inf.
    return 1.0 + slow * ((prod / p.gamma20) * d - (1.0 + ls * d));
}

// Saturation law R(I) = R_inf * (I/I_s) / (1 + I/I_s), arranged as
// R_inf / (1 + I_s/I) so that half saturation at I = I_s is exact.
inline double saturation_rate(const SaturationParams& sat, double intensity) {
    sat.validate();
    if (!(std::isfinite(intensity) && intensity >= 0.0))
        throw parameter_error("excitation power must be >= 0");
    if (intensity == 0.0) return 0.0;
    return sat.R_inf / (1.0 + sat.I_s / intensity);
}

// Maximum (fully saturated) emission rate of the three-level emitter:
//   R_inf = (1/T1 + gamma12) * phi_F / (2 + gamma12/gamma20)
// For gamma12 = 0 this reduces to the two-level ceiling (1/T1) phi_F / 2.
inline double max_emission_rate(const RateParams& p, double phi_F) {
    p.validate();
    if (!(std::isfinite(phi_F) && phi_F > 0.0 && phi_F <= 1.0))
        throw parameter_error("quantum yield must be in (0, 1]");
    double shelving = 2.0;
    if (p.gamma12 > 0.0) {
        if (p.gamma20 <= 0.0)
            throw parameter_error(
                "max emission rate diverges to zero: gamma20 = 0 with gamma12 > 0 "
                "means permanent shelving");
        shelving += p.gamma12 / p.gamma20;
    }
    return (p.inv_T1 + p.gamma12) * phi_F / shelving;
}

}  // namespace photonstat
