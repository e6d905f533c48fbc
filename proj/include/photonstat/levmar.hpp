#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "photonstat/errors.hpp"

namespace photonstat {

// How a parameter is presented to the optimizer. Rates and amplitudes are
// optimized as log(value), which enforces positivity and gives sane steps
// across decades; offsets (e.g. a baseline floor) stay linear.
enum class ParamScale { linear, log };

struct FitParam {
    std::string name;
    double init = 0.0;
    ParamScale scale = ParamScale::log;
};

struct FitOptions {
    int max_iterations = 500;
    double xtol = 1e-8;   // relative parameter step for convergence
    double ftol = 1e-12;  // relative cost decrease for convergence
};

struct FitResult {
    std::vector<std::string> names;
    Eigen::VectorXd values;      // physical (back-transformed) parameters
    Eigen::VectorXd std_errors;  // 1-sigma, from the curvature at the optimum
    Eigen::MatrixXd covariance;  // physical-space covariance
    double chi2 = 0.0;
    double reduced_chi2 = 0.0;
    double gradient_norm = 0.0;  // inf-norm of J^T r at the optimum (internal space)
    int n_iterations = 0;
    int n_data = 0;
    bool converged = false;
    bool flagged = false;  // parameter ran to a boundary / not identifiable
    std::string message;

    double value(const std::string& name) const { return values[index(name)]; }
    double std_error(const std::string& name) const { return std_errors[index(name)]; }

    Eigen::Index index(const std::string& name) const {
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(names.size()); ++i)
            if (names[static_cast<std::size_t>(i)] == name) return i;
        throw parameter_error("no fit parameter named '" + name + "'");
    }
};

// Weighted residual vector for a given physical parameter vector; the cost
// minimized is |r|^2.
using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

namespace detail {

inline constexpr double log_clamp = 690.0;  // exp() stays finite

inline double to_internal(double v, ParamScale s) {
    if (s == ParamScale::linear) return v;
    if (!(v > 0.0)) throw parameter_error("log-scaled fit parameter must start > 0");
    return std::log(v);
}

inline double to_physical(double v, ParamScale s) {
    return s == ParamScale::linear ? v : std::exp(std::clamp(v, -log_clamp, log_clamp));
}

}  // namespace detail

// Dense Levenberg-Marquardt with numeric forward-difference Jacobian and
// Nielsen damping. Convergence when the relative parameter step drops below
// xtol or an accepted step decreases the cost by less than ftol relative.
inline FitResult levmar_fit(const ResidualFn& residuals, const std::vector<FitParam>& params,
                            const FitOptions& options = {}) {
    const int n_par = static_cast<int>(params.size());
    if (n_par == 0) throw parameter_error("no free parameters to fit");

    Eigen::VectorXd theta(n_par);
    for (int i = 0; i < n_par; ++i)
        theta[i] = detail::to_internal(params[static_cast<std::size_t>(i)].init,
                                       params[static_cast<std::size_t>(i)].scale);

    auto physical = [&](const Eigen::VectorXd& th) {
        Eigen::VectorXd p(n_par);
        for (int i = 0; i < n_par; ++i)
            p[i] = detail::to_physical(th[i], params[static_cast<std::size_t>(i)].scale);
        return p;
    };

    Eigen::VectorXd r = residuals(physical(theta));
    const int n_data = static_cast<int>(r.size());
    if (n_data < n_par)
        throw parameter_error("fewer data points (" + std::to_string(n_data) +
                              ") than free parameters (" + std::to_string(n_par) + ")");
    double cost = r.squaredNorm();

    auto jacobian = [&](const Eigen::VectorXd& th, const Eigen::VectorXd& r0) {
        Eigen::MatrixXd jac(n_data, n_par);
        for (int i = 0; i < n_par; ++i) {
            const double h = 1e-7 * std::max(1.0, std::abs(th[i]));
            Eigen::VectorXd th_step = th;
            th_step[i] += h;
            jac.col(i) = (residuals(physical(th_step)) - r0) / h;
        }
        return jac;
    };

    Eigen::MatrixXd jac = jacobian(theta, r);
    Eigen::MatrixXd jtj = jac.transpose() * jac;
    Eigen::VectorXd grad = jac.transpose() * r;

    // dimensionless Marquardt parameter; the damping is mu * diag(J^T J)
    double mu = 1e-3;
    double nu = 2.0;
    bool converged = false;
    int iter = 0;

    for (; iter < options.max_iterations && !converged; ++iter) {
        const Eigen::VectorXd damping = (jtj.diagonal().array().max(1e-30)).matrix();
        Eigen::MatrixXd damped = jtj;
        damped.diagonal() += mu * damping;
        const Eigen::VectorXd step = damped.ldlt().solve(-grad);

        if (!step.allFinite()) {
            mu *= nu;
            nu *= 2.0;
            if (mu > 1e300) break;
            continue;
        }

        Eigen::VectorXd theta_new = theta + step;
        for (int i = 0; i < n_par; ++i)
            if (params[static_cast<std::size_t>(i)].scale == ParamScale::log)
                theta_new[i] = std::clamp(theta_new[i], -detail::log_clamp, detail::log_clamp);

        const Eigen::VectorXd r_new = residuals(physical(theta_new));
        const double cost_new = r_new.squaredNorm();

        if (std::isfinite(cost_new) && cost_new < cost) {
            const double decrease = cost - cost_new;
            const double step_ratio = step.norm() / std::max(theta.norm(), options.xtol);
            // Nielsen damping update: gain ratio of actual vs predicted decrease
            const double predicted = step.dot(mu * damping.cwiseProduct(step) - grad);
            const double rho = predicted > 0.0 ? decrease / predicted : 1.0;
            theta = theta_new;
            r = r_new;
            cost = cost_new;
            jac = jacobian(theta, r);
            jtj = jac.transpose() * jac;
            grad = jac.transpose() * r;
            mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
            nu = 2.0;
            if (step_ratio < options.xtol || decrease <= options.ftol * std::max(cost, options.ftol))
                converged = true;
        } else {
            // a proposed step below the resolution limit that still fails to
            // improve the cost means we are at the optimum
            if (step.norm() < options.xtol * (theta.norm() + options.xtol)) {
                converged = true;
                break;
            }
            mu *= nu;
            nu *= 2.0;
            if (mu > 1e300) break;  // no further progress possible
        }
    }

    FitResult result;
    result.n_data = n_data;
    result.n_iterations = iter;
    result.converged = converged;
    result.chi2 = cost;
    result.reduced_chi2 = cost / std::max(1, n_data - n_par);
    result.gradient_norm = grad.cwiseAbs().maxCoeff();

    result.names.reserve(static_cast<std::size_t>(n_par));
    for (const auto& p : params) result.names.push_back(p.name);
    result.values = physical(theta);

    // covariance via the curvature at the optimum, mapped back through the
    // delta method (d exp(t)/dt = exp(t))
    Eigen::MatrixXd cov_internal =
        jtj.completeOrthogonalDecomposition().pseudoInverse();
    Eigen::VectorXd scale_jac(n_par);
    for (int i = 0; i < n_par; ++i)
        scale_jac[i] =
            params[static_cast<std::size_t>(i)].scale == ParamScale::log ? result.values[i] : 1.0;
    result.covariance = scale_jac.asDiagonal() * cov_internal * scale_jac.asDiagonal();
    result.std_errors = result.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();

    // a log parameter collapsing toward zero, or a degenerate curvature
    // (rank-deficient J^T J), means the data cannot identify the parameters
    for (int i = 0; i < n_par; ++i) {
        const auto& p = params[static_cast<std::size_t>(i)];
        if (p.scale == ParamScale::log && result.values[i] < 1e-8 * p.init) {
            result.flagged = true;
            result.message = "parameter '" + p.name + "' ran to the zero boundary (not identifiable)";
        }
    }
    if (!result.flagged) {
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigs(jtj);
        const double eig_max = eigs.eigenvalues().maxCoeff();
        if (!(eigs.eigenvalues().minCoeff() > 1e-10 * eig_max)) {
            result.flagged = true;
            result.message = "degenerate curvature: some parameter combination is not "
                             "identified by the data";
        }
    }
    if (!converged && result.message.empty())
        result.message = "did not converge within " + std::to_string(options.max_iterations) +
                         " iterations; best point returned";
    return result;
}

}  // namespace photonstat
