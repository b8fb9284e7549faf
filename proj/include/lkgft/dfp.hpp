#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace lkgft {

struct DfpConfig {
    std::size_t max_iterations = 500;
    double gradient_tolerance = 1e-8;
    double c1 = 1e-4; ///< sufficient decrease
    double c2 = 0.9;  ///< curvature
    std::size_t max_resets = 3;
    std::size_t max_line_search_steps = 60;

    void validate() const {
        detail::require(0.0 < c1 && c1 < c2 && c2 < 1.0, "Wolfe constants need 0 < c1 < c2 < 1");
        detail::require(gradient_tolerance >= 0.0, "gradient tolerance must be non-negative");
    }
};

/// Per-run diagnostics used by the property tests.
struct DfpTrace {
    std::vector<double> objective; ///< f at x_0 and after every accepted step
    std::size_t curvature_skips = 0;
    std::size_t resets = 0;
    double max_asymmetry = 0.0; ///< max |H - H^T| / max |H| seen before symmetrization
    bool positive_definite = true;
};

struct DfpResult {
    Eigen::VectorXd x;
    double f = std::numeric_limits<double>::infinity();
    Eigen::VectorXd gradient;
    std::size_t iterations = 0;
    bool converged = false;
    DfpTrace trace;
};

namespace detail {

struct LinePoint {
    double alpha = 0.0;
    double f = 0.0;
    double df = 0.0;
    Eigen::VectorXd x;
    Eigen::VectorXd g;
};

/// Strong-Wolfe line search (bracketing then zoom). Non-finite trial values count as
/// sufficient-decrease failures so the step shrinks back into the domain.
template <class Fn>
bool wolfe_search(Fn& fg, const Eigen::VectorXd& x, double f0, const Eigen::VectorXd& g0, const Eigen::VectorXd& p,
                  const DfpConfig& cfg, LinePoint& out) {
    const double df0 = g0.dot(p);
    std::size_t evals = 0;
    auto eval = [&](double alpha) {
        LinePoint pt;
        pt.alpha = alpha;
        pt.x = x + alpha * p;
        pt.g.resize(x.size());
        pt.f = fg(pt.x, pt.g);
        pt.df = std::isfinite(pt.f) ? pt.g.dot(p) : std::numeric_limits<double>::quiet_NaN();
        ++evals;
        return pt;
    };
    auto armijo_fails = [&](const LinePoint& pt) { return !std::isfinite(pt.f) || pt.f > f0 + cfg.c1 * pt.alpha * df0; };
    auto curvature_ok = [&](const LinePoint& pt) { return std::abs(pt.df) <= -cfg.c2 * df0; };

    auto zoom = [&](LinePoint lo, LinePoint hi) {
        while (evals < cfg.max_line_search_steps) {
            double a = 0.5 * (lo.alpha + hi.alpha);
            if (std::isfinite(hi.f) && std::isfinite(lo.df)) {
                // Quadratic through lo (value, slope) and hi (value), safeguarded to the middle of the bracket.
                const double d = hi.alpha - lo.alpha;
                const double denom = 2.0 * (hi.f - lo.f - lo.df * d);
                if (denom != 0.0) {
                    const double cand = lo.alpha - lo.df * d * d / denom;
                    const double left = std::min(lo.alpha, hi.alpha), right = std::max(lo.alpha, hi.alpha);
                    const double margin = 0.1 * (right - left);
                    if (cand > left + margin && cand < right - margin) a = cand;
                }
            }
            LinePoint pt = eval(a);
            if (armijo_fails(pt) || pt.f >= lo.f) {
                hi = std::move(pt);
            } else {
                if (curvature_ok(pt)) {
                    out = std::move(pt);
                    return true;
                }
                if (pt.df * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
                lo = std::move(pt);
            }
            if (std::abs(hi.alpha - lo.alpha) <= 1e-16 * std::max(1.0, std::abs(lo.alpha))) break;
        }
        // Bracket collapsed: accept lo when it still decreases f.
        if (lo.alpha > 0.0 && !armijo_fails(lo)) {
            out = std::move(lo);
            return true;
        }
        return false;
    };

    LinePoint prev;
    prev.alpha = 0.0;
    prev.f = f0;
    prev.df = df0;
    prev.x = x;
    prev.g = g0;
    double alpha = 1.0;
    for (std::size_t i = 0; evals < cfg.max_line_search_steps; ++i) {
        LinePoint pt = eval(alpha);
        if (armijo_fails(pt) || (i > 0 && pt.f >= prev.f)) return zoom(prev, pt);
        if (curvature_ok(pt)) {
            out = std::move(pt);
            return true;
        }
        if (pt.df >= 0.0) return zoom(pt, prev);
        prev = std::move(pt);
        alpha *= 2.0;
    }
    return false;
}

} // namespace detail

/// Davidon-Fletcher-Powell quasi-Newton minimization.
/// `fg(x, grad)` returns f(x) and writes the gradient; it may return +inf outside the domain.
/// The inverse-Hessian update is skipped when s^T y <= 0; a failed line search resets the
/// approximation to the identity, at most `max_resets` times.
template <class Fn>
DfpResult minimize_dfp(Fn&& fg, Eigen::VectorXd x0, const DfpConfig& cfg = {}) {
    cfg.validate();
    const auto n = x0.size();
    DfpResult res;
    res.x = std::move(x0);
    res.gradient.resize(n);
    res.f = fg(res.x, res.gradient);
    if (!std::isfinite(res.f)) throw DomainError("minimize_dfp: objective is not finite at the initial point");
    res.trace.objective.push_back(res.f);

    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
    bool fresh = true; // h is the identity and has not been rescaled yet
    while (res.iterations < cfg.max_iterations) {
        if (res.gradient.norm() <= cfg.gradient_tolerance) {
            res.converged = true;
            break;
        }
        Eigen::VectorXd p = -h * res.gradient;
        detail::LinePoint step;
        const bool descent = res.gradient.dot(p) < 0.0;
        if (!descent || !detail::wolfe_search(fg, res.x, res.f, res.gradient, p, cfg, step)) {
            if (fresh || res.trace.resets >= cfg.max_resets) break;
            ++res.trace.resets;
            h.setIdentity();
            fresh = true;
            continue;
        }

        const Eigen::VectorXd s = step.x - res.x;
        const Eigen::VectorXd y = step.g - res.gradient;
        res.x = std::move(step.x);
        res.gradient = std::move(step.g);
        res.f = step.f;
        ++res.iterations;
        res.trace.objective.push_back(res.f);

        const double sy = s.dot(y);
        if (!(sy > 1e-300) || !(sy > 1e-14 * s.norm() * y.norm())) {
            ++res.trace.curvature_skips;
            continue;
        }
        if (fresh) {
            h *= sy / y.squaredNorm();
            fresh = false;
        }
        const Eigen::VectorXd hy = h * y;
        const double yhy = y.dot(hy);
        if (!(yhy > 0.0)) {
            ++res.trace.curvature_skips;
            continue;
        }
        h += (s * s.transpose()) / sy - (hy * hy.transpose()) / yhy;
        const double scale = h.cwiseAbs().maxCoeff();
        if (scale > 0.0)
            res.trace.max_asymmetry = std::max(res.trace.max_asymmetry, (h - h.transpose()).cwiseAbs().maxCoeff() / scale);
        h = 0.5 * (h + h.transpose()).eval();
        if (h.llt().info() != Eigen::Success) res.trace.positive_definite = false;
    }
    if (!res.converged && res.gradient.norm() <= cfg.gradient_tolerance) res.converged = true;
    return res;
}

} // namespace lkgft
