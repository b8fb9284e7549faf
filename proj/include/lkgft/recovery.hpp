#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "dfp.hpp"
#include "dynamics.hpp"
#include "error.hpp"
#include "koopman.hpp"
#include "metrics.hpp"
#include "observables.hpp"
#include "rng.hpp"
#include "sampling.hpp"

namespace lkgft {

/// Sampled observables stacked time-major in the order of plan.row_indices.
struct SampleMatrix {
    Eigen::VectorXd y;
    SamplingPlan plan;
};

struct OptimizerConfig {
    DfpConfig dfp;
    InitialRange init_range{0.0, 1.0}; ///< unsampled nodes start at the midpoint
    std::size_t restarts = 3;          ///< extra starts with unsampled entries redrawn from init_range
    std::uint64_t seed = 0;
};

struct RecoveryResult {
    Eigen::VectorXd x1_hat;
    Eigen::MatrixXd trajectory_hat;
    double objective = 0.0; ///< |y - S Theta psi(x1_hat)|^2
    std::size_t iterations = 0;
    bool converged = false;
    bool rank_verified = false;
    std::size_t best_start = 0;
    DfpTrace trace; ///< trace of the winning start
};

inline SampleMatrix take_samples(const Trajectory& trajectory, const ObservableSpec& spec, const SamplingPlan& plan) {
    detail::require(trajectory.tau() == plan.tau, "take_samples: trajectory horizon does not match plan");
    detail::require(trajectory.n() == spec.n, "take_samples: trajectory node count does not match spec");
    SampleMatrix s;
    s.plan = plan;
    s.y.resize(static_cast<Eigen::Index>(plan.tau * plan.observable_indices.size()));
    Eigen::Index k = 0;
    for (std::size_t t = 0; t < plan.tau; ++t) {
        const Eigen::VectorXd z = lift(spec, trajectory.states.col(static_cast<Eigen::Index>(t)));
        for (auto m : plan.observable_indices) s.y(k++) = z(static_cast<Eigen::Index>(m));
    }
    return s;
}

/// phi(x) = 1/2 |y - R psi(x)|^2 with R = S_Theta Theta, and its gradient
/// (psi^T R^T - y^T) R dpsi/dx.
class RecoveryObjective {
public:
    RecoveryObjective(const SampleMatrix& samples, const EvolutionStack& theta, const ObservableSpec& spec)
        : spec_(spec), y_(samples.y), r_(gather_rows(theta.theta, samples.plan.row_indices)) {
        detail::require(theta.M == spec.M(), "recovery: Theta does not match spec");
        detail::require(samples.plan.tau == theta.tau, "recovery: plan horizon does not match Theta");
        detail::require(r_.rows() == y_.size(), "recovery: sample length does not match plan");
    }

    Eigen::VectorXd residual(const Eigen::VectorXd& x) const { return r_ * lift(spec_, x) - y_; }

    /// Squared residual norm |R psi(x) - y|^2.
    double squared_residual(const Eigen::VectorXd& x) const { return residual(x).squaredNorm(); }

    double value(const Eigen::VectorXd& x) const { return 0.5 * squared_residual(x); }

    Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
        const Eigen::VectorXd r = residual(x);
        return (r.transpose() * r_ * lift_jacobian(spec_, x)).transpose();
    }

    /// Value and gradient in one pass; +inf outside the lift domain.
    double operator()(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
        try {
            const Eigen::VectorXd r = residual(x);
            grad = (r.transpose() * r_ * lift_jacobian(spec_, x)).transpose();
            return 0.5 * r.squaredNorm();
        } catch (const DomainError&) {
            grad.setConstant(x.size(), std::numeric_limits<double>::quiet_NaN());
            return std::numeric_limits<double>::infinity();
        }
    }

private:
    const ObservableSpec& spec_;
    Eigen::VectorXd y_;
    Eigen::MatrixXd r_;
};

/// Sampled nodes read off their time-1 linear observables; the rest at `fill`.
inline Eigen::VectorXd initial_guess(const SampleMatrix& samples, const ObservableSpec& spec, double fill) {
    Eigen::VectorXd x = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(spec.n), fill);
    const auto& obs = samples.plan.observable_indices;
    for (auto node : samples.plan.nodes) {
        const auto it = std::find(obs.begin(), obs.end(), spec.linear_index[node]);
        if (it != obs.end()) x(static_cast<Eigen::Index>(node)) = spec.C * samples.y(it - obs.begin());
    }
    return x;
}

/// z_t = Theta_t psi(x1), x_t = psi^{-1}(z_t); column 0 is x1 itself.
inline Eigen::MatrixXd reconstruct_from_theta(const Eigen::VectorXd& x1, const EvolutionStack& theta, const ObservableSpec& spec) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(spec.n), static_cast<Eigen::Index>(theta.tau));
    out.col(0) = x1;
    const Eigen::VectorXd z1 = lift(spec, x1);
    for (std::size_t t = 1; t < theta.tau; ++t) out.col(static_cast<Eigen::Index>(t)) = unlift(spec, theta.block(t) * z1);
    return out;
}

/// x_hat_t = psi^{-1}(K^{t-1} psi(x1_hat)); column 0 is x1_hat exactly.
inline Eigen::MatrixXd reconstruct_trajectory(const Eigen::VectorXd& x1_hat, const KoopmanModel& model, std::size_t tau) {
    detail::require(tau >= 1, "reconstruct_trajectory: tau must be at least 1");
    Eigen::MatrixXd out = rollout(model, x1_hat, tau);
    out.col(0) = x1_hat;
    return out;
}

/// Recover x1 from samples by DFP minimization of |y - S Theta psi(x)|^2.
/// The search runs in units of x / C; the stopping tolerance applies to the gradient in x.
inline RecoveryResult recover_initial_state(const SampleMatrix& samples, const EvolutionStack& theta,
                                            const ObservableSpec& spec, const OptimizerConfig& config = {}) {
    const RecoveryObjective objective(samples, theta, spec);
    const double c = spec.C;
    auto scaled = [&](const Eigen::VectorXd& u, Eigen::VectorXd& grad) {
        const double f = objective(c * u, grad);
        grad *= c;
        return f;
    };

    std::vector<bool> sampled(spec.n, false);
    for (auto v : samples.plan.nodes) sampled[v] = true;

    // The gradient in u = x / C is C times the gradient in x; the tolerance refers to the latter.
    DfpConfig dfp = config.dfp;
    dfp.gradient_tolerance *= c;

    RecoveryResult best;
    best.objective = std::numeric_limits<double>::infinity();
    const Eigen::VectorXd base = initial_guess(samples, spec, config.init_range.midpoint());
    Rng rng(config.seed);
    for (std::size_t start = 0; start <= config.restarts; ++start) {
        Eigen::VectorXd x0 = base;
        if (start > 0) {
            if (samples.plan.nodes.size() == spec.n) break; // nothing left to jitter
            for (std::size_t i = 0; i < spec.n; ++i)
                if (!sampled[i]) x0(static_cast<Eigen::Index>(i)) = rng.uniform(config.init_range.low, config.init_range.high);
        }
        DfpResult run;
        try {
            run = minimize_dfp(scaled, Eigen::VectorXd(x0 / c), dfp);
        } catch (const DomainError&) {
            continue;
        }
        const double obj = 2.0 * run.f;
        if (obj < best.objective) {
            best.x1_hat = c * run.x;
            best.objective = obj;
            best.iterations = run.iterations;
            best.converged = run.converged;
            best.best_start = start;
            best.trace = std::move(run.trace);
        }
    }
    if (!std::isfinite(best.objective)) throw DomainError("recover_initial_state: every start left the lift domain");
    best.rank_verified = verify_rank(samples.plan, theta, spec);
    best.trajectory_hat = reconstruct_from_theta(best.x1_hat, theta, spec);
    return best;
}

} // namespace lkgft
