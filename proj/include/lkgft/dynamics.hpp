#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "error.hpp"
#include "graph.hpp"
#include "rng.hpp"

namespace lkgft {

enum class DynamicsKind { Biochemical, Regulatory };

/// Whether coupling sums run over graph neighbours or over every node.
enum class Coupling { Adjacency, AllPairs };

inline std::string to_string(DynamicsKind k) {
    return k == DynamicsKind::Biochemical ? "biochemical" : "regulatory";
}

inline DynamicsKind dynamics_kind_from_string(const std::string& s) {
    if (s == "biochemical") return DynamicsKind::Biochemical;
    if (s == "regulatory") return DynamicsKind::Regulatory;
    throw InvalidArgument("unknown dynamics kind '" + s + "'");
}

inline std::string to_string(Coupling c) { return c == Coupling::Adjacency ? "adjacency" : "all_pairs"; }

inline Coupling coupling_from_string(const std::string& s) {
    if (s == "adjacency") return Coupling::Adjacency;
    if (s == "all_pairs") return Coupling::AllPairs;
    throw InvalidArgument("unknown coupling '" + s + "'");
}

struct DynamicsParams {
    DynamicsKind kind = DynamicsKind::Biochemical;
    double F = 10.0; ///< flow-in (biochemical only)
    double B = 1.0;  ///< decay
    double R = 1.0;  ///< coupling rate
    double dt = 0.01;
    int steps_per_sample = 10;
    Coupling coupling = Coupling::Adjacency;

    static DynamicsParams biochemical() { return {}; }

    static DynamicsParams regulatory() {
        DynamicsParams p;
        p.kind = DynamicsKind::Regulatory;
        p.F = 0.0;
        return p;
    }

    void validate() const {
        detail::require(B > 0.0, "decay rate B must be positive");
        detail::require(R >= 0.0, "coupling rate R must be non-negative");
        detail::require(dt > 0.0, "dt must be positive");
        detail::require(steps_per_sample >= 1, "steps_per_sample must be at least 1");
    }

    /// Continuous time covered by one discrete tick.
    double tick() const { return dt * steps_per_sample; }
};

/// Range (low, high) initial states are drawn from for each dynamics.
struct InitialRange {
    double low = 0.0;
    double high = 1.0;

    double midpoint() const { return 0.5 * (low + high); }
};

inline InitialRange default_initial_range(DynamicsKind kind) {
    return kind == DynamicsKind::Biochemical ? InitialRange{0.0, 1.0} : InitialRange{0.0, 100.0};
}

/// Node values over time; column t holds x_{t+1}.
struct Trajectory {
    Eigen::MatrixXd states;
    DynamicsKind kind = DynamicsKind::Biochemical;
    std::uint64_t seed = 0;

    std::size_t n() const noexcept { return static_cast<std::size_t>(states.rows()); }
    std::size_t tau() const noexcept { return static_cast<std::size_t>(states.cols()); }
};

/// Right-hand side of the network ODE.
inline Eigen::VectorXd derivative(const Eigen::VectorXd& x, const Graph& graph, const DynamicsParams& params) {
    detail::require(static_cast<std::size_t>(x.size()) == graph.n(), "state length does not match graph size");
    if (!x.allFinite()) throw DomainError("derivative: non-finite state");

    const auto& a = graph.adjacency();
    const bool all_pairs = params.coupling == Coupling::AllPairs;
    Eigen::VectorXd dx(x.size());
    switch (params.kind) {
    case DynamicsKind::Biochemical: {
        const Eigen::VectorXd coupled = all_pairs ? Eigen::VectorXd::Constant(x.size(), x.sum()) : Eigen::VectorXd(a * x);
        dx = (params.F - params.B * x.array() - params.R * x.array() * coupled.array()).matrix();
        break;
    }
    case DynamicsKind::Regulatory: {
        const Eigen::VectorXd hill = (x.array().square() / (1.0 + x.array().square())).matrix();
        const Eigen::VectorXd coupled = all_pairs ? Eigen::VectorXd::Constant(x.size(), hill.sum()) : Eigen::VectorXd(a * hill);
        dx = -params.B * x + params.R * coupled;
        break;
    }
    }
    return dx;
}

/// One classical Runge-Kutta step of size dt.
inline Eigen::VectorXd rk4_step(const Eigen::VectorXd& x, const Graph& graph, const DynamicsParams& params, double dt) {
    const Eigen::VectorXd k1 = derivative(x, graph, params);
    const Eigen::VectorXd k2 = derivative(x + 0.5 * dt * k1, graph, params);
    const Eigen::VectorXd k3 = derivative(x + 0.5 * dt * k2, graph, params);
    const Eigen::VectorXd k4 = derivative(x + dt * k3, graph, params);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline constexpr double kOverflowGuard = 1e12;

/// Integrate tau discrete ticks starting from x1 (column 0 equals x1).
inline Trajectory simulate(const Graph& graph, const DynamicsParams& params, const Eigen::VectorXd& x1,
                           std::size_t tau, std::uint64_t seed = 0) {
    params.validate();
    detail::require(tau >= 2, "simulate: horizon tau must be at least 2");
    detail::require(static_cast<std::size_t>(x1.size()) == graph.n(), "initial state length does not match graph size");
    if (!x1.allFinite()) throw DomainError("simulate: non-finite initial state");

    Trajectory traj;
    traj.kind = params.kind;
    traj.seed = seed;
    traj.states.resize(x1.size(), static_cast<Eigen::Index>(tau));
    traj.states.col(0) = x1;
    Eigen::VectorXd x = x1;
    for (std::size_t t = 1; t < tau; ++t) {
        for (int s = 0; s < params.steps_per_sample; ++s) {
            x = rk4_step(x, graph, params, params.dt);
            if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kOverflowGuard)
                throw DivergenceError("simulate: state diverged at time index " + std::to_string(t + 1), t + 1);
        }
        traj.states.col(static_cast<Eigen::Index>(t)) = x;
    }
    return traj;
}

/// i.i.d. uniform state on the open interval (low, high).
inline Eigen::VectorXd random_initial_state(std::size_t n, double low, double high, std::uint64_t seed) {
    detail::require(low < high, "random_initial_state: low must be below high");
    Rng rng(seed);
    Eigen::VectorXd x(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.uniform(low, high);
    return x;
}

} // namespace lkgft
