#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "dynamics.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "observables.hpp"
#include "rng.hpp"

namespace lkgft {

/// Snapshot pairs: column k of Y is the one-step successor of column k of X.
struct TrainingSet {
    Eigen::MatrixXd X;
    Eigen::MatrixXd Y;
    std::size_t D = 0;

    std::size_t columns() const noexcept { return static_cast<std::size_t>(X.cols()); }
};

struct KoopmanModel {
    Eigen::MatrixXd K;
    ObservableSpec spec;
    double residual = 0.0; ///< |Y - K X|_F / |Y|_F on the training data
};

/// Stacked powers [K^0; K^1; ...; K^{tau-1}], (tau*M) x M.
struct EvolutionStack {
    Eigen::MatrixXd theta;
    std::size_t tau = 0;
    std::size_t M = 0;

    auto block(std::size_t t) const {
        return theta.middleRows(static_cast<Eigen::Index>(t * M), static_cast<Eigen::Index>(M));
    }
};

inline TrainingSet assemble_training(std::span<const Trajectory> trajectories, const ObservableSpec& spec) {
    detail::require(!trajectories.empty(), "assemble_training: no trajectories");
    const std::size_t tau = trajectories.front().tau();
    detail::require(tau >= 2, "assemble_training: trajectories need tau >= 2");

    TrainingSet ts;
    ts.D = trajectories.size();
    const auto per = static_cast<Eigen::Index>(tau - 1);
    ts.X.resize(static_cast<Eigen::Index>(spec.M()), per * static_cast<Eigen::Index>(ts.D));
    ts.Y.resizeLike(ts.X);
    for (std::size_t d = 0; d < trajectories.size(); ++d) {
        const auto& tr = trajectories[d];
        detail::require(tr.n() == spec.n, "assemble_training: trajectory node count does not match spec");
        detail::require(tr.tau() == tau, "assemble_training: trajectories must share tau");
        Eigen::MatrixXd z(static_cast<Eigen::Index>(spec.M()), static_cast<Eigen::Index>(tau));
        for (Eigen::Index t = 0; t < z.cols(); ++t) {
            try {
                z.col(t) = lift(spec, tr.states.col(t));
            } catch (const DomainError& e) {
                throw DomainError("assemble_training: trajectory " + std::to_string(d) + ", time index " +
                                  std::to_string(t + 1) + ": " + e.what());
            }
        }
        const auto off = static_cast<Eigen::Index>(d) * per;
        ts.X.middleCols(off, per) = z.leftCols(per);
        ts.Y.middleCols(off, per) = z.rightCols(per);
    }
    return ts;
}

/// Column-wise union of two training sets.
inline TrainingSet concat_training(const TrainingSet& a, const TrainingSet& b) {
    detail::require(a.X.rows() == b.X.rows(), "concat_training: observable dimension mismatch");
    TrainingSet out;
    out.D = a.D + b.D;
    out.X.resize(a.X.rows(), a.X.cols() + b.X.cols());
    out.Y.resizeLike(out.X);
    out.X << a.X, b.X;
    out.Y << a.Y, b.Y;
    return out;
}

inline constexpr double kSvdRelativeCutoff = 1e-10;

/// Least squares K = argmin |Y - K X|_F^2 + ridge |K|_F^2 through a truncated SVD of X.
inline KoopmanModel fit(const TrainingSet& training, const ObservableSpec& spec, double ridge = 0.0) {
    detail::require(training.columns() >= 1, "fit: training set is empty");
    detail::require(static_cast<std::size_t>(training.X.rows()) == spec.M(), "fit: training rows do not match spec");
    detail::require(ridge >= 0.0, "fit: ridge must be non-negative");
    if (training.X.cwiseAbs().maxCoeff() == 0.0) throw NumericalError("fit: degenerate training data");

    Eigen::BDCSVD<Eigen::MatrixXd> svd(training.X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    const double cutoff = kSvdRelativeCutoff * s(0);
    Eigen::Index r = 0;
    while (r < s.size() && s(r) > cutoff) ++r;
    const Eigen::ArrayXd inv = s.head(r).array() / (s.head(r).array().square() + ridge);

    KoopmanModel model;
    model.spec = spec;
    model.K = ((training.Y * svd.matrixV().leftCols(r)) * inv.matrix().asDiagonal()) * svd.matrixU().leftCols(r).transpose();
    const double ynorm = training.Y.norm();
    model.residual = ynorm > 0.0 ? (training.Y - model.K * training.X).norm() / ynorm : 0.0;
    return model;
}

/// K^{t-1} z1; t = 1 returns z1.
inline Eigen::VectorXd predict(const KoopmanModel& model, const Eigen::VectorXd& z1, std::size_t t) {
    detail::require(t >= 1, "predict: t must be at least 1");
    detail::require(z1.size() == model.K.cols(), "predict: observable length mismatch");
    Eigen::VectorXd z = z1;
    for (std::size_t k = 1; k < t; ++k) z = model.K * z;
    return z;
}

/// Roll x1 forward through the model and map back to states, tau columns.
inline Eigen::MatrixXd rollout(const KoopmanModel& model, const Eigen::VectorXd& x1, std::size_t tau) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(model.spec.n), static_cast<Eigen::Index>(tau));
    Eigen::VectorXd z = lift(model.spec, x1);
    for (std::size_t t = 0; t < tau; ++t) {
        if (t > 0) z = model.K * z;
        out.col(static_cast<Eigen::Index>(t)) = unlift(model.spec, z);
    }
    return out;
}

/// Mean linearization N-RMSE of model rollouts against held-out trajectories.
inline double linearization_nrmse(const KoopmanModel& model, std::span<const Trajectory> test) {
    detail::require(!test.empty(), "linearization_nrmse: no test trajectories");
    double total = 0.0;
    for (const auto& tr : test) total += nrmse(rollout(model, tr.states.col(0), tr.tau()), tr.states);
    return total / static_cast<double>(test.size());
}

inline EvolutionStack build_theta(const KoopmanModel& model, std::size_t tau) {
    detail::require(tau >= 1, "build_theta: tau must be at least 1");
    const auto m = model.K.rows();
    EvolutionStack stack;
    stack.tau = tau;
    stack.M = static_cast<std::size_t>(m);
    stack.theta.resize(m * static_cast<Eigen::Index>(tau), m);
    stack.theta.topRows(m).setIdentity();
    for (std::size_t t = 1; t < tau; ++t) {
        const auto r = static_cast<Eigen::Index>(t) * m;
        stack.theta.middleRows(r, m).noalias() = model.K * stack.theta.middleRows(r - m, m);
    }
    return stack;
}

/// Everything needed to generate fresh trajectories on the same network.
struct SimulatorContext {
    Graph graph;
    DynamicsParams params;
    InitialRange range;
    std::size_t tau = 50;
};

/// Trajectories whose initial state pins `nodes` to `values` and draws the rest from the range.
inline std::vector<Trajectory> conditioned_trajectories(const SimulatorContext& ctx, std::span<const std::size_t> nodes,
                                                        const Eigen::VectorXd& values, std::size_t count,
                                                        std::uint64_t seed) {
    detail::require(static_cast<std::size_t>(values.size()) == nodes.size(), "sampled values do not match node list");
    std::vector<Trajectory> out;
    out.reserve(count);
    for (std::size_t d = 0; d < count; ++d) {
        const std::uint64_t s = derive_seed(seed, {d});
        Eigen::VectorXd x1 = random_initial_state(ctx.graph.n(), ctx.range.low, ctx.range.high, s);
        for (std::size_t k = 0; k < nodes.size(); ++k) x1(static_cast<Eigen::Index>(nodes[k])) = values(static_cast<Eigen::Index>(k));
        out.push_back(simulate(ctx.graph, ctx.params, x1, ctx.tau, s));
    }
    return out;
}

/// Refit K on the base training columns plus `d_extra` trajectories conditioned on the samples.
inline KoopmanModel refine_with_samples(const KoopmanModel& model, const TrainingSet& base,
                                        std::span<const std::size_t> nodes, const Eigen::VectorXd& values,
                                        const SimulatorContext& ctx, std::size_t d_extra, std::uint64_t seed,
                                        double ridge = 0.0) {
    if (d_extra == 0) return model;
    const auto extra = conditioned_trajectories(ctx, nodes, values, d_extra, seed);
    return fit(concat_training(base, assemble_training(extra, model.spec)), model.spec, ridge);
}

} // namespace lkgft
