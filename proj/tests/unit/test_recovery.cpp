#include <cmath>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace lkgft;
using fixtures::identity_model;
using fixtures::linear_trajectory;
using fixtures::random_matrix;

namespace {

Eigen::VectorXd gradient_fd(const RecoveryObjective& obj, const Eigen::VectorXd& x, double h) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        g(i) = (obj.value(xp) - obj.value(xm)) / (2.0 * h);
    }
    return g;
}

struct NetworkCase {
    ObservableSpec spec;
    KoopmanModel model;
    Graph graph;
    DynamicsParams params;
    InitialRange range;
};

NetworkCase network_case(DynamicsKind kind, std::size_t n) {
    NetworkCase c;
    c.params = kind == DynamicsKind::Biochemical ? DynamicsParams::biochemical() : DynamicsParams::regulatory();
    c.range = default_initial_range(kind);
    c.graph = generate_er_graph(n, 0.5, 13);
    std::vector<Trajectory> train;
    for (std::uint64_t d = 0; d < 60; ++d)
        train.push_back(simulate(c.graph, c.params, random_initial_state(n, c.range.low, c.range.high, d), 30));
    c.spec = make_log_spec(n, 500.0, {1, 2});
    c.model = fit(assemble_training(train, c.spec), c.spec);
    return c;
}

} // namespace

TEST(TakeSamples, FullPlanSingleTick) {
    const auto spec = make_log_spec(3, 500.0, {1, 2});
    Trajectory tr;
    tr.states = random_matrix(3, 1, 4, 0.0, 10.0);
    const auto s = take_samples(tr, spec, gamma_map({0, 1, 2}, spec, 1));
    EXPECT_EQ(s.y, lift(spec, tr.states.col(0)));
}

TEST(TakeSamples, EmptyPlanSeesOnlyConstant) {
    const auto spec = make_log_spec(3, 500.0, {1, 2});
    Trajectory tr;
    tr.states = random_matrix(3, 4, 4, 0.0, 10.0);
    const auto s = take_samples(tr, spec, gamma_map({}, spec, 4));
    EXPECT_EQ(s.y, Eigen::VectorXd::Ones(4));
}

TEST(TakeSamples, HorizonMustMatch) {
    const auto spec = make_identity_spec(2);
    Trajectory tr;
    tr.states = Eigen::MatrixXd::Ones(2, 3);
    EXPECT_THROW(take_samples(tr, spec, gamma_map({0}, spec, 4)), InvalidArgument);
}

TEST(TakeSamples, ReconstructionResamplesConsistently) {
    const Eigen::MatrixXd A = 0.4 * random_matrix(4, 4, 6);
    const auto m = identity_model(A);
    const auto truth = linear_trajectory(A, random_matrix(4, 1, 7), 6);
    const auto plan = gamma_map({0, 2}, m.spec, 6);
    Trajectory rebuilt;
    rebuilt.states = reconstruct_trajectory(truth.states.col(0), m, 6);
    EXPECT_LT((take_samples(rebuilt, m.spec, plan).y - take_samples(truth, m.spec, plan).y).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Objective, GradientMatchesFiniteDifferences) {
    for (auto kind : {DynamicsKind::Biochemical, DynamicsKind::Regulatory}) {
        const auto c = network_case(kind, 8);
        const auto theta = build_theta(c.model, 10);
        const auto truth = simulate(c.graph, c.params, random_initial_state(8, c.range.low, c.range.high, 500), 10);
        const auto samples = take_samples(truth, c.spec, gamma_map({0, 3, 5}, c.spec, 10));
        const RecoveryObjective obj(samples, theta, c.spec);
        Rng rng(77);
        int checked = 0;
        for (int k = 0; k < 100; ++k) {
            Eigen::VectorXd x(8);
            for (Eigen::Index i = 0; i < 8; ++i) x(i) = rng.uniform(c.range.low, c.range.high);
            const Eigen::VectorXd analytic = obj.gradient(x);
            const Eigen::VectorXd numeric = gradient_fd(obj, x, 1e-6 * c.spec.C);
            const double scale = analytic.norm();
            if (scale == 0.0) continue;
            EXPECT_LT((analytic - numeric).norm() / scale, 1e-5) << to_string(kind) << " point " << k;
            ++checked;
        }
        EXPECT_EQ(checked, 100);
    }
}

TEST(Objective, CombinedCallMatchesParts) {
    const auto c = network_case(DynamicsKind::Biochemical, 5);
    const auto theta = build_theta(c.model, 5);
    const auto truth = simulate(c.graph, c.params, random_initial_state(5, 0, 1, 3), 5);
    const auto samples = take_samples(truth, c.spec, gamma_map({1, 2}, c.spec, 5));
    const RecoveryObjective obj(samples, theta, c.spec);
    const Eigen::VectorXd x = random_initial_state(5, 0, 1, 4);
    Eigen::VectorXd g;
    EXPECT_DOUBLE_EQ(obj(x, g), obj.value(x));
    EXPECT_TRUE(g.isApprox(obj.gradient(x)));
    EXPECT_DOUBLE_EQ(obj.squared_residual(x), 2.0 * obj.value(x));
    Eigen::VectorXd bad = x;
    bad(0) = -600.0; // 1 + (x/C)^1 < 0
    EXPECT_TRUE(std::isinf(obj(bad, g)));
}

TEST(Recover, ExactLinearSystemFullSampling) {
    Eigen::Matrix2d A;
    A << 0.9, 0.2, -0.1, 0.7;
    const auto m = identity_model(A);
    const Eigen::Vector2d x1(0.6, -0.3);
    const auto truth = linear_trajectory(A, x1, 5);
    const auto plan = gamma_map({0, 1}, m.spec, 5);
    const auto res = recover_initial_state(take_samples(truth, m.spec, plan), build_theta(m, 5), m.spec);
    EXPECT_LT((res.x1_hat - x1).norm(), 1e-6);
    EXPECT_LT(res.objective, 1e-12);
    EXPECT_TRUE(res.rank_verified);
    EXPECT_EQ(res.trajectory_hat.col(0), res.x1_hat);
}

TEST(Recover, StartingAtTruthNeedsNoIterations) {
    const Eigen::MatrixXd A = 0.5 * random_matrix(3, 3, 9);
    const auto m = identity_model(A);
    const auto truth = linear_trajectory(A, random_matrix(3, 1, 10), 4);
    const auto res = recover_initial_state(take_samples(truth, m.spec, gamma_map({0, 1, 2}, m.spec, 4)), build_theta(m, 4), m.spec);
    EXPECT_EQ(res.iterations, 0u);
    EXPECT_LT(res.objective, 1e-28);
    EXPECT_TRUE(res.converged);
}

TEST(Recover, SingleSensorOnCyclicShift) {
    for (Eigen::Index n : {2, 3, 4}) {
        const auto m = identity_model(fixtures::cyclic_shift(n));
        const auto tau = static_cast<std::size_t>(n);
        const auto theta = build_theta(m, tau);
        const auto plan = gamma_map({0}, m.spec, tau);
        ASSERT_TRUE(verify_rank(plan, theta, m.spec));
        const Eigen::VectorXd x1 = random_matrix(n, 1, 40 + static_cast<std::uint64_t>(n), 0.0, 1.0);
        const auto samples = take_samples(linear_trajectory(m.K, x1, tau), m.spec, plan);
        OptimizerConfig cfg;
        const auto res = recover_initial_state(samples, theta, m.spec, cfg);
        EXPECT_LT((res.x1_hat - x1).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_LE(res.objective, 1e-10);
    }
}

TEST(Recover, OptimizerTraceInvariants) {
    const auto c = network_case(DynamicsKind::Biochemical, 10);
    const auto theta = build_theta(c.model, 10);
    SelectionConfig sc;
    sc.gamma = std::nullopt;
    sc.max_nodes = 5;
    const auto plan = greedy_select(theta, c.spec, sc);
    const auto truth = simulate(c.graph, c.params, random_initial_state(10, 0, 1, 1234), 10);
    OptimizerConfig cfg;
    cfg.init_range = c.range;
    const auto res = recover_initial_state(take_samples(truth, c.spec, plan), theta, c.spec, cfg);
    for (std::size_t k = 1; k < res.trace.objective.size(); ++k) EXPECT_LE(res.trace.objective[k], res.trace.objective[k - 1]);
    EXPECT_LT(res.trace.max_asymmetry, 1e-12);
    EXPECT_TRUE(res.trace.positive_definite);
    EXPECT_GE(res.objective, 0.0);
    EXPECT_LT(nrmse(res.trajectory_hat, truth.states), 0.2);
}

TEST(Recover, MultiStartIsDeterministic) {
    const auto c = network_case(DynamicsKind::Regulatory, 6);
    const auto theta = build_theta(c.model, 8);
    const auto truth = simulate(c.graph, c.params, random_initial_state(6, c.range.low, c.range.high, 9), 8);
    const auto samples = take_samples(truth, c.spec, gamma_map({0, 1, 2}, c.spec, 8));
    OptimizerConfig cfg;
    cfg.init_range = c.range;
    cfg.seed = 5;
    const auto a = recover_initial_state(samples, theta, c.spec, cfg);
    const auto b = recover_initial_state(samples, theta, c.spec, cfg);
    EXPECT_EQ(a.x1_hat, b.x1_hat);
    EXPECT_EQ(a.best_start, b.best_start);
}

TEST(Reconstruct, IdentityDynamicsRepeatsInitialState) {
    const auto m = identity_model(Eigen::MatrixXd::Identity(3, 3));
    const Eigen::Vector3d x1(1.0, 2.0, 3.0);
    const auto out = reconstruct_trajectory(x1, m, 4);
    for (Eigen::Index t = 0; t < 4; ++t) EXPECT_EQ(out.col(t), x1);
    EXPECT_EQ(reconstruct_trajectory(x1, m, 1).cols(), 1);
}

TEST(Reconstruct, ExactLinearSystem) {
    const Eigen::MatrixXd A = 0.5 * random_matrix(4, 4, 31);
    const auto m = identity_model(A);
    const auto truth = linear_trajectory(A, random_matrix(4, 1, 32), 8);
    EXPECT_LT((reconstruct_trajectory(truth.states.col(0), m, 8) - truth.states).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((reconstruct_from_theta(truth.states.col(0), build_theta(m, 8), m.spec) - truth.states).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Nrmse, Examples) {
    const Eigen::Matrix2d x = Eigen::Matrix2d::Identity();
    EXPECT_EQ(nrmse(x, x), 0.0);
    EXPECT_DOUBLE_EQ(nrmse(Eigen::Matrix2d::Zero(), x), 1.0);
    const Eigen::Matrix2d shifted = x.array() + 0.1;
    EXPECT_NEAR(nrmse(shifted, x), std::sqrt(4 * 0.01 / 2), 1e-15);
    EXPECT_NEAR(nrmse(shifted, x), 0.1414, 1e-4);
}

TEST(Nrmse, InvariantToColumnPermutation) {
    const Eigen::MatrixXd x = random_matrix(3, 5, 1), xh = random_matrix(3, 5, 2);
    Eigen::PermutationMatrix<Eigen::Dynamic> p(5);
    p.indices() << 3, 0, 4, 1, 2;
    EXPECT_NEAR(nrmse(xh * p, x * p), nrmse(xh, x), 1e-15);
}

TEST(Nrmse, Errors) {
    EXPECT_THROW(nrmse(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 2)), NumericalError);
    EXPECT_THROW(nrmse(Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Ones(2, 2)), InvalidArgument);
}

TEST(InitialGuess, ReadsSampledNodesAndFillsRest) {
    const auto spec = make_log_spec(4, 500.0, {1, 2});
    Trajectory tr;
    tr.states = random_matrix(4, 3, 8, 0.0, 50.0);
    const auto samples = take_samples(tr, spec, gamma_map({1, 3}, spec, 3));
    const auto x = initial_guess(samples, spec, 0.5);
    EXPECT_NEAR(x(1), tr.states(1, 0), 1e-12);
    EXPECT_NEAR(x(3), tr.states(3, 0), 1e-12);
    EXPECT_EQ(x(0), 0.5);
    EXPECT_EQ(x(2), 0.5);
}
