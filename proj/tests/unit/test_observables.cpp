#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace lkgft;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double d : v) x(i++) = d;
    return x;
}

Eigen::MatrixXd finite_difference_jacobian(const ObservableSpec& spec, const Eigen::VectorXd& x, double h) {
    Eigen::MatrixXd j(static_cast<Eigen::Index>(spec.M()), x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        j.col(i) = (lift(spec, xp) - lift(spec, xm)) / (2.0 * h);
    }
    return j;
}

} // namespace

TEST(BuildSpec, LogSizeForFiftyNodes) {
    const auto s = build_spec(ObservableKind::Log, 50, 500.0, {1, 2});
    EXPECT_EQ(s.M(), 151u);
}

TEST(BuildSpec, IdentitySize) { EXPECT_EQ(build_spec(ObservableKind::Identity, 7, 1.0, {}).M(), 7u); }

TEST(BuildSpec, LogSizeFormula) {
    for (std::size_t n : {1u, 3u, 10u})
        for (const auto& p : std::vector<std::vector<int>>{{1}, {1, 2}, {1, 2, 3}, {2, 5}})
            EXPECT_EQ(make_log_spec(n, 500.0, p).M(), 1 + n * (1 + p.size()));
}

TEST(BuildSpec, PolyCountMatchesEnumeration) {
    for (std::size_t n : {2u, 5u, 10u}) {
        for (int d : {1, 2}) {
            // enumerate exponent vectors with at most two non-zero entries, each pair entry in 0..d
            std::set<std::vector<int>> monomials;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i; j < n; ++j)
                    for (int pi = 0; pi <= d; ++pi)
                        for (int pj = 0; pj <= d; ++pj) {
                            std::vector<int> e(n, 0);
                            e[i] += pi;
                            e[j] += pj;
                            monomials.insert(e);
                        }
            EXPECT_EQ(make_poly_spec(n, 1.0, d).M(), monomials.size()) << "n=" << n << " d=" << d;
        }
    }
    EXPECT_GT(make_poly_spec(10, 1.0, 2).M(), 100u);
    for (std::size_t n : {10u, 20u}) EXPECT_GT(make_poly_spec(n, 1.0, 2).M(), n * n / 2);
}

TEST(BuildSpec, IndexMapIsInjective) {
    for (const auto& s : {make_log_spec(6, 500.0, {1, 2, 3}), make_poly_spec(6, 500.0, 2), make_identity_spec(6)}) {
        std::set<std::pair<std::vector<int>, std::pair<int, std::vector<int>>>> seen;
        for (const auto& t : s.terms) seen.insert({t.nodes, {static_cast<int>(t.form), t.powers}});
        EXPECT_EQ(seen.size(), s.M());
    }
}

TEST(BuildSpec, RejectsInvalidParameters) {
    EXPECT_THROW(make_log_spec(3, 0.0, {1}), InvalidArgument);
    EXPECT_THROW(make_log_spec(3, -1.0, {1}), InvalidArgument);
    EXPECT_THROW(make_log_spec(3, 500.0, {}), InvalidArgument);
    EXPECT_THROW(make_log_spec(3, 500.0, {0}), InvalidArgument);
    EXPECT_THROW(build_spec(ObservableKind::Poly, 3, 1.0, {}), InvalidArgument);
}

TEST(BuildSpec, PowersAreSortedAndDeduplicated) {
    const auto s = make_log_spec(2, 500.0, {2, 1, 2});
    EXPECT_EQ(s.powers, (std::vector<int>{1, 2}));
    EXPECT_EQ(s.M(), 7u);
}

TEST(Lift, ZeroState) {
    const auto s = make_log_spec(1, 500.0, {1, 2});
    EXPECT_EQ(lift(s, vec({0.0})), vec({1.0, 0.0, 0.0, 0.0}));
}

TEST(Lift, StateEqualToScale) {
    const auto s = make_log_spec(1, 500.0, {1, 2});
    const auto z = lift(s, vec({500.0}));
    EXPECT_DOUBLE_EQ(z(0), 1.0);
    EXPECT_DOUBLE_EQ(z(1), 1.0);
    EXPECT_DOUBLE_EQ(z(2), std::log(2.0));
    EXPECT_DOUBLE_EQ(z(3), std::log(2.0));
}

TEST(Lift, LogSumApproximatesProductExpansion) {
    for (double x : {0.01, 0.3, 2.0})
        for (double y : {0.02, 0.7, 5.0}) EXPECT_NEAR(std::log1p(x) + std::log1p(y), std::log1p(x + y + x * y), 1e-14);
}

TEST(Lift, DomainViolationNamesNodeAndPower) {
    const auto s = make_log_spec(3, 1.0, {1, 2});
    try {
        lift(s, vec({0.5, -1.0, 0.2}));
        FAIL() << "expected domain error";
    } catch (const DomainError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("node 1"), std::string::npos) << what;
        EXPECT_NE(what.find("^1"), std::string::npos) << what;
    }
    EXPECT_THROW(lift(s, vec({0.5, NAN, 0.2})), DomainError);
    EXPECT_THROW(lift(s, vec({0.5})), InvalidArgument);
}

TEST(Lift, PolyMonomialValues) {
    const auto s = make_poly_spec(2, 2.0, 1);
    const auto z = lift(s, vec({1.0, 4.0}));
    // layout: 1, u0, u0^2, u0 u1, u1, u1^2 with u = x / 2
    EXPECT_EQ(z, vec({1.0, 0.5, 0.25, 1.0, 2.0, 4.0}));
}

TEST(Unlift, RoundTripIsExact) {
    Rng rng(3);
    for (const auto& s : {make_log_spec(8, 500.0, {1, 2}), make_poly_spec(8, 500.0, 2), make_identity_spec(8)}) {
        for (int k = 0; k < 50; ++k) {
            Eigen::VectorXd x(8);
            for (Eigen::Index i = 0; i < 8; ++i) x(i) = rng.uniform(0.0, 100.0);
            const Eigen::VectorXd back = unlift(s, lift(s, x));
            EXPECT_LT(((back - x).array() / x.array()).abs().maxCoeff(), 1e-12);
        }
    }
}

TEST(Unlift, ScalesLinearEntry) {
    const auto s = make_log_spec(1, 500.0, {1, 2});
    EXPECT_DOUBLE_EQ(unlift(s, vec({1.0, 0.2, 7.0, -3.0}))(0), 100.0);
}

TEST(Unlift, InexactObservablesStillFinite) {
    const auto s = make_log_spec(3, 500.0, {1, 2});
    const Eigen::VectorXd z = fixtures::random_matrix(static_cast<Eigen::Index>(s.M()), 1, 5, -10.0, 10.0);
    const auto x = unlift(s, z);
    EXPECT_TRUE(x.allFinite());
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x(i), 500.0 * z(s.linear_index[i]));
    EXPECT_THROW(unlift(s, Eigen::VectorXd::Zero(3)), InvalidArgument);
}

TEST(LiftJacobian, ValuesAtZero) {
    const auto s = make_log_spec(1, 500.0, {1, 2});
    const auto j = lift_jacobian(s, vec({0.0}));
    EXPECT_EQ(j(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(j(1, 0), 1.0 / 500.0);
    EXPECT_DOUBLE_EQ(j(2, 0), 1.0 / 500.0);
    EXPECT_DOUBLE_EQ(j(3, 0), 0.0);
}

TEST(LiftJacobian, MatchesFiniteDifferences) {
    Rng rng(21);
    const std::vector<std::pair<ObservableSpec, double>> cases{
        {make_log_spec(5, 500.0, {1, 2, 3}), 1.0},   // biochemical range
        {make_log_spec(5, 500.0, {1, 2, 3}), 100.0}, // regulatory range
        {make_poly_spec(4, 500.0, 2), 100.0},
    };
    for (const auto& [spec, high] : cases) {
        for (int k = 0; k < 100; ++k) {
            Eigen::VectorXd x(static_cast<Eigen::Index>(spec.n));
            for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.uniform(0.0, high);
            const Eigen::MatrixXd analytic = lift_jacobian(spec, x);
            const Eigen::MatrixXd numeric = finite_difference_jacobian(spec, x, 1e-6);
            const double scale = std::max(analytic.cwiseAbs().maxCoeff(), 1e-300);
            EXPECT_LT((analytic - numeric).cwiseAbs().maxCoeff() / scale, 1e-5);
        }
    }
}

TEST(LiftJacobian, ConstantRowIsZero) {
    const auto s = make_log_spec(4, 500.0, {1, 2});
    const auto j = lift_jacobian(s, vec({1.0, 2.0, 3.0, 4.0}));
    EXPECT_TRUE(j.row(static_cast<Eigen::Index>(s.constant_index())).isZero());
}

TEST(Ownership, LogObservablesDependOnOneNode) {
    const auto s = make_log_spec(5, 500.0, {1, 2});
    const Eigen::VectorXd x = vec({1.0, 2.0, 3.0, 4.0, 5.0});
    const Eigen::VectorXd z = lift(s, x);
    for (Eigen::Index j = 0; j < 5; ++j) {
        Eigen::VectorXd xp = x;
        xp(j) += 0.5;
        const Eigen::VectorXd zp = lift(s, xp);
        for (std::size_t m = 0; m < s.M(); ++m) {
            const auto& t = s.terms[m];
            const bool owned = t.nodes.size() == 1 && t.nodes[0] == j;
            if (!owned) EXPECT_EQ(zp(static_cast<Eigen::Index>(m)), z(static_cast<Eigen::Index>(m)));
            else EXPECT_NE(zp(static_cast<Eigen::Index>(m)), z(static_cast<Eigen::Index>(m)));
        }
    }
}

TEST(ScaleRatio, MeasuresSupOverC) {
    const auto s = make_log_spec(2, 500.0, {1});
    Eigen::MatrixXd states(2, 2);
    states << 10.0, -50.0, 20.0, 30.0;
    EXPECT_DOUBLE_EQ(scale_ratio(s, states), 0.1);
    EXPECT_LT(scale_ratio(s, states), kDefaultScaleDelta);
}
