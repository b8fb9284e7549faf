#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace lkgft;

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, UniformStaysInsideOpenInterval) {
    Rng rng(7);
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform01();
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(Rng, UniformMeanIsHalf) {
    Rng rng(11);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) sum += rng.uniform01();
    // standard error 1/sqrt(12 n)
    EXPECT_NEAR(sum / n, 0.5, 5.0 / std::sqrt(12.0 * n));
}

TEST(Rng, DerivedSeedsDifferPerTag) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t a = 0; a < 20; ++a)
        for (std::uint64_t b = 0; b < 20; ++b) seen.insert(derive_seed(1, {a, b}));
    EXPECT_EQ(seen.size(), 400u);
    EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
    EXPECT_NE(derive_seed(1, {2}), derive_seed(2, {2}));
}

TEST(Graph, ProbabilityZeroGivesNoEdges) {
    const Graph g = generate_er_graph(3, 0.0, 1);
    EXPECT_EQ(g.edge_count(), 0u);
    EXPECT_TRUE(g.adjacency().isZero());
}

TEST(Graph, ProbabilityOneGivesCompleteGraph) {
    const Graph g = generate_er_graph(3, 1.0, 1);
    EXPECT_EQ(g.edge_count(), 3u);
    EXPECT_TRUE(g.adjacency().isApprox(fixtures::complete_graph(3).adjacency()));
}

TEST(Graph, SingleNodeHasEmptyAdjacency) {
    const Graph g = generate_er_graph(1, 0.5, 3);
    EXPECT_EQ(g.n(), 1u);
    EXPECT_EQ(g.edge_count(), 0u);
}

TEST(Graph, EdgeCountFollowsBinomialStatistics) {
    const double pairs = 100.0 * 99.0 / 2.0;
    const double mean = 0.5 * pairs, sd = std::sqrt(pairs * 0.25);
    double total = 0.0;
    const int seeds = 200;
    for (int s = 0; s < seeds; ++s) {
        const Graph g = generate_er_graph(100, 0.5, static_cast<std::uint64_t>(s));
        const double e = static_cast<double>(g.edge_count());
        EXPECT_LT(std::abs(e - mean), 4.0 * sd) << "seed " << s;
        total += e;
    }
    EXPECT_LT(std::abs(total / seeds - mean), 4.0 * sd / std::sqrt(static_cast<double>(seeds)));
}

TEST(Graph, GeneratedGraphIsSymmetricWithZeroDiagonal) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Graph g = generate_er_graph(30, 0.3, s);
        EXPECT_TRUE(g.adjacency().isApprox(g.adjacency().transpose()));
        EXPECT_TRUE(g.adjacency().diagonal().isZero());
    }
}

TEST(Graph, DeterministicPerSeed) {
    EXPECT_EQ(generate_er_graph(20, 0.5, 9).adjacency(), generate_er_graph(20, 0.5, 9).adjacency());
    EXPECT_NE(generate_er_graph(20, 0.5, 9).adjacency(), generate_er_graph(20, 0.5, 10).adjacency());
}

TEST(Graph, RejectsInvalidAdjacency) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
    a(0, 1) = 1.0;
    EXPECT_THROW(Graph{a}, InvalidArgument);
    a(1, 0) = 1.0;
    a(0, 0) = 1.0;
    EXPECT_THROW(Graph{a}, InvalidArgument);
    EXPECT_THROW(generate_er_graph(0, 0.5, 1), InvalidArgument);
    EXPECT_THROW(generate_er_graph(3, 1.5, 1), InvalidArgument);
}

TEST(Graph, LaplacianRowsSumToZero) {
    const Graph g = generate_er_graph(15, 0.4, 5);
    EXPECT_LT(g.laplacian().rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
}
