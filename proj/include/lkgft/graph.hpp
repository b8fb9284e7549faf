#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "error.hpp"
#include "rng.hpp"

namespace lkgft {

/// Undirected simple graph stored as a dense 0/1 adjacency matrix.
class Graph {
public:
    Graph() = default;

    /// Validates symmetry, binary entries and an empty diagonal.
    explicit Graph(Eigen::MatrixXd adjacency) : adjacency_(std::move(adjacency)) {
        detail::require(adjacency_.rows() == adjacency_.cols(), "adjacency must be square");
        detail::require(adjacency_.rows() >= 1, "graph needs at least one node");
        for (Eigen::Index i = 0; i < adjacency_.rows(); ++i) {
            detail::require(adjacency_(i, i) == 0.0, "adjacency diagonal must be zero");
            for (Eigen::Index j = 0; j < adjacency_.cols(); ++j) {
                const double a = adjacency_(i, j);
                detail::require(a == 0.0 || a == 1.0, "adjacency entries must be 0 or 1");
                detail::require(a == adjacency_(j, i), "adjacency must be symmetric");
            }
        }
    }

    std::size_t n() const noexcept { return static_cast<std::size_t>(adjacency_.rows()); }
    const Eigen::MatrixXd& adjacency() const noexcept { return adjacency_; }

    std::size_t edge_count() const { return static_cast<std::size_t>(adjacency_.sum() / 2.0); }

    Eigen::VectorXd degrees() const { return adjacency_.rowwise().sum(); }

    /// Combinatorial Laplacian D - A.
    Eigen::MatrixXd laplacian() const {
        Eigen::MatrixXd l = -adjacency_;
        l.diagonal() = degrees();
        return l;
    }

private:
    Eigen::MatrixXd adjacency_;
};

/// Erdos-Renyi G(n, p): every unordered pair is linked independently with probability p.
inline Graph generate_er_graph(std::size_t n, double p, std::uint64_t seed) {
    detail::require(n >= 1, "n must be positive");
    detail::require(p >= 0.0 && p <= 1.0, "edge probability must lie in [0, 1]");
    Rng rng(seed);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < a.cols(); ++j) {
            // uniform01 is in (0,1), so p = 0 and p = 1 are exact.
            if (rng.uniform01() < p) a(i, j) = a(j, i) = 1.0;
        }
    }
    return Graph(std::move(a));
}

} // namespace lkgft
