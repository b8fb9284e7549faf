#pragma once

#include <algorithm>
#include <complex>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "error.hpp"
#include "graph.hpp"
#include "koopman.hpp"
#include "observables.hpp"
#include "sampling.hpp"

namespace lkgft {

// ---------------------------------------------------------------------------
// Observability-gramian selection on a (polynomial) Koopman model
// ---------------------------------------------------------------------------

/// Eigen-directions of K sorted by descending modulus, conjugate pairs adjacent.
struct EigenSystem {
    Eigen::VectorXcd values;
    Eigen::MatrixXcd vectors;         ///< V, columns are right eigenvectors
    Eigen::MatrixXcd inverse_vectors; ///< V^{-1}
    double condition = 0.0;           ///< |V| |V^{-1}| (2-norm estimate via Frobenius)
};

struct GramianSelector {
    std::size_t k = 0;      ///< leading eigen-directions kept (may be k+1 to keep a pair whole)
    Eigen::MatrixXd W;      ///< real k x M reporter matrix
    EigenSystem eig;
};

struct GramianSelection {
    GramianSelector selector;
    std::vector<std::size_t> nodes; ///< ascending
};

inline constexpr double kDefectiveConditionLimit = 1e12;
inline constexpr double kGramianWeightThreshold = 1e-8;

inline EigenSystem sorted_eigensystem(const Eigen::MatrixXd& K) {
    Eigen::EigenSolver<Eigen::MatrixXd> solver(K, true);
    if (solver.info() != Eigen::Success) throw NumericalError("gramian: eigendecomposition failed");
    const Eigen::VectorXcd lam = solver.eigenvalues();
    const Eigen::MatrixXcd vec = solver.eigenvectors();
    const auto m = lam.size();

    std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        if (std::abs(lam(a)) != std::abs(lam(b))) return std::abs(lam(a)) > std::abs(lam(b));
        if (lam(a).real() != lam(b).real()) return lam(a).real() > lam(b).real();
        return lam(a).imag() > lam(b).imag();
    });
    // Pull each conjugate partner next to its eigenvalue.
    std::vector<Eigen::Index> paired;
    std::vector<bool> placed(static_cast<std::size_t>(m), false);
    for (std::size_t a = 0; a < order.size(); ++a) {
        const auto i = order[a];
        if (placed[static_cast<std::size_t>(i)]) continue;
        placed[static_cast<std::size_t>(i)] = true;
        paired.push_back(i);
        if (lam(i).imag() == 0.0) continue;
        std::optional<Eigen::Index> partner;
        double best = 0.0;
        for (std::size_t b = a + 1; b < order.size(); ++b) {
            const auto j = order[b];
            if (placed[static_cast<std::size_t>(j)]) continue;
            const double d = std::abs(lam(j) - std::conj(lam(i)));
            if (!partner || d < best) {
                partner = j;
                best = d;
            }
        }
        if (partner) {
            placed[static_cast<std::size_t>(*partner)] = true;
            paired.push_back(*partner);
        }
    }

    EigenSystem es;
    es.values.resize(m);
    es.vectors.resize(m, m);
    for (Eigen::Index c = 0; c < m; ++c) {
        es.values(c) = lam(paired[static_cast<std::size_t>(c)]);
        es.vectors.col(c) = vec.col(paired[static_cast<std::size_t>(c)]);
    }
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(es.vectors);
    es.inverse_vectors = lu.inverse();
    es.condition = es.vectors.norm() * es.inverse_vectors.norm() / static_cast<double>(m);
    if (!es.inverse_vectors.allFinite() || !(es.condition < kDefectiveConditionLimit))
        throw NumericalError("gramian: defective spectrum (eigenvector condition " + std::to_string(es.condition) + ")");
    return es;
}

/// Real reporter matrix from the first k rows of V^{-1}. A conjugate pair contributes
/// sqrt(2) Re(w) and sqrt(2) Im(w), which preserves the energy of the complex pair.
inline GramianSelector make_gramian_selector(EigenSystem eig, std::size_t k) {
    const auto m = static_cast<std::size_t>(eig.values.size());
    detail::require(k >= 1 && k <= m, "gramian: k must lie in [1, M]");
    std::vector<Eigen::RowVectorXd> rows;
    std::size_t i = 0;
    while (i < k) {
        const auto row = static_cast<Eigen::Index>(i);
        const bool complex_pair = eig.values(row).imag() != 0.0 && i + 1 < m;
        if (complex_pair) {
            const Eigen::RowVectorXcd w = eig.inverse_vectors.row(row);
            rows.push_back(std::sqrt(2.0) * w.real());
            rows.push_back(std::sqrt(2.0) * w.imag());
            i += 2;
        } else {
            rows.push_back(eig.inverse_vectors.row(row).real());
            i += 1;
        }
    }
    GramianSelector sel;
    sel.k = i;
    sel.W.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m));
    for (std::size_t r = 0; r < rows.size(); ++r) sel.W.row(static_cast<Eigen::Index>(r)) = rows[r];
    sel.eig = std::move(eig);
    return sel;
}

/// Per-node weight: squared reporter entries summed over the observables the node feeds.
inline Eigen::VectorXd gramian_node_weights(const GramianSelector& sel, const ObservableSpec& spec) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.n));
    for (std::size_t m = 0; m < spec.M(); ++m) {
        const double e = sel.W.col(static_cast<Eigen::Index>(m)).squaredNorm();
        for (int v : spec.terms[m].nodes) w(v) += e;
    }
    return w;
}

/// Nodes owning an observable with |weight| above threshold in any reporter row.
inline std::vector<std::size_t> gramian_threshold_nodes(const GramianSelector& sel, const ObservableSpec& spec) {
    std::vector<bool> hit(spec.n, false);
    for (std::size_t m = 0; m < spec.M(); ++m) {
        if (sel.W.col(static_cast<Eigen::Index>(m)).cwiseAbs().maxCoeff() <= kGramianWeightThreshold) continue;
        for (int v : spec.terms[m].nodes) hit[static_cast<std::size_t>(v)] = true;
    }
    std::vector<std::size_t> nodes;
    for (std::size_t i = 0; i < spec.n; ++i)
        if (hit[i]) nodes.push_back(i);
    return nodes;
}

/// Reporter matrix for the k leading eigen-directions of K and the nodes it touches.
inline GramianSelection gramian_select(const KoopmanModel& model, std::size_t k) {
    GramianSelection out;
    out.selector = make_gramian_selector(sorted_eigensystem(model.K), k);
    out.nodes = gramian_threshold_nodes(out.selector, model.spec);
    return out;
}

/// Equal-budget variant: grow k until the thresholded node set reaches `budget`; if it
/// overshoots, keep the `budget` nodes with the largest reporter weight (ties to lower index).
inline GramianSelection gramian_select_budget(const KoopmanModel& model, std::size_t budget) {
    const auto& spec = model.spec;
    detail::require(budget >= 1 && budget <= spec.n, "gramian: budget must lie in [1, N]");
    EigenSystem eig = sorted_eigensystem(model.K);
    const std::size_t m = spec.M();
    GramianSelection out;
    for (std::size_t k = 1; k <= m; ++k) {
        out.selector = make_gramian_selector(eig, k);
        out.nodes = gramian_threshold_nodes(out.selector, spec);
        k = out.selector.k;
        if (out.nodes.size() >= budget) break;
    }
    if (out.nodes.size() > budget) {
        const Eigen::VectorXd w = gramian_node_weights(out.selector, spec);
        std::vector<std::size_t> idx = out.nodes;
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return w(static_cast<Eigen::Index>(a)) > w(static_cast<Eigen::Index>(b));
        });
        idx.resize(budget);
        std::sort(idx.begin(), idx.end());
        out.nodes = std::move(idx);
    }
    return out;
}

/// sum_{t=1..tau} |W K^t z1|^2.
inline double reporter_energy(const Eigen::MatrixXd& W, const Eigen::MatrixXd& K, const Eigen::VectorXd& z1, std::size_t tau) {
    double e = 0.0;
    Eigen::VectorXd z = z1;
    for (std::size_t t = 1; t <= tau; ++t) {
        z = K * z;
        e += (W * z).squaredNorm();
    }
    return e;
}

/// Minimum-norm least-squares recovery of z1 from the observables the sensors see,
/// ignoring the nonlinear dependence between observables.
class LinearObservableRecovery {
public:
    LinearObservableRecovery(const EvolutionStack& theta, const ObservableSpec& spec, const SamplingPlan& plan)
        : theta_(theta), spec_(spec), cod_(gather_rows(theta.theta, plan.row_indices)) {
        cod_.setThreshold(kRankRelativeTolerance);
    }

    Eigen::VectorXd recover_z1(const Eigen::VectorXd& y) const { return cod_.solve(y); }

    Eigen::MatrixXd reconstruct(const Eigen::VectorXd& y) const {
        const Eigen::VectorXd z1 = recover_z1(y);
        Eigen::MatrixXd out(static_cast<Eigen::Index>(spec_.n), static_cast<Eigen::Index>(theta_.tau));
        for (std::size_t t = 0; t < theta_.tau; ++t) out.col(static_cast<Eigen::Index>(t)) = unlift(spec_, theta_.block(t) * z1);
        return out;
    }

private:
    const EvolutionStack& theta_;
    const ObservableSpec& spec_;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod_;
};

// ---------------------------------------------------------------------------
// Linear graph Fourier transform sampling
// ---------------------------------------------------------------------------

struct LinearGFTBasis {
    Eigen::MatrixXd U;           ///< N x r, orthonormal columns
    Eigen::VectorXd eigenvalues; ///< r smallest Laplacian eigenvalues, ascending
    std::size_t r = 0;
};

/// r eigenvectors of L = D - A with the smallest eigenvalues. Each column's sign is
/// fixed so its entry sum is non-negative (first non-zero entry positive if the sum vanishes).
inline LinearGFTBasis build_laplacian_basis(const Graph& graph, std::size_t r) {
    detail::require(r >= 1 && r <= graph.n(), "laplacian basis: r must lie in [1, N]");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(graph.laplacian());
    if (solver.info() != Eigen::Success) throw NumericalError("laplacian basis: eigendecomposition failed");
    LinearGFTBasis b;
    b.r = r;
    b.U = solver.eigenvectors().leftCols(static_cast<Eigen::Index>(r));
    b.eigenvalues = solver.eigenvalues().head(static_cast<Eigen::Index>(r));
    for (Eigen::Index c = 0; c < b.U.cols(); ++c) {
        double s = b.U.col(c).sum();
        if (std::abs(s) < 1e-12) {
            for (Eigen::Index i = 0; i < b.U.rows(); ++i)
                if (std::abs(b.U(i, c)) > 1e-12) {
                    s = b.U(i, c);
                    break;
                }
        }
        if (s < 0.0) b.U.col(c) *= -1.0;
    }
    return b;
}

/// Stacked [L^0; L^1; ...; L^{T-1}] for linear evolution x_{t+1} = L x_t.
inline Eigen::MatrixXd laplacian_powers(const Graph& graph, std::size_t T) {
    detail::require(T >= 1, "laplacian_powers: T must be at least 1");
    const auto n = static_cast<Eigen::Index>(graph.n());
    const Eigen::MatrixXd L = graph.laplacian();
    Eigen::MatrixXd phi(n * static_cast<Eigen::Index>(T), n);
    phi.topRows(n).setIdentity();
    for (std::size_t t = 1; t < T; ++t) {
        const auto r = static_cast<Eigen::Index>(t) * n;
        phi.middleRows(r, n).noalias() = L * phi.middleRows(r - n, n);
    }
    return phi;
}

struct LinearGFTPlan {
    std::vector<std::size_t> nodes; ///< selection order
    std::vector<std::size_t> rows;  ///< rows of Phi observed by the nodes
    double score = kInfinity;       ///< sigma_1 / sigma_r of S Phi U
    bool rank_deficient = true;
};

inline std::vector<std::size_t> phi_rows(const std::vector<std::size_t>& nodes, std::size_t n, std::size_t phi_rows_total) {
    std::vector<std::size_t> rows;
    for (std::size_t off = 0; off < phi_rows_total; off += n)
        for (auto v : nodes) rows.push_back(off + v);
    return rows;
}

/// Greedy node selection on Phi U until rank r is reached, or until `max_nodes` when given.
inline LinearGFTPlan linear_gft_select(const LinearGFTBasis& basis, const Eigen::MatrixXd& phi, std::size_t max_nodes = 0) {
    const auto n = static_cast<std::size_t>(basis.U.rows());
    detail::require(phi.cols() == basis.U.rows() && phi.rows() % phi.cols() == 0, "linear GFT: Phi must be (T*N) x N");
    const Eigen::MatrixXd phu = phi * basis.U;
    const auto total = static_cast<std::size_t>(phi.rows());
    auto evaluate = [&](const std::vector<std::size_t>& s) {
        return score_matrix(gather_rows(phu, phi_rows(s, n, total)), basis.r);
    };
    const std::optional<double> gamma = max_nodes == 0 ? std::optional<double>(std::numeric_limits<double>::max()) : std::nullopt;
    const auto res = greedy_groups(n, evaluate, gamma, max_nodes == 0 ? n : max_nodes);
    LinearGFTPlan plan;
    plan.nodes = res.chosen;
    plan.rows = phi_rows(res.chosen, n, total);
    plan.score = res.final.quotient;
    plan.rank_deficient = !std::isfinite(plan.score);
    return plan;
}

/// x_hat = U pinv(S Phi U) y.
inline Eigen::VectorXd linear_gft_recover(const LinearGFTPlan& plan, const Eigen::MatrixXd& phi, const LinearGFTBasis& basis,
                                          const Eigen::VectorXd& y) {
    const Eigen::MatrixXd a = gather_rows(phi * basis.U, plan.rows);
    detail::require(a.rows() == y.size(), "linear GFT: sample length does not match plan");
    if (a.rows() == 0) throw NumericalError("linear GFT: no samples");
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    cod.setThreshold(kRankRelativeTolerance);
    if (cod.rank() < static_cast<Eigen::Index>(basis.r)) throw NumericalError("linear GFT: sampled basis is rank-deficient");
    return basis.U * cod.solve(y);
}

} // namespace lkgft
