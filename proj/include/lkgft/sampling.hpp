#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "error.hpp"
#include "koopman.hpp"
#include "observables.hpp"

namespace lkgft {

inline constexpr double kRankRelativeTolerance = 1e-10;
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Node set S and the rows of Theta its sensors observe over tau ticks.
struct SamplingPlan {
    std::vector<std::size_t> nodes;              ///< in selection order
    std::vector<std::size_t> observable_indices; ///< S_psi, ascending
    std::vector<std::size_t> row_indices;        ///< m + t*M, time-major
    std::size_t tau = 0;
    double score = kInfinity;
    std::vector<double> score_trace;   ///< quotient after each greedy step
    std::vector<double> sigma_n_trace; ///< N-th singular value after each greedy step
    bool rank_deficient = false;
};

struct SelectionConfig {
    std::optional<double> gamma = 1e6; ///< stop once the quotient drops to gamma; nullopt disables
    std::size_t max_nodes = 0;         ///< 0 means all nodes

    void validate() const {
        if (gamma) detail::require(*gamma >= 1.0, "selection threshold gamma must be >= 1");
    }
};

/// Singular spectrum summary of a candidate submatrix against a target rank.
struct ScoreDetail {
    double quotient = kInfinity; ///< sigma_1 / sigma_target, +inf when rank-deficient
    double sigma_1 = 0.0;
    double sigma_target = 0.0;
    std::size_t rank = 0;
};

/// Singular values, descending. Tall inputs are first reduced by QR.
inline Eigen::VectorXd singular_values(const Eigen::Ref<const Eigen::MatrixXd>& a) {
    if (a.size() == 0) return {};
    if (a.rows() > 2 * a.cols()) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
        const Eigen::MatrixXd r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
        return Eigen::BDCSVD<Eigen::MatrixXd>(r).singularValues();
    }
    return Eigen::BDCSVD<Eigen::MatrixXd>(a).singularValues();
}

inline ScoreDetail score_matrix(const Eigen::Ref<const Eigen::MatrixXd>& a, std::size_t target_rank) {
    ScoreDetail d;
    const Eigen::VectorXd s = singular_values(a);
    if (s.size() == 0 || s(0) <= 0.0) return d;
    d.sigma_1 = s(0);
    const double tol = kRankRelativeTolerance * s(0);
    for (Eigen::Index k = 0; k < s.size(); ++k)
        if (s(k) > tol) ++d.rank;
    if (static_cast<std::size_t>(s.size()) >= target_rank && target_rank >= 1) {
        d.sigma_target = s(static_cast<Eigen::Index>(target_rank - 1));
        if (d.sigma_target > tol) d.quotient = s(0) / d.sigma_target;
    }
    return d;
}

inline Eigen::MatrixXd gather_rows(const Eigen::Ref<const Eigen::MatrixXd>& a, const std::vector<std::size_t>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), a.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = a.row(static_cast<Eigen::Index>(rows[k]));
    return out;
}

/// Gamma(S): observables determined by S (the constant always is) and their rows in Theta.
inline SamplingPlan gamma_map(const std::vector<std::size_t>& nodes, const ObservableSpec& spec, std::size_t tau) {
    std::vector<bool> mask(spec.n, false);
    for (auto v : nodes) {
        detail::require(v < spec.n, "gamma_map: node index out of range");
        mask[v] = true;
    }
    SamplingPlan plan;
    plan.nodes = nodes;
    plan.tau = tau;
    for (std::size_t m = 0; m < spec.M(); ++m)
        if (determined_by(spec.terms[m], mask)) plan.observable_indices.push_back(m);
    plan.row_indices.reserve(tau * plan.observable_indices.size());
    for (std::size_t t = 0; t < tau; ++t)
        for (auto m : plan.observable_indices) plan.row_indices.push_back(m + t * spec.M());
    return plan;
}

inline ScoreDetail selection_detail(const std::vector<std::size_t>& nodes, const EvolutionStack& theta,
                                    const ObservableSpec& spec) {
    detail::require(theta.M == spec.M(), "selection_score: Theta does not match spec");
    const auto plan = gamma_map(nodes, spec, theta.tau);
    if (plan.row_indices.size() < spec.n) return {};
    return score_matrix(gather_rows(theta.theta, plan.row_indices), spec.n);
}

/// sigma_1 / sigma_N of Gamma(S) Theta; +inf when fewer than N independent rows.
inline double selection_score(const std::vector<std::size_t>& nodes, const EvolutionStack& theta,
                              const ObservableSpec& spec) {
    return selection_detail(nodes, theta, spec).quotient;
}

/// Strict ordering for greedy candidates: smaller quotient, then larger rank, then larger sigma_target.
inline bool better_candidate(const ScoreDetail& a, const ScoreDetail& b) {
    if (a.quotient != b.quotient) return a.quotient < b.quotient;
    if (a.rank != b.rank) return a.rank > b.rank;
    return a.sigma_target > b.sigma_target;
}

struct GreedyResult {
    std::vector<std::size_t> chosen;
    std::vector<ScoreDetail> trace;
    ScoreDetail final;
};

/// Greedy forward selection over `candidates` groups. `evaluate` scores a group set;
/// selection stops when the quotient reaches gamma or `max_groups` are chosen.
/// Ties go to the lowest group index.
inline GreedyResult greedy_groups(std::size_t candidates,
                                  const std::function<ScoreDetail(const std::vector<std::size_t>&)>& evaluate,
                                  std::optional<double> gamma, std::size_t max_groups) {
    GreedyResult res;
    res.final = evaluate(res.chosen);
    std::vector<bool> used(candidates, false);
    while (res.chosen.size() < std::min(max_groups, candidates)) {
        if (gamma && res.final.quotient <= *gamma) break;
        std::optional<std::size_t> best;
        ScoreDetail best_detail;
        std::vector<std::size_t> trial = res.chosen;
        trial.push_back(0);
        for (std::size_t c = 0; c < candidates; ++c) {
            if (used[c]) continue;
            trial.back() = c;
            const ScoreDetail d = evaluate(trial);
            if (!best || better_candidate(d, best_detail)) {
                best = c;
                best_detail = d;
            }
        }
        used[*best] = true;
        res.chosen.push_back(*best);
        res.trace.push_back(best_detail);
        res.final = best_detail;
    }
    return res;
}

/// Greedy sensor-node selection minimizing sigma_1 / sigma_N of Gamma(S) Theta.
inline SamplingPlan greedy_select(const EvolutionStack& theta, const ObservableSpec& spec, const SelectionConfig& config) {
    config.validate();
    detail::require(theta.M == spec.M(), "greedy_select: Theta does not match spec");
    const std::size_t cap = config.max_nodes == 0 ? spec.n : std::min(config.max_nodes, spec.n);
    const auto res = greedy_groups(
        spec.n, [&](const std::vector<std::size_t>& s) { return selection_detail(s, theta, spec); }, config.gamma, cap);

    SamplingPlan plan = gamma_map(res.chosen, spec, theta.tau);
    plan.score = res.final.quotient;
    for (const auto& d : res.trace) {
        plan.score_trace.push_back(d.quotient);
        plan.sigma_n_trace.push_back(d.sigma_target);
    }
    plan.rank_deficient = !std::isfinite(plan.score);
    return plan;
}

/// Plan with a precomputed score for an explicit node set.
inline SamplingPlan make_plan(const std::vector<std::size_t>& nodes, const EvolutionStack& theta, const ObservableSpec& spec) {
    SamplingPlan plan = gamma_map(nodes, spec, theta.tau);
    plan.score = selection_score(nodes, theta, spec);
    plan.rank_deficient = !std::isfinite(plan.score);
    return plan;
}

/// At least N linearly independent rows in Gamma(S) Theta; the row-count condition is checked first.
inline bool verify_rank(const SamplingPlan& plan, const EvolutionStack& theta, const ObservableSpec& spec) {
    if (plan.row_indices.size() < spec.n) return false;
    return score_matrix(gather_rows(theta.theta, plan.row_indices), spec.n).rank >= spec.n;
}

} // namespace lkgft
