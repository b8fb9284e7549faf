#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace lkgft {

enum class ObservableKind { Log, Poly, Identity };

inline std::string to_string(ObservableKind k) {
    switch (k) {
    case ObservableKind::Log: return "log";
    case ObservableKind::Poly: return "poly";
    case ObservableKind::Identity: return "identity";
    }
    return "?";
}

inline ObservableKind observable_kind_from_string(const std::string& s) {
    if (s == "log") return ObservableKind::Log;
    if (s == "poly") return ObservableKind::Poly;
    if (s == "identity") return ObservableKind::Identity;
    throw InvalidArgument("unknown observable kind '" + s + "'");
}

enum class TermForm {
    Constant, ///< 1
    Linear,   ///< x_i / C
    Log,      ///< log(1 + (x_i / C)^p)
    Monomial  ///< prod_k (x_k / C)^{p_k}
};

inline std::string to_string(TermForm f) {
    switch (f) {
    case TermForm::Constant: return "constant";
    case TermForm::Linear: return "linear";
    case TermForm::Log: return "log";
    case TermForm::Monomial: return "monomial";
    }
    return "?";
}

inline TermForm term_form_from_string(const std::string& s) {
    if (s == "constant") return TermForm::Constant;
    if (s == "linear") return TermForm::Linear;
    if (s == "log") return TermForm::Log;
    if (s == "monomial") return TermForm::Monomial;
    throw InvalidArgument("unknown term form '" + s + "'");
}

/// One scalar observable: its functional form and the nodes it reads.
/// `nodes` is sorted and `powers` is parallel to it.
struct ObservableTerm {
    TermForm form = TermForm::Constant;
    std::vector<int> nodes;
    std::vector<int> powers;

    bool operator==(const ObservableTerm&) const = default;
};

/// Dictionary psi together with the bookkeeping that maps observables to owner nodes.
struct ObservableSpec {
    ObservableKind kind = ObservableKind::Identity;
    std::size_t n = 0;
    double C = 1.0;
    std::vector<int> powers; ///< P for Log, {max_degree} for Poly, empty for Identity
    std::vector<ObservableTerm> terms;
    std::vector<std::size_t> linear_index; ///< observable holding x_i / C, per node

    std::size_t M() const noexcept { return terms.size(); }

    /// Index of the constant observable, or M() when the dictionary has none.
    std::size_t constant_index() const noexcept {
        for (std::size_t m = 0; m < terms.size(); ++m)
            if (terms[m].form == TermForm::Constant) return m;
        return terms.size();
    }

    /// Observables per node in the Log layout (x_i/C plus one log term per power).
    std::size_t log_block() const noexcept { return 1 + powers.size(); }
};

namespace detail {

inline double ipow(double u, int p) {
    double r = 1.0;
    for (int k = 0; k < p; ++k) r *= u;
    return r;
}

inline void finish_linear_index(ObservableSpec& spec) {
    spec.linear_index.assign(spec.n, spec.terms.size());
    for (std::size_t m = 0; m < spec.terms.size(); ++m) {
        const auto& t = spec.terms[m];
        const bool linear = t.form == TermForm::Linear ||
                            (t.form == TermForm::Monomial && t.nodes.size() == 1 && t.powers[0] == 1);
        if (linear) spec.linear_index[static_cast<std::size_t>(t.nodes[0])] = m;
    }
    for (auto idx : spec.linear_index)
        if (idx == spec.terms.size()) throw InvalidArgument("dictionary lacks a linear observable for some node");
}

} // namespace detail

inline ObservableSpec make_identity_spec(std::size_t n) {
    detail::require(n >= 1, "node count must be positive");
    ObservableSpec spec;
    spec.kind = ObservableKind::Identity;
    spec.n = n;
    spec.C = 1.0;
    for (std::size_t i = 0; i < n; ++i) spec.terms.push_back({TermForm::Linear, {static_cast<int>(i)}, {1}});
    detail::finish_linear_index(spec);
    return spec;
}

/// Log dictionary: [1, then per node x_i/C followed by log(1+(x_i/C)^p) for p in P].
inline ObservableSpec make_log_spec(std::size_t n, double C, std::vector<int> powers) {
    detail::require(n >= 1, "node count must be positive");
    detail::require(C > 0.0, "scaling constant C must be positive");
    detail::require(!powers.empty(), "power set P must not be empty");
    std::sort(powers.begin(), powers.end());
    powers.erase(std::unique(powers.begin(), powers.end()), powers.end());
    detail::require(powers.front() >= 1, "powers must be positive integers");

    ObservableSpec spec;
    spec.kind = ObservableKind::Log;
    spec.n = n;
    spec.C = C;
    spec.powers = powers;
    spec.terms.reserve(1 + n * (1 + powers.size()));
    spec.terms.push_back({TermForm::Constant, {}, {}});
    for (std::size_t i = 0; i < n; ++i) {
        const int node = static_cast<int>(i);
        spec.terms.push_back({TermForm::Linear, {node}, {1}});
        for (int p : powers) spec.terms.push_back({TermForm::Log, {node}, {p}});
    }
    detail::finish_linear_index(spec);
    return spec;
}

/// Deduplicated pairwise monomials (x_i/C)^{p_i} (x_j/C)^{p_j}, p_i, p_j in 0..max_degree,
/// ordered lexicographically on (i, j, p_i, p_j). i = j folds into single-node powers up to
/// 2 * max_degree.
inline ObservableSpec make_poly_spec(std::size_t n, double C, int max_degree) {
    detail::require(n >= 1, "node count must be positive");
    detail::require(C > 0.0, "scaling constant C must be positive");
    detail::require(max_degree >= 1, "max degree must be at least 1");

    ObservableSpec spec;
    spec.kind = ObservableKind::Poly;
    spec.n = n;
    spec.C = C;
    spec.powers = {max_degree};
    spec.terms.push_back({TermForm::Constant, {}, {}});
    for (std::size_t i = 0; i < n; ++i) {
        const int a = static_cast<int>(i);
        for (int p = 1; p <= 2 * max_degree; ++p) spec.terms.push_back({TermForm::Monomial, {a}, {p}});
        for (std::size_t j = i + 1; j < n; ++j) {
            const int b = static_cast<int>(j);
            for (int pa = 1; pa <= max_degree; ++pa)
                for (int pb = 1; pb <= max_degree; ++pb) spec.terms.push_back({TermForm::Monomial, {a, b}, {pa, pb}});
        }
    }
    detail::finish_linear_index(spec);
    return spec;
}

/// Factory keyed by kind; for Poly the largest entry of `powers` is the max degree.
inline ObservableSpec build_spec(ObservableKind kind, std::size_t n, double C, const std::vector<int>& powers) {
    switch (kind) {
    case ObservableKind::Identity: return make_identity_spec(n);
    case ObservableKind::Log: return make_log_spec(n, C, powers);
    case ObservableKind::Poly:
        detail::require(!powers.empty(), "poly dictionary needs a max degree");
        return make_poly_spec(n, C, *std::max_element(powers.begin(), powers.end()));
    }
    throw InvalidArgument("unknown observable kind");
}

namespace detail {

inline double log_argument(double u, int p, int node) {
    const double arg = 1.0 + ipow(u, p);
    if (!(arg > 0.0) || !std::isfinite(arg))
        throw DomainError("lift: log(1 + (x/C)^" + std::to_string(p) + ") undefined at node " + std::to_string(node));
    return arg;
}

inline void check_state(const ObservableSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
    require(static_cast<std::size_t>(x.size()) == spec.n, "state length does not match observable spec");
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (!std::isfinite(x(i))) throw DomainError("lift: non-finite value at node " + std::to_string(i));
}

} // namespace detail

/// psi(x).
inline Eigen::VectorXd lift(const ObservableSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
    detail::check_state(spec, x);
    Eigen::VectorXd z(static_cast<Eigen::Index>(spec.M()));
    for (std::size_t m = 0; m < spec.M(); ++m) {
        const auto& t = spec.terms[m];
        double v = 1.0;
        switch (t.form) {
        case TermForm::Constant: break;
        case TermForm::Linear: v = x(t.nodes[0]) / spec.C; break;
        case TermForm::Log: v = std::log(detail::log_argument(x(t.nodes[0]) / spec.C, t.powers[0], t.nodes[0])); break;
        case TermForm::Monomial:
            for (std::size_t k = 0; k < t.nodes.size(); ++k) v *= detail::ipow(x(t.nodes[k]) / spec.C, t.powers[k]);
            break;
        }
        z(static_cast<Eigen::Index>(m)) = v;
    }
    return z;
}

/// Lift every column of a state matrix.
inline Eigen::MatrixXd lift_columns(const ObservableSpec& spec, const Eigen::Ref<const Eigen::MatrixXd>& states) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(spec.M()), states.cols());
    for (Eigen::Index c = 0; c < states.cols(); ++c) out.col(c) = lift(spec, states.col(c));
    return out;
}

/// psi^{-1}: reads the x_i/C entries and rescales. Other entries are ignored.
inline Eigen::VectorXd unlift(const ObservableSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& z) {
    detail::require(static_cast<std::size_t>(z.size()) == spec.M(), "observable vector length does not match spec");
    Eigen::VectorXd x(static_cast<Eigen::Index>(spec.n));
    for (std::size_t i = 0; i < spec.n; ++i)
        x(static_cast<Eigen::Index>(i)) = spec.C * z(static_cast<Eigen::Index>(spec.linear_index[i]));
    return x;
}

/// d psi / d x, an M x n matrix.
inline Eigen::MatrixXd lift_jacobian(const ObservableSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
    detail::check_state(spec, x);
    const double c = spec.C;
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(spec.M()), static_cast<Eigen::Index>(spec.n));
    for (std::size_t m = 0; m < spec.M(); ++m) {
        const auto& t = spec.terms[m];
        const auto row = static_cast<Eigen::Index>(m);
        switch (t.form) {
        case TermForm::Constant: break;
        case TermForm::Linear: jac(row, t.nodes[0]) = 1.0 / c; break;
        case TermForm::Log: {
            const double u = x(t.nodes[0]) / c;
            const int p = t.powers[0];
            jac(row, t.nodes[0]) = p * detail::ipow(u, p - 1) / (c * detail::log_argument(u, p, t.nodes[0]));
            break;
        }
        case TermForm::Monomial:
            for (std::size_t k = 0; k < t.nodes.size(); ++k) {
                double d = t.powers[k] * detail::ipow(x(t.nodes[k]) / c, t.powers[k] - 1) / c;
                for (std::size_t l = 0; l < t.nodes.size(); ++l)
                    if (l != k) d *= detail::ipow(x(t.nodes[l]) / c, t.powers[l]);
                jac(row, t.nodes[k]) += d;
            }
            break;
        }
    }
    return jac;
}

/// True iff every node read by observable m lies in `selected` (a node-membership mask).
/// The constant observable reads no node and is always determined.
inline bool determined_by(const ObservableTerm& term, const std::vector<bool>& selected) {
    return std::all_of(term.nodes.begin(), term.nodes.end(),
                       [&](int v) { return selected[static_cast<std::size_t>(v)]; });
}

/// sup |x| / C over a batch of states; the log approximation wants this below a small delta.
inline double scale_ratio(const ObservableSpec& spec, const Eigen::Ref<const Eigen::MatrixXd>& states) {
    return states.size() == 0 ? 0.0 : states.cwiseAbs().maxCoeff() / spec.C;
}

inline constexpr double kDefaultScaleDelta = 0.2;

} // namespace lkgft
