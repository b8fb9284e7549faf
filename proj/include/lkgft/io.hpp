#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "baselines.hpp"
#include "dynamics.hpp"
#include "error.hpp"
#include "graph.hpp"
#include "koopman.hpp"
#include "observables.hpp"
#include "recovery.hpp"
#include "sampling.hpp"

namespace lkgft::io {

using json = nlohmann::json;

/// Shortest representation that round-trips; "inf", "-inf" and "nan" for non-finite values.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// JSON has no infinity; +-inf and nan are stored as null.
inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double number_or_inf(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.at(0).size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j.at(static_cast<std::size_t>(r));
        if (static_cast<Eigen::Index>(row.size()) != cols) throw InvalidArgument("matrix rows have different lengths");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return m;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
    return a;
}

inline Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number_or_inf(j[i]);
    return v;
}

// --- graph / dynamics -------------------------------------------------------

/// Edge list (i < j, 0-based) plus node count.
inline json to_json(const Graph& g) {
    json edges = json::array();
    const auto& a = g.adjacency();
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = i + 1; j < a.cols(); ++j)
            if (a(i, j) != 0.0) edges.push_back({i, j});
    return {{"n", g.n()}, {"edges", edges}};
}

inline Graph graph_from_json(const json& j) {
    const auto n = j.at("n").get<std::size_t>();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (const auto& e : j.at("edges")) {
        const auto u = e.at(0).get<Eigen::Index>(), v = e.at(1).get<Eigen::Index>();
        if (u < 0 || v < 0 || u >= a.rows() || v >= a.rows() || u == v) throw InvalidArgument("invalid edge in graph JSON");
        a(u, v) = a(v, u) = 1.0;
    }
    return Graph(std::move(a));
}

inline json to_json(const DynamicsParams& p) {
    return {{"kind", to_string(p.kind)}, {"F", p.F}, {"B", p.B}, {"R", p.R}, {"dt", p.dt},
            {"steps_per_sample", p.steps_per_sample}, {"coupling", to_string(p.coupling)}};
}

/// Missing fields fall back to the defaults of the named kind.
inline DynamicsParams params_from_json(const json& j) {
    const auto kind = dynamics_kind_from_string(j.value("kind", std::string("biochemical")));
    DynamicsParams p = kind == DynamicsKind::Biochemical ? DynamicsParams::biochemical() : DynamicsParams::regulatory();
    p.F = j.value("F", p.F);
    p.B = j.value("B", p.B);
    p.R = j.value("R", p.R);
    p.dt = j.value("dt", p.dt);
    p.steps_per_sample = j.value("steps_per_sample", p.steps_per_sample);
    p.coupling = coupling_from_string(j.value("coupling", to_string(p.coupling)));
    p.validate();
    return p;
}

// --- trajectories ------------------------------------------------------------

/// Header `t,x_1,...,x_N`, one row per tick, t starting at 1.
inline std::string trajectory_to_csv(const Trajectory& tr) {
    std::ostringstream os;
    os << 't';
    for (std::size_t i = 1; i <= tr.n(); ++i) os << ",x_" << i;
    os << '\n';
    for (Eigen::Index t = 0; t < tr.states.cols(); ++t) {
        os << (t + 1);
        for (Eigen::Index i = 0; i < tr.states.rows(); ++i) os << ',' << format_double(tr.states(i, t));
        os << '\n';
    }
    return os.str();
}

inline Trajectory trajectory_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line.rfind("t,", 0) != 0) throw InvalidArgument("trajectory CSV: missing header");
    const auto n = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    std::vector<std::vector<double>> cols;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ','); // t
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != n) throw InvalidArgument("trajectory CSV: row has " + std::to_string(row.size()) + " values, expected " + std::to_string(n));
        cols.push_back(std::move(row));
    }
    Trajectory tr;
    tr.states.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t t = 0; t < cols.size(); ++t)
        for (std::size_t i = 0; i < n; ++i) tr.states(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = cols[t][i];
    return tr;
}

/// Trajectory bundle: graph, dynamics parameters, seed and states (rows are ticks).
inline json trajectory_bundle(const Trajectory& tr, const Graph& g, const DynamicsParams& p) {
    return {{"graph", to_json(g)}, {"params", to_json(p)}, {"seed", tr.seed},
            {"states", matrix_to_json(tr.states.transpose())}};
}

struct TrajectoryBundle {
    Trajectory trajectory;
    Graph graph;
    DynamicsParams params;
};

inline TrajectoryBundle bundle_from_json(const json& j) {
    TrajectoryBundle b{{}, graph_from_json(j.at("graph")), params_from_json(j.at("params"))};
    b.trajectory.states = matrix_from_json(j.at("states")).transpose();
    b.trajectory.seed = j.value("seed", std::uint64_t{0});
    b.trajectory.kind = b.params.kind;
    return b;
}

// --- observables / models ----------------------------------------------------

inline json to_json(const ObservableSpec& s) {
    json map = json::array();
    for (const auto& t : s.terms) map.push_back({{"form", to_string(t.form)}, {"nodes", t.nodes}, {"powers", t.powers}});
    return {{"kind", to_string(s.kind)}, {"n", s.n}, {"C", s.C}, {"powers", s.powers}, {"M", s.M()}, {"index_map", map}};
}

/// Rebuilds the spec from (kind, n, C, powers) and checks the stored index map against it.
inline ObservableSpec spec_from_json(const json& j) {
    ObservableSpec s = build_spec(observable_kind_from_string(j.at("kind").get<std::string>()), j.at("n").get<std::size_t>(),
                                  j.value("C", 1.0), j.value("powers", std::vector<int>{}));
    if (j.contains("index_map")) {
        const auto& map = j.at("index_map");
        if (map.size() != s.M()) throw InvalidArgument("observable spec JSON: index_map size does not match dictionary");
        for (std::size_t m = 0; m < s.M(); ++m) {
            const ObservableTerm t{term_form_from_string(map[m].at("form").get<std::string>()),
                                   map[m].at("nodes").get<std::vector<int>>(), map[m].at("powers").get<std::vector<int>>()};
            if (!(t == s.terms[m])) throw InvalidArgument("observable spec JSON: index_map entry " + std::to_string(m) + " differs");
        }
    }
    return s;
}

inline json to_json(const KoopmanModel& m) {
    return {{"spec", to_json(m.spec)}, {"residual", m.residual}, {"K", matrix_to_json(m.K)}};
}

inline KoopmanModel model_from_json(const json& j) {
    KoopmanModel m;
    m.spec = spec_from_json(j.at("spec"));
    m.K = matrix_from_json(j.at("K"));
    m.residual = j.value("residual", 0.0);
    if (static_cast<std::size_t>(m.K.rows()) != m.spec.M() || m.K.rows() != m.K.cols())
        throw InvalidArgument("model JSON: K is not M x M");
    return m;
}

// --- plans / results ---------------------------------------------------------

/// Node labels are 1-based, matching the x_1..x_N columns of trajectory CSVs.
inline json to_json(const SamplingPlan& p) {
    json nodes = json::array();
    for (auto v : p.nodes) nodes.push_back(v + 1);
    json trace = json::array();
    for (std::size_t k = 0; k < p.score_trace.size(); ++k)
        trace.push_back({{"step", k + 1},
                         {"node", p.nodes[k] + 1},
                         {"score", number(p.score_trace[k])},
                         {"sigma_n", k < p.sigma_n_trace.size() ? number(p.sigma_n_trace[k]) : json(nullptr)}});
    return {{"nodes", nodes}, {"tau", p.tau}, {"score", number(p.score)}, {"rank_deficient", p.rank_deficient},
            {"observable_indices", p.observable_indices}, {"score_trace", trace}};
}

/// Rebuilds the row bookkeeping from the node list.
inline SamplingPlan plan_from_json(const json& j, const ObservableSpec& spec) {
    std::vector<std::size_t> nodes;
    for (const auto& v : j.at("nodes")) {
        const auto label = v.get<long long>();
        if (label < 1 || static_cast<std::size_t>(label) > spec.n) throw InvalidArgument("plan JSON: node label out of range");
        nodes.push_back(static_cast<std::size_t>(label - 1));
    }
    SamplingPlan p = gamma_map(nodes, spec, j.at("tau").get<std::size_t>());
    p.score = number_or_inf(j.value("score", json(nullptr)));
    p.rank_deficient = j.value("rank_deficient", !std::isfinite(p.score));
    if (j.contains("score_trace"))
        for (const auto& s : j.at("score_trace")) {
            p.score_trace.push_back(number_or_inf(s.at("score")));
            p.sigma_n_trace.push_back(s.contains("sigma_n") && !s.at("sigma_n").is_null() ? s.at("sigma_n").get<double>() : 0.0);
        }
    return p;
}

/// Result with optional ground truth for per-tick N-RMSE.
inline json to_json(const RecoveryResult& r, const Eigen::MatrixXd* truth = nullptr) {
    json j = {{"x1_hat", vector_to_json(r.x1_hat)},
              {"objective", number(r.objective)},
              {"iterations", r.iterations},
              {"converged", r.converged},
              {"rank_verified", r.rank_verified},
              {"best_start", r.best_start},
              {"objective_trace", r.trace.objective},
              {"trajectory_hat", matrix_to_json(r.trajectory_hat.transpose())}};
    if (truth) {
        json per_t = json::array();
        for (Eigen::Index t = 0; t < truth->cols(); ++t) per_t.push_back(number(nrmse(r.trajectory_hat.col(t), truth->col(t))));
        j["nrmse_per_t"] = per_t;
        j["nrmse"] = number(nrmse(r.trajectory_hat, *truth));
    }
    return j;
}

// --- files -------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw Error("write failed for '" + path + "'");
}

inline json read_json(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw InvalidArgument("'" + path + "': " + e.what());
    }
}

} // namespace lkgft::io
