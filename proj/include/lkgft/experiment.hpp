#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "baselines.hpp"
#include "dynamics.hpp"
#include "error.hpp"
#include "graph.hpp"
#include "io.hpp"
#include "koopman.hpp"
#include "metrics.hpp"
#include "observables.hpp"
#include "parallel.hpp"
#include "recovery.hpp"
#include "rng.hpp"
#include "sampling.hpp"

namespace lkgft {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    DynamicsParams dynamics;
    InitialRange initial_range{0.0, 1.0};
    std::vector<std::size_t> n_values{20};
    double er_probability = 0.5;
    std::size_t topologies = 1;

    double C = 500.0;
    std::vector<int> log_powers{1, 2};
    double ridge = 0.0;

    std::size_t train_trajectories = 100;
    std::size_t train_tau = 50;

    std::size_t test_trajectories = 20;
    std::size_t linearization_tau = 50;
    std::vector<std::vector<int>> log_power_sets{{1}, {1, 2}, {1, 2, 3}};
    std::vector<int> poly_degrees{1, 2};

    std::size_t tau = 20;
    std::vector<double> sampling_rates{0.25, 0.5, 0.75};
    std::optional<double> gamma; ///< greedy threshold, used only when sampling_rates is empty
    std::size_t trials = 20;
    std::size_t refine_trajectories = 0;

    bool poly_gramian = true;
    bool linear_gft = true;
    int poly_max_degree = 1;

    OptimizerConfig optimizer;

    std::uint64_t seed = 1;
    std::size_t threads = 1;

    void validate() const {
        dynamics.validate();
        detail::require(initial_range.low < initial_range.high, "initial_range: low must be below high");
        detail::require(!n_values.empty(), "graph.n_values must not be empty");
        for (auto n : n_values) detail::require(n >= 1, "graph.n_values entries must be positive");
        detail::require(er_probability >= 0.0 && er_probability <= 1.0, "graph.er_probability must lie in [0, 1]");
        detail::require(topologies >= 1, "graph.topologies must be at least 1");
        detail::require(C > 0.0, "observables.C must be positive");
        detail::require(!log_powers.empty(), "observables.powers must not be empty");
        detail::require(ridge >= 0.0, "observables.ridge must be non-negative");
        detail::require(train_trajectories >= 1, "training.trajectories must be at least 1");
        detail::require(train_tau >= 2, "training.tau must be at least 2");
        detail::require(test_trajectories >= 1, "linearization.test_trajectories must be at least 1");
        detail::require(linearization_tau >= 2, "linearization.tau must be at least 2");
        for (const auto& p : log_power_sets) detail::require(!p.empty(), "linearization.log_power_sets entries must be non-empty");
        for (int d : poly_degrees) detail::require(d >= 1, "linearization.poly_degrees entries must be >= 1");
        detail::require(tau >= 2, "sampling.tau must be at least 2");
        for (double r : sampling_rates) detail::require(r > 0.0 && r <= 1.0, "sampling.rates must lie in (0, 1]");
        if (gamma) detail::require(*gamma >= 1.0, "sampling.gamma must be >= 1");
        detail::require(!sampling_rates.empty() || gamma.has_value(), "sampling needs rates or gamma");
        detail::require(trials >= 1, "sampling.trials must be at least 1");
        detail::require(poly_max_degree >= 1, "baselines.poly_max_degree must be at least 1");
        optimizer.dfp.validate();
    }
};

inline json to_json(const ExperimentConfig& c) {
    return {
        {"dynamics", io::to_json(c.dynamics)},
        {"initial_range", {c.initial_range.low, c.initial_range.high}},
        {"graph", {{"n_values", c.n_values}, {"er_probability", c.er_probability}, {"topologies", c.topologies}}},
        {"observables", {{"C", c.C}, {"powers", c.log_powers}, {"ridge", c.ridge}}},
        {"training", {{"trajectories", c.train_trajectories}, {"tau", c.train_tau}}},
        {"linearization",
         {{"test_trajectories", c.test_trajectories},
          {"tau", c.linearization_tau},
          {"log_power_sets", c.log_power_sets},
          {"poly_degrees", c.poly_degrees}}},
        {"sampling",
         {{"tau", c.tau},
          {"rates", c.sampling_rates},
          {"gamma", c.gamma ? json(*c.gamma) : json(nullptr)},
          {"trials", c.trials},
          {"refine_trajectories", c.refine_trajectories}}},
        {"baselines", {{"poly_gramian", c.poly_gramian}, {"linear_gft", c.linear_gft}, {"poly_max_degree", c.poly_max_degree}}},
        {"optimizer",
         {{"max_iterations", c.optimizer.dfp.max_iterations},
          {"gradient_tolerance", c.optimizer.dfp.gradient_tolerance},
          {"c1", c.optimizer.dfp.c1},
          {"c2", c.optimizer.dfp.c2},
          {"restarts", c.optimizer.restarts}}},
        {"seed", c.seed},
        {"threads", c.threads},
    };
}

/// Every field is optional; unspecified values keep their defaults.
inline ExperimentConfig config_from_json(const json& j) {
    static const std::vector<std::string> known{"dynamics", "initial_range", "graph", "observables", "training",
                                                "linearization", "sampling", "baselines", "optimizer", "seed", "threads"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end()) throw InvalidArgument("config: unknown key '" + key + "'");

    ExperimentConfig c;
    const json empty = json::object();
    static const std::map<std::string, std::vector<std::string>> section_keys{
        {"graph", {"n_values", "er_probability", "topologies"}},
        {"observables", {"C", "powers", "ridge"}},
        {"training", {"trajectories", "tau"}},
        {"linearization", {"test_trajectories", "tau", "log_power_sets", "poly_degrees"}},
        {"sampling", {"tau", "rates", "gamma", "trials", "refine_trajectories"}},
        {"baselines", {"poly_gramian", "linear_gft", "poly_max_degree"}},
        {"optimizer", {"max_iterations", "gradient_tolerance", "c1", "c2", "restarts"}},
        {"dynamics", {"kind", "F", "B", "R", "dt", "steps_per_sample", "coupling"}}};
    for (const auto& [name, keys] : section_keys) {
        if (!j.contains(name)) continue;
        if (!j.at(name).is_object()) throw InvalidArgument("config: '" + name + "' must be an object");
        for (const auto& [key, _] : j.at(name).items())
            if (std::find(keys.begin(), keys.end(), key) == keys.end())
                throw InvalidArgument("config: unknown key '" + name + "." + key + "'");
    }
    auto section = [&](const char* name) -> const json& { return j.contains(name) ? j.at(name) : empty; };
    try {
        c.dynamics = io::params_from_json(section("dynamics"));
        c.initial_range = default_initial_range(c.dynamics.kind);
        if (j.contains("initial_range")) {
            const auto r = j.at("initial_range").get<std::vector<double>>();
            detail::require(r.size() == 2, "initial_range must be [low, high]");
            c.initial_range = {r[0], r[1]};
        }
        const auto& g = section("graph");
        c.n_values = g.value("n_values", c.n_values);
        c.er_probability = g.value("er_probability", c.er_probability);
        c.topologies = g.value("topologies", c.topologies);
        const auto& o = section("observables");
        c.C = o.value("C", c.C);
        c.log_powers = o.value("powers", c.log_powers);
        c.ridge = o.value("ridge", c.ridge);
        const auto& t = section("training");
        c.train_trajectories = t.value("trajectories", c.train_trajectories);
        c.train_tau = t.value("tau", c.train_tau);
        const auto& l = section("linearization");
        c.test_trajectories = l.value("test_trajectories", c.test_trajectories);
        c.linearization_tau = l.value("tau", c.linearization_tau);
        c.log_power_sets = l.value("log_power_sets", c.log_power_sets);
        c.poly_degrees = l.value("poly_degrees", c.poly_degrees);
        const auto& s = section("sampling");
        c.tau = s.value("tau", c.tau);
        c.sampling_rates = s.value("rates", c.sampling_rates);
        if (s.contains("gamma") && !s.at("gamma").is_null()) c.gamma = s.at("gamma").get<double>();
        c.trials = s.value("trials", c.trials);
        c.refine_trajectories = s.value("refine_trajectories", c.refine_trajectories);
        const auto& b = section("baselines");
        c.poly_gramian = b.value("poly_gramian", c.poly_gramian);
        c.linear_gft = b.value("linear_gft", c.linear_gft);
        c.poly_max_degree = b.value("poly_max_degree", c.poly_max_degree);
        const auto& op = section("optimizer");
        c.optimizer.dfp.max_iterations = op.value("max_iterations", c.optimizer.dfp.max_iterations);
        c.optimizer.dfp.gradient_tolerance = op.value("gradient_tolerance", c.optimizer.dfp.gradient_tolerance);
        c.optimizer.dfp.c1 = op.value("c1", c.optimizer.dfp.c1);
        c.optimizer.dfp.c2 = op.value("c2", c.optimizer.dfp.c2);
        c.optimizer.restarts = op.value("restarts", c.optimizer.restarts);
        c.seed = j.value("seed", c.seed);
        c.threads = j.value("threads", c.threads);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    c.optimizer.init_range = c.initial_range;
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct ExperimentRecord {
    std::string sweep;
    std::size_t n = 0;
    std::size_t topology = 0;
    long trial = -1;
    std::uint64_t seed = 0;
    std::string method;
    std::string dictionary;
    std::size_t M = 0;
    double target_rate = std::numeric_limits<double>::quiet_NaN();
    double sampling_rate = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::size_t> nodes;
    double nrmse = std::numeric_limits<double>::quiet_NaN();
    bool converged = true;
    std::string status = "ok";
    std::string message;
    double runtime_ms = 0.0;

    bool ok() const { return status == "ok"; }
};

struct Aggregate {
    std::string sweep;
    std::string method;
    std::string dictionary;
    std::size_t n = 0; ///< 0 aggregates over every network size
    std::size_t M = 0;
    double target_rate = std::numeric_limits<double>::quiet_NaN();
    std::size_t count = 0;
    std::size_t failures = 0;
    double mean_nrmse = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentReport {
    json config;
    std::vector<ExperimentRecord> records;
    std::vector<Aggregate> aggregates;
};

/// Means of ok records, keyed per network size and, for sampling sweeps, across sizes.
inline std::vector<Aggregate> compute_aggregates(const std::vector<ExperimentRecord>& records) {
    using Key = std::tuple<std::string, std::string, std::string, std::size_t, std::size_t, double>;
    std::map<Key, Aggregate> groups;
    auto add = [&](const ExperimentRecord& r, std::size_t n, std::size_t m) {
        const double rate = std::isnan(r.target_rate) ? -1.0 : r.target_rate;
        auto& g = groups[Key{r.sweep, r.method, r.dictionary, n, m, rate}];
        if (g.count + g.failures == 0) {
            g = Aggregate{r.sweep, r.method, r.dictionary, n, m, r.target_rate, 0, 0, 0.0};
        }
        if (r.ok()) {
            g.mean_nrmse += r.nrmse;
            ++g.count;
        } else {
            ++g.failures;
        }
    };
    for (const auto& r : records) {
        add(r, r.n, r.M);
        if (r.sweep == "sampling") add(r, 0, 0);
    }
    std::vector<Aggregate> out;
    for (auto& [_, g] : groups) {
        g.mean_nrmse = g.count ? g.mean_nrmse / static_cast<double>(g.count) : std::numeric_limits<double>::quiet_NaN();
        out.push_back(g);
    }
    return out;
}

inline const std::vector<std::string>& csv_columns() {
    static const std::vector<std::string> cols{"sweep",      "n",           "topology", "trial",    "seed",
                                               "method",     "dictionary",  "M",        "target_rate",
                                               "sampling_rate", "num_nodes", "nodes",    "nrmse",    "converged",
                                               "status",     "message"};
    return cols;
}

namespace detail {

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + '"';
}

inline std::string join_nodes(const std::vector<std::size_t>& nodes) {
    std::string s;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (k) s += ' ';
        s += std::to_string(nodes[k] + 1);
    }
    return s;
}

inline std::string opt_number(double v) { return std::isnan(v) ? std::string() : io::format_double(v); }

} // namespace detail

/// One row per record, fixed column order, 1-based node labels. Timing is left out so
/// identical configurations produce identical bytes.
inline std::string report_to_csv(const ExperimentReport& report) {
    std::ostringstream os;
    const auto& cols = csv_columns();
    for (std::size_t k = 0; k < cols.size(); ++k) os << (k ? "," : "") << cols[k];
    os << '\n';
    for (const auto& r : report.records) {
        os << r.sweep << ',' << r.n << ',' << r.topology << ',' << r.trial << ',' << r.seed << ',' << r.method << ','
           << r.dictionary << ',' << r.M << ',' << detail::opt_number(r.target_rate) << ','
           << detail::opt_number(r.sampling_rate) << ',' << r.nodes.size() << ',' << detail::join_nodes(r.nodes) << ','
           << detail::opt_number(r.nrmse) << ',' << (r.converged ? 1 : 0) << ',' << r.status << ','
           << detail::csv_escape(r.message) << '\n';
    }
    return os.str();
}

inline json to_json(const ExperimentRecord& r) {
    json nodes = json::array();
    for (auto v : r.nodes) nodes.push_back(v + 1);
    return {{"sweep", r.sweep},
            {"n", r.n},
            {"topology", r.topology},
            {"trial", r.trial},
            {"seed", r.seed},
            {"method", r.method},
            {"dictionary", r.dictionary},
            {"M", r.M},
            {"target_rate", io::number(r.target_rate)},
            {"sampling_rate", io::number(r.sampling_rate)},
            {"nodes", nodes},
            {"nrmse", io::number(r.nrmse)},
            {"converged", r.converged},
            {"status", r.status},
            {"message", r.message},
            {"runtime_ms", r.runtime_ms}};
}

inline ExperimentRecord record_from_json(const json& j) {
    auto num = [&](const char* k) {
        return j.at(k).is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at(k).get<double>();
    };
    ExperimentRecord r;
    r.sweep = j.at("sweep").get<std::string>();
    r.n = j.at("n").get<std::size_t>();
    r.topology = j.at("topology").get<std::size_t>();
    r.trial = j.at("trial").get<long>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.method = j.at("method").get<std::string>();
    r.dictionary = j.at("dictionary").get<std::string>();
    r.M = j.at("M").get<std::size_t>();
    r.target_rate = num("target_rate");
    r.sampling_rate = num("sampling_rate");
    for (const auto& v : j.at("nodes")) r.nodes.push_back(v.get<std::size_t>() - 1);
    r.nrmse = num("nrmse");
    r.converged = j.at("converged").get<bool>();
    r.status = j.at("status").get<std::string>();
    r.message = j.at("message").get<std::string>();
    r.runtime_ms = j.value("runtime_ms", 0.0);
    return r;
}

inline json to_json(const Aggregate& a) {
    return {{"sweep", a.sweep},   {"method", a.method}, {"dictionary", a.dictionary},
            {"n", a.n},           {"M", a.M},           {"target_rate", io::number(a.target_rate)},
            {"count", a.count},   {"failures", a.failures}, {"mean_nrmse", io::number(a.mean_nrmse)}};
}

inline json to_json(const ExperimentReport& report) {
    json records = json::array(), aggregates = json::array();
    for (const auto& r : report.records) records.push_back(to_json(r));
    for (const auto& a : report.aggregates) aggregates.push_back(to_json(a));
    return {{"config", report.config}, {"records", records}, {"aggregates", aggregates}};
}

/// Loads records and recomputes the aggregates from them.
inline ExperimentReport report_from_json(const json& j) {
    ExperimentReport r;
    r.config = j.value("config", json::object());
    for (const auto& rec : j.at("records")) r.records.push_back(record_from_json(rec));
    r.aggregates = compute_aggregates(r.records);
    return r;
}

enum class ReportFormat { Csv, Json, Both };

inline ReportFormat report_format_from_string(const std::string& s) {
    if (s == "csv") return ReportFormat::Csv;
    if (s == "json") return ReportFormat::Json;
    if (s == "both") return ReportFormat::Both;
    throw InvalidArgument("unknown format '" + s + "' (expected csv, json or both)");
}

/// Writes <dir>/<stem>.csv and/or <dir>/<stem>.json; returns the paths written.
inline std::vector<std::string> emit(const ExperimentReport& report, ReportFormat format, const std::string& dir,
                                     const std::string& stem) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
    std::vector<std::string> written;
    if (format != ReportFormat::Json) {
        const auto path = (std::filesystem::path(dir) / (stem + ".csv")).string();
        io::write_file(path, report_to_csv(report));
        written.push_back(path);
    }
    if (format != ReportFormat::Csv) {
        const auto path = (std::filesystem::path(dir) / (stem + ".json")).string();
        io::write_file(path, to_json(report).dump(2) + "\n");
        written.push_back(path);
    }
    return written;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

namespace seeds {
// Stream tags for derive_seed; every random draw in a sweep traces to (master seed, tag, indices).
inline constexpr std::uint64_t graph = 1, train = 2, test = 3, refine = 4, optimizer = 5, holdout = 6;
} // namespace seeds

/// Network, training trajectories and simulator context for one (n, topology) cell.
struct ExperimentSetup {
    Graph graph;
    SimulatorContext context;
    std::vector<Trajectory> training;
};

inline ExperimentSetup make_setup(const ExperimentConfig& cfg, std::size_t n, std::size_t topology) {
    ExperimentSetup s;
    s.graph = generate_er_graph(n, cfg.er_probability, derive_seed(cfg.seed, {seeds::graph, n, topology}));
    s.context = SimulatorContext{s.graph, cfg.dynamics, cfg.initial_range, cfg.train_tau};
    s.training.reserve(cfg.train_trajectories);
    for (std::size_t d = 0; d < cfg.train_trajectories; ++d) {
        const auto seed = derive_seed(cfg.seed, {seeds::train, n, topology, d});
        s.training.push_back(simulate(s.graph, cfg.dynamics,
                                      random_initial_state(n, cfg.initial_range.low, cfg.initial_range.high, seed),
                                      cfg.train_tau, seed));
    }
    return s;
}

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

template <class Fn>
void guarded(ExperimentRecord& rec, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    try {
        fn();
    } catch (const std::exception& e) {
        rec.status = "failed";
        rec.message = e.what();
        rec.nrmse = std::numeric_limits<double>::quiet_NaN();
    }
    rec.runtime_ms = elapsed_ms(start);
}

} // namespace detail

/// Linearization N-RMSE against dictionary size for the Log and Poly families.
/// Both families start from the identity dictionary (M = N, plain DMD).
inline ExperimentReport run_linearization_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentReport report;
    report.config = to_json(cfg);

    struct Cell {
        std::string dictionary;
        ObservableKind kind;
        std::vector<int> powers;
    };
    std::vector<Cell> cells;
    cells.push_back({"log", ObservableKind::Identity, {}});
    for (const auto& p : cfg.log_power_sets) cells.push_back({"log", ObservableKind::Log, p});
    cells.push_back({"poly", ObservableKind::Identity, {}});
    for (int d : cfg.poly_degrees) cells.push_back({"poly", ObservableKind::Poly, {d}});

    for (auto n : cfg.n_values) {
        for (std::size_t topo = 0; topo < cfg.topologies; ++topo) {
            const ExperimentSetup setup = make_setup(cfg, n, topo);
            std::vector<Trajectory> test;
            for (std::size_t i = 0; i < cfg.test_trajectories; ++i) {
                const auto seed = derive_seed(cfg.seed, {seeds::holdout, n, topo, i});
                test.push_back(simulate(setup.graph, cfg.dynamics,
                                        random_initial_state(n, cfg.initial_range.low, cfg.initial_range.high, seed),
                                        cfg.linearization_tau, seed));
            }
            std::vector<ExperimentRecord> out(cells.size());
            parallel_for(cells.size(), cfg.threads, [&](std::size_t k) {
                auto& rec = out[k];
                rec.sweep = "linearization";
                rec.n = n;
                rec.topology = topo;
                rec.seed = derive_seed(cfg.seed, {seeds::train, n, topo});
                rec.method = "koopman";
                rec.dictionary = cells[k].dictionary;
                detail::guarded(rec, [&] {
                    const ObservableSpec spec = build_spec(cells[k].kind, n, cfg.C, cells[k].powers);
                    rec.M = spec.M();
                    const KoopmanModel model = fit(assemble_training(setup.training, spec), spec, cfg.ridge);
                    rec.nrmse = linearization_nrmse(model, test);
                    if (!std::isfinite(rec.nrmse)) throw NumericalError("model rollout diverged");
                });
            });
            report.records.insert(report.records.end(), out.begin(), out.end());
        }
    }
    report.aggregates = compute_aggregates(report.records);
    return report;
}

inline const char* kMethodProposed = "log_koopman_nlgft";
inline const char* kMethodGramian = "poly_gramian";
inline const char* kMethodLinearGft = "linear_gft";

/// Full pipeline per trial: simulate, fit, (refine), select, sample, recover, for the
/// proposed method and the enabled baselines at equal sensor budgets.
inline ExperimentReport run_sampling_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentReport report;
    report.config = to_json(cfg);

    for (auto n : cfg.n_values) {
        for (std::size_t topo = 0; topo < cfg.topologies; ++topo) {
            const ExperimentSetup setup = make_setup(cfg, n, topo);

            const ObservableSpec log_spec = make_log_spec(n, cfg.C, cfg.log_powers);
            const TrainingSet log_training = assemble_training(setup.training, log_spec);
            const KoopmanModel log_model = fit(log_training, log_spec, cfg.ridge);
            const EvolutionStack log_theta = build_theta(log_model, cfg.tau);

            std::optional<ObservableSpec> poly_spec;
            std::optional<KoopmanModel> poly_model;
            std::optional<EvolutionStack> poly_theta;
            std::string poly_error;
            if (cfg.poly_gramian) {
                try {
                    poly_spec = make_poly_spec(n, cfg.C, cfg.poly_max_degree);
                    poly_model = fit(assemble_training(setup.training, *poly_spec), *poly_spec, cfg.ridge);
                    poly_theta = build_theta(*poly_model, cfg.tau);
                } catch (const std::exception& e) {
                    poly_error = e.what();
                }
            }

            // Budgets: one per target rate, or a single gamma-driven selection.
            struct Budget {
                double target_rate;
                SamplingPlan plan;
            };
            std::vector<Budget> budgets;
            if (!cfg.sampling_rates.empty()) {
                for (double rate : cfg.sampling_rates) {
                    SelectionConfig sc;
                    sc.gamma = std::nullopt;
                    sc.max_nodes = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(rate * n - 1e-9)), 1, n);
                    budgets.push_back({rate, greedy_select(log_theta, log_spec, sc)});
                }
            } else {
                SelectionConfig sc;
                sc.gamma = cfg.gamma;
                budgets.push_back({std::numeric_limits<double>::quiet_NaN(), greedy_select(log_theta, log_spec, sc)});
            }

            for (const auto& budget : budgets) {
                const std::size_t count = std::max<std::size_t>(budget.plan.nodes.size(), 1);

                std::optional<SamplingPlan> poly_plan;
                std::optional<LinearObservableRecovery> poly_recovery;
                std::string gramian_error = poly_error;
                if (cfg.poly_gramian && poly_model) {
                    try {
                        const auto sel = gramian_select_budget(*poly_model, count);
                        poly_plan = gamma_map(sel.nodes, *poly_spec, cfg.tau);
                        poly_recovery.emplace(*poly_theta, *poly_spec, *poly_plan);
                    } catch (const std::exception& e) {
                        gramian_error = e.what();
                    }
                }

                std::optional<LinearGFTBasis> gft_basis;
                std::optional<LinearGFTPlan> gft_plan;
                std::string gft_error;
                const Eigen::MatrixXd phi = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
                if (cfg.linear_gft) {
                    try {
                        gft_basis = build_laplacian_basis(setup.graph, count);
                        gft_plan = linear_gft_select(*gft_basis, phi, count);
                    } catch (const std::exception& e) {
                        gft_error = e.what();
                    }
                }

                const std::size_t methods = 1 + (cfg.poly_gramian ? 1 : 0) + (cfg.linear_gft ? 1 : 0);
                std::vector<ExperimentRecord> out(cfg.trials * methods);
                parallel_for(cfg.trials, cfg.threads, [&](std::size_t trial) {
                    const auto trial_seed = derive_seed(cfg.seed, {seeds::test, n, topo, trial});
                    ExperimentRecord base;
                    base.sweep = "sampling";
                    base.n = n;
                    base.topology = topo;
                    base.trial = static_cast<long>(trial);
                    base.seed = trial_seed;
                    base.target_rate = budget.target_rate;

                    std::optional<Trajectory> truth;
                    std::string sim_error;
                    try {
                        truth = simulate(setup.graph, cfg.dynamics,
                                         random_initial_state(n, cfg.initial_range.low, cfg.initial_range.high, trial_seed),
                                         cfg.tau, trial_seed);
                    } catch (const std::exception& e) {
                        sim_error = e.what();
                    }

                    std::size_t slot = trial * methods;
                    auto run = [&](const std::string& method, const std::string& dictionary, std::size_t M,
                                   const std::vector<std::size_t>& nodes, const std::string& setup_error, auto&& body) {
                        ExperimentRecord rec = base;
                        rec.method = method;
                        rec.dictionary = dictionary;
                        rec.M = M;
                        rec.nodes = nodes;
                        rec.sampling_rate = static_cast<double>(nodes.size()) / static_cast<double>(n);
                        detail::guarded(rec, [&] {
                            if (!sim_error.empty()) throw Error(sim_error);
                            if (!setup_error.empty()) throw Error(setup_error);
                            body(rec);
                        });
                        out[slot++] = std::move(rec);
                    };

                    run(kMethodProposed, "log", log_spec.M(), budget.plan.nodes, "", [&](ExperimentRecord& rec) {
                        const SampleMatrix samples = take_samples(*truth, log_spec, budget.plan);
                        OptimizerConfig oc = cfg.optimizer;
                        oc.init_range = cfg.initial_range;
                        oc.seed = derive_seed(cfg.seed, {seeds::optimizer, n, topo, trial});
                        RecoveryResult result;
                        if (cfg.refine_trajectories > 0) {
                            const Eigen::VectorXd guess = initial_guess(samples, log_spec, cfg.initial_range.midpoint());
                            Eigen::VectorXd values(static_cast<Eigen::Index>(budget.plan.nodes.size()));
                            for (std::size_t k = 0; k < budget.plan.nodes.size(); ++k)
                                values(static_cast<Eigen::Index>(k)) = guess(static_cast<Eigen::Index>(budget.plan.nodes[k]));
                            const KoopmanModel refined = refine_with_samples(
                                log_model, log_training, budget.plan.nodes, values, setup.context, cfg.refine_trajectories,
                                derive_seed(cfg.seed, {seeds::refine, n, topo, trial}), cfg.ridge);
                            result = recover_initial_state(samples, build_theta(refined, cfg.tau), log_spec, oc);
                        } else {
                            result = recover_initial_state(samples, log_theta, log_spec, oc);
                        }
                        rec.converged = result.converged;
                        rec.nrmse = nrmse(result.trajectory_hat, truth->states);
                    });

                    if (cfg.poly_gramian) {
                        const std::size_t m = poly_spec ? poly_spec->M() : 0;
                        const std::vector<std::size_t> nodes = poly_plan ? poly_plan->nodes : std::vector<std::size_t>{};
                        run(kMethodGramian, "poly", m, nodes, gramian_error, [&](ExperimentRecord& rec) {
                            const SampleMatrix samples = take_samples(*truth, *poly_spec, *poly_plan);
                            rec.nrmse = nrmse(poly_recovery->reconstruct(samples.y), truth->states);
                            if (!std::isfinite(rec.nrmse)) throw NumericalError("reconstruction is not finite");
                        });
                    }

                    if (cfg.linear_gft) {
                        const std::vector<std::size_t> nodes = gft_plan ? gft_plan->nodes : std::vector<std::size_t>{};
                        run(kMethodLinearGft, "laplacian", gft_basis ? gft_basis->r : 0, nodes, gft_error,
                            [&](ExperimentRecord& rec) {
                                Eigen::MatrixXd x_hat(truth->states.rows(), truth->states.cols());
                                for (Eigen::Index t = 0; t < x_hat.cols(); ++t) {
                                    Eigen::VectorXd y(static_cast<Eigen::Index>(gft_plan->rows.size()));
                                    for (std::size_t k = 0; k < gft_plan->rows.size(); ++k)
                                        y(static_cast<Eigen::Index>(k)) = truth->states(static_cast<Eigen::Index>(gft_plan->rows[k]), t);
                                    x_hat.col(t) = linear_gft_recover(*gft_plan, phi, *gft_basis, y);
                                }
                                rec.nrmse = nrmse(x_hat, truth->states);
                            });
                    }
                });
                report.records.insert(report.records.end(), out.begin(), out.end());
            }
        }
    }
    report.aggregates = compute_aggregates(report.records);
    return report;
}

} // namespace lkgft
