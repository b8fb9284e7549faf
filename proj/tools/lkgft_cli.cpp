// Command-line front end: simulate, fit, select, recover and the two experiment sweeps.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include <lkgft/lkgft.hpp>

namespace {

using json = nlohmann::json;
using namespace lkgft;

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    std::string format; ///< empty until parsed; each subcommand has its own default
};

struct Outcome {
    std::vector<std::string> outputs;
    json summary = json::object();
};

ExperimentConfig load_config(const Common& c) {
    ExperimentConfig cfg = c.config_path.empty() ? config_from_json(json::object()) : config_from_json(io::read_json(c.config_path));
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
}

std::string out_path(const Common& c, const std::string& name) {
    std::error_code ec;
    std::filesystem::create_directories(c.out_dir, ec);
    if (ec) throw Error("cannot create output directory '" + c.out_dir + "': " + ec.message());
    return (std::filesystem::path(c.out_dir) / name).string();
}

std::string write(const Common& c, const std::string& name, const std::string& content) {
    const auto path = out_path(c, name);
    io::write_file(path, content);
    return path;
}

/// Accepts either a graph JSON ({n, edges}) or a trajectory bundle carrying one.
Graph load_graph(const std::string& path) {
    const json j = io::read_json(path);
    return io::graph_from_json(j.contains("graph") ? j.at("graph") : j);
}

Trajectory load_trajectory(const std::string& path) {
    if (std::filesystem::path(path).extension() == ".csv") return io::trajectory_from_csv(io::read_file(path));
    return io::bundle_from_json(io::read_json(path)).trajectory;
}

Outcome run_simulate(const Common& c, std::optional<std::size_t> n_opt, std::optional<std::size_t> tau_opt) {
    const ExperimentConfig cfg = load_config(c);
    const std::size_t n = n_opt.value_or(cfg.n_values.front());
    const std::size_t tau = tau_opt.value_or(cfg.tau);
    const Graph graph = generate_er_graph(n, cfg.er_probability, derive_seed(cfg.seed, {seeds::graph, n, 0}));
    const auto seed = derive_seed(cfg.seed, {seeds::test, n, 0, 0});
    const Trajectory tr = simulate(graph, cfg.dynamics,
                                   random_initial_state(n, cfg.initial_range.low, cfg.initial_range.high, seed), tau, seed);
    Outcome o;
    if (c.format == "csv") {
        o.outputs.push_back(write(c, "trajectory.csv", io::trajectory_to_csv(tr)));
        o.outputs.push_back(write(c, "graph.json", io::to_json(graph).dump(2) + "\n"));
    } else {
        o.outputs.push_back(write(c, "trajectory.json", io::trajectory_bundle(tr, graph, cfg.dynamics).dump(2) + "\n"));
    }
    o.summary = {{"n", n}, {"tau", tau}, {"edges", graph.edge_count()}, {"seed", seed}};
    return o;
}

Outcome run_fit(const Common& c, const std::string& dictionary, std::optional<int> degree, const std::string& graph_path) {
    const ExperimentConfig cfg = load_config(c);
    ExperimentSetup setup;
    const std::size_t n = graph_path.empty() ? cfg.n_values.front() : load_graph(graph_path).n();
    if (graph_path.empty()) {
        setup = make_setup(cfg, n, 0);
    } else {
        setup.graph = load_graph(graph_path);
        setup.context = SimulatorContext{setup.graph, cfg.dynamics, cfg.initial_range, cfg.train_tau};
        for (std::size_t d = 0; d < cfg.train_trajectories; ++d) {
            const auto seed = derive_seed(cfg.seed, {seeds::train, n, 0, d});
            setup.training.push_back(simulate(setup.graph, cfg.dynamics,
                                              random_initial_state(n, cfg.initial_range.low, cfg.initial_range.high, seed),
                                              cfg.train_tau, seed));
        }
    }
    const ObservableKind kind = observable_kind_from_string(dictionary);
    const std::vector<int> powers = kind == ObservableKind::Poly ? std::vector<int>{degree.value_or(cfg.poly_max_degree)}
                                                                  : cfg.log_powers;
    const ObservableSpec spec = build_spec(kind, n, cfg.C, powers);
    const KoopmanModel model = fit(assemble_training(setup.training, spec), spec, cfg.ridge);

    std::vector<Trajectory> test;
    for (std::size_t i = 0; i < cfg.test_trajectories; ++i) {
        const auto seed = derive_seed(cfg.seed, {seeds::holdout, n, 0, i});
        test.push_back(simulate(setup.graph, cfg.dynamics,
                                random_initial_state(n, cfg.initial_range.low, cfg.initial_range.high, seed),
                                cfg.linearization_tau, seed));
    }
    Outcome o;
    o.outputs.push_back(write(c, "model.json", io::to_json(model).dump() + "\n"));
    if (c.format == "csv") {
        std::string csv;
        for (Eigen::Index r = 0; r < model.K.rows(); ++r) {
            for (Eigen::Index k = 0; k < model.K.cols(); ++k) csv += (k ? "," : "") + io::format_double(model.K(r, k));
            csv += '\n';
        }
        o.outputs.push_back(write(c, "koopman.csv", csv));
    }
    o.summary = {{"n", n}, {"M", spec.M()}, {"dictionary", to_string(kind)}, {"residual", model.residual},
                 {"linearization_nrmse", io::number(linearization_nrmse(model, test))}};
    return o;
}

Outcome run_select(const Common& c, const std::string& model_path, std::optional<double> rate, std::optional<std::size_t> tau_opt) {
    const ExperimentConfig cfg = load_config(c);
    const KoopmanModel model = io::model_from_json(io::read_json(model_path));
    const std::size_t tau = tau_opt.value_or(cfg.tau);
    SelectionConfig sc;
    if (rate) {
        detail::require(*rate > 0.0 && *rate <= 1.0, "--rate must lie in (0, 1]");
        sc.gamma = std::nullopt;
        sc.max_nodes = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(*rate * model.spec.n - 1e-9)), 1, model.spec.n);
    } else if (cfg.gamma) {
        sc.gamma = cfg.gamma;
    }
    const EvolutionStack theta = build_theta(model, tau);
    const SamplingPlan plan = greedy_select(theta, model.spec, sc);
    Outcome o;
    o.outputs.push_back(write(c, "plan.json", io::to_json(plan).dump(2) + "\n"));
    if (c.format == "csv") {
        std::string csv = "step,node,score,sigma_n\n";
        for (std::size_t k = 0; k < plan.nodes.size(); ++k)
            csv += std::to_string(k + 1) + "," + std::to_string(plan.nodes[k] + 1) + "," + io::format_double(plan.score_trace[k]) +
                   "," + io::format_double(k < plan.sigma_n_trace.size() ? plan.sigma_n_trace[k] : 0.0) + "\n";
        o.outputs.push_back(write(c, "selection.csv", csv));
    }
    o.summary = {{"nodes", plan.nodes.size()}, {"score", io::number(plan.score)}, {"rank_deficient", plan.rank_deficient},
                 {"verify_rank", verify_rank(plan, theta, model.spec)}};
    return o;
}

Outcome run_recover(const Common& c, const std::string& model_path, const std::string& plan_path, const std::string& traj_path) {
    const ExperimentConfig cfg = load_config(c);
    const KoopmanModel model = io::model_from_json(io::read_json(model_path));
    const SamplingPlan plan = io::plan_from_json(io::read_json(plan_path), model.spec);
    const Trajectory truth = load_trajectory(traj_path);
    detail::require(truth.tau() >= plan.tau, "trajectory is shorter than the plan horizon");
    Trajectory window = truth;
    window.states = truth.states.leftCols(static_cast<Eigen::Index>(plan.tau));

    const SampleMatrix samples = take_samples(window, model.spec, plan);
    OptimizerConfig oc = cfg.optimizer;
    oc.init_range = cfg.initial_range;
    oc.seed = derive_seed(cfg.seed, {seeds::optimizer});
    const RecoveryResult result = recover_initial_state(samples, build_theta(model, plan.tau), model.spec, oc);

    Outcome o;
    if (c.format == "csv") {
        std::string csv = "t";
        for (std::size_t i = 1; i <= model.spec.n; ++i) csv += ",x_hat_" + std::to_string(i);
        csv += ",nrmse_t\n";
        for (Eigen::Index t = 0; t < result.trajectory_hat.cols(); ++t) {
            csv += std::to_string(t + 1);
            for (Eigen::Index i = 0; i < result.trajectory_hat.rows(); ++i) csv += "," + io::format_double(result.trajectory_hat(i, t));
            csv += "," + io::format_double(nrmse(result.trajectory_hat.col(t), window.states.col(t))) + "\n";
        }
        o.outputs.push_back(write(c, "recovery.csv", csv));
    } else {
        o.outputs.push_back(write(c, "recovery.json", io::to_json(result, &window.states).dump(2) + "\n"));
    }
    o.summary = {{"nrmse", io::number(nrmse(result.trajectory_hat, window.states))},
                 {"objective", io::number(result.objective)},
                 {"converged", result.converged},
                 {"rank_verified", result.rank_verified},
                 {"iterations", result.iterations}};
    return o;
}

Outcome run_sweep(const Common& c, bool sampling) {
    const ExperimentConfig cfg = load_config(c);
    const ExperimentReport report = sampling ? run_sampling_sweep(cfg) : run_linearization_sweep(cfg);
    Outcome o;
    o.outputs = emit(report, report_format_from_string(c.format), c.out_dir, sampling ? "sampling" : "linearization");
    std::size_t failed = 0;
    for (const auto& r : report.records) failed += r.ok() ? 0 : 1;
    json agg = json::array();
    for (const auto& a : report.aggregates) agg.push_back(to_json(a));
    o.summary = {{"records", report.records.size()}, {"failed", failed}, {"aggregates", agg}};
    return o;
}

std::string error_kind(const std::exception& e) {
    if (dynamic_cast<const InvalidArgument*>(&e)) return "invalid_argument";
    if (dynamic_cast<const DomainError*>(&e)) return "domain_error";
    if (dynamic_cast<const DivergenceError*>(&e)) return "divergence";
    if (dynamic_cast<const NumericalError*>(&e)) return "numerical_error";
    return "error";
}

int fail(const std::string& kind, const std::string& message, int code) {
    std::cerr << json{{"status", "error"}, {"error", {{"type", kind}, {"message", message}}}}.dump() << std::endl;
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Koopman graph-signal sampling and recovery toolkit"};
    app.require_subcommand(1);
    Common common;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "Override the master seed");
        sub->add_option("--out-dir", common.out_dir, "Output directory");
        sub->add_option("--format", common.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    };

    std::optional<std::size_t> n_opt, tau_opt;
    std::optional<int> degree;
    std::optional<double> rate;
    std::string dictionary = "log", graph_path, model_path, plan_path, traj_path;

    auto* sim = app.add_subcommand("simulate", "Simulate one trajectory on a seeded random network");
    add_common(sim);
    sim->add_option("--n", n_opt, "Number of nodes (default: first graph.n_values entry)");
    sim->add_option("--tau", tau_opt, "Number of ticks (default: sampling.tau)");

    auto* fitc = app.add_subcommand("fit", "Fit a Koopman matrix from seeded training trajectories");
    add_common(fitc);
    fitc->add_option("--dictionary", dictionary, "Observable dictionary")->check(CLI::IsMember({"log", "poly", "identity"}));
    fitc->add_option("--degree", degree, "Maximum monomial degree for the poly dictionary");
    fitc->add_option("--graph", graph_path, "Graph JSON or trajectory bundle to train on")->check(CLI::ExistingFile);

    auto* sel = app.add_subcommand("select", "Greedy sensor selection for a fitted model");
    add_common(sel);
    sel->add_option("--model", model_path, "Model JSON written by fit")->required()->check(CLI::ExistingFile);
    sel->add_option("--rate", rate, "Target sampling rate; overrides sampling.gamma");
    sel->add_option("--tau", tau_opt, "Horizon (default: sampling.tau)");

    auto* rec = app.add_subcommand("recover", "Recover a trajectory from the samples selected by a plan");
    add_common(rec);
    rec->add_option("--model", model_path, "Model JSON written by fit")->required()->check(CLI::ExistingFile);
    rec->add_option("--plan", plan_path, "Plan JSON written by select")->required()->check(CLI::ExistingFile);
    rec->add_option("--trajectory", traj_path, "Ground-truth trajectory (.csv or bundle .json)")->required()->check(CLI::ExistingFile);

    auto* swl = app.add_subcommand("sweep-linearization", "Linearization error against dictionary size");
    add_common(swl);
    auto* sws = app.add_subcommand("sweep-sampling", "Recovery error against sampling rate, with baselines");
    add_common(sws);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), 2);
    }

    if (common.format.empty()) common.format = (fitc->parsed() || sel->parsed() || rec->parsed()) ? "json" : "csv";

    try {
        Outcome o;
        if (sim->parsed()) o = run_simulate(common, n_opt, tau_opt);
        else if (fitc->parsed()) o = run_fit(common, dictionary, degree, graph_path);
        else if (sel->parsed()) o = run_select(common, model_path, rate, tau_opt);
        else if (rec->parsed()) o = run_recover(common, model_path, plan_path, traj_path);
        else if (swl->parsed()) o = run_sweep(common, false);
        else o = run_sweep(common, true);
        std::cout << json{{"status", "ok"}, {"outputs", o.outputs}, {"summary", o.summary}}.dump() << std::endl;
        return 0;
    } catch (const InvalidArgument& e) {
        return fail(error_kind(e), e.what(), 2);
    } catch (const std::exception& e) {
        return fail(error_kind(e), e.what(), 1);
    }
}
