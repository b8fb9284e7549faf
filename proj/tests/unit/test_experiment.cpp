#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace lkgft;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.n_values = {6};
    c.train_trajectories = 30;
    c.train_tau = 20;
    c.test_trajectories = 4;
    c.linearization_tau = 15;
    c.log_power_sets = {{1}, {1, 2}, {1, 2, 3}};
    c.poly_degrees = {1};
    c.tau = 8;
    c.sampling_rates = {0.5, 1.0};
    c.trials = 3;
    return c;
}

const ExperimentRecord* find(const ExperimentReport& r, const std::string& dict, std::size_t m) {
    for (const auto& rec : r.records)
        if (rec.dictionary == dict && rec.M == m) return &rec;
    return nullptr;
}

} // namespace

TEST(Config, DefaultsRoundTrip) {
    const ExperimentConfig c;
    EXPECT_NO_THROW(c.validate());
    const auto back = config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_EQ(back.C, 500.0);
    EXPECT_EQ(back.tau, 20u);
    EXPECT_EQ(back.trials, 20u);
}

TEST(Config, PartialJsonKeepsDefaults) {
    const auto c = config_from_json(json::parse(R"({"dynamics": {"kind": "regulatory"}, "sampling": {"rates": [0.5]}})"));
    EXPECT_EQ(c.dynamics.kind, DynamicsKind::Regulatory);
    EXPECT_EQ(c.sampling_rates, std::vector<double>{0.5});
    EXPECT_EQ(c.train_trajectories, 100u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(config_from_json(json::parse(R"({"samplng": {}})")), InvalidArgument);
    EXPECT_THROW(config_from_json(json::parse(R"({"sampling": {"ratez": [0.5]}})")), InvalidArgument);
    EXPECT_THROW(config_from_json(json::parse(R"({"sampling": {"rates": [1.5]}})")), InvalidArgument);
    EXPECT_THROW(config_from_json(json::parse(R"({"graph": {"n_values": "20"}})")), InvalidArgument);
    EXPECT_THROW(config_from_json(json::parse(R"({"sampling": {"rates": [], "gamma": 0.5}})")), InvalidArgument);
}

TEST(LinearizationSweep, IdentityCellsAgreeAndNestedSetsImprove) {
    auto cfg = small_config();
    const auto r = run_linearization_sweep(cfg);
    ASSERT_EQ(r.records.size(), 6u);
    for (const auto& rec : r.records) EXPECT_TRUE(rec.ok()) << rec.message;
    const auto* log_id = find(r, "log", 6);
    const auto* poly_id = find(r, "poly", 6);
    ASSERT_TRUE(log_id && poly_id);
    EXPECT_LT(std::abs(log_id->nrmse - poly_id->nrmse), 1e-10);
    const double e1 = find(r, "log", 13)->nrmse, e2 = find(r, "log", 19)->nrmse, e3 = find(r, "log", 25)->nrmse;
    EXPECT_LE(e2, e1 * (1 + 1e-9));
    EXPECT_LE(e3, e2 * (1 + 1e-9));
}

TEST(SamplingSweep, FullRateApproachesLinearizationFloor) {
    auto cfg = small_config();
    cfg.poly_gramian = false;
    cfg.linear_gft = false;
    const auto r = run_sampling_sweep(cfg);
    auto lin = cfg;
    lin.linearization_tau = cfg.tau;
    lin.log_power_sets = {cfg.log_powers};
    const auto lin_report = run_linearization_sweep(lin);
    const auto* floor_rec = find(lin_report, "log", 19);
    ASSERT_NE(floor_rec, nullptr);
    const double floor = floor_rec->nrmse;
    double full = 0.0;
    std::size_t count = 0;
    for (const auto& a : r.aggregates)
        if (a.method == kMethodProposed && a.target_rate == 1.0 && a.n == 6) {
            full = a.mean_nrmse;
            count = a.count;
        }
    EXPECT_EQ(count, cfg.trials);
    EXPECT_LE(full, 5.0 * floor) << "floor " << floor;
}

TEST(SamplingSweep, RecordsCarryBudgetsAndOneBasedCsvNodes) {
    auto cfg = small_config();
    cfg.sampling_rates = {0.5};
    cfg.trials = 2;
    const auto r = run_sampling_sweep(cfg);
    std::size_t proposed = 0;
    for (const auto& rec : r.records) {
        if (rec.method == kMethodProposed) {
            ++proposed;
            EXPECT_EQ(rec.nodes.size(), 3u);
        }
        if (rec.ok()) EXPECT_LE(rec.nodes.size(), 3u) << rec.method;
    }
    EXPECT_EQ(proposed, 2u);
    for (const auto& rec : to_json(r)["records"])
        for (const auto& v : rec["nodes"]) EXPECT_GE(v.get<int>(), 1);
}

TEST(Report, EmptyReportIsHeaderOnly) {
    const auto csv = report_to_csv(ExperimentReport{});
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1);
    EXPECT_EQ(csv.rfind("sweep,", 0), 0u);
}

TEST(Report, JsonRoundTripReproducesAggregates) {
    auto cfg = small_config();
    cfg.trials = 2;
    const auto r = run_sampling_sweep(cfg);
    const auto back = report_from_json(json::parse(to_json(r).dump()));
    EXPECT_EQ(report_to_csv(back), report_to_csv(r));
    ASSERT_EQ(back.aggregates.size(), r.aggregates.size());
    for (std::size_t i = 0; i < r.aggregates.size(); ++i) {
        EXPECT_EQ(back.aggregates[i].count, r.aggregates[i].count);
        if (std::isnan(r.aggregates[i].mean_nrmse))
            EXPECT_TRUE(std::isnan(back.aggregates[i].mean_nrmse));
        else
            EXPECT_DOUBLE_EQ(back.aggregates[i].mean_nrmse, r.aggregates[i].mean_nrmse);
    }
}

TEST(Report, CsvIsIdenticalAcrossRunsAndThreadCounts) {
    auto cfg = small_config();
    cfg.trials = 3;
    const auto a = report_to_csv(run_sampling_sweep(cfg));
    cfg.threads = 4;
    EXPECT_EQ(report_to_csv(run_sampling_sweep(cfg)), a);
    EXPECT_EQ(report_to_csv(run_sampling_sweep(cfg)), a);
    auto lin = small_config();
    const auto b = report_to_csv(run_linearization_sweep(lin));
    lin.threads = 3;
    EXPECT_EQ(report_to_csv(run_linearization_sweep(lin)), b);
}

TEST(Report, GuardedRecordsFailures) {
    ExperimentRecord rec;
    detail::guarded(rec, [] { throw NumericalError("rank collapse"); });
    EXPECT_EQ(rec.status, "failed");
    EXPECT_EQ(rec.message, "rank collapse");
    EXPECT_TRUE(std::isnan(rec.nrmse));
    rec.sweep = "sampling";
    rec.method = "m";
    rec.n = 5;
    const auto aggs = compute_aggregates({rec});
    ASSERT_FALSE(aggs.empty());
    EXPECT_EQ(aggs[0].failures, 1u);
    EXPECT_EQ(aggs[0].count, 0u);
}

TEST(Report, EmitWritesRequestedFormats) {
    const auto dir = (std::filesystem::temp_directory_path() / "lkgft_emit_test").string();
    std::filesystem::remove_all(dir);
    const auto paths = emit(ExperimentReport{}, ReportFormat::Both, dir, "x");
    EXPECT_EQ(paths.size(), 2u);
    for (const auto& p : paths) EXPECT_TRUE(std::filesystem::exists(p));
    EXPECT_THROW(report_format_from_string("xml"), InvalidArgument);
    std::filesystem::remove_all(dir);
}
