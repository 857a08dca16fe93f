#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "gridpse/error.hpp"
#include "gridpse/metrics/metrics.hpp"

using namespace gridpse;

using Runs = std::vector<std::vector<double>>;

TEST_CASE("rmse") {
    CHECK(rmse({{1.0, 2.0}}, {{1.0, 2.0}}) == 0.0);
    CHECK(rmse({{1.02}}, {{1.0}}) == doctest::Approx(0.02).epsilon(1e-12));
    CHECK(rmse({{1.0}, {1.02}}, {{1.0}, {1.0}}) == doctest::Approx(0.02 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(rmse({{1.0}}, {{1.0, 2.0}}), DataError);
    CHECK_THROWS_AS(rmse({{1.0}}, {}), DataError);
    CHECK_THROWS_AS(rmse({}, {}), DataError);
}

TEST_CASE("nrmse, variance, error coefficient") {
    CHECK(nrmse(0.0, 0.7) == 0.0);
    CHECK(nrmse(0.01, 1.0) == doctest::Approx(0.01));
    CHECK(nrmse(0.5, -10.0) == doctest::Approx(0.05));
    CHECK_THROWS_AS(nrmse(0.01, 0.0), DataError);

    CHECK(variance_avg({{1.0, 2.0}, {1.0, 2.0}}) == 0.0);
    CHECK(variance_avg({{0.9}, {1.1}}) == doctest::Approx(0.01).epsilon(1e-12));
    const Runs r{{0.9, 3.0}, {1.1, 5.0}};
    Runs twice = r;
    twice.insert(twice.end(), r.begin(), r.end());
    CHECK(variance_avg(twice) == doctest::Approx(variance_avg(r)).epsilon(1e-15));

    CHECK(error_coefficient(1.05, 1.0) == doctest::Approx(5.0));
    CHECK(error_coefficient(1.0, 1.0) == 0.0);
    CHECK(error_coefficient(-9.0, -10.0) == doctest::Approx(-10.0));
    CHECK_THROWS_AS(error_coefficient(1.0, 0.0), DataError);
}

namespace {

RunRecord record(std::uint64_t seed, std::vector<double> v, std::vector<double> p, double obj) {
    RunRecord r;
    r.seed = seed;
    r.instance = "hand";
    r.status = "optimal";
    r.est_voltages = std::move(v);
    r.true_voltages = {1.0, 1.0};
    r.est_parameters = std::move(p);
    r.true_parameters = {-10.0, -5.0};
    r.objective = obj;
    return r;
}

std::vector<RunRecord> hand_records() {
    return {record(0, {1.01, 0.98}, {-9.0, -4.5}, 0.5), record(1, {0.99, 1.00}, {-11.0, -5.5}, 0.2),
            record(2, {1.00, 1.02}, {-10.0, -4.0}, 6.0)};
}

}  // namespace

TEST_CASE("aggregate matches the spreadsheet oracle") {
    // Oracle values computed outside the library (Python statistics module).
    const auto rep = aggregate(hand_records());
    CHECK(rep.runs == 3);
    CHECK(rep.failed == 0);
    CHECK(std::abs(rep.rmse_v - 0.012909944487358068) < 1e-12);
    CHECK(std::abs(rep.nrmse_v - 0.012909944487358068) < 1e-12);
    CHECK(std::abs(rep.variance_v - 0.00016666666666666699) < 1e-12);
    CHECK(std::abs(rep.rmse_p - 0.7637626158259734) < 1e-12);
    CHECK(std::abs(rep.nrmse_p - 0.10414944761263274) < 1e-12);
    CHECK(std::abs(rep.variance_p - 0.5277777777777778) < 1e-12);
    REQUIRE(rep.median_parameters.size() == 2);
    CHECK(rep.median_parameters[0] == -10.0);
    CHECK(rep.median_parameters[1] == -4.5);
    CHECK(std::abs(rep.median_error_coefficient[0]) < 1e-12);
    CHECK(std::abs(rep.median_error_coefficient[1] + 10.0) < 1e-12);
    CHECK(rep.median_objective == 0.5);
    CHECK(rep.outliers == std::vector<std::uint64_t>{2});
    CHECK_FALSE(rep.high_variance);
}

TEST_CASE("aggregate properties") {
    auto recs = hand_records();
    const auto base = aggregate(recs);
    std::reverse(recs.begin(), recs.end());
    const auto rev = aggregate(recs);
    CHECK(rev.rmse_p == base.rmse_p);
    CHECK(rev.variance_v == base.variance_v);
    CHECK(rev.median_parameters == base.median_parameters);

    std::vector<RunRecord> exact;
    for (std::uint64_t s = 0; s < 3; ++s) exact.push_back(record(s, {1.0, 1.0}, {-10.0, -5.0}, 0.0));
    const auto zero = aggregate(exact);
    CHECK(zero.rmse_v == 0.0);
    CHECK(zero.nrmse_p == 0.0);
    CHECK(zero.variance_p == 0.0);
    CHECK(zero.outliers.empty());

    auto mixed = hand_records();
    mixed[1].method = Method::Mc;
    CHECK_THROWS_AS(aggregate(mixed), DataError);
    mixed = hand_records();
    mixed[1].instance = "other";
    CHECK_THROWS_AS(aggregate(mixed), DataError);
    CHECK_THROWS_AS(aggregate({}), DataError);

    auto failed = hand_records();
    failed[2].est_voltages.clear();
    failed[2].status = "error: factorization";
    const auto f = aggregate(failed);
    CHECK(f.runs == 2);
    CHECK(f.failed == 1);
}

TEST_CASE("high variance flag") {
    auto recs = hand_records();
    recs[0].est_parameters = {-30.0, -5.0};
    CHECK(aggregate(recs).high_variance);
}

TEST_CASE("record json round trip") {
    auto r = hand_records()[0];
    r.method = Method::SbtMc;
    r.certificate_gap = 1.5e-3;
    r.wall_seconds = 0.25;
    r.timestamp = "2026-01-01T00:00:00Z";
    const auto back = record_from_json(record_to_json(r));
    CHECK(back.seed == r.seed);
    CHECK(back.method == Method::SbtMc);
    CHECK(back.est_parameters == r.est_parameters);
    CHECK(back.certificate_gap == r.certificate_gap);
    CHECK(back.timestamp == r.timestamp);
    CHECK_THROWS_AS(record_from_json("{\"seed\": 1}"), DataError);
    CHECK_THROWS_AS(method_from_string("ipopt"), DataError);

    const auto table = report_table({aggregate(hand_records())});
    CHECK(table.find("NRMSE_P") != std::string::npos);
    CHECK(report_to_json({aggregate(hand_records())}).find("\"outlier_seeds\"") != std::string::npos);
}
