#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "gridpse/error.hpp"
#include "gridpse/grid/matpower.hpp"
#include "gridpse/measurement/measurement.hpp"
#include "gridpse/pse/estimate.hpp"
#include "gridpse/pse/problem.hpp"
#include "support.hpp"

using namespace gridpse;

namespace {

Network two_bus(bool zi_tail = false) {
    std::vector<Bus> buses{{1, BusKind::Slack, 1.0, 0, 0, 1.02, 0, 0, 0}, {2, BusKind::Load, 1.0, 0, 0.05, 1.0, 0.4, 0.15, 0}};
    std::vector<Branch> branches{{1, 1, 2, 1.5, -8.0, 0.02, true}};
    if (zi_tail) {
        buses.push_back({3, BusKind::ZeroInjection, 1.0, 0, 0, 1.0, 0, 0, 0});
        branches.push_back({2, 2, 3, 2.0, -12.0, 0.0, true});
    }
    return Network(buses, branches);
}

MeasurementSet noiseless(const Network& net, const OperatingPoint& truth, std::vector<FlowPlacement> flows = {}) {
    SynthesisOptions o;
    o.noise_std = 0.0;
    o.flows = std::move(flows);
    return synthesize(net, truth, o);
}

std::vector<double> true_values(const Network& net, const UnknownParameterSet& u) {
    std::vector<double> v;
    for (const auto& p : u) v.push_back(parameter_value(net, p));
    return v;
}

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

std::vector<double> random_point(const EstimationProblem& p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x(p.num_vars());
    for (auto& v : x) v = u(rng);
    return x;
}

}  // namespace

TEST_CASE("state estimation problem shape") {
    const auto net = two_bus();
    const auto truth = solve_powerflow(net).point;
    const auto se = build_se(net, noiseless(net, truth));
    CHECK(se.space.indices_of(VariableKind::VoltageReal).size() == 2);
    CHECK(se.space.indices_of(VariableKind::VoltageImag).size() == 2);
    CHECK(se.space.indices_of(VariableKind::NoiseReal).size() == 2);
    CHECK(se.space.indices_of(VariableKind::NoiseImag).size() == 2);
    CHECK(se.space.indices_of(VariableKind::NoiseMagnitude).empty());
    CHECK(se.count_rows(RowTag::RtuKcl) == 4);
    // Angle reference plus magnitude anchor.
    CHECK(se.count_rows(RowTag::Reference) == 2);
    CHECK(se.bilinear.empty());
    for (const auto& r : se.rows) CHECK(r.f.is_affine());

    const auto x = se.make_point({truth}, {});
    CHECK(max_abs(evaluate(se, x, EvalMode::Unlifted).residuals) <= 1e-10);
    CHECK(se.objective_value(x) <= 1e-20);

    const auto net3 = two_bus(true);
    const auto truth3 = solve_powerflow(net3).point;
    const auto ms3 = noiseless(net3, truth3);
    CHECK(ms3.zero_injection_buses == std::vector<int>{3});
    const auto se3 = build_se(net3, ms3);
    CHECK(se3.count_rows(RowTag::ZeroInjection) == 2);
    CHECK(se3.rows.size() == se.rows.size() + 2);
    CHECK(se3.objective.size() == se.objective.size());
}

TEST_CASE("pse lifted products on two buses") {
    const auto net = two_bus();
    const auto truth = solve_powerflow(net).point;
    const auto u = unknown_susceptances(net, {1});
    PseOptions opt;
    opt.include_vmag = false;
    const auto p = build_pse(net, noiseless(net, truth), u, opt);
    CHECK(p.bilinear.size() == 4);
    CHECK(p.parameter_vars.size() == 1);
    for (const auto& d : p.bilinear) CHECK(d.right == p.parameter_vars[0]);

    const auto pv = build_pse(net, noiseless(net, truth), u);
    CHECK(pv.count_rows(RowTag::VoltageMagnitude) == 2);
    // Four cross products plus Vr², Vi², n² per magnitude row.
    CHECK(pv.bilinear.size() == 4 + 6);

    auto bad = u;
    auto branches = net.branches();
    branches[0].in_service = false;
    CHECK_THROWS_AS(build_pse(Network(net.buses(), branches), noiseless(net, truth), u), DataError);
    MeasurementSet ms = noiseless(net, truth);
    ms.periods[0].injections[0].bus = 42;
    CHECK_THROWS_AS(build_pse(net, ms, u), DataError);
}

TEST_CASE("noiseless truth is feasible") {
    for (const char* file : {"case14.m", "case118.m"}) {
        const auto net = load_matpower_file(data_path(file));
        const auto truth = solve_powerflow(net).point;
        std::vector<int> ids;
        for (int k = 1; k <= static_cast<int>(net.branch_count()); k += 7) ids.push_back(k);
        const auto u = unknown_susceptances(net, ids);
        const auto ms = noiseless(net, truth, {{1, net.branch(1).from}, {4, net.branch(4).to}});
        for (bool delta : {false, true}) {
            PseOptions o;
            o.delta_form = delta;
            const auto p = build_pse(net, ms, u, o);
            const auto x = p.make_point({truth}, true_values(net, u));
            const auto ev = evaluate(p, x, EvalMode::Unlifted);
            CHECK(max_abs(ev.residuals) <= 1e-10);
            CHECK(p.objective_value(x) <= 1e-20);
            if (delta)
                for (int v : p.parameter_vars) CHECK(std::abs(x[v]) < 1e-15);
        }
    }
}

TEST_CASE("IEEE-14 magnitude rows") {
    const auto net = load_matpower_file(data_path("case14.m"));
    const auto truth = solve_powerflow(net).point;
    const auto p = build_pse(net, noiseless(net, truth), unknown_susceptances(net, {1, 2}));
    CHECK(p.count_rows(RowTag::VoltageMagnitude) == 13);
    CHECK(p.space.indices_of(VariableKind::NoiseMagnitude).size() == 13);
    CHECK(p.count_rows(RowTag::ZeroInjection) == 2);
    CHECK(p.count_rows(RowTag::Reference) == 1);
}

TEST_CASE("evaluate semantics") {
    const auto net = load_matpower_file(data_path("case14.m"));
    const auto truth = solve_powerflow(net).point;
    auto ms = noiseless(net, truth, {{5, 2}});
    const auto u = unknown_susceptances(net, {3, 5, 9});
    const auto p = build_pse(net, ms, u);

    // Zero point: residuals are the row constants.
    const std::vector<double> zero(p.num_vars(), 0.0);
    const auto ev0 = evaluate(p, zero, EvalMode::Lifted);
    for (std::size_t r = 0; r < p.rows.size(); ++r) CHECK(ev0.residuals[r] == p.rows[r].f.constant);

    // Lifted columns carry the row coefficients on s.
    const auto x = random_point(p, 3);
    const auto ev = evaluate(p, x, EvalMode::Lifted);
    for (std::size_t r = 0; r < p.rows.size(); ++r)
        for (const auto& t : p.rows[r].f.linear)
            if (p.space[t.var].kind == VariableKind::Lifted) CHECK(ev.jacobian.coeff(r, t.var) == doctest::Approx(t.coef));

    // Lifting exactness.
    auto xc = x;
    p.complete_lifted(xc);
    const auto lifted = evaluate(p, xc, EvalMode::Lifted).residuals;
    const auto unlifted = evaluate(p, xc, EvalMode::Unlifted).residuals;
    CHECK((lifted - unlifted).cwiseAbs().maxCoeff() <= 1e-14 * std::max(1.0, max_abs(lifted)));

    // Objective is an even quadratic in the noise.
    auto xn = xc;
    for (const auto& [i, w] : p.objective) xn[i] = -xn[i];
    CHECK(p.objective_value(xn) == doctest::Approx(p.objective_value(xc)).epsilon(1e-15));

    CHECK_THROWS_AS(evaluate(p, std::vector<double>(3), EvalMode::Lifted), DataError);
}

TEST_CASE("finite-difference derivatives") {
    const auto net = load_matpower_file(data_path("case14.m"));
    const auto truth = solve_powerflow(net).point;
    SynthesisOptions so;
    so.flows = {{5, 2}, {7, 4}};
    const auto ms = synthesize(net, truth, so);
    std::vector<int> all;
    for (const auto& b : net.branches()) all.push_back(b.id);
    const auto p = build_pse(net, ms, unknown_susceptances(net, all));
    const double h = 1e-6;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto x = random_point(p, 100 + s);
        const auto d = random_point(p, 200 + s);
        const auto ev = evaluate(p, x, EvalMode::Unlifted);
        std::vector<double> xp = x, xm = x;
        for (std::size_t i = 0; i < x.size(); ++i) {
            xp[i] += h * d[i];
            xm[i] -= h * d[i];
        }
        const auto ep = evaluate(p, xp, EvalMode::Unlifted), em = evaluate(p, xm, EvalMode::Unlifted);
        const Eigen::Map<const Eigen::VectorXd> dv(d.data(), static_cast<Eigen::Index>(d.size()));
        const Eigen::VectorXd jd = ev.jacobian * dv;
        const Eigen::VectorXd fd = (ep.residuals - em.residuals) / (2 * h);
        CHECK((jd - fd).norm() <= 1e-6 * std::max(1.0, jd.norm()));
        const double gd = ev.gradient.dot(dv);
        const double gfd = (ep.objective - em.objective) / (2 * h);
        CHECK(std::abs(gd - gfd) <= 1e-6 * std::max(1.0, std::abs(gd)));

        // Hessian of the Lagrangian against differences of its gradient.
        const auto y = random_point(p, 300 + s);
        std::vector<double> yy(y.begin(), y.begin() + static_cast<long>(p.rows.size()));
        const Eigen::Map<const Eigen::VectorXd> yv(yy.data(), static_cast<Eigen::Index>(yy.size()));
        const auto hess = lagrangian_hessian(p, x, yy, EvalMode::Unlifted);
        const Eigen::VectorXd hd = hess * dv;
        const Eigen::VectorXd gp = ep.gradient + ep.jacobian.transpose() * yv;
        const Eigen::VectorXd gm = em.gradient + em.jacobian.transpose() * yv;
        const Eigen::VectorXd hfd = (gp - gm) / (2 * h);
        CHECK((hd - hfd).norm() <= 1e-6 * std::max(1.0, hd.norm()));
    }
}

TEST_CASE("multi-period sharing") {
    const auto net = load_matpower_file(data_path("case14.m"));
    SynthesisOptions so;
    so.seed = 4;
    const auto u = unknown_susceptances(net, {3, 10});
    const auto one = build_multi_period(net, {1.0}, so);
    const auto two = build_multi_period(net, {1.0, 1.3}, so);
    const auto p1 = build_pse(net, one.measurements, u);
    const auto p2 = build_pse(net, two.measurements, u);
    CHECK(p2.parameter_vars.size() == 2);
    CHECK(p2.space.indices_of(VariableKind::Parameter).size() == 2);
    CHECK(p2.space.indices_of(VariableKind::Lifted).size() == 2 * p1.space.indices_of(VariableKind::Lifted).size());
    CHECK(p2.rows.size() == 2 * p1.rows.size());
    CHECK(p2.period_count() == 2);

    // The period-0 block of the two-period build is the one-period build.
    std::size_t r0 = 0;
    for (const auto& r : p2.rows) r0 += r.period == 0;
    CHECK(r0 == p1.rows.size());

    // A zero-injection bus metered in one period only.
    auto bad = two.measurements;
    bad.periods[1].injections.push_back({7, 0.0, 0.0, 1.0, 1.0, 1.0});
    CHECK_THROWS_AS(build_pse(net, bad, u), DataError);
}

TEST_CASE("one unknown on two buses: scan and nlp agree with truth") {
    const auto net = two_bus();
    const auto truth = solve_powerflow(net).point;
    const auto ms = noiseless(net, truth);
    auto u = unknown_susceptances(net, {1});
    const double b_true = net.branch(1).b;
    const auto p = build_pse(net, ms, u);

    // Oracle: exact-residual scan over B with the true voltages fixed.
    double best_b = 0.0, best_r = kInfinity;
    for (int k = 0; k <= 4000; ++k) {
        const double b = 2.0 * b_true * k / 4000.0;
        const auto x = p.make_point({truth}, {b});
        const double r = p.objective_value(x);
        if (r < best_r) {
            best_r = r;
            best_b = b;
        }
    }
    CHECK(std::abs(best_b - b_true) <= std::abs(b_true) / 2000.0);

    u[0].best_known = 0.5 * b_true;
    const auto p_half = build_pse(net, ms, u);
    const auto est = estimate_nlp(p_half);
    REQUIRE(est.optimal());
    CHECK(std::abs(est.parameters[0] - b_true) <= 1e-6);
    CHECK(std::abs(est.voltages[0].vr[1] - truth.vr[1]) <= 1e-6);
}
