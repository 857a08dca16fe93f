#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <vector>

#include "gridpse/error.hpp"
#include "gridpse/grid/matpower.hpp"
#include "gridpse/powerflow/powerflow.hpp"
#include "support.hpp"

using namespace gridpse;
using C = std::complex<double>;

namespace {

// Independent oracle: dense Y and Gauss-Seidel with PV magnitude reset.
std::vector<C> gauss_seidel(const Network& net) {
    const auto n = net.bus_count();
    std::vector<std::vector<C>> y(n, std::vector<C>(n));
    for (const auto& br : net.branches()) {
        if (!br.in_service) continue;
        const auto f = net.bus_position(br.from), t = net.bus_position(br.to);
        const C ys(br.g, br.b), ysh(0.0, br.charging / 2.0);
        y[f][f] += ys + ysh;
        y[t][t] += ys + ysh;
        y[f][t] -= ys;
        y[t][f] -= ys;
    }
    std::vector<C> v(n, 1.0);
    for (std::size_t k = 0; k < n; ++k) {
        const auto& b = net.buses()[k];
        y[k][k] += C(b.g_shunt, b.b_shunt);
        if (b.kind == BusKind::Slack || b.kind == BusKind::Generator) v[k] = b.v_set;
    }
    for (int it = 0; it < 20000; ++it) {
        double change = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const auto& b = net.buses()[k];
            if (b.kind == BusKind::Slack) continue;
            C sum = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                if (j != k) sum += y[k][j] * v[j];
            double q = -(b.q_load);
            if (b.kind == BusKind::Generator) q = -std::imag(std::conj(v[k]) * (sum + y[k][k] * v[k]));
            const C s(b.p_gen - b.p_load, q);
            C vk = (std::conj(s) / std::conj(v[k]) - sum) / y[k][k];
            if (b.kind == BusKind::Generator) vk *= b.v_set / std::abs(vk);
            change = std::max(change, std::abs(vk - v[k]));
            v[k] = vk;
        }
        if (change < 1e-13) break;
    }
    return v;
}

}  // namespace

TEST_CASE("newton matches gauss-seidel on ieee14") {
    const auto net = load_matpower_file(data_path("case14.m"));
    const auto rep = solve_powerflow(net);
    const auto gs = gauss_seidel(net);
    CHECK(rep.max_mismatch < 1e-9);
    CHECK(rep.iterations <= 10);
    for (std::size_t k = 0; k < net.bus_count(); ++k) {
        CHECK(rep.point.vr[k] == doctest::Approx(gs[k].real()).epsilon(1e-8));
        CHECK(rep.point.vi[k] == doctest::Approx(gs[k].imag()).epsilon(1e-8));
    }
}

TEST_CASE("flat start and perturbed start agree") {
    const auto net = load_matpower_file(data_path("case14.m"));
    const auto a = solve_powerflow(net);
    std::vector<double> vm, va;
    for (std::size_t k = 0; k < net.bus_count(); ++k) {
        vm.push_back(a.point.magnitude(k) * (k % 2 ? 1.01 : 0.99));
        va.push_back(a.point.angle(k) * 1.01);
    }
    PowerflowOptions o;
    o.initial = OperatingPoint::from_polar(vm, va);
    const auto b = solve_powerflow(net, o);
    for (std::size_t k = 0; k < net.bus_count(); ++k) {
        CHECK(std::abs(a.point.vr[k] - b.point.vr[k]) < 1e-9);
        CHECK(std::abs(a.point.vi[k] - b.point.vi[k]) < 1e-9);
    }
}

TEST_CASE("ieee118 converges and balances") {
    const auto net = load_matpower_file(data_path("case118.m"));
    const auto rep = solve_powerflow(net);
    CHECK(rep.max_mismatch < 1e-9);
    const auto gs = gauss_seidel(net);
    double worst = 0.0;
    for (std::size_t k = 0; k < net.bus_count(); ++k) worst = std::max(worst, std::abs(rep.point.voltage(k) - gs[k]));
    CHECK(worst < 1e-7);
}

TEST_CASE("injections and flows are consistent") {
    const auto net = load_matpower_file(data_path("case14.m"));
    const auto p = solve_powerflow(net).point;
    // Net injection equals the sum of flows leaving the bus plus its shunt draw.
    for (std::size_t k = 0; k < net.bus_count(); ++k) {
        const auto& b = net.buses()[k];
        C total = std::norm(p.voltage(k)) * C(b.g_shunt, -b.b_shunt);
        for (auto e : net.incidence()[k]) {
            const auto& br = net.branches()[e];
            total += branch_flow(net, p, br.id, b.id);
        }
        const C s = injection(net, p, k);
        CHECK(std::abs(total - s) < 1e-10);
    }
    CHECK_THROWS_AS(branch_flow(net, p, 1, 5), DataError);
    CHECK_THROWS_AS(branch_flow(net, p, 99, 1), DataError);
}

TEST_CASE("no-load network stays flat") {
    std::vector<Bus> buses{{1, BusKind::Slack, 1.0, 0, 0, 1.0, 0, 0, 0}, {2, BusKind::Load, 1.0, 0, 0, 1.0, 0, 0, 0}};
    std::vector<Branch> branches{{1, 1, 2, 1.0, -10.0, 0.0, true}};
    const Network net(buses, branches);
    const auto rep = solve_powerflow(net);
    CHECK(rep.point.vr[1] == doctest::Approx(1.0));
    CHECK(std::abs(rep.point.vi[1]) < 1e-12);
}

TEST_CASE("overloaded network reports non-convergence") {
    std::vector<Bus> buses{{1, BusKind::Slack, 1.0, 0, 0, 1.0, 0, 0, 0}, {2, BusKind::Load, 1.0, 0, 0, 1.0, 50.0, 20.0, 0}};
    std::vector<Branch> branches{{1, 1, 2, 1.0, -10.0, 0.0, true}};
    CHECK_THROWS_AS(solve_powerflow(Network(buses, branches)), SolverError);
}
