#pragma once

#include <complex>
#include <optional>
#include <vector>

#include "gridpse/grid/network.hpp"

namespace gridpse {

using Complex = std::complex<double>;

/// Rectangular bus voltages indexed by bus position.
struct OperatingPoint {
    std::vector<double> vr;
    std::vector<double> vi;

    std::size_t size() const noexcept { return vr.size(); }
    Complex voltage(std::size_t pos) const { return {vr[pos], vi[pos]}; }
    double magnitude(std::size_t pos) const;
    double angle(std::size_t pos) const;

    static OperatingPoint flat(const Network& network);
    static OperatingPoint from_polar(const std::vector<double>& vm, const std::vector<double>& va);

    bool operator==(const OperatingPoint&) const = default;
};

/// Nodal admittance matrix rows as sparse (position, value) lists, pi-model branches.
struct AdmittanceMatrix {
    std::vector<std::vector<std::pair<std::size_t, Complex>>> rows;

    static AdmittanceMatrix build(const Network& network);
    Complex current(std::size_t bus, const OperatingPoint& point) const;
};

/// Net complex power injected into the network at a bus position.
Complex injection(const Network& network, const OperatingPoint& point, std::size_t bus_pos);

/// Current leaving `at_pos` into branch `e` (position), including that terminal's half charging.
Complex branch_current(const Network& network, const OperatingPoint& point, std::size_t e, std::size_t at_pos);

/// Complex power leaving the metered terminal into the branch. Throws DataError for
/// unknown or out-of-service branches and non-terminal metered buses.
Complex branch_flow(const Network& network, const OperatingPoint& point, int branch_id, int metered_bus);

struct PowerflowOptions {
    double tolerance = 1e-10;
    int max_iterations = 30;
    std::optional<OperatingPoint> initial;
};

struct PowerflowReport {
    OperatingPoint point;
    int iterations = 0;
    double max_mismatch = 0.0;
};

/// Polar Newton-Raphson. Generator buses hold their scheduled magnitude (no Q limits),
/// the slack bus is fixed at its schedule with angle 0. Throws SolverError on
/// non-convergence (with the final mismatch) or a singular Jacobian.
PowerflowReport solve_powerflow(const Network& network, const PowerflowOptions& options = {});

/// Largest absolute active/reactive mismatch over buses whose injection is specified.
double max_mismatch(const Network& network, const OperatingPoint& point);

}  // namespace gridpse
