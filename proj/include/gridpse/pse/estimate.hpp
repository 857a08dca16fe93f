#pragma once

#include <cstdint>
#include <vector>

#include "gridpse/pse/problem.hpp"
#include "gridpse/solver/ipm.hpp"

namespace gridpse {

/// Estimated voltages and parameters read back from a solver point.
struct Estimate {
    std::vector<OperatingPoint> voltages;  ///< per period
    std::vector<double> parameters;        ///< absolute values, per unknown
    double objective = 0.0;
    SolveStatus status = SolveStatus::MaxIterations;
    int iterations = 0;
    KktNorms kkt;
    std::vector<double> x;

    bool optimal() const noexcept { return status == SolveStatus::Optimal; }
};

Estimate read_estimate(const EstimationProblem& problem, const SolveResult& result);

/// Convex ckt-SE with every parameter at its database value.
Estimate estimate_se(const Network& network, const MeasurementSet& measurements,
                     const SolverOptions& options = {});

/// Best-known parameter values: P̂ when declared, the database value otherwise.
std::vector<double> best_known_values(const EstimationProblem& problem);

/// Network copy with every unknown replaced by the given absolute values.
Network with_parameters(const Network& network, const UnknownParameterSet& unknowns,
                        const std::vector<double>& values);

struct RandomInit {
    double vmag_min = 0.95;
    double vmag_max = 1.05;
    double angle_deg = 30.0;  ///< angles drawn in [-angle, angle]
};

/// Start point with voltages drawn uniformly in polar form; slack angle pinned at 0.
std::vector<OperatingPoint> random_voltages(const EstimationProblem& problem, const RandomInit& box,
                                            std::uint64_t seed);

struct NlpOptions {
    SolverOptions solver;
    bool random_init = false;   ///< otherwise warm start from ckt-SE at P̂
    RandomInit init_box;
    std::uint64_t init_seed = 0;
    int starts = 1;             ///< random starts; the lowest objective is kept
};

/// Exact nonconvex estimate. The default start takes voltages from ckt-SE with the
/// best-known parameters and sets the unknowns to P̂; noise variables complete the rows.
/// Only local first-order optimality is claimed.
Estimate estimate_nlp(const EstimationProblem& problem, const NlpOptions& options = {});

}  // namespace gridpse
