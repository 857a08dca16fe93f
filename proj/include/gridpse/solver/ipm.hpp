#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridpse/solver/qcqp.hpp"

namespace gridpse {

enum class SolveMode { ExactNlp, Convex };

enum class SolveStatus { Optimal, MaxIterations, RestorationFailure };

std::string to_string(SolveStatus status);

enum class InitMode { Flat, WarmStart, RandomInBox };

struct SolverOptions {
    double tolerance = 1e-8;          ///< scaled KKT error
    double gap_tolerance = 1e-10;     ///< total complementarity gap, relative to max(1, |f|)
    int max_iterations = 300;
    double mu_init = 0.1;
    double regularization_floor = 1e-20;
    double backtrack_ratio = 0.5;
    double min_step = 1e-12;
    InitMode init = InitMode::Flat;
    std::vector<double> warm_start;   ///< used by InitMode::WarmStart
    std::uint64_t seed = 0;           ///< used by InitMode::RandomInBox
    bool record_barrier = false;      ///< keep the μ sequence in SolveResult
};

struct KktNorms {
    double stationarity = 0.0;
    double feasibility = 0.0;
    double complementarity = 0.0;
};

struct SolveResult {
    std::vector<double> x;
    std::vector<double> multipliers;  ///< per row; ≥ 0 on inequality rows
    std::vector<double> bound_lower;  ///< duals of lower bounds
    std::vector<double> bound_upper;
    double objective = 0.0;
    SolveStatus status = SolveStatus::MaxIterations;
    int iterations = 0;
    KktNorms kkt;
    std::vector<double> barrier_history;

    bool optimal() const noexcept { return status == SolveStatus::Optimal; }
};

/// Primal-dual log-barrier interior point method.
///
/// Inequality rows get slacks; bounds get primal-dual barrier terms; the regularized
/// KKT system is factorized with inertia correction (LDLᵀ when the primal block is
/// positive diagonal, otherwise LU with a curvature test). ExactNlp mode makes only a
/// local first-order claim. Throws SolverError when the linear system cannot be
/// factorized at maximal regularization.
SolveResult solve(const Qcqp& problem, SolveMode mode, const SolverOptions& options = {});

struct KktReport {
    KktNorms norms;
    std::vector<std::size_t> violated_rows;
    std::vector<std::size_t> violated_bounds;
    bool passed = false;
};

/// Recomputes feasibility, stationarity, and complementarity at `x` from scratch.
/// Without multipliers, least-squares multipliers over equality and active rows are used.
KktReport kkt_check(const Qcqp& problem, const std::vector<double>& x, double tolerance,
                    const SolveResult* multipliers = nullptr);

}  // namespace gridpse
