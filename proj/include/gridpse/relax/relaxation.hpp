#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridpse/pse/estimate.hpp"
#include "gridpse/pse/problem.hpp"
#include "gridpse/relax/envelope.hpp"
#include "gridpse/solver/ipm.hpp"

namespace gridpse {

/// Absolute bounds per unknown parameter. `provenance` is "initial" or "sbt-<round>".
struct ParameterBounds {
    std::vector<Interval> bounds;
    std::string provenance = "initial";

    bool operator==(const ParameterBounds&) const = default;
};

/// ±`percent`% of |P̂| around P̂. Branch susceptances are clipped to B ≤ 0 and branch
/// conductances to G ≥ 0. Throws DataError when an unknown has no best-known value.
ParameterBounds default_parameter_bounds(const UnknownParameterSet& unknowns, double percent = 1000.0);

/// Rectangular voltage bounds per period and bus position.
struct VoltageBox {
    std::vector<std::vector<Interval>> vr, vi;
};

/// Rectangular hull of |V| ∈ [vmin, vmax], angle ∈ [-angle, angle] for every bus and period.
VoltageBox default_voltage_box(const EstimationProblem& problem, double vmin = 0.9, double vmax = 1.1,
                               double angle_deg = 30.0);

/// Rectangular hull of a polar box around reference voltages (one OperatingPoint per period):
/// |V| within ±`vmag_margin`, angle within ±`angle_margin_deg`. The slack angle stays at 0.
/// A tight box stands in for historical SCADA ranges; it must contain the true voltages.
VoltageBox reference_voltage_box(const EstimationProblem& problem, const std::vector<OperatingPoint>& reference,
                                 double vmag_margin = 0.005, double angle_margin_deg = 0.5);

struct RelaxOptions {
    /// Bound on |n| for noise variables that appear squared (magnitude noise).
    double noise_bound = 0.1;
};

struct RelaxedProblem {
    Qcqp qcqp;
    std::size_t envelope_rows = 0;  ///< McCormick inequalities
    std::size_t square_rows = 0;    ///< convex + secant rows
    std::size_t exact_rows = 0;     ///< products with a degenerate factor, kept as equalities
    std::uint64_t instance = 0;     ///< fingerprint of the underlying problem
};

/// Drops every s = v·P and s = x² equality and bounds the lifted variables by envelopes;
/// affine rows are kept. Throws DataError when bounds do not cover the problem.
RelaxedProblem build_relaxed(const EstimationProblem& problem, const ParameterBounds& pbounds,
                             const VoltageBox& vbox, const RelaxOptions& options = {});

/// Fingerprint of an estimation problem's rows, objective, and unknowns.
std::uint64_t instance_fingerprint(const EstimationProblem& problem);

struct RelaxedEstimate {
    Estimate estimate;
    std::uint64_t instance = 0;
};

RelaxedEstimate estimate_relaxed(const EstimationProblem& problem, const RelaxedProblem& relaxed,
                                 const SolverOptions& options = {});

struct CertificateReport {
    double nlp_objective = 0.0;
    double relaxed_objective = 0.0;
    double gap = 0.0;           ///< nlp - relaxed
    double relative_gap = 0.0;  ///< gap / max(|nlp|, 1e-12)
    bool valid = false;         ///< gap ≥ -tolerance
};

/// Throws DataError when the two results come from different instances.
CertificateReport certificate(const EstimationProblem& problem, const Estimate& nlp,
                              const RelaxedEstimate& relaxed, double tolerance = 1e-8);

struct SbtOptions {
    double f_star = kInfinity;      ///< objective cut; +∞ disables it
    double epsilon = 1e-3;          ///< stop when every bound moves less than this
    int max_rounds = 10;
    int workers = 1;
    std::vector<std::size_t> subset;  ///< parameters to tighten; empty means all
    double cut_relative_slack = 1e-4;
    double cut_absolute_slack = 1e-9;
    RelaxOptions relax;
    SolverOptions solver;
};

struct SbtFailure {
    int round = 0;
    std::size_t parameter = 0;
    bool upper = false;
    std::string reason;
};

struct SbtResult {
    ParameterBounds bounds;
    std::vector<ParameterBounds> history;  ///< input bounds followed by each round's output
    int rounds = 0;
    bool converged = false;
    std::vector<SbtFailure> failures;  ///< subproblems that did not solve; their bound is kept
};

/// Sequential bound tightening: per round, minimize and maximize every selected parameter
/// over the relaxation intersected with the objective cut, then rebuild envelopes.
/// Output bounds are nested in the input at every round.
SbtResult sbt(const EstimationProblem& problem, const ParameterBounds& pbounds, const VoltageBox& vbox,
              const SbtOptions& options = {});

/// Bounds cache entry keyed by network, unknown set, and measurement layout.
struct BoundsCacheEntry {
    std::string key;
    ParameterBounds bounds;
    double f_star = kInfinity;
    double epsilon = 0.0;
};

/// Key ignoring measurement values, so bounds computed once serve later noise draws.
std::string bounds_cache_key(const EstimationProblem& problem);

class BoundsCache {
public:
    static BoundsCache load(const std::string& path);  ///< empty cache when the file is absent
    void save(const std::string& path) const;

    const BoundsCacheEntry* find(const std::string& key) const;
    void put(BoundsCacheEntry entry);
    std::size_t size() const noexcept { return entries_.size(); }

    std::string to_text() const;
    static BoundsCache from_text(const std::string& text);

private:
    std::vector<BoundsCacheEntry> entries_;
};

}  // namespace gridpse
