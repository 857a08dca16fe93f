#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "gridpse/grid/network.hpp"
#include "gridpse/measurement/types.hpp"
#include "gridpse/powerflow/powerflow.hpp"

namespace gridpse {

/// Reduced conductance/susceptance features of a (P, Q, |V|) triple.
struct Features {
    double g;
    double b;
};

/// z_G = z_P / z_|V|², z_B = z_Q / z_|V|². Throws DataError for non-positive magnitude.
Features feature_transform(double p, double q, double vmag);

/// Same transform applied to a flow triple measured at the metered end.
Features flow_feature_transform(double p_flow, double q_flow, double vmag_metered);

/// Per-measurement weight overrides; anything absent keeps weight 1.
struct WeightTable {
    std::map<int, std::pair<double, double>> injection;  ///< bus id -> (w_I, w_V)
    std::map<int, double> flow;                          ///< branch id -> w_I
};

struct SynthesisOptions {
    double noise_std = 0.001;
    std::uint64_t seed = 0;
    std::vector<FlowPlacement> flows;
    WeightTable weights;
};

/// Injection triple at every non-zero-injection bus and flow triple at each placement,
/// each true value perturbed by an independent N(0, noise_std²) draw. Deterministic in
/// (seed, period). Throws DataError for placements on out-of-service branches.
MeasurementSet synthesize(const Network& network, const OperatingPoint& truth, const SynthesisOptions& options);

/// Single period of synthesize() drawn from the stream of `period`.
MeasurementPeriod synthesize_period(const Network& network, const OperatingPoint& truth,
                                    const SynthesisOptions& options, std::size_t period);

std::vector<int> zero_injection_buses(const Network& network);

/// A multi-period scenario: per-period scaled networks, their truths, and the measurements.
struct Scenario {
    MeasurementSet measurements;
    std::vector<OperatingPoint> truth;
    std::vector<double> load_scales;
};

/// One period per load scale. Loads and dispatch are scaled, a power flow solved, and the
/// period synthesized from its own noise stream. Throws SolverError naming the period whose
/// power flow fails and DataError for non-positive scales.
Scenario build_multi_period(const Network& network, const std::vector<double>& load_scales,
                            const SynthesisOptions& options);

}  // namespace gridpse
