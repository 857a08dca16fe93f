#include "gridpse/measurement/measurement.hpp"

#include <random>
#include <sstream>

#include "gridpse/error.hpp"

namespace gridpse {

Features feature_transform(double p, double q, double vmag) {
    if (!(vmag > 0.0)) throw DataError("voltage magnitude measurement must be positive");
    const double v2 = vmag * vmag;
    return {p / v2, q / v2};
}

Features flow_feature_transform(double p_flow, double q_flow, double vmag_metered) {
    return feature_transform(p_flow, q_flow, vmag_metered);
}

std::vector<int> zero_injection_buses(const Network& network) {
    std::vector<int> out;
    for (const auto& b : network.buses())
        if (b.kind == BusKind::ZeroInjection) out.push_back(b.id);
    return out;
}

MeasurementPeriod synthesize_period(const Network& network, const OperatingPoint& truth,
                                    const SynthesisOptions& options, std::size_t period) {
    if (!(options.noise_std >= 0.0)) throw DataError("noise standard deviation must be non-negative");
    if (truth.size() != network.bus_count()) throw DataError("operating point does not match network");

    std::seed_seq seq{static_cast<std::uint32_t>(options.seed & 0xffffffffu),
                      static_cast<std::uint32_t>(options.seed >> 32), static_cast<std::uint32_t>(period)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sigma = options.noise_std;
    auto noisy = [&](double value) { return value + sigma * normal(rng); };

    MeasurementPeriod out;
    for (std::size_t k = 0; k < network.bus_count(); ++k) {
        const auto& bus = network.buses()[k];
        if (bus.kind == BusKind::ZeroInjection) continue;
        const Complex s = injection(network, truth, k);
        InjectionMeasurement z;
        z.bus = bus.id;
        z.p = noisy(s.real());
        z.q = noisy(s.imag());
        z.vmag = noisy(truth.magnitude(k));
        if (auto it = options.weights.injection.find(bus.id); it != options.weights.injection.end()) {
            z.w_current = it->second.first;
            z.w_voltage = it->second.second;
        }
        out.injections.push_back(z);
    }
    for (const auto& place : options.flows) {
        const Complex s = branch_flow(network, truth, place.branch, place.metered_bus);
        FlowMeasurement z;
        z.branch = place.branch;
        z.metered_bus = place.metered_bus;
        z.p = noisy(s.real());
        z.q = noisy(s.imag());
        z.vmag = noisy(truth.magnitude(network.bus_position(place.metered_bus)));
        if (auto it = options.weights.flow.find(place.branch); it != options.weights.flow.end())
            z.w_current = it->second;
        out.flows.push_back(z);
    }
    return out;
}

MeasurementSet synthesize(const Network& network, const OperatingPoint& truth, const SynthesisOptions& options) {
    MeasurementSet m;
    m.periods.push_back(synthesize_period(network, truth, options, 0));
    m.zero_injection_buses = zero_injection_buses(network);
    return m;
}

Scenario build_multi_period(const Network& network, const std::vector<double>& load_scales,
                            const SynthesisOptions& options) {
    if (load_scales.empty()) throw DataError("at least one period is required");
    Scenario sc;
    sc.load_scales = load_scales;
    sc.measurements.zero_injection_buses = zero_injection_buses(network);
    for (std::size_t t = 0; t < load_scales.size(); ++t) {
        if (!(load_scales[t] > 0.0)) throw DataError("load scale factors must be positive");
        const Network scaled = network.scaled(load_scales[t]);
        PowerflowReport pf;
        try {
            pf = solve_powerflow(scaled);
        } catch (const SolverError& e) {
            std::ostringstream msg;
            msg << "period " << t << " (load scale " << load_scales[t] << "): " << e.what();
            throw SolverError(msg.str());
        }
        sc.measurements.periods.push_back(synthesize_period(scaled, pf.point, options, t));
        sc.truth.push_back(std::move(pf.point));
    }
    return sc;
}

}  // namespace gridpse
