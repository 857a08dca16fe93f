#pragma once

#include <vector>

namespace gridpse {

/// RTU injection triple at a bus. Powers are net injections (generation minus load).
struct InjectionMeasurement {
    int bus = 0;
    double p = 0.0;
    double q = 0.0;
    double vmag = 1.0;
    double w_current = 1.0;
    double w_voltage = 1.0;

    bool operator==(const InjectionMeasurement&) const = default;
};

/// RTU flow triple: power leaving `metered_bus` into the branch, and that bus's magnitude.
struct FlowMeasurement {
    int branch = 0;
    int metered_bus = 0;
    double p = 0.0;
    double q = 0.0;
    double vmag = 1.0;
    double w_current = 1.0;

    bool operator==(const FlowMeasurement&) const = default;
};

struct MeasurementPeriod {
    std::vector<InjectionMeasurement> injections;
    std::vector<FlowMeasurement> flows;

    bool operator==(const MeasurementPeriod&) const = default;
};

/// Measurements for one or more time periods sharing a network and zero-injection set.
struct MeasurementSet {
    std::vector<MeasurementPeriod> periods;
    std::vector<int> zero_injection_buses;

    std::size_t period_count() const noexcept { return periods.size(); }

    bool operator==(const MeasurementSet&) const = default;
};

/// Location of a flow meter.
struct FlowPlacement {
    int branch = 0;
    int metered_bus = 0;

    bool operator==(const FlowPlacement&) const = default;
};

}  // namespace gridpse
