#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridpse/grid/native_case.hpp"
#include "gridpse/measurement/measurement.hpp"
#include "gridpse/metrics/metrics.hpp"
#include "gridpse/pse/estimate.hpp"
#include "gridpse/relax/relaxation.hpp"

namespace gridpse {

/// How relaxation bounds are chosen.
struct BoundsPolicy {
    double percent = 1000.0;             ///< ±percent of |P̂| around P̂
    std::optional<double> lower_multiple;  ///< if set: [multiple·P̂, 0] for susceptances
    bool reference_box = false;  ///< tight box around the ckt-SE estimate instead of the wide default box
    double vmag_margin = 0.005;
    double angle_margin_deg = 0.5;
    double vmin = 0.9, vmax = 1.1, angle_deg = 30.0;  ///< wide box
    int sbt_rounds = 3;
    double sbt_epsilon = 1e-3;
    bool sbt_per_seed = false;  ///< tighten per seed instead of reusing cached bounds
};

struct ExperimentConfig {
    std::string case_path;
    std::vector<int> unknown_branches;
    std::vector<int> unknown_shunts;
    double noise_std = 0.001;
    std::vector<std::uint64_t> seeds{0};
    std::vector<Method> methods{Method::Nlp};
    std::vector<FlowPlacement> flows;  ///< metered bus 0 means the from-bus
    std::vector<double> load_scales{1.0};
    bool random_init = false;
    RandomInit init_box;
    BoundsPolicy bounds;
    std::string bounds_cache;
    int workers = 1;
    std::string out_dir;
};

/// JSON config; absent fields keep their defaults. Throws ParseError or DataError.
ExperimentConfig parse_config(const std::string& text);

/// "N" is a count (seeds 0..N-1); "a,b,c" a list; "a-b" an inclusive range; parts combine.
std::vector<std::uint64_t> parse_seeds(const std::string& text);
/// "5,7" or "5:4,7" (branch:metered bus).
std::vector<FlowPlacement> parse_flows(const std::string& text);
std::vector<int> parse_ids(const std::string& text);
std::vector<double> parse_scales(const std::string& text);

/// Records for one seed; `nlp` is kept for callers that need the exact estimate.
struct SeedOutcome {
    std::uint64_t seed = 0;
    std::vector<RunRecord> records;  ///< one per configured method, in config order
    std::optional<Estimate> nlp;
};

/// A configured study: network, unknowns, and the noise-free truth for every period.
class Experiment {
public:
    explicit Experiment(ExperimentConfig config);

    const ExperimentConfig& config() const noexcept { return config_; }
    const Network& network() const noexcept { return case_.network; }
    const UnknownParameterSet& unknowns() const noexcept { return case_.unknowns; }
    const std::vector<OperatingPoint>& truth() const noexcept { return truth_; }
    std::vector<double> true_parameters() const;

    MeasurementSet measurements(std::uint64_t seed) const;
    EstimationProblem problem(std::uint64_t seed) const;

    ParameterBounds initial_bounds() const;
    /// Wide default box, or the tight box around the ckt-SE estimate at best-known values.
    VoltageBox voltage_box(const EstimationProblem& problem) const;

    Estimate run_nlp(const EstimationProblem& problem, std::uint64_t seed) const;

    /// SBT for one seed's instance, with f* from that seed's nlp estimate.
    SbtResult tighten(std::uint64_t seed, int workers = 1) const;

    /// Runs every configured method on `seed`. Solver failures are recorded in-status.
    /// `sbt_bounds` is required when sbt-mc is configured and bounds are not per seed.
    SeedOutcome run_seed(std::uint64_t seed, const ParameterBounds* sbt_bounds = nullptr) const;

    /// Bounds for sbt-mc: the cache entry when present, otherwise tightened on the first
    /// configured seed and stored. `cache_hit` reports which.
    ParameterBounds shared_bounds(bool& cache_hit) const;

    /// All seeds, up to `workers` at once. Records are written to out_dir/records when set.
    std::vector<SeedOutcome> run_all() const;

private:
    RunRecord base_record(std::uint64_t seed, Method method, const EstimationProblem& problem) const;

    ExperimentConfig config_;
    NativeCase case_;
    std::vector<OperatingPoint> truth_;
};

/// Writes `text` to `path` through a temporary file and rename.
void write_atomic(const std::string& path, const std::string& text);

std::vector<double> magnitudes(const std::vector<OperatingPoint>& voltages);

}  // namespace gridpse
