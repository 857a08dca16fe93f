#include "gridpse/pse/estimate.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "gridpse/error.hpp"

namespace gridpse {

Estimate read_estimate(const EstimationProblem& problem, const SolveResult& result) {
    Estimate e;
    for (std::size_t t = 0; t < problem.period_count(); ++t) e.voltages.push_back(problem.voltages(result.x, t));
    e.parameters = problem.parameter_values(result.x);
    e.objective = problem.objective_value(result.x);
    e.status = result.status;
    e.iterations = result.iterations;
    e.kkt = result.kkt;
    e.x = result.x;
    return e;
}

Estimate estimate_se(const Network& network, const MeasurementSet& measurements, const SolverOptions& options) {
    const auto problem = build_se(network, measurements);
    return read_estimate(problem, solve(problem.lifted_qcqp(), SolveMode::Convex, options));
}

std::vector<double> best_known_values(const EstimationProblem& problem) {
    std::vector<double> out;
    for (const auto& u : problem.unknowns) out.push_back(u.best_known.value_or(parameter_value(problem.network, u)));
    return out;
}

Network with_parameters(const Network& network, const UnknownParameterSet& unknowns,
                        const std::vector<double>& values) {
    if (values.size() != unknowns.size()) throw DataError("one value per unknown parameter is required");
    auto buses = network.buses();
    auto branches = network.branches();
    for (std::size_t k = 0; k < unknowns.size(); ++k) {
        const auto& u = unknowns[k];
        switch (u.target) {
            case ParameterTarget::BranchSusceptance: branches[network.branch_position(u.element)].b = values[k]; break;
            case ParameterTarget::BranchConductance: branches[network.branch_position(u.element)].g = values[k]; break;
            case ParameterTarget::ShuntSusceptance: buses[network.bus_position(u.element)].b_shunt = values[k]; break;
        }
    }
    return Network(std::move(buses), std::move(branches), network.base_mva());
}

std::vector<OperatingPoint> random_voltages(const EstimationProblem& problem, const RandomInit& box,
                                            std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> mag(box.vmag_min, box.vmag_max);
    const double a = box.angle_deg * std::numbers::pi / 180.0;
    std::uniform_real_distribution<double> ang(-a, a);
    const auto slack = problem.network.slack_position();
    std::vector<OperatingPoint> out;
    for (std::size_t t = 0; t < problem.period_count(); ++t) {
        const auto n = problem.network.bus_count();
        std::vector<double> vm(n), va(n);
        for (std::size_t k = 0; k < n; ++k) {
            vm[k] = mag(rng);
            va[k] = ang(rng);
        }
        va[slack] = 0.0;
        out.push_back(OperatingPoint::from_polar(vm, va));
    }
    return out;
}

Estimate estimate_nlp(const EstimationProblem& problem, const NlpOptions& options) {
    const auto phat = best_known_values(problem);
    const Qcqp q = problem.exact_qcqp();
    auto run = [&](const std::vector<OperatingPoint>& v) {
        SolverOptions so = options.solver;
        so.init = InitMode::WarmStart;
        so.warm_start = problem.make_point(v, phat);
        return read_estimate(problem, solve(q, SolveMode::ExactNlp, so));
    };
    if (!options.random_init) {
        const auto se = estimate_se(with_parameters(problem.network, problem.unknowns, phat), problem.measurements,
                                    options.solver);
        return run(se.voltages);
    }
    if (options.starts < 1) throw DataError("at least one start is required");
    Estimate best;
    for (int s = 0; s < options.starts; ++s) {
        auto e = run(random_voltages(problem, options.init_box, options.init_seed + static_cast<std::uint64_t>(s)));
        const bool better = s == 0 || (e.optimal() && !best.optimal()) ||
                            (e.optimal() == best.optimal() && e.objective < best.objective);
        if (better) best = std::move(e);
    }
    return best;
}

}  // namespace gridpse
