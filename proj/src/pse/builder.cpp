#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "gridpse/error.hpp"
#include "gridpse/measurement/measurement.hpp"
#include "gridpse/pse/problem.hpp"

namespace gridpse {

namespace {

// A network parameter: either a known number or P = offset + x[var].
struct ParamRef {
    double value = 0.0;
    int var = -1;
};

class RowBuilder {
public:
    RowBuilder(EstimationProblem& p, std::map<std::pair<int, int>, int>& lifted) : p_(p), lifted_(lifted) {}

    void add(int var, double coef) {
        if (coef != 0.0) terms_[var] += coef;
    }
    void add_constant(double c) { constant_ += c; }

    // coef * P * x[v]
    void add_product(const ParamRef& prm, double coef, int v) {
        if (prm.var < 0) {
            add(v, coef * prm.value);
            return;
        }
        add(v, coef * prm.value);
        add(lift(v, prm.var), coef);
    }

    int lift(int left, int right) {
        const auto key = std::make_pair(left, right);
        if (auto it = lifted_.find(key); it != lifted_.end()) return it->second;
        const int def = static_cast<int>(p_.bilinear.size());
        const int s = p_.space.add({VariableKind::Lifted, p_.space[left].period, def, false});
        p_.bilinear.push_back({s, left, right});
        lifted_.emplace(key, s);
        return s;
    }

    QuadraticFunction finish() {
        QuadraticFunction f;
        f.constant = constant_;
        for (const auto& [v, c] : terms_)
            if (c != 0.0) f.linear.push_back({v, c});
        terms_.clear();
        constant_ = 0.0;
        return f;
    }

private:
    EstimationProblem& p_;
    std::map<std::pair<int, int>, int>& lifted_;
    std::map<int, double> terms_;
    double constant_ = 0.0;
};

struct ParamMap {
    std::vector<ParamRef> g, b;  // per branch position
    std::vector<ParamRef> shunt;  // per bus position
};

ParamMap map_parameters(const EstimationProblem& p) {
    const auto& net = p.network;
    ParamMap m;
    for (const auto& br : net.branches()) {
        m.g.push_back({br.g, -1});
        m.b.push_back({br.b, -1});
    }
    for (const auto& bus : net.buses()) m.shunt.push_back({bus.b_shunt, -1});
    for (std::size_t k = 0; k < p.unknowns.size(); ++k) {
        const auto& u = p.unknowns[k];
        const ParamRef ref{p.parameter_offset[k], p.parameter_vars[k]};
        switch (u.target) {
            case ParameterTarget::BranchSusceptance: m.b[net.branch_position(u.element)] = ref; break;
            case ParameterTarget::BranchConductance: m.g[net.branch_position(u.element)] = ref; break;
            case ParameterTarget::ShuntSusceptance: m.shunt[net.bus_position(u.element)] = ref; break;
        }
    }
    return m;
}

// Current leaving bus position k into branch position e.
void add_branch_current(RowBuilder& row, const Network& net, const ParamMap& pm, const PeriodLayout& lay,
                        std::size_t e, std::size_t k, bool imaginary) {
    const auto& br = net.branches()[e];
    const auto f = net.bus_position(br.from);
    const auto t = net.bus_position(br.to);
    const std::size_t o = (k == f) ? t : f;
    const auto& g = pm.g[e];
    const auto& b = pm.b[e];
    const double half = br.charging / 2.0;
    if (!imaginary) {
        row.add_product(g, 1.0, lay.vr[k]);
        row.add_product(g, -1.0, lay.vr[o]);
        row.add_product(b, -1.0, lay.vi[k]);
        row.add_product(b, 1.0, lay.vi[o]);
        row.add(lay.vi[k], -half);
    } else {
        row.add_product(g, 1.0, lay.vi[k]);
        row.add_product(g, -1.0, lay.vi[o]);
        row.add_product(b, 1.0, lay.vr[k]);
        row.add_product(b, -1.0, lay.vr[o]);
        row.add(lay.vr[k], half);
    }
}

void add_shunt_current(RowBuilder& row, const Network& net, const ParamMap& pm, const PeriodLayout& lay,
                       std::size_t k, bool imaginary) {
    const double gsh = net.buses()[k].g_shunt;
    const auto& bsh = pm.shunt[k];
    if (!imaginary) {
        row.add(lay.vr[k], gsh);
        row.add_product(bsh, -1.0, lay.vi[k]);
    } else {
        row.add(lay.vi[k], gsh);
        row.add_product(bsh, 1.0, lay.vr[k]);
    }
}

// Minus the measured current z_G·V + conj-rotation z_B·V at bus position k.
void subtract_measured_current(RowBuilder& row, const PeriodLayout& lay, std::size_t k, const Features& z,
                               bool imaginary) {
    if (!imaginary) {
        row.add(lay.vr[k], -z.g);
        row.add(lay.vi[k], -z.b);
    } else {
        row.add(lay.vi[k], -z.g);
        row.add(lay.vr[k], z.b);
    }
}

std::string join(const std::vector<std::string>& items) {
    std::ostringstream out;
    for (std::size_t i = 0; i < items.size(); ++i) out << (i ? "; " : "") << items[i];
    return out.str();
}

}  // namespace

EstimationProblem build_pse(const Network& network, const MeasurementSet& measurements,
                            const UnknownParameterSet& unknowns, const PseOptions& options) {
    if (measurements.periods.empty()) throw DataError("measurement set has no periods");
    if (auto errs = validate(network, unknowns); !errs.empty()) throw DataError(join(errs));

    EstimationProblem p;
    p.network = network;
    p.measurements = measurements;
    p.unknowns = unknowns;
    p.options = options;
    p.magnitude_anchor = !options.include_vmag;

    const std::size_t nb = network.bus_count();
    std::vector<char> zi(nb, 0);
    for (int id : measurements.zero_injection_buses) {
        const auto pos = network.find_bus(id);
        if (!pos) throw DataError("zero-injection bus " + std::to_string(id) + " is not in the network");
        zi[*pos] = 1;
    }

    for (std::size_t k = 0; k < unknowns.size(); ++k) {
        const auto& u = unknowns[k];
        p.parameter_vars.push_back(p.space.add({VariableKind::Parameter, 0, static_cast<int>(k), false}));
        p.parameter_offset.push_back(options.delta_form ? u.best_known.value_or(parameter_value(network, u)) : 0.0);
    }
    const ParamMap pm = map_parameters(p);
    const auto slack = network.slack_position();

    std::map<std::pair<int, int>, int> lifted;
    for (std::size_t t = 0; t < measurements.periods.size(); ++t) {
        const auto& period = measurements.periods[t];
        PeriodLayout lay;
        for (std::size_t k = 0; k < nb; ++k)
            lay.vr.push_back(p.space.add({VariableKind::VoltageReal, t, network.buses()[k].id, false}));
        for (std::size_t k = 0; k < nb; ++k)
            lay.vi.push_back(p.space.add({VariableKind::VoltageImag, t, network.buses()[k].id, false}));

        std::vector<int> measured(nb, -1);
        for (std::size_t j = 0; j < period.injections.size(); ++j) {
            const auto& z = period.injections[j];
            const auto pos = network.find_bus(z.bus);
            if (!pos) throw DataError("injection measurement at unknown bus " + std::to_string(z.bus));
            if (zi[*pos]) throw DataError("injection measurement at zero-injection bus " + std::to_string(z.bus));
            if (measured[*pos] >= 0) throw DataError("duplicate injection measurement at bus " + std::to_string(z.bus));
            measured[*pos] = static_cast<int>(j);
            lay.inj_real.push_back(p.space.add({VariableKind::NoiseReal, t, z.bus, false}));
            lay.inj_imag.push_back(p.space.add({VariableKind::NoiseImag, t, z.bus, false}));
            lay.inj_mag.push_back(options.include_vmag ? p.space.add({VariableKind::NoiseMagnitude, t, z.bus, false})
                                                       : -1);
        }
        for (const auto& z : period.flows) {
            const auto e = network.find_branch(z.branch);
            if (!e) throw DataError("flow measurement on unknown branch " + std::to_string(z.branch));
            const auto& br = network.branches()[*e];
            if (!br.in_service) throw DataError("flow measurement on out-of-service branch " + std::to_string(z.branch));
            if (z.metered_bus != br.from && z.metered_bus != br.to)
                throw DataError("flow meter bus " + std::to_string(z.metered_bus) + " is not a terminal of branch " +
                                std::to_string(z.branch));
            lay.flow_real.push_back(p.space.add({VariableKind::NoiseReal, t, z.branch, true}));
            lay.flow_imag.push_back(p.space.add({VariableKind::NoiseImag, t, z.branch, true}));
        }

        RowBuilder rb(p, lifted);
        // Current balance at every measured or zero-injection bus.
        for (std::size_t k = 0; k < nb; ++k) {
            if (measured[k] < 0 && !zi[k]) continue;
            std::optional<Features> z;
            if (measured[k] >= 0) {
                const auto& m = period.injections[measured[k]];
                z = feature_transform(m.p, m.q, m.vmag);
            }
            for (bool imag : {false, true}) {
                for (auto e : network.incidence()[k]) add_branch_current(rb, network, pm, lay, e, k, imag);
                add_shunt_current(rb, network, pm, lay, k, imag);
                int noise = -1;
                if (z) {
                    subtract_measured_current(rb, lay, k, *z, imag);
                    noise = imag ? lay.inj_imag[measured[k]] : lay.inj_real[measured[k]];
                    rb.add(noise, -1.0);
                }
                p.rows.push_back({rb.finish(), z ? RowTag::RtuKcl : RowTag::ZeroInjection, t, network.buses()[k].id,
                                  noise, imag});
            }
        }
        for (std::size_t j = 0; j < period.flows.size(); ++j) {
            const auto& z = period.flows[j];
            const auto e = network.branch_position(z.branch);
            const auto k = network.bus_position(z.metered_bus);
            const Features fz = flow_feature_transform(z.p, z.q, z.vmag);
            for (bool imag : {false, true}) {
                add_branch_current(rb, network, pm, lay, e, k, imag);
                subtract_measured_current(rb, lay, k, fz, imag);
                const int noise = imag ? lay.flow_imag[j] : lay.flow_real[j];
                rb.add(noise, -1.0);
                p.rows.push_back({rb.finish(), RowTag::Flow, t, z.branch, noise, imag});
            }
        }
        if (options.include_vmag) {
            for (std::size_t j = 0; j < period.injections.size(); ++j) {
                const auto& z = period.injections[j];
                const auto k = network.bus_position(z.bus);
                const int n = lay.inj_mag[j];
                // |V|² = (z - n)²
                rb.add(rb.lift(lay.vr[k], lay.vr[k]), 1.0);
                rb.add(rb.lift(lay.vi[k], lay.vi[k]), 1.0);
                rb.add(rb.lift(n, n), -1.0);
                rb.add(n, 2.0 * z.vmag);
                rb.add_constant(-z.vmag * z.vmag);
                p.rows.push_back({rb.finish(), RowTag::VoltageMagnitude, t, z.bus, n, false});
            }
        }
        rb.add(lay.vi[slack], 1.0);
        p.rows.push_back({rb.finish(), RowTag::Reference, t, network.buses()[slack].id, -1, true});
        if (p.magnitude_anchor) {
            double ref = network.buses()[slack].v_set;
            if (measured[slack] >= 0) ref = period.injections[measured[slack]].vmag;
            rb.add(lay.vr[slack], 1.0);
            rb.add_constant(-ref);
            p.rows.push_back({rb.finish(), RowTag::Reference, t, network.buses()[slack].id, -1, false});
        }

        for (std::size_t j = 0; j < period.injections.size(); ++j) {
            const auto& z = period.injections[j];
            p.objective.emplace_back(lay.inj_real[j], z.w_current);
            p.objective.emplace_back(lay.inj_imag[j], z.w_current);
            if (lay.inj_mag[j] >= 0) p.objective.emplace_back(lay.inj_mag[j], z.w_voltage);
        }
        for (std::size_t j = 0; j < period.flows.size(); ++j) {
            p.objective.emplace_back(lay.flow_real[j], period.flows[j].w_current);
            p.objective.emplace_back(lay.flow_imag[j], period.flows[j].w_current);
        }
        p.layout.push_back(std::move(lay));
    }
    return p;
}

EstimationProblem build_se(const Network& network, const MeasurementSet& measurements) {
    PseOptions o;
    o.include_vmag = false;
    return build_pse(network, measurements, {}, o);
}

}  // namespace gridpse
