#include <cmath>

#include "gridpse/error.hpp"
#include "gridpse/pse/problem.hpp"

namespace gridpse {

std::string to_string(VariableKind kind) {
    switch (kind) {
        case VariableKind::VoltageReal: return "voltage-real";
        case VariableKind::VoltageImag: return "voltage-imag";
        case VariableKind::NoiseReal: return "noise-real";
        case VariableKind::NoiseImag: return "noise-imag";
        case VariableKind::NoiseMagnitude: return "noise-magnitude";
        case VariableKind::Parameter: return "parameter";
        case VariableKind::Lifted: return "lifted";
    }
    return "unknown";
}

std::string to_string(RowTag tag) {
    switch (tag) {
        case RowTag::RtuKcl: return "rtu-kcl";
        case RowTag::Flow: return "flow";
        case RowTag::ZeroInjection: return "zero-injection";
        case RowTag::VoltageMagnitude: return "vmag";
        case RowTag::Reference: return "reference";
    }
    return "unknown";
}

std::vector<int> VariableSpace::indices_of(VariableKind kind) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < vars_.size(); ++i)
        if (vars_[i].kind == kind) out.push_back(static_cast<int>(i));
    return out;
}

double EstimationProblem::objective_value(std::span<const double> x) const {
    double f = 0.0;
    for (const auto& [v, w] : objective) f += w * x[v] * x[v];
    return f;
}

QuadraticFunction EstimationProblem::unlifted_row(std::size_t r) const {
    const auto& src = rows[r].f;
    QuadraticFunction out;
    out.constant = src.constant;
    for (const auto& t : src.linear) {
        const auto& info = space[t.var];
        if (info.kind == VariableKind::Lifted) {
            const auto& d = bilinear[info.element];
            out.quadratic.push_back({d.left, d.right, t.coef});
        } else {
            out.linear.push_back(t);
        }
    }
    return out;
}

std::vector<double> EstimationProblem::parameter_values(std::span<const double> x) const {
    std::vector<double> out(unknowns.size());
    for (std::size_t k = 0; k < unknowns.size(); ++k) out[k] = parameter_offset[k] + x[parameter_vars[k]];
    return out;
}

OperatingPoint EstimationProblem::voltages(std::span<const double> x, std::size_t period) const {
    const auto& lay = layout.at(period);
    OperatingPoint v;
    for (std::size_t k = 0; k < lay.vr.size(); ++k) {
        v.vr.push_back(x[lay.vr[k]]);
        v.vi.push_back(x[lay.vi[k]]);
    }
    return v;
}

void EstimationProblem::complete_lifted(std::vector<double>& x) const {
    for (const auto& d : bilinear) x[d.lifted] = x[d.left] * x[d.right];
}

std::vector<double> EstimationProblem::make_point(const std::vector<OperatingPoint>& v,
                                                  const std::vector<double>& parameters) const {
    if (v.size() != period_count()) throw DataError("one operating point per period is required");
    if (parameters.size() != unknowns.size()) throw DataError("one value per unknown parameter is required");
    std::vector<double> x(num_vars(), 0.0);
    for (std::size_t t = 0; t < period_count(); ++t) {
        if (v[t].size() != layout[t].vr.size()) throw DataError("operating point does not match network");
        for (std::size_t k = 0; k < v[t].size(); ++k) {
            x[layout[t].vr[k]] = v[t].vr[k];
            x[layout[t].vi[k]] = v[t].vi[k];
        }
    }
    for (std::size_t k = 0; k < unknowns.size(); ++k) x[parameter_vars[k]] = parameters[k] - parameter_offset[k];
    complete_lifted(x);
    for (const auto& row : rows) {
        if (row.noise < 0) continue;
        if (row.tag == RowTag::VoltageMagnitude) {
            double z = 0.0;
            for (const auto& t : row.f.linear)
                if (t.var == row.noise) z = t.coef / 2.0;
            const auto& lay = layout[row.period];
            const auto k = network.bus_position(row.element);
            x[row.noise] = z - std::hypot(x[lay.vr[k]], x[lay.vi[k]]);
        } else {
            x[row.noise] = 0.0;
            x[row.noise] = row.f.value(x);
        }
    }
    complete_lifted(x);
    return x;
}

Qcqp EstimationProblem::exact_qcqp() const {
    Qcqp q(num_vars());
    for (const auto& [v, w] : objective) q.objective.quadratic.push_back({v, v, w});
    for (std::size_t r = 0; r < rows.size(); ++r) q.add_row(unlifted_row(r), RowSense::Equal);
    for (const auto& d : bilinear) q.lower[d.lifted] = q.upper[d.lifted] = 0.0;
    return q;
}

Qcqp EstimationProblem::lifted_qcqp() const {
    Qcqp q(num_vars());
    for (const auto& [v, w] : objective) q.objective.quadratic.push_back({v, v, w});
    for (const auto& row : rows) q.add_row(row.f, RowSense::Equal);
    return q;
}

std::size_t EstimationProblem::count_rows(RowTag tag) const {
    std::size_t c = 0;
    for (const auto& r : rows) c += r.tag == tag;
    return c;
}

namespace {

void add_gradient(const QuadraticFunction& f, std::span<const double> x, std::size_t row,
                  std::vector<Eigen::Triplet<double>>& out) {
    for (const auto& t : f.linear) out.emplace_back(row, t.var, t.coef);
    for (const auto& q : f.quadratic) {
        if (q.i == q.j) {
            out.emplace_back(row, q.i, 2.0 * q.coef * x[q.i]);
        } else {
            out.emplace_back(row, q.i, q.coef * x[q.j]);
            out.emplace_back(row, q.j, q.coef * x[q.i]);
        }
    }
}

void add_hessian(const QuadraticFunction& f, double scale, std::vector<Eigen::Triplet<double>>& out) {
    for (const auto& q : f.quadratic) {
        if (q.i == q.j) {
            out.emplace_back(q.i, q.i, 2.0 * scale * q.coef);
        } else {
            out.emplace_back(q.i, q.j, scale * q.coef);
            out.emplace_back(q.j, q.i, scale * q.coef);
        }
    }
}

}  // namespace

Evaluation evaluate(const EstimationProblem& problem, std::span<const double> x, EvalMode mode) {
    if (x.size() != problem.num_vars()) throw DataError("point dimension mismatch");
    const std::size_t n = problem.num_vars(), m = problem.rows.size();
    Evaluation ev;
    ev.objective = problem.objective_value(x);
    ev.gradient = Eigen::VectorXd::Zero(n);
    for (const auto& [v, w] : problem.objective) ev.gradient[v] += 2.0 * w * x[v];
    ev.residuals.resize(m);
    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t r = 0; r < m; ++r) {
        const QuadraticFunction f = mode == EvalMode::Lifted ? problem.rows[r].f : problem.unlifted_row(r);
        ev.residuals[r] = f.value(x);
        add_gradient(f, x, r, trips);
    }
    ev.jacobian.resize(m, n);
    ev.jacobian.setFromTriplets(trips.begin(), trips.end());
    return ev;
}

Eigen::SparseMatrix<double> lagrangian_hessian(const EstimationProblem& problem, std::span<const double> x,
                                               std::span<const double> y, EvalMode mode) {
    const std::size_t n = problem.num_vars();
    if (x.size() != n || y.size() != problem.rows.size()) throw DataError("dimension mismatch");
    std::vector<Eigen::Triplet<double>> trips;
    for (const auto& [v, w] : problem.objective) trips.emplace_back(v, v, 2.0 * w);
    if (mode == EvalMode::Unlifted)
        for (std::size_t r = 0; r < problem.rows.size(); ++r) add_hessian(problem.unlifted_row(r), y[r], trips);
    Eigen::SparseMatrix<double> h(n, n);
    h.setFromTriplets(trips.begin(), trips.end());
    return h;
}

}  // namespace gridpse
