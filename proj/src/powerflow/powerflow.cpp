#include "gridpse/powerflow/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "gridpse/error.hpp"

namespace gridpse {

double OperatingPoint::magnitude(std::size_t pos) const { return std::hypot(vr[pos], vi[pos]); }
double OperatingPoint::angle(std::size_t pos) const { return std::atan2(vi[pos], vr[pos]); }

OperatingPoint OperatingPoint::flat(const Network& network) {
    OperatingPoint p;
    p.vr.assign(network.bus_count(), 1.0);
    p.vi.assign(network.bus_count(), 0.0);
    for (std::size_t k = 0; k < network.bus_count(); ++k) {
        const auto& b = network.buses()[k];
        if (b.kind == BusKind::Slack || b.kind == BusKind::Generator) p.vr[k] = b.v_set;
    }
    return p;
}

OperatingPoint OperatingPoint::from_polar(const std::vector<double>& vm, const std::vector<double>& va) {
    OperatingPoint p;
    p.vr.resize(vm.size());
    p.vi.resize(vm.size());
    for (std::size_t k = 0; k < vm.size(); ++k) {
        p.vr[k] = vm[k] * std::cos(va[k]);
        p.vi[k] = vm[k] * std::sin(va[k]);
    }
    return p;
}

AdmittanceMatrix AdmittanceMatrix::build(const Network& network) {
    const std::size_t n = network.bus_count();
    std::vector<Complex> diag(n);
    std::vector<std::vector<std::pair<std::size_t, Complex>>> off(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto& b = network.buses()[k];
        diag[k] += Complex(b.g_shunt, b.b_shunt);
    }
    for (const auto& br : network.branches()) {
        if (!br.in_service) continue;
        const auto f = network.bus_position(br.from);
        const auto t = network.bus_position(br.to);
        const Complex y(br.g, br.b);
        const Complex half(0.0, br.charging / 2.0);
        diag[f] += y + half;
        diag[t] += y + half;
        off[f].emplace_back(t, -y);
        off[t].emplace_back(f, -y);
    }
    AdmittanceMatrix y;
    y.rows.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        y.rows[k].emplace_back(k, diag[k]);
        // Merge parallel branches.
        for (auto& [j, v] : off[k]) {
            auto it = std::find_if(y.rows[k].begin(), y.rows[k].end(), [j = j](auto& e) { return e.first == j; });
            if (it == y.rows[k].end())
                y.rows[k].emplace_back(j, v);
            else
                it->second += v;
        }
    }
    return y;
}

Complex AdmittanceMatrix::current(std::size_t bus, const OperatingPoint& point) const {
    Complex i{};
    for (const auto& [j, y] : rows[bus]) i += y * point.voltage(j);
    return i;
}

Complex injection(const Network& network, const OperatingPoint& point, std::size_t k) {
    Complex i = Complex(network.buses()[k].g_shunt, network.buses()[k].b_shunt) * point.voltage(k);
    for (auto e : network.incidence()[k]) i += branch_current(network, point, e, k);
    return point.voltage(k) * std::conj(i);
}

Complex branch_current(const Network& network, const OperatingPoint& point, std::size_t e, std::size_t at) {
    const auto& br = network.branches()[e];
    const auto f = network.bus_position(br.from);
    const auto t = network.bus_position(br.to);
    const std::size_t other = (at == f) ? t : f;
    const Complex y(br.g, br.b);
    return y * (point.voltage(at) - point.voltage(other)) + Complex(0.0, br.charging / 2.0) * point.voltage(at);
}

Complex branch_flow(const Network& network, const OperatingPoint& point, int branch_id, int metered_bus) {
    const auto e = network.branch_position(branch_id);
    const auto& br = network.branches()[e];
    if (!br.in_service) throw DataError("branch " + std::to_string(branch_id) + " is out of service");
    if (metered_bus != br.from && metered_bus != br.to)
        throw DataError("bus " + std::to_string(metered_bus) + " is not a terminal of branch " +
                        std::to_string(branch_id));
    const auto at = network.bus_position(metered_bus);
    return point.voltage(at) * std::conj(branch_current(network, point, e, at));
}

namespace {

Complex scheduled_injection(const Bus& b) { return {b.p_gen - b.p_load, -b.q_load}; }

bool holds_magnitude(const Bus& b) { return b.kind == BusKind::Slack || b.kind == BusKind::Generator; }

}  // namespace

double max_mismatch(const Network& network, const OperatingPoint& point) {
    double worst = 0.0;
    for (std::size_t k = 0; k < network.bus_count(); ++k) {
        const auto& b = network.buses()[k];
        if (b.kind == BusKind::Slack) continue;
        const Complex d = scheduled_injection(b) - injection(network, point, k);
        worst = std::max(worst, std::abs(d.real()));
        if (!holds_magnitude(b)) worst = std::max(worst, std::abs(d.imag()));
    }
    return worst;
}

PowerflowReport solve_powerflow(const Network& network, const PowerflowOptions& options) {
    if (!(options.tolerance > 0.0)) throw DataError("power flow tolerance must be positive");
    const std::size_t n = network.bus_count();
    const auto slack = network.slack_position();
    const auto ybus = AdmittanceMatrix::build(network);

    std::vector<double> vm(n), va(n);
    {
        OperatingPoint start = options.initial ? *options.initial : OperatingPoint::flat(network);
        if (start.size() != n) throw DataError("initial point dimension mismatch");
        for (std::size_t k = 0; k < n; ++k) {
            vm[k] = start.magnitude(k);
            va[k] = start.angle(k);
        }
    }
    for (std::size_t k = 0; k < n; ++k) {
        const auto& b = network.buses()[k];
        if (holds_magnitude(b)) vm[k] = b.v_set;
    }
    va[slack] = 0.0;

    // Unknown ordering: angles of non-slack buses, then magnitudes of PQ buses.
    std::vector<int> ang_idx(n, -1), mag_idx(n, -1);
    int dim = 0;
    for (std::size_t k = 0; k < n; ++k)
        if (k != slack) ang_idx[k] = dim++;
    for (std::size_t k = 0; k < n; ++k)
        if (!holds_magnitude(network.buses()[k])) mag_idx[k] = dim++;

    const bool sparse = n >= 200;
    std::vector<double> p(n), q(n);
    auto compute_pq = [&]() {
        for (std::size_t i = 0; i < n; ++i) {
            double pi = 0.0, qi = 0.0;
            for (const auto& [j, y] : ybus.rows[i]) {
                const double t = va[i] - va[j];
                const double c = std::cos(t), s = std::sin(t);
                pi += vm[j] * (y.real() * c + y.imag() * s);
                qi += vm[j] * (y.real() * s - y.imag() * c);
            }
            p[i] = vm[i] * pi;
            q[i] = vm[i] * qi;
        }
    };

    Eigen::VectorXd mismatch(dim);
    auto evaluate = [&]() {
        compute_pq();
        double worst = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const Complex s = scheduled_injection(network.buses()[k]);
            if (ang_idx[k] >= 0) mismatch[ang_idx[k]] = s.real() - p[k];
            if (mag_idx[k] >= 0) mismatch[mag_idx[k]] = s.imag() - q[k];
        }
        if (dim > 0) worst = mismatch.cwiseAbs().maxCoeff();
        return worst;
    };

    PowerflowReport report;
    double worst = evaluate();
    int iter = 0;
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> sparse_lu;
    bool analyzed = false;
    while (worst > options.tolerance) {
        if (iter >= options.max_iterations) {
            std::ostringstream msg;
            msg << "power flow did not converge in " << options.max_iterations
                << " iterations (max mismatch " << worst << ")";
            throw SolverError(msg.str());
        }
        trips.clear();
        for (std::size_t i = 0; i < n; ++i) {
            const int rp = ang_idx[i], rq = mag_idx[i];
            if (rp < 0 && rq < 0) continue;
            for (const auto& [j, y] : ybus.rows[i]) {
                const double g = y.real(), b = y.imag();
                const int cth = ang_idx[j], cv = mag_idx[j];
                if (j == i) {
                    if (rp >= 0 && cth >= 0) trips.emplace_back(rp, cth, -q[i] - b * vm[i] * vm[i]);
                    if (rp >= 0 && cv >= 0) trips.emplace_back(rp, cv, p[i] / vm[i] + g * vm[i]);
                    if (rq >= 0 && cth >= 0) trips.emplace_back(rq, cth, p[i] - g * vm[i] * vm[i]);
                    if (rq >= 0 && cv >= 0) trips.emplace_back(rq, cv, q[i] / vm[i] - b * vm[i]);
                } else {
                    const double t = va[i] - va[j];
                    const double c = std::cos(t), s = std::sin(t);
                    const double a1 = g * s - b * c;  // sin-type
                    const double a2 = g * c + b * s;  // cos-type
                    if (rp >= 0 && cth >= 0) trips.emplace_back(rp, cth, vm[i] * vm[j] * a1);
                    if (rp >= 0 && cv >= 0) trips.emplace_back(rp, cv, vm[i] * a2);
                    if (rq >= 0 && cth >= 0) trips.emplace_back(rq, cth, -vm[i] * vm[j] * a2);
                    if (rq >= 0 && cv >= 0) trips.emplace_back(rq, cv, vm[i] * a1);
                }
            }
        }
        Eigen::VectorXd dx;
        if (sparse) {
            Eigen::SparseMatrix<double> jac(dim, dim);
            jac.setFromTriplets(trips.begin(), trips.end());
            if (!analyzed) {
                sparse_lu.analyzePattern(jac);
                analyzed = true;
            }
            sparse_lu.factorize(jac);
            if (sparse_lu.info() != Eigen::Success) throw SolverError("singular power flow Jacobian");
            dx = sparse_lu.solve(mismatch);
        } else {
            Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(dim, dim);
            for (const auto& t : trips) jac(t.row(), t.col()) += t.value();
            Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
            if (!lu.isInvertible()) throw SolverError("singular power flow Jacobian");
            dx = lu.solve(mismatch);
        }
        if (!dx.allFinite()) throw SolverError("singular power flow Jacobian");
        for (std::size_t k = 0; k < n; ++k) {
            if (ang_idx[k] >= 0) va[k] += dx[ang_idx[k]];
            if (mag_idx[k] >= 0) vm[k] += dx[mag_idx[k]];
        }
        ++iter;
        worst = evaluate();
    }
    report.point = OperatingPoint::from_polar(vm, va);
    report.point.vi[slack] = 0.0;
    report.iterations = iter;
    report.max_mismatch = worst;
    return report;
}

}  // namespace gridpse
