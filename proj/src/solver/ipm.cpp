#include "gridpse/solver/ipm.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <Eigen/SparseQR>

#include "gridpse/error.hpp"

namespace gridpse {

double QuadraticFunction::value(std::span<const double> x) const {
    double v = constant;
    for (const auto& t : linear) v += t.coef * x[t.var];
    for (const auto& q : quadratic) v += q.coef * x[q.i] * x[q.j];
    return v;
}

std::string to_string(SolveStatus status) {
    switch (status) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::MaxIterations: return "max-iterations";
        case SolveStatus::RestorationFailure: return "restoration-failure";
    }
    return "unknown";
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

// Derivative structure of a Qcqp, compiled once per solve.
struct Compiled {
    int n = 0;
    int m = 0;
    std::vector<char> fixed;
    std::vector<char> has_lower, has_upper;
    std::vector<char> is_ineq;

    // Jacobian in CSR form; a quadratic term adds coef * x[var] to a slot.
    std::vector<int> jac_start, jac_col;
    std::vector<double> jac_lin;
    struct JacQuad {
        int slot;
        int var;
        double coef;
    };
    std::vector<JacQuad> jac_quad;

    // Objective gradient pieces.
    std::vector<double> obj_lin;
    std::vector<QuadTerm> obj_quad;

    // Lower-triangular Hessian entries, row = -1 for the objective.
    std::vector<std::pair<int, int>> hess_entries;
    struct HessTerm {
        int entry;
        int row;
        double coef;
    };
    std::vector<HessTerm> hess_terms;

    explicit Compiled(const Qcqp& p) {
        n = static_cast<int>(p.num_vars);
        m = static_cast<int>(p.rows.size());
        fixed.assign(n, 0);
        has_lower.assign(n, 0);
        has_upper.assign(n, 0);
        for (int i = 0; i < n; ++i) {
            if (p.lower[i] == p.upper[i]) {
                fixed[i] = 1;
                continue;
            }
            has_lower[i] = std::isfinite(p.lower[i]);
            has_upper[i] = std::isfinite(p.upper[i]);
        }
        is_ineq.resize(m);
        for (int r = 0; r < m; ++r) is_ineq[r] = p.sense[r] == RowSense::LessEqual;

        std::map<std::pair<int, int>, int> hess_index;
        auto hess_entry = [&](int i, int j) {
            if (i < j) std::swap(i, j);
            auto [it, inserted] = hess_index.emplace(std::make_pair(i, j), static_cast<int>(hess_entries.size()));
            if (inserted) hess_entries.emplace_back(i, j);
            return it->second;
        };

        jac_start.push_back(0);
        for (int r = 0; r < m; ++r) {
            const auto& f = p.rows[r];
            std::map<int, int> slot_of;
            auto slot = [&](int v) {
                auto [it, inserted] = slot_of.emplace(v, static_cast<int>(jac_col.size()));
                if (inserted) {
                    jac_col.push_back(v);
                    jac_lin.push_back(0.0);
                }
                return it->second;
            };
            for (const auto& t : f.linear) jac_lin[slot(t.var)] += t.coef;
            for (const auto& q : f.quadratic) {
                if (q.i == q.j) {
                    jac_quad.push_back({slot(q.i), q.i, 2.0 * q.coef});
                    hess_terms.push_back({hess_entry(q.i, q.i), r, 2.0 * q.coef});
                } else {
                    jac_quad.push_back({slot(q.i), q.j, q.coef});
                    jac_quad.push_back({slot(q.j), q.i, q.coef});
                    hess_terms.push_back({hess_entry(q.i, q.j), r, q.coef});
                }
            }
            jac_start.push_back(static_cast<int>(jac_col.size()));
        }
        obj_lin.assign(n, 0.0);
        for (const auto& t : p.objective.linear) obj_lin[t.var] += t.coef;
        obj_quad = p.objective.quadratic;
        for (const auto& q : obj_quad)
            hess_terms.push_back({hess_entry(q.i, q.j), -1, q.i == q.j ? 2.0 * q.coef : q.coef});
    }

    void jacobian(const std::vector<double>& x, std::vector<double>& vals) const {
        vals = jac_lin;
        for (const auto& q : jac_quad) vals[q.slot] += q.coef * x[q.var];
        for (std::size_t s = 0; s < vals.size(); ++s)
            if (fixed[jac_col[s]]) vals[s] = 0.0;
    }

    void gradient(const std::vector<double>& x, Vec& g) const {
        g = Eigen::Map<const Vec>(obj_lin.data(), n);
        for (const auto& q : obj_quad) {
            if (q.i == q.j) {
                g[q.i] += 2.0 * q.coef * x[q.i];
            } else {
                g[q.i] += q.coef * x[q.j];
                g[q.j] += q.coef * x[q.i];
            }
        }
    }

    // Values of the Lagrangian Hessian entries.
    void hessian(const Vec& y, std::vector<double>& vals) const {
        vals.assign(hess_entries.size(), 0.0);
        for (const auto& h : hess_terms) vals[h.entry] += h.coef * (h.row < 0 ? 1.0 : y[h.row]);
        for (std::size_t e = 0; e < hess_entries.size(); ++e)
            if (fixed[hess_entries[e].first] || fixed[hess_entries[e].second]) vals[e] = 0.0;
    }

    void jt_times(const std::vector<double>& jvals, const Vec& y, Vec& out) const {
        out.setZero(n);
        for (int r = 0; r < m; ++r)
            for (int s = jac_start[r]; s < jac_start[r + 1]; ++s) out[jac_col[s]] += jvals[s] * y[r];
    }

    void j_times(const std::vector<double>& jvals, const Vec& dx, Vec& out) const {
        out.setZero(m);
        for (int r = 0; r < m; ++r)
            for (int s = jac_start[r]; s < jac_start[r + 1]; ++s) out[r] += jvals[s] * dx[jac_col[s]];
    }
};

// Symmetric KKT matrix stored with both triangles and a fixed sparsity pattern.
class KktMatrix {
public:
    explicit KktMatrix(const Compiled& c) : c_(c) {
        const int n = c.n, m = c.m, N = n + m;
        std::vector<Eigen::Triplet<double>> trips;
        for (int i = 0; i < N; ++i) trips.emplace_back(i, i, 0.0);
        for (const auto& [i, j] : c.hess_entries)
            if (i != j) {
                trips.emplace_back(i, j, 0.0);
                trips.emplace_back(j, i, 0.0);
            }
        for (int r = 0; r < m; ++r)
            for (int s = c.jac_start[r]; s < c.jac_start[r + 1]; ++s) {
                trips.emplace_back(n + r, c.jac_col[s], 0.0);
                trips.emplace_back(c.jac_col[s], n + r, 0.0);
            }
        mat_.resize(N, N);
        mat_.setFromTriplets(trips.begin(), trips.end());
        mat_.makeCompressed();

        diag_.resize(N);
        for (int i = 0; i < N; ++i) diag_[i] = position(i, i);
        hess_lo_.resize(c.hess_entries.size());
        hess_up_.resize(c.hess_entries.size());
        for (std::size_t e = 0; e < c.hess_entries.size(); ++e) {
            const auto [i, j] = c.hess_entries[e];
            hess_lo_[e] = position(i, j);
            hess_up_[e] = i == j ? -1 : position(j, i);
        }
        jac_lo_.resize(c.jac_col.size());
        jac_up_.resize(c.jac_col.size());
        for (int r = 0; r < m; ++r)
            for (int s = c.jac_start[r]; s < c.jac_start[r + 1]; ++s) {
                jac_lo_[s] = position(n + r, c.jac_col[s]);
                jac_up_[s] = position(c.jac_col[s], n + r);
            }
    }

    // primal_diag excludes the Hessian; row_diag is the (2,2) block diagonal.
    void assemble(const std::vector<double>& hess, const std::vector<double>& jac, const Vec& primal_diag,
                  const Vec& row_diag) {
        double* v = mat_.valuePtr();
        std::fill(v, v + mat_.nonZeros(), 0.0);
        for (int i = 0; i < c_.n; ++i) v[diag_[i]] = primal_diag[i];
        for (int r = 0; r < c_.m; ++r) v[diag_[c_.n + r]] = row_diag[r];
        for (std::size_t e = 0; e < hess.size(); ++e) {
            v[hess_lo_[e]] += hess[e];
            if (hess_up_[e] >= 0) v[hess_up_[e]] += hess[e];
        }
        for (std::size_t s = 0; s < jac.size(); ++s) {
            v[jac_lo_[s]] += jac[s];
            v[jac_up_[s]] += jac[s];
        }
    }

    SpMat& matrix() { return mat_; }

private:
    int position(int row, int col) const {
        const int* inner = mat_.innerIndexPtr();
        const int b = mat_.outerIndexPtr()[col], e = mat_.outerIndexPtr()[col + 1];
        const int* it = std::lower_bound(inner + b, inner + e, row);
        return static_cast<int>(it - inner);
    }

    const Compiled& c_;
    SpMat mat_;
    std::vector<int> diag_, hess_lo_, hess_up_, jac_lo_, jac_up_;
};

constexpr double kKappaEps = 10.0;
constexpr double kKappaMu = 0.2;
constexpr double kThetaMu = 1.5;
constexpr double kSMax = 100.0;
constexpr double kKappaSigma = 1e10;
constexpr double kArmijo = 1e-4;
constexpr double kDeltaW0 = 1e-4;
constexpr double kDeltaWMin = 1e-20;
constexpr double kDeltaWMax = 1e40;
constexpr double kCurvature = 1e-10;
constexpr double kLmInit = 1e-4;
constexpr double kLmMax = 1e6;
constexpr int kMaxRegularizedRetries = 12;

struct Iterate {
    std::vector<double> x;
    Vec t;   // slack per row (0 on equality rows)
    Vec y;   // row multipliers
    Vec zl, zu;
};

class Solver {
public:
    Solver(const Qcqp& p, SolveMode mode, const SolverOptions& o) : p_(p), c_(p), mode_(mode), o_(o), kkt_(c_) {}

    SolveResult run();

private:
    void initialize();
    void evaluate();
    double error(double mu) const;
    double gap() const;
    bool factor_and_solve(const Vec& rhs, Vec& sol, double mu, double floor);
    bool linear_solve(const Vec& rhs, Vec& sol);
    double barrier_merit(const std::vector<double>& x, const Vec& t, double mu, double nu) const;
    double infeasibility_l1(const std::vector<double>& x, const Vec& t) const;
    void row_values(const std::vector<double>& x, Vec& g) const;

    double lo(int i) const { return p_.lower[i]; }
    double up(int i) const { return p_.upper[i]; }

    const Qcqp& p_;
    Compiled c_;
    SolveMode mode_;
    SolverOptions o_;
    KktMatrix kkt_;

    Iterate it_;
    Vec g_;                    // row values
    Vec grad_;
    std::vector<double> jac_;  // Jacobian values
    std::vector<double> hess_;
    Vec rd_;                   // dual residual
    Vec rp_;                   // primal residual

    bool use_ldlt_ = false;
    bool analyzed_ = false;
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt_;
    Eigen::SparseLU<SpMat> lu_;
    double delta_w_last_ = 0.0;
    double lm_ = 0.0;  // primal regularization floor
    double delta_w_used_ = 0.0;
    double delta_c_ = 0.0;
    Vec primal_diag_, row_diag_;
    Vec sigma_;  // barrier diagonal
    bool trace_ = std::getenv("GRIDPSE_TRACE") != nullptr;
};

void Solver::row_values(const std::vector<double>& x, Vec& g) const {
    g.resize(c_.m);
    for (int r = 0; r < c_.m; ++r) g[r] = p_.rows[r].value(x);
}

void Solver::initialize() {
    const int n = c_.n, m = c_.m;
    auto& x = it_.x;
    x.assign(n, 0.0);
    if (o_.init == InitMode::WarmStart || (o_.init == InitMode::RandomInBox && !o_.warm_start.empty())) {
        if (o_.warm_start.size() != static_cast<std::size_t>(n))
            throw SolverError("warm start dimension does not match the problem");
        x = o_.warm_start;
    }
    if (o_.init == InitMode::RandomInBox) {
        std::mt19937_64 rng(o_.seed);
        for (int i = 0; i < n; ++i)
            if (std::isfinite(lo(i)) && std::isfinite(up(i)))
                x[i] = std::uniform_real_distribution<double>(lo(i), up(i))(rng);
    }
    for (int i = 0; i < n; ++i) {
        if (c_.fixed[i]) {
            x[i] = lo(i);
            continue;
        }
        const double pl = c_.has_lower[i] ? 1e-2 * std::max(1.0, std::abs(lo(i))) : 0.0;
        const double pu = c_.has_upper[i] ? 1e-2 * std::max(1.0, std::abs(up(i))) : 0.0;
        if (c_.has_lower[i] && c_.has_upper[i]) {
            const double w = up(i) - lo(i);
            const double a = std::min(pl, 1e-2 * w), b = std::min(pu, 1e-2 * w);
            x[i] = std::clamp(x[i], lo(i) + a, up(i) - b);
        } else if (c_.has_lower[i]) {
            x[i] = std::max(x[i], lo(i) + pl);
        } else if (c_.has_upper[i]) {
            x[i] = std::min(x[i], up(i) - pu);
        }
    }
    const double mu = o_.mu_init;
    row_values(x, g_);
    it_.t = Vec::Zero(m);
    it_.y = Vec::Zero(m);
    for (int r = 0; r < m; ++r)
        if (c_.is_ineq[r]) {
            it_.t[r] = std::max(-g_[r], 1e-2);
            it_.y[r] = mu / it_.t[r];
        }
    it_.zl = Vec::Zero(n);
    it_.zu = Vec::Zero(n);
    for (int i = 0; i < n; ++i) {
        if (c_.has_lower[i]) it_.zl[i] = mu / (x[i] - lo(i));
        if (c_.has_upper[i]) it_.zu[i] = mu / (up(i) - x[i]);
    }
}

void Solver::evaluate() {
    const auto& x = it_.x;
    row_values(x, g_);
    c_.jacobian(x, jac_);
    c_.gradient(x, grad_);
    Vec jty;
    c_.jt_times(jac_, it_.y, jty);
    rd_ = grad_ + jty - it_.zl + it_.zu;
    for (int i = 0; i < c_.n; ++i)
        if (c_.fixed[i]) rd_[i] = 0.0;
    rp_ = g_ + it_.t;
}

double Solver::error(double mu) const {
    const int n = c_.n, m = c_.m;
    double ysum = it_.y.lpNorm<1>(), zsum = it_.zl.lpNorm<1>() + it_.zu.lpNorm<1>();
    int nz = 0;
    for (int i = 0; i < n; ++i) nz += c_.has_lower[i] + c_.has_upper[i];
    int mi = 0;
    for (int r = 0; r < m; ++r) mi += c_.is_ineq[r];
    const double sd = std::max(kSMax, (ysum + zsum) / std::max(1, m + nz)) / kSMax;
    const double sc = std::max(kSMax, (zsum + it_.y.cwiseAbs().sum()) / std::max(1, nz + mi)) / kSMax;
    double comp = 0.0;
    for (int r = 0; r < m; ++r)
        if (c_.is_ineq[r]) comp = std::max(comp, std::abs(it_.t[r] * it_.y[r] - mu));
    for (int i = 0; i < n; ++i) {
        if (c_.has_lower[i]) comp = std::max(comp, std::abs((it_.x[i] - lo(i)) * it_.zl[i] - mu));
        if (c_.has_upper[i]) comp = std::max(comp, std::abs((up(i) - it_.x[i]) * it_.zu[i] - mu));
    }
    const double dual = n > 0 ? rd_.lpNorm<Eigen::Infinity>() : 0.0;
    const double primal = m > 0 ? rp_.lpNorm<Eigen::Infinity>() : 0.0;
    return std::max({dual / sd, primal, comp / sc});
}

double Solver::gap() const {
    double s = 0.0;
    for (int r = 0; r < c_.m; ++r)
        if (c_.is_ineq[r]) s += it_.t[r] * it_.y[r];
    for (int i = 0; i < c_.n; ++i) {
        if (c_.has_lower[i]) s += (it_.x[i] - lo(i)) * it_.zl[i];
        if (c_.has_upper[i]) s += (up(i) - it_.x[i]) * it_.zu[i];
    }
    return s;
}

bool Solver::linear_solve(const Vec& rhs, Vec& sol) {
    SpMat& K = kkt_.matrix();
    const int n = c_.n, m = c_.m;
    if (use_ldlt_) {
        if (!analyzed_) {
            ldlt_.analyzePattern(K);
            analyzed_ = true;
        }
        ldlt_.factorize(K);
        if (ldlt_.info() != Eigen::Success) return false;
        const Vec& d = ldlt_.vectorD();
        int pos = 0, neg = 0;
        for (Eigen::Index i = 0; i < d.size(); ++i) {
            if (d[i] > 0.0)
                ++pos;
            else if (d[i] < 0.0)
                ++neg;
        }
        if (pos != n || neg != m) return false;
        sol = ldlt_.solve(rhs);
        // One refinement step against the matrix without the dual regularization.
        Vec res = rhs - K * sol;
        res.tail(m) -= delta_c_ * sol.tail(m);
        sol += ldlt_.solve(res);
    } else {
        if (!analyzed_) {
            lu_.analyzePattern(K);
            analyzed_ = true;
        }
        lu_.factorize(K);
        if (lu_.info() != Eigen::Success) return false;
        sol = lu_.solve(rhs);
        if (!sol.allFinite()) return false;
        Vec res = rhs - K * sol;
        for (int k = 0; k < 3 && res.lpNorm<Eigen::Infinity>() > 1e-14 * (1.0 + rhs.lpNorm<Eigen::Infinity>()); ++k) {
            sol += lu_.solve(res);
            res = rhs - K * sol;
        }
        if (res.lpNorm<Eigen::Infinity>() > 1e-6 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) return false;
    }
    return sol.allFinite();
}

bool Solver::factor_and_solve(const Vec& rhs, Vec& sol, double mu, double floor) {
    const int n = c_.n;
    c_.hessian(it_.y, hess_);
    auto try_with = [&](double dw, double dc) {
        Vec pd = sigma_;
        for (int i = 0; i < n; ++i) pd[i] = c_.fixed[i] ? 1.0 : pd[i] + dw;
        Vec rdg = row_diag_;
        rdg.array() -= dc;
        delta_c_ = dc;
        delta_w_used_ = dw;
        kkt_.assemble(hess_, jac_, pd, rdg);
        if (!linear_solve(rhs, sol)) return false;
        if (!use_ldlt_ && mode_ == SolveMode::ExactNlp) {
            // Curvature test in place of an inertia count.
            const Vec dx = sol.head(n);
            double curv = dw * dx.squaredNorm();
            for (int i = 0; i < n; ++i) curv += sigma_[i] * dx[i] * dx[i];
            for (std::size_t e = 0; e < c_.hess_entries.size(); ++e) {
                const auto [i, j] = c_.hess_entries[e];
                curv += (i == j ? 1.0 : 2.0) * hess_[e] * dx[i] * dx[j];
            }
            if (curv < kCurvature * dx.squaredNorm()) return false;
        }
        return true;
    };

    const double dc_base = use_ldlt_ ? 1e-10 : 0.0;
    if (try_with(floor, dc_base)) return true;
    // Singular or wrong inertia: try with dual regularization first.
    const double dc_reg = std::max(dc_base, 1e-8 * std::pow(mu, 0.25));
    if (dc_reg > dc_base && try_with(floor, dc_reg)) return true;
    // Rank-deficient rows need a dual term that does not vanish with mu.
    for (double dcv : {dc_reg, std::max(dc_reg, 1e-8)}) {
        if (dcv > dc_reg && try_with(floor, dcv)) return true;
        double dw = delta_w_last_ == 0.0 ? kDeltaW0 : std::max(kDeltaWMin, delta_w_last_ / 3.0);
        dw = std::max(dw, 2.0 * floor);
        while (dw <= kDeltaWMax) {
            if (try_with(dw, dcv)) {
                delta_w_last_ = dw;
                return true;
            }
            dw *= delta_w_last_ == 0.0 ? 100.0 : 8.0;
        }
    }
    if (use_ldlt_) {
        // The inertia count is unreliable once barrier terms reach ~1/mu; the system is
        // quasi-definite in convex mode, so continue with pivoted LU.
        use_ldlt_ = false;
        analyzed_ = false;
        delta_w_last_ = 0.0;
        return factor_and_solve(rhs, sol, mu, floor);
    }
    return false;
}

double Solver::infeasibility_l1(const std::vector<double>& x, const Vec& t) const {
    Vec g;
    row_values(x, g);
    return (g + t).lpNorm<1>();
}

double Solver::barrier_merit(const std::vector<double>& x, const Vec& t, double mu, double nu) const {
    double phi = p_.objective.value(x);
    for (int r = 0; r < c_.m; ++r)
        if (c_.is_ineq[r]) phi -= mu * std::log(t[r]);
    for (int i = 0; i < c_.n; ++i) {
        if (c_.has_lower[i]) phi -= mu * std::log(x[i] - lo(i));
        if (c_.has_upper[i]) phi -= mu * std::log(up(i) - x[i]);
    }
    return phi + nu * infeasibility_l1(x, t);
}

SolveResult Solver::run() {
    const int n = c_.n, m = c_.m;
    SolveResult result;
    initialize();

    // LDLᵀ applies when every free variable is bounded and the Hessian is diagonal and PSD.
    use_ldlt_ = mode_ == SolveMode::Convex;
    for (int i = 0; i < n && use_ldlt_; ++i)
        if (!c_.fixed[i] && !c_.has_lower[i] && !c_.has_upper[i]) use_ldlt_ = false;
    for (const auto& [i, j] : c_.hess_entries)
        if (i != j) use_ldlt_ = false;

    int nb = 0;
    for (int i = 0; i < n; ++i) nb += c_.has_lower[i] + c_.has_upper[i];
    for (int r = 0; r < m; ++r) nb += c_.is_ineq[r];
    const double mu_min = std::min(o_.tolerance, o_.gap_tolerance / std::max(1, nb)) / 10.0;

    double mu = o_.mu_init;
    double nu = 1e-6;
    int ls_failures = 0;
    int iter = 0;
    result.status = SolveStatus::MaxIterations;

    for (;; ++iter) {
        evaluate();
        if (o_.record_barrier) result.barrier_history.push_back(mu);
        if (error(0.0) <= o_.tolerance &&
            gap() <= o_.gap_tolerance * std::max(1.0, std::abs(p_.objective.value(it_.x)))) {
            result.status = SolveStatus::Optimal;
            break;
        }
        if (iter >= o_.max_iterations) break;
        while (mu > mu_min && error(mu) <= kKappaEps * mu) {
            mu = std::max(mu_min, std::min(kKappaMu * mu, std::pow(mu, kThetaMu)));
        }

        const auto& x = it_.x;
        sigma_ = Vec::Zero(n);
        Vec rhs(n + m);
        Vec jty;
        c_.jt_times(jac_, it_.y, jty);
        for (int i = 0; i < n; ++i) {
            if (c_.fixed[i]) {
                rhs[i] = 0.0;
                continue;
            }
            double r = -(grad_[i] + jty[i]);
            if (c_.has_lower[i]) {
                const double s = x[i] - lo(i);
                sigma_[i] += it_.zl[i] / s;
                r += mu / s;
            }
            if (c_.has_upper[i]) {
                const double s = up(i) - x[i];
                sigma_[i] += it_.zu[i] / s;
                r -= mu / s;
            }
            rhs[i] = r;
        }
        row_diag_ = Vec::Zero(m);
        for (int r = 0; r < m; ++r) {
            if (c_.is_ineq[r]) {
                row_diag_[r] = -it_.t[r] / it_.y[r];
                rhs[n + r] = -g_[r] - mu / it_.y[r];
            } else {
                rhs[n + r] = -g_[r];
            }
        }

        auto trial_point = [&](const Vec& px, const Vec& pt, double a, std::vector<double>& xt, Vec& tt) {
            xt = x;
            for (int i = 0; i < n; ++i) {
                xt[i] += a * px[i];
                // Rounding can land a step on its bound when tau is within ulps of 1.
                if (c_.has_lower[i] && xt[i] <= lo(i)) xt[i] = lo(i) + 0.01 * (x[i] - lo(i));
                if (c_.has_upper[i] && xt[i] >= up(i)) xt[i] = up(i) - 0.01 * (up(i) - x[i]);
            }
            tt = it_.t + a * pt;
            for (int r = 0; r < m; ++r)
                if (c_.is_ineq[r] && tt[r] <= 0.0) tt[r] = 0.01 * it_.t[r];
        };
        Vec dx, dt, dy, dzl, dzu;
        std::vector<double> xt;
        Vec tt;
        double alpha = 1.0, alpha_p = 1.0, alpha_d = 1.0, theta0 = 0.0;
        bool accepted = false;
        // In exact mode a rejected full step raises the primal regularization and
        // recomputes the direction before falling back to backtracking.
        for (int attempt = 0;; ++attempt) {
            const bool first_only = mode_ == SolveMode::ExactNlp && attempt < kMaxRegularizedRetries && lm_ < kLmMax;
            Vec sol;
            if (!factor_and_solve(rhs, sol, mu, lm_)) throw SolverError("KKT system could not be factorized");

            auto recover = [&](const Vec& s, Vec& dx, Vec& dt, Vec& dy, Vec& dzl, Vec& dzu) {
                dx = s.head(n);
                dy = s.tail(m);
                dt = Vec::Zero(m);
                for (int r = 0; r < m; ++r)
                    if (c_.is_ineq[r]) dt[r] = mu / it_.y[r] - it_.t[r] - (it_.t[r] / it_.y[r]) * dy[r];
                dzl = Vec::Zero(n);
                dzu = Vec::Zero(n);
                for (int i = 0; i < n; ++i) {
                    if (c_.has_lower[i]) {
                        const double sl = x[i] - lo(i);
                        dzl[i] = mu / sl - it_.zl[i] - (it_.zl[i] / sl) * dx[i];
                    }
                    if (c_.has_upper[i]) {
                        const double su = up(i) - x[i];
                        dzu[i] = mu / su - it_.zu[i] + (it_.zu[i] / su) * dx[i];
                    }
                }
            };
            recover(sol, dx, dt, dy, dzl, dzu);

            const double tau = std::max(0.99, 1.0 - mu);
            auto primal_max = [&](const Vec& px, const Vec& pt) {
                double a = 1.0;
                for (int i = 0; i < n; ++i) {
                    if (c_.has_lower[i] && px[i] < 0.0) a = std::min(a, -tau * (x[i] - lo(i)) / px[i]);
                    if (c_.has_upper[i] && px[i] > 0.0) a = std::min(a, tau * (up(i) - x[i]) / px[i]);
                }
                for (int r = 0; r < m; ++r)
                    if (c_.is_ineq[r] && pt[r] < 0.0) a = std::min(a, -tau * it_.t[r] / pt[r]);
                return a;
            };
            auto dual_max = [&](const Vec& py, const Vec& pzl, const Vec& pzu) {
                double a = 1.0;
                for (int r = 0; r < m; ++r)
                    if (c_.is_ineq[r] && py[r] < 0.0) a = std::min(a, -tau * it_.y[r] / py[r]);
                for (int i = 0; i < n; ++i) {
                    if (c_.has_lower[i] && pzl[i] < 0.0) a = std::min(a, -tau * it_.zl[i] / pzl[i]);
                    if (c_.has_upper[i] && pzu[i] < 0.0) a = std::min(a, -tau * it_.zu[i] / pzu[i]);
                }
                return a;
            };

            alpha_p = primal_max(dx, dt);
            alpha_d = dual_max(dy, dzl, dzu);

            // Merit: barrier objective plus ν‖c‖₁.
            theta0 = rp_.lpNorm<1>();
            double dphi_b = grad_.dot(dx);
            for (int i = 0; i < n; ++i) {
                if (c_.has_lower[i]) dphi_b -= mu * dx[i] / (x[i] - lo(i));
                if (c_.has_upper[i]) dphi_b += mu * dx[i] / (up(i) - x[i]);
            }
            for (int r = 0; r < m; ++r)
                if (c_.is_ineq[r]) dphi_b -= mu * dt[r] / it_.t[r];
            if (theta0 > 1e-14) {
                double curv = 0.0;
                for (int i = 0; i < n; ++i) curv += sigma_[i] * dx[i] * dx[i];
                for (std::size_t e = 0; e < c_.hess_entries.size(); ++e) {
                    const auto [i, j] = c_.hess_entries[e];
                    curv += (i == j ? 1.0 : 2.0) * hess_[e] * dx[i] * dx[j];
                }
                const double nu_trial = (dphi_b + 0.5 * std::max(0.0, curv)) / (0.9 * theta0);
                if (nu < nu_trial) nu = nu_trial + 1e-6;
            }
            const double dphi = dphi_b - nu * theta0;
            const double phi0 = barrier_merit(x, it_.t, mu, nu);
            auto acceptable = [&](const std::vector<double>& xc, const Vec& tc, double a) {
                const double phit = barrier_merit(xc, tc, mu, nu);
                return std::isfinite(phit) && phit <= phi0 + kArmijo * a * dphi;
            };

            alpha = alpha_p;
            accepted = false;
            // Convex mode follows the central path with fraction-to-boundary steps only.
            if (mode_ == SolveMode::Convex || dphi >= -1e-16 * std::max(1.0, std::abs(phi0))) {
                accepted = true;
                trial_point(dx, dt, alpha, xt, tt);
            } else {
                for (int trial = 0;; ++trial) {
                    trial_point(dx, dt, alpha, xt, tt);
                    if (acceptable(xt, tt, alpha)) {
                        accepted = true;
                        break;
                    }
                    if (trial == 0 && m > 0 && infeasibility_l1(xt, tt) >= theta0) {
                        // Second-order correction against the curvature of the rows.
                        Vec gt;
                        row_values(xt, gt);
                        Vec csoc = alpha * rp_ + gt + tt;
                        Vec rhs_soc = rhs;
                        for (int r = 0; r < m; ++r)
                            rhs_soc[n + r] = -csoc[r] + (c_.is_ineq[r] ? it_.t[r] - mu / it_.y[r] : 0.0);
                        Vec sol_soc;
                        if (linear_solve(rhs_soc, sol_soc)) {
                            Vec sx, st, sy, szl, szu;
                            recover(sol_soc, sx, st, sy, szl, szu);
                            const double a_soc = primal_max(sx, st);
                            std::vector<double> xs;
                            Vec ts;
                            trial_point(sx, st, a_soc, xs, ts);
                            if (acceptable(xs, ts, alpha)) {
                                xt = std::move(xs);
                                tt = ts;
                                dy = sy;
                                dzl = szl;
                                dzu = szu;
                                alpha = a_soc;
                                alpha_d = dual_max(sy, szl, szu);
                                accepted = true;
                                break;
                            }
                        }
                    }
                    if (first_only) break;
                    alpha *= o_.backtrack_ratio;
                    if (alpha < o_.min_step) break;
                }
            }
            if (accepted || !first_only) break;
            lm_ = lm_ == 0.0 ? kLmInit : std::min(kLmMax, lm_ * 10.0);
        }
        if (accepted && mode_ == SolveMode::ExactNlp && alpha == alpha_p) lm_ = lm_ < 1e-10 ? 0.0 : lm_ * 0.1;
        if (!accepted) {
            if (++ls_failures >= 5) {
                result.status = SolveStatus::RestorationFailure;
                break;
            }
            alpha = std::max(alpha, o_.min_step);
            trial_point(dx, dt, alpha, xt, tt);
        } else {
            ls_failures = 0;
        }

        if (trace_)
            std::fprintf(stderr, "%4d mu %.1e err %.3e f %.6e theta %.2e a_p %.2e a %.2e a_d %.2e dw %.1e lm %.1e nu %.1e\n",
                         iter, mu, error(0.0), p_.objective.value(x), theta0, alpha_p, alpha, alpha_d, delta_w_used_, lm_,
                         nu);
        it_.x = std::move(xt);
        it_.t = tt;
        for (int r = 0; r < m; ++r) {
            if (c_.is_ineq[r])
                it_.y[r] += alpha_d * dy[r];
            else
                it_.y[r] += alpha * dy[r];
        }
        it_.zl += alpha_d * dzl;
        it_.zu += alpha_d * dzu;
        for (int r = 0; r < m; ++r)
            if (c_.is_ineq[r]) {
                it_.t[r] = std::max(it_.t[r], 1e-300);
                it_.y[r] = std::clamp(it_.y[r], mu / (kKappaSigma * it_.t[r]), kKappaSigma * mu / it_.t[r]);
            }
        for (int i = 0; i < n; ++i) {
            if (c_.has_lower[i]) {
                const double s = it_.x[i] - lo(i);
                it_.zl[i] = std::clamp(it_.zl[i], mu / (kKappaSigma * s), kKappaSigma * mu / s);
            }
            if (c_.has_upper[i]) {
                const double s = up(i) - it_.x[i];
                it_.zu[i] = std::clamp(it_.zu[i], mu / (kKappaSigma * s), kKappaSigma * mu / s);
            }
        }
    }

    result.iterations = iter;
    result.x = it_.x;
    result.objective = p_.objective.value(it_.x);
    result.multipliers.assign(it_.y.data(), it_.y.data() + m);
    result.bound_lower.assign(it_.zl.data(), it_.zl.data() + n);
    result.bound_upper.assign(it_.zu.data(), it_.zu.data() + n);
    evaluate();
    result.kkt.stationarity = n > 0 ? rd_.lpNorm<Eigen::Infinity>() : 0.0;
    double feas = 0.0;
    for (int r = 0; r < m; ++r) feas = std::max(feas, c_.is_ineq[r] ? std::max(0.0, g_[r]) : std::abs(g_[r]));
    result.kkt.feasibility = feas;
    result.kkt.complementarity = gap();
    return result;
}

}  // namespace

SolveResult solve(const Qcqp& problem, SolveMode mode, const SolverOptions& options) {
    const std::size_t n = problem.num_vars;
    if (problem.lower.size() != n || problem.upper.size() != n) throw SolverError("bound vectors do not match");
    if (problem.sense.size() != problem.rows.size()) throw SolverError("row senses do not match rows");
    for (std::size_t i = 0; i < n; ++i)
        if (!(problem.lower[i] <= problem.upper[i]))
            throw SolverError("variable " + std::to_string(i) + " has crossing bounds");
    Solver s(problem, mode, options);
    return s.run();
}

KktReport kkt_check(const Qcqp& problem, const std::vector<double>& x, double tolerance,
                    const SolveResult* duals) {
    const Compiled c(problem);
    const int n = c.n, m = c.m;
    if (x.size() != static_cast<std::size_t>(n)) throw SolverError("point dimension mismatch");
    KktReport rep;
    Vec g(m);
    for (int r = 0; r < m; ++r) g[r] = problem.rows[r].value(x);
    for (int r = 0; r < m; ++r) {
        const double v = c.is_ineq[r] ? std::max(0.0, g[r]) : std::abs(g[r]);
        rep.norms.feasibility = std::max(rep.norms.feasibility, v);
        if (v > tolerance) rep.violated_rows.push_back(r);
    }
    for (int i = 0; i < n; ++i) {
        const double v = std::max({0.0, problem.lower[i] - x[i], x[i] - problem.upper[i]});
        rep.norms.feasibility = std::max(rep.norms.feasibility, v);
        if (v > tolerance) rep.violated_bounds.push_back(i);
    }
    std::vector<double> jac;
    c.jacobian(x, jac);
    Vec grad;
    c.gradient(x, grad);

    Vec resid;
    if (duals) {
        Vec y = Eigen::Map<const Vec>(duals->multipliers.data(), m);
        c.jt_times(jac, y, resid);
        resid += grad;
        for (int i = 0; i < n; ++i) {
            if (!duals->bound_lower.empty()) resid[i] -= duals->bound_lower[i];
            if (!duals->bound_upper.empty()) resid[i] += duals->bound_upper[i];
        }
        double comp = 0.0;
        for (int r = 0; r < m; ++r)
            if (c.is_ineq[r]) comp += std::abs(y[r] * g[r]);
        for (int i = 0; i < n; ++i) {
            if (c.has_lower[i] && !duals->bound_lower.empty())
                comp += std::abs(duals->bound_lower[i] * (x[i] - problem.lower[i]));
            if (c.has_upper[i] && !duals->bound_upper.empty())
                comp += std::abs(duals->bound_upper[i] * (problem.upper[i] - x[i]));
        }
        rep.norms.complementarity = comp;
    } else {
        // Least-squares multipliers over equality rows and active inequalities.
        std::vector<int> active;
        for (int r = 0; r < m; ++r)
            if (!c.is_ineq[r] || g[r] >= -tolerance) active.push_back(r);
        std::vector<Eigen::Triplet<double>> trips;
        for (std::size_t k = 0; k < active.size(); ++k) {
            const int r = active[k];
            for (int s = c.jac_start[r]; s < c.jac_start[r + 1]; ++s) trips.emplace_back(c.jac_col[s], k, jac[s]);
        }
        for (int i = 0; i < n; ++i) {
            const bool at_bound = (std::isfinite(problem.lower[i]) && x[i] - problem.lower[i] <= tolerance) ||
                                  (std::isfinite(problem.upper[i]) && problem.upper[i] - x[i] <= tolerance);
            if (at_bound || c.fixed[i]) trips.emplace_back(i, static_cast<int>(active.size()) + i, 1.0);
        }
        SpMat jt(n, static_cast<Eigen::Index>(active.size()) + n);
        jt.setFromTriplets(trips.begin(), trips.end());
        jt.makeCompressed();
        Eigen::SparseQR<SpMat, Eigen::COLAMDOrdering<int>> qr(jt);
        resid = grad;
        if (qr.info() == Eigen::Success && jt.nonZeros() > 0) {
            Vec lambda = qr.solve(Vec(-grad));
            resid = grad + jt * lambda;
        }
    }
    for (int i = 0; i < n; ++i)
        if (c.fixed[i]) resid[i] = 0.0;
    rep.norms.stationarity = n > 0 ? resid.lpNorm<Eigen::Infinity>() : 0.0;
    rep.passed = rep.norms.feasibility <= tolerance && rep.norms.stationarity <= tolerance &&
                 rep.norms.complementarity <= tolerance;
    return rep;
}

}  // namespace gridpse
