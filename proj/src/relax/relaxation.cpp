#include "gridpse/relax/relaxation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "gridpse/error.hpp"

namespace gridpse {

ParameterBounds default_parameter_bounds(const UnknownParameterSet& unknowns, double percent) {
    if (!(percent > 0.0)) throw DataError("bound percentage must be positive");
    ParameterBounds pb;
    for (const auto& u : unknowns) {
        if (!u.best_known)
            throw DataError("unknown " + to_string(u.target) + " " + std::to_string(u.element) +
                            " has no best-known value; give explicit bounds");
        const double c = *u.best_known, r = std::abs(c) * percent / 100.0;
        Interval b{c - r, c + r};
        if (u.target == ParameterTarget::BranchSusceptance) b.hi = std::min(b.hi, 0.0);
        if (u.target == ParameterTarget::BranchConductance) b.lo = std::max(b.lo, 0.0);
        if (b.lo > b.hi) b.lo = b.hi;
        pb.bounds.push_back(b);
    }
    return pb;
}

VoltageBox default_voltage_box(const EstimationProblem& problem, double vmin, double vmax, double angle_deg) {
    if (!(vmin > 0.0 && vmin <= vmax)) throw DataError("invalid magnitude range");
    if (!(angle_deg >= 0.0 && angle_deg < 90.0)) throw DataError("angle bound must lie in [0, 90)");
    const double a = angle_deg * std::numbers::pi / 180.0;
    const Interval vr{vmin * std::cos(a), vmax}, vi{-vmax * std::sin(a), vmax * std::sin(a)};
    VoltageBox box;
    const auto nb = problem.network.bus_count();
    for (std::size_t t = 0; t < problem.period_count(); ++t) {
        box.vr.emplace_back(nb, vr);
        box.vi.emplace_back(nb, vi);
    }
    return box;
}

VoltageBox reference_voltage_box(const EstimationProblem& problem, const std::vector<OperatingPoint>& reference,
                                 double vmag_margin, double angle_margin_deg) {
    if (reference.size() != problem.period_count()) throw DataError("reference voltages do not match the period count");
    if (!(vmag_margin >= 0.0 && angle_margin_deg >= 0.0 && angle_margin_deg < 90.0))
        throw DataError("invalid voltage box margins");
    const double da = angle_margin_deg * std::numbers::pi / 180.0;
    const auto nb = problem.network.bus_count();
    const auto slack = problem.network.slack_position();
    VoltageBox box;
    for (std::size_t t = 0; t < reference.size(); ++t) {
        if (reference[t].size() != nb) throw DataError("reference voltages do not match the bus count");
        auto& vr = box.vr.emplace_back(nb);
        auto& vi = box.vi.emplace_back(nb);
        for (std::size_t k = 0; k < nb; ++k) {
            const double m = reference[t].magnitude(k);
            const double rlo = std::max(0.0, m - vmag_margin), rhi = m + vmag_margin;
            const double a = k == slack ? 0.0 : reference[t].angle(k);
            const double alo = a - (k == slack ? 0.0 : da), ahi = a + (k == slack ? 0.0 : da);
            Interval r{kInfinity, -kInfinity}, i{kInfinity, -kInfinity};
            auto take = [&](double rad, double ang) {
                const double x = rad * std::cos(ang), y = rad * std::sin(ang);
                r = {std::min(r.lo, x), std::max(r.hi, x)};
                i = {std::min(i.lo, y), std::max(i.hi, y)};
            };
            for (double rad : {rlo, rhi})
                for (double ang : {alo, ahi}) take(rad, ang);
            // Axis crossings inside the angle range reach the outer radius.
            for (int q = -4; q <= 4; ++q) {
                const double ang = q * std::numbers::pi / 2.0;
                if (ang > alo && ang < ahi) take(rhi, ang);
            }
            vr[k] = r;
            vi[k] = k == slack ? Interval{0.0, 0.0} : i;
        }
    }
    return box;
}

namespace {

struct Hasher {
    std::uint64_t h = 1469598103934665603ull;
    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= c[i];
            h *= 1099511628211ull;
        }
    }
    void num(double v) { bytes(&v, sizeof v); }
    void num(long long v) { bytes(&v, sizeof v); }
};

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Variable bounds in solver coordinates for every non-lifted variable.
void set_bounds(const EstimationProblem& problem, const ParameterBounds& pbounds, const VoltageBox& vbox,
                const RelaxOptions& options, Qcqp& q) {
    if (pbounds.bounds.size() != problem.unknowns.size())
        throw DataError("parameter bounds do not match the unknown set");
    if (vbox.vr.size() != problem.period_count() || vbox.vi.size() != problem.period_count())
        throw DataError("voltage box does not match the period count");
    for (std::size_t k = 0; k < problem.unknowns.size(); ++k) {
        const auto b = pbounds.bounds[k];
        if (!(b.lo <= b.hi)) throw DataError("inverted bounds on parameter " + std::to_string(k));
        const int v = problem.parameter_vars[k];
        q.lower[v] = b.lo - problem.parameter_offset[k];
        q.upper[v] = b.hi - problem.parameter_offset[k];
    }
    for (std::size_t t = 0; t < problem.period_count(); ++t) {
        const auto& lay = problem.layout[t];
        if (vbox.vr[t].size() != lay.vr.size() || vbox.vi[t].size() != lay.vi.size())
            throw DataError("voltage box does not match the bus count");
        for (std::size_t k = 0; k < lay.vr.size(); ++k) {
            for (auto [var, b] : {std::pair{lay.vr[k], vbox.vr[t][k]}, std::pair{lay.vi[k], vbox.vi[t][k]}}) {
                if (!(b.lo <= b.hi)) throw DataError("empty voltage box");
                q.lower[var] = b.lo;
                q.upper[var] = b.hi;
            }
        }
        for (int v : lay.inj_mag)
            if (v >= 0) {
                q.lower[v] = -options.noise_bound;
                q.upper[v] = options.noise_bound;
            }
    }
}

}  // namespace

std::uint64_t instance_fingerprint(const EstimationProblem& problem) {
    Hasher h;
    h.num(static_cast<long long>(problem.num_vars()));
    for (const auto& row : problem.rows) {
        h.num(row.f.constant);
        for (const auto& t : row.f.linear) {
            h.num(static_cast<long long>(t.var));
            h.num(t.coef);
        }
    }
    for (const auto& [v, w] : problem.objective) {
        h.num(static_cast<long long>(v));
        h.num(w);
    }
    for (const auto& d : problem.bilinear) {
        h.num(static_cast<long long>(d.left));
        h.num(static_cast<long long>(d.right));
    }
    return h.h;
}

RelaxedProblem build_relaxed(const EstimationProblem& problem, const ParameterBounds& pbounds,
                             const VoltageBox& vbox, const RelaxOptions& options) {
    RelaxedProblem out;
    out.qcqp = problem.lifted_qcqp();
    auto& q = out.qcqp;
    set_bounds(problem, pbounds, vbox, options, q);
    out.instance = instance_fingerprint(problem);

    auto box_of = [&](int v) {
        const Interval b{q.lower[v], q.upper[v]};
        if (!std::isfinite(b.lo) || !std::isfinite(b.hi))
            throw DataError("variable " + std::to_string(v) + " (" + to_string(problem.space[v].kind) +
                            ") enters a product but has no finite bounds");
        return b;
    };
    for (const auto& d : problem.bilinear) {
        const Interval bx = box_of(d.left);
        if (d.left == d.right) {
            const Interval r = square_range(bx);
            q.lower[d.lifted] = r.lo;
            q.upper[d.lifted] = r.hi;
            if (bx.degenerate()) {
                ++out.exact_rows;
                continue;
            }
            QuadraticFunction convex;
            convex.quadratic.push_back({d.left, d.left, 1.0});
            convex.linear.push_back({d.lifted, -1.0});
            q.add_row(convex, RowSense::LessEqual);
            const auto sec = square_rows(bx).secant;
            QuadraticFunction secant;
            secant.constant = -sec.rhs;
            secant.linear = {{d.left, sec.a}, {d.lifted, sec.c}};
            q.add_row(secant, RowSense::LessEqual);
            out.square_rows += 2;
            continue;
        }
        const Interval by = box_of(d.right);
        const Interval r = product_range(bx, by);
        q.lower[d.lifted] = r.lo;
        q.upper[d.lifted] = r.hi;
        if (bx.degenerate() && by.degenerate()) {
            ++out.exact_rows;
            continue;
        }
        if (bx.degenerate() || by.degenerate()) {
            // s = c·y exactly; the envelope pair would leave no interior.
            const bool fx = bx.degenerate();
            QuadraticFunction eq;
            eq.linear = {{d.lifted, 1.0}, {fx ? d.right : d.left, -(fx ? bx.lo : by.lo)}};
            q.add_row(eq, RowSense::Equal);
            ++out.exact_rows;
            continue;
        }
        for (const auto& row : mccormick_rows(bx, by)) {
            QuadraticFunction f;
            f.constant = -row.rhs;
            f.linear = {{d.left, row.a}, {d.right, row.b}, {d.lifted, row.c}};
            q.add_row(f, RowSense::LessEqual);
            ++out.envelope_rows;
        }
    }
    return out;
}

RelaxedEstimate estimate_relaxed(const EstimationProblem& problem, const RelaxedProblem& relaxed,
                                 const SolverOptions& options) {
    if (relaxed.instance != instance_fingerprint(problem)) throw DataError("relaxation built for another instance");
    return {read_estimate(problem, solve(relaxed.qcqp, SolveMode::Convex, options)), relaxed.instance};
}

CertificateReport certificate(const EstimationProblem& problem, const Estimate& nlp, const RelaxedEstimate& relaxed,
                              double tolerance) {
    if (relaxed.instance != instance_fingerprint(problem) || nlp.x.size() != problem.num_vars() ||
        relaxed.estimate.x.size() != problem.num_vars())
        throw DataError("certificate inputs come from different instances");
    CertificateReport rep;
    rep.nlp_objective = nlp.objective;
    rep.relaxed_objective = relaxed.estimate.objective;
    rep.gap = rep.nlp_objective - rep.relaxed_objective;
    rep.relative_gap = rep.gap / std::max(std::abs(rep.nlp_objective), 1e-12);
    rep.valid = rep.gap >= -tolerance;
    return rep;
}

SbtResult sbt(const EstimationProblem& problem, const ParameterBounds& pbounds, const VoltageBox& vbox,
              const SbtOptions& options) {
    if (!(options.epsilon > 0.0)) throw DataError("SBT tolerance must be positive");
    if (options.max_rounds < 1) throw DataError("SBT needs at least one round");
    const std::size_t np = problem.unknowns.size();
    std::vector<std::size_t> subset = options.subset;
    if (subset.empty())
        for (std::size_t k = 0; k < np; ++k) subset.push_back(k);
    for (auto k : subset)
        if (k >= np) throw DataError("SBT subset index " + std::to_string(k) + " out of range");

    QuadraticFunction cut;
    const bool with_cut = std::isfinite(options.f_star);
    if (with_cut) {
        for (const auto& [v, w] : problem.objective) cut.quadratic.push_back({v, v, w});
        cut.constant = -(options.f_star + std::max(options.cut_relative_slack * std::abs(options.f_star),
                                                    options.cut_absolute_slack));
    }

    SbtResult res;
    res.bounds = pbounds;
    res.history.push_back(pbounds);
    for (int round = 1; round <= options.max_rounds; ++round) {
        const RelaxedProblem base = build_relaxed(problem, res.bounds, vbox, options.relax);
        // Tasks: (parameter, direction) for every non-degenerate selected parameter.
        std::vector<std::pair<std::size_t, bool>> tasks;
        for (auto k : subset)
            if (!res.bounds.bounds[k].degenerate()) {
                tasks.emplace_back(k, false);
                tasks.emplace_back(k, true);
            }
        struct Outcome {
            bool ok = false;
            double value = 0.0;
            std::string reason;
        };
        std::vector<Outcome> outcomes(tasks.size());
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next++; i < tasks.size(); i = next++) {
                const auto [k, upper] = tasks[i];
                Qcqp q = base.qcqp;
                const int var = problem.parameter_vars[k];
                q.objective = {};
                q.objective.linear.push_back({var, upper ? -1.0 : 1.0});
                if (with_cut) q.add_row(cut, RowSense::LessEqual);
                Outcome& o = outcomes[i];
                try {
                    const auto r = solve(q, SolveMode::Convex, options.solver);
                    if (r.optimal()) {
                        o.ok = true;
                        o.value = problem.parameter_offset[k] + r.x[var];
                    } else {
                        o.reason = to_string(r.status) + (r.kkt.feasibility > 1e-6 ? " (likely infeasible)" : "");
                    }
                } catch (const Error& e) {
                    o.reason = e.what();
                }
            }
        };
        const int nw = std::max(1, std::min<int>(options.workers, static_cast<int>(tasks.size())));
        if (nw == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }

        ParameterBounds next_bounds = res.bounds;
        next_bounds.provenance = "sbt-" + std::to_string(round);
        double moved = 0.0;
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            const auto [k, upper] = tasks[i];
            const auto& o = outcomes[i];
            if (!o.ok) {
                res.failures.push_back({round, k, upper, o.reason});
                continue;
            }
            // Interior-point optima sit slightly inside the feasible set.
            const double safety = 1e-7 * std::max(1.0, std::abs(o.value));
            auto& b = next_bounds.bounds[k];
            if (upper)
                b.hi = std::min(b.hi, o.value + safety);
            else
                b.lo = std::max(b.lo, o.value - safety);
        }
        for (auto k : subset) {
            auto& b = next_bounds.bounds[k];
            if (b.lo > b.hi) b.lo = b.hi = 0.5 * (b.lo + b.hi);
            moved = std::max({moved, b.lo - res.bounds.bounds[k].lo, res.bounds.bounds[k].hi - b.hi});
        }
        res.bounds = next_bounds;
        res.history.push_back(next_bounds);
        res.rounds = round;
        if (moved < options.epsilon) {
            res.converged = true;
            break;
        }
    }
    return res;
}

std::string bounds_cache_key(const EstimationProblem& problem) {
    Hasher net, unk, per;
    const auto& n = problem.network;
    net.num(n.base_mva());
    for (const auto& b : n.buses()) {
        net.num(static_cast<long long>(b.id));
        net.num(b.g_shunt);
        net.num(b.b_shunt);
    }
    for (const auto& br : n.branches()) {
        net.num(static_cast<long long>(br.id));
        net.num(static_cast<long long>(br.from));
        net.num(static_cast<long long>(br.to));
        net.num(br.g);
        net.num(br.b);
        net.num(br.charging);
        net.num(static_cast<long long>(br.in_service));
    }
    for (const auto& u : problem.unknowns) {
        unk.num(static_cast<long long>(u.target));
        unk.num(static_cast<long long>(u.element));
    }
    per.num(static_cast<long long>(problem.period_count()));
    for (const auto& p : problem.measurements.periods) {
        for (const auto& z : p.injections) per.num(static_cast<long long>(z.bus));
        per.num(-1ll);
        for (const auto& z : p.flows) {
            per.num(static_cast<long long>(z.branch));
            per.num(static_cast<long long>(z.metered_bus));
        }
        per.num(-2ll);
    }
    per.num(static_cast<long long>(problem.options.include_vmag));
    return "net-" + hex(net.h) + "/unk-" + hex(unk.h) + "/per-" + hex(per.h);
}

const BoundsCacheEntry* BoundsCache::find(const std::string& key) const {
    for (const auto& e : entries_)
        if (e.key == key) return &e;
    return nullptr;
}

void BoundsCache::put(BoundsCacheEntry entry) {
    for (auto& e : entries_)
        if (e.key == entry.key) {
            e = std::move(entry);
            return;
        }
    entries_.push_back(std::move(entry));
}

std::string BoundsCache::to_text() const {
    nlohmann::ordered_json doc;
    doc["entries"] = nlohmann::ordered_json::array();
    for (const auto& e : entries_) {
        nlohmann::ordered_json j;
        j["key"] = e.key;
        j["provenance"] = e.bounds.provenance;
        auto lo = nlohmann::ordered_json::array(), hi = nlohmann::ordered_json::array();
        for (const auto& b : e.bounds.bounds) {
            lo.push_back(b.lo);
            hi.push_back(b.hi);
        }
        j["lower"] = lo;
        j["upper"] = hi;
        j["f_star"] = std::isfinite(e.f_star) ? nlohmann::ordered_json(e.f_star) : nlohmann::ordered_json(nullptr);
        j["epsilon"] = e.epsilon;
        doc["entries"].push_back(j);
    }
    return doc.dump(2) + "\n";
}

BoundsCache BoundsCache::from_text(const std::string& text) {
    BoundsCache c;
    try {
        const auto doc = nlohmann::json::parse(text);
        for (const auto& j : doc.at("entries")) {
            BoundsCacheEntry e;
            e.key = j.at("key").get<std::string>();
            e.bounds.provenance = j.value("provenance", std::string("cache"));
            const auto lo = j.at("lower").get<std::vector<double>>();
            const auto hi = j.at("upper").get<std::vector<double>>();
            if (lo.size() != hi.size()) throw ParseError("bounds cache entry " + e.key + " has mismatched arrays");
            for (std::size_t k = 0; k < lo.size(); ++k) {
                if (!(lo[k] <= hi[k])) throw DataError("bounds cache entry " + e.key + " has inverted bounds");
                e.bounds.bounds.push_back({lo[k], hi[k]});
            }
            e.f_star = j.at("f_star").is_null() ? kInfinity : j.at("f_star").get<double>();
            e.epsilon = j.at("epsilon").get<double>();
            c.entries_.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("bounds cache: ") + ex.what());
    }
    return c;
}

BoundsCache BoundsCache::load(const std::string& path) {
    if (!std::filesystem::exists(path)) return {};
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

void BoundsCache::save(const std::string& path) const {
    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw DataError("cannot write " + tmp);
        out << to_text();
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace gridpse
