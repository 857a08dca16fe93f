#include "gridpse/bench/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "gridpse/error.hpp"

namespace gridpse {

using json = nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(text);
    while (std::getline(is, cur, sep))
        if (!cur.empty()) out.push_back(cur);
    return out;
}

long long to_int(const std::string& s) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &used);
    } catch (const std::exception&) {
        throw DataError("not an integer: '" + s + "'");
    }
    if (used != s.size()) throw DataError("not an integer: '" + s + "'");
    return v;
}

double to_double(const std::string& s) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw DataError("not a number: '" + s + "'");
    }
    if (used != s.size()) throw DataError("not a number: '" + s + "'");
    return v;
}

std::string now_utc() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> out;
    const auto parts = split(text, ',');
    if (parts.size() == 1 && parts[0].find('-') == std::string::npos && text.find(',') == std::string::npos) {
        const long long n = to_int(parts[0]);
        if (n < 1) throw DataError("seed count must be positive");
        for (long long s = 0; s < n; ++s) out.push_back(static_cast<std::uint64_t>(s));
        return out;
    }
    for (const auto& p : parts) {
        const auto dash = p.find('-');
        if (dash == std::string::npos) {
            const long long v = to_int(p);
            if (v < 0) throw DataError("negative seed");
            out.push_back(static_cast<std::uint64_t>(v));
            continue;
        }
        const long long a = to_int(p.substr(0, dash)), b = to_int(p.substr(dash + 1));
        if (a < 0 || b < a) throw DataError("invalid seed range '" + p + "'");
        for (long long s = a; s <= b; ++s) out.push_back(static_cast<std::uint64_t>(s));
    }
    if (out.empty()) throw DataError("empty seed list");
    return out;
}

std::vector<FlowPlacement> parse_flows(const std::string& text) {
    std::vector<FlowPlacement> out;
    for (const auto& p : split(text, ',')) {
        const auto colon = p.find(':');
        if (colon == std::string::npos)
            out.push_back({static_cast<int>(to_int(p)), 0});
        else
            out.push_back({static_cast<int>(to_int(p.substr(0, colon))), static_cast<int>(to_int(p.substr(colon + 1)))});
    }
    return out;
}

std::vector<int> parse_ids(const std::string& text) {
    std::vector<int> out;
    for (const auto& p : split(text, ',')) out.push_back(static_cast<int>(to_int(p)));
    return out;
}

std::vector<double> parse_scales(const std::string& text) {
    std::vector<double> out;
    for (const auto& p : split(text, ',')) out.push_back(to_double(p));
    if (out.empty()) throw DataError("empty period list");
    return out;
}

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("config must be a JSON object");
    ExperimentConfig c;
    try {
        c.case_path = j.value("case", c.case_path);
        c.unknown_branches = j.value("unknown_branches", c.unknown_branches);
        c.unknown_shunts = j.value("unknown_shunts", c.unknown_shunts);
        c.noise_std = j.value("noise_std", c.noise_std);
        if (j.contains("seeds")) {
            const auto& s = j["seeds"];
            if (s.is_number_integer()) {
                c.seeds = parse_seeds(std::to_string(s.get<long long>()));
            } else {
                c.seeds = s.get<std::vector<std::uint64_t>>();
                if (c.seeds.empty()) throw DataError("empty seed list");
            }
        }
        if (j.contains("methods")) {
            c.methods.clear();
            for (const auto& m : j["methods"]) c.methods.push_back(method_from_string(m.get<std::string>()));
        }
        if (j.contains("flows")) {
            c.flows.clear();
            for (const auto& f : j["flows"]) {
                if (f.is_number_integer())
                    c.flows.push_back({f.get<int>(), 0});
                else
                    c.flows.push_back({f.at("branch").get<int>(), f.value("metered_bus", 0)});
            }
        }
        c.load_scales = j.value("load_scales", c.load_scales);
        c.random_init = j.value("random_init", c.random_init);
        if (j.contains("init_box")) {
            const auto& b = j["init_box"];
            c.init_box.vmag_min = b.value("vmag_min", c.init_box.vmag_min);
            c.init_box.vmag_max = b.value("vmag_max", c.init_box.vmag_max);
            c.init_box.angle_deg = b.value("angle_deg", c.init_box.angle_deg);
        }
        if (j.contains("bounds")) {
            const auto& b = j["bounds"];
            auto& p = c.bounds;
            p.percent = b.value("percent", p.percent);
            if (b.contains("lower_multiple")) p.lower_multiple = b["lower_multiple"].get<double>();
            p.reference_box = b.value("reference_box", p.reference_box);
            p.vmag_margin = b.value("vmag_margin", p.vmag_margin);
            p.angle_margin_deg = b.value("angle_margin_deg", p.angle_margin_deg);
            p.vmin = b.value("vmin", p.vmin);
            p.vmax = b.value("vmax", p.vmax);
            p.angle_deg = b.value("angle_deg", p.angle_deg);
            p.sbt_rounds = b.value("sbt_rounds", p.sbt_rounds);
            p.sbt_epsilon = b.value("sbt_epsilon", p.sbt_epsilon);
            p.sbt_per_seed = b.value("sbt_per_seed", p.sbt_per_seed);
        }
        c.bounds_cache = j.value("bounds_cache", c.bounds_cache);
        c.workers = j.value("workers", c.workers);
        c.out_dir = j.value("out", c.out_dir);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    return c;
}

void write_atomic(const std::string& path, const std::string& text) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp);
        out << text;
        if (!out.flush()) throw DataError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, p);
}

std::vector<double> magnitudes(const std::vector<OperatingPoint>& voltages) {
    std::vector<double> out;
    for (const auto& v : voltages)
        for (std::size_t k = 0; k < v.size(); ++k) out.push_back(v.magnitude(k));
    return out;
}

Experiment::Experiment(ExperimentConfig config) : config_(std::move(config)) {
    if (config_.case_path.empty()) throw DataError("no case given");
    if (config_.seeds.empty()) throw DataError("empty seed list");
    if (config_.methods.empty()) throw DataError("no method given");
    if (!(config_.noise_std >= 0.0)) throw DataError("noise std must be non-negative");
    if (config_.workers < 1) throw DataError("workers must be positive");
    case_ = load_case_file(config_.case_path);
    if (!config_.unknown_branches.empty() || !config_.unknown_shunts.empty()) {
        case_.unknowns = unknown_susceptances(case_.network, config_.unknown_branches);
        for (auto& u : unknown_shunts(case_.network, config_.unknown_shunts)) case_.unknowns.push_back(u);
    }
    const auto problems = validate(case_.network, case_.unknowns);
    if (!problems.empty()) throw DataError(problems.front());
    for (auto& f : config_.flows)
        if (f.metered_bus == 0) f.metered_bus = case_.network.branch(f.branch).from;
    SynthesisOptions so;
    so.noise_std = 0.0;
    so.flows = config_.flows;
    truth_ = build_multi_period(case_.network, config_.load_scales, so).truth;
}

std::vector<double> Experiment::true_parameters() const {
    std::vector<double> out;
    for (const auto& u : case_.unknowns) out.push_back(parameter_value(case_.network, u));
    return out;
}

MeasurementSet Experiment::measurements(std::uint64_t seed) const {
    SynthesisOptions so;
    so.noise_std = config_.noise_std;
    so.seed = seed;
    so.flows = config_.flows;
    return build_multi_period(case_.network, config_.load_scales, so).measurements;
}

EstimationProblem Experiment::problem(std::uint64_t seed) const {
    return build_pse(case_.network, measurements(seed), case_.unknowns);
}

ParameterBounds Experiment::initial_bounds() const {
    if (!config_.bounds.lower_multiple) return default_parameter_bounds(case_.unknowns, config_.bounds.percent);
    ParameterBounds pb;
    for (const auto& u : case_.unknowns) {
        const double c = u.best_known.value_or(parameter_value(case_.network, u)) * *config_.bounds.lower_multiple;
        pb.bounds.push_back({std::min(c, 0.0), std::max(c, 0.0)});
    }
    return pb;
}

VoltageBox Experiment::voltage_box(const EstimationProblem& problem) const {
    const auto& b = config_.bounds;
    if (b.reference_box) {
        const auto se = estimate_se(with_parameters(problem.network, problem.unknowns, best_known_values(problem)),
                                    problem.measurements);
        if (!se.optimal()) throw SolverError("reference state estimate did not converge");
        return reference_voltage_box(problem, se.voltages, b.vmag_margin, b.angle_margin_deg);
    }
    return default_voltage_box(problem, b.vmin, b.vmax, b.angle_deg);
}

Estimate Experiment::run_nlp(const EstimationProblem& problem, std::uint64_t seed) const {
    NlpOptions o;
    o.random_init = config_.random_init;
    o.init_box = config_.init_box;
    // Separate stream from the measurement noise of the same seed.
    o.init_seed = seed ^ 0x9e3779b97f4a7c15ull;
    return estimate_nlp(problem, o);
}

SbtResult Experiment::tighten(std::uint64_t seed, int workers) const {
    const auto p = problem(seed);
    const auto nlp = run_nlp(p, seed);
    SbtOptions o;
    o.f_star = nlp.optimal() ? nlp.objective : kInfinity;
    o.max_rounds = config_.bounds.sbt_rounds;
    o.epsilon = config_.bounds.sbt_epsilon;
    o.workers = workers;
    return sbt(p, initial_bounds(), voltage_box(p), o);
}

ParameterBounds Experiment::shared_bounds(bool& cache_hit) const {
    const auto seed = config_.seeds.front();
    const auto key = bounds_cache_key(problem(seed));
    BoundsCache cache;
    if (!config_.bounds_cache.empty()) {
        cache = BoundsCache::load(config_.bounds_cache);
        if (const auto* e = cache.find(key)) {
            cache_hit = true;
            return e->bounds;
        }
    }
    cache_hit = false;
    const auto p = problem(seed);
    const auto nlp = run_nlp(p, seed);
    SbtOptions o;
    o.f_star = nlp.optimal() ? nlp.objective : kInfinity;
    o.max_rounds = config_.bounds.sbt_rounds;
    o.epsilon = config_.bounds.sbt_epsilon;
    o.workers = config_.workers;
    auto res = sbt(p, initial_bounds(), voltage_box(p), o);
    if (!config_.bounds_cache.empty()) {
        cache.put({key, res.bounds, o.f_star, o.epsilon});
        cache.save(config_.bounds_cache);
    }
    return res.bounds;
}

RunRecord Experiment::base_record(std::uint64_t seed, Method method, const EstimationProblem& problem) const {
    RunRecord r;
    r.seed = seed;
    r.method = method;
    r.instance = bounds_cache_key(problem);
    r.true_voltages = magnitudes(truth_);
    r.true_parameters = true_parameters();
    r.timestamp = now_utc();
    return r;
}

SeedOutcome Experiment::run_seed(std::uint64_t seed, const ParameterBounds* sbt_bounds) const {
    SeedOutcome out;
    out.seed = seed;
    const auto p = problem(seed);
    auto t0 = std::chrono::steady_clock::now();
    std::string nlp_error;
    try {
        out.nlp = run_nlp(p, seed);
    } catch (const Error& e) {
        nlp_error = e.what();
    }
    const double nlp_seconds = seconds_since(t0);

    auto fill = [&](RunRecord& r, const Estimate& e) {
        r.est_voltages = magnitudes(e.voltages);
        r.est_parameters = e.parameters;
        r.objective = e.objective;
        r.status = to_string(e.status);
    };
    for (Method m : config_.methods) {
        RunRecord r = base_record(seed, m, p);
        if (m == Method::Nlp) {
            r.wall_seconds = nlp_seconds;
            if (out.nlp)
                fill(r, *out.nlp);
            else
                r.status = "error: " + nlp_error;
            out.records.push_back(std::move(r));
            continue;
        }
        if (!out.nlp) {
            r.status = "error: nlp reference unavailable: " + nlp_error;
            out.records.push_back(std::move(r));
            continue;
        }
        t0 = std::chrono::steady_clock::now();
        try {
            const VoltageBox box = voltage_box(p);
            ParameterBounds bounds;
            if (m == Method::Mc) {
                bounds = initial_bounds();
            } else if (config_.bounds.sbt_per_seed) {
                SbtOptions o;
                o.f_star = out.nlp->optimal() ? out.nlp->objective : kInfinity;
                o.max_rounds = config_.bounds.sbt_rounds;
                o.epsilon = config_.bounds.sbt_epsilon;
                bounds = sbt(p, initial_bounds(), box, o).bounds;
            } else {
                if (!sbt_bounds) throw DataError("sbt-mc needs tightened bounds");
                bounds = *sbt_bounds;
            }
            const auto relaxed = estimate_relaxed(p, build_relaxed(p, bounds, box));
            fill(r, relaxed.estimate);
            r.certificate_gap = out.nlp->objective - relaxed.estimate.objective;
        } catch (const Error& e) {
            r.status = std::string("error: ") + e.what();
        }
        r.wall_seconds = seconds_since(t0);
        out.records.push_back(std::move(r));
    }
    return out;
}

std::vector<SeedOutcome> Experiment::run_all() const {
    std::optional<ParameterBounds> shared;
    const bool need_shared = std::find(config_.methods.begin(), config_.methods.end(), Method::SbtMc) !=
                                 config_.methods.end() &&
                             !config_.bounds.sbt_per_seed;
    if (need_shared) {
        bool hit = false;
        shared = shared_bounds(hit);
        std::fprintf(stderr, "sbt bounds: %s\n",
                     hit ? ("cache hit in " + config_.bounds_cache).c_str() : "tightened on first seed");
    }
    std::vector<SeedOutcome> outcomes(config_.seeds.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(config_.seeds.size());
    auto worker = [&] {
        for (std::size_t i = next++; i < config_.seeds.size(); i = next++) {
            try {
                outcomes[i] = run_seed(config_.seeds[i], shared ? &*shared : nullptr);
                if (!config_.out_dir.empty())
                    for (const auto& r : outcomes[i].records)
                        write_atomic(config_.out_dir + "/records/" + to_string(r.method) + "-" +
                                         std::to_string(r.seed) + ".json",
                                     record_to_json(r));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int nw = std::max(1, std::min<int>(config_.workers, static_cast<int>(config_.seeds.size())));
    if (nw == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::sort(outcomes.begin(), outcomes.end(),
              [](const SeedOutcome& a, const SeedOutcome& b) { return a.seed < b.seed; });
    return outcomes;
}

}  // namespace gridpse
