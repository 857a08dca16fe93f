#include "gridpse/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "gridpse/error.hpp"

namespace gridpse {

using json = nlohmann::ordered_json;

std::string to_string(Method method) {
    switch (method) {
    case Method::Nlp: return "nlp";
    case Method::Mc: return "mc";
    case Method::SbtMc: return "sbt-mc";
    }
    return "?";
}

Method method_from_string(const std::string& name) {
    if (name == "nlp") return Method::Nlp;
    if (name == "mc") return Method::Mc;
    if (name == "sbt-mc") return Method::SbtMc;
    throw DataError("unknown method '" + name + "' (expected nlp, mc, sbt-mc)");
}

namespace {

void check_shape(const std::vector<std::vector<double>>& a, const char* what) {
    if (a.empty()) throw DataError(std::string("no runs for ") + what);
    for (const auto& r : a)
        if (r.size() != a.front().size()) throw DataError(std::string("ragged runs for ") + what);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double rmse(const std::vector<std::vector<double>>& estimates, const std::vector<std::vector<double>>& truths) {
    check_shape(estimates, "rmse");
    if (truths.size() != estimates.size()) throw DataError("rmse: run count mismatch");
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        if (truths[i].size() != estimates[i].size()) throw DataError("rmse: state count mismatch");
        for (std::size_t j = 0; j < estimates[i].size(); ++j) {
            const double d = estimates[i][j] - truths[i][j];
            s += d * d;
            ++n;
        }
    }
    if (n == 0) throw DataError("rmse: no states");
    return std::sqrt(s / static_cast<double>(n));
}

double nrmse(double rmse_value, double mean) {
    if (!(std::abs(mean) > 1e-300)) throw DataError("nrmse: mean of estimates is zero");
    return rmse_value / std::abs(mean);
}

double grand_mean(const std::vector<std::vector<double>>& estimates) {
    check_shape(estimates, "mean");
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : estimates)
        for (double v : r) {
            s += v;
            ++n;
        }
    if (n == 0) throw DataError("mean: no states");
    return s / static_cast<double>(n);
}

double variance_avg(const std::vector<std::vector<double>>& estimates) {
    check_shape(estimates, "variance");
    const std::size_t runs = estimates.size(), states = estimates.front().size();
    if (states == 0) return 0.0;
    double total = 0.0;
    for (std::size_t j = 0; j < states; ++j) {
        double mean = 0.0;
        for (const auto& r : estimates) mean += r[j];
        mean /= static_cast<double>(runs);
        double var = 0.0;
        for (const auto& r : estimates) var += (r[j] - mean) * (r[j] - mean);
        total += var / static_cast<double>(runs);
    }
    return total / static_cast<double>(states);
}

double error_coefficient(double estimate, double truth) {
    if (truth == 0.0) throw DataError("error coefficient: zero truth");
    return 100.0 * (estimate - truth) / truth;
}

MetricReport aggregate(std::vector<RunRecord> records) {
    if (records.empty()) throw DataError("aggregate: no records");
    std::stable_sort(records.begin(), records.end(),
                     [](const RunRecord& a, const RunRecord& b) { return a.seed < b.seed; });
    MetricReport rep;
    rep.method = records.front().method;
    rep.instance = records.front().instance;
    std::vector<std::vector<double>> ev, tv, ep, tp;
    std::vector<double> objectives;
    for (const auto& r : records) {
        if (r.method != rep.method) throw DataError("aggregate: records mix methods");
        if (r.instance != rep.instance) throw DataError("aggregate: records mix instances");
        if (!r.has_estimate()) {
            ++rep.failed;
            continue;
        }
        if (r.status == "optimal") ++rep.optimal;
        ev.push_back(r.est_voltages);
        tv.push_back(r.true_voltages);
        ep.push_back(r.est_parameters);
        tp.push_back(r.true_parameters);
        objectives.push_back(r.objective);
    }
    if (ev.empty()) throw DataError("aggregate: no run produced an estimate");
    rep.runs = ev.size();
    rep.rmse_v = rmse(ev, tv);
    rep.nrmse_v = nrmse(rep.rmse_v, grand_mean(ev));
    rep.variance_v = variance_avg(ev);
    check_shape(ep, "parameters");
    if (!ep.front().empty()) {
        rep.rmse_p = rmse(ep, tp);
        rep.nrmse_p = nrmse(rep.rmse_p, grand_mean(ep));
        rep.variance_p = variance_avg(ep);
        for (std::size_t k = 0; k < ep.front().size(); ++k) {
            std::vector<double> col;
            for (const auto& r : ep) col.push_back(r[k]);
            rep.median_parameters.push_back(median(col));
            rep.median_error_coefficient.push_back(error_coefficient(rep.median_parameters.back(), tp.front()[k]));
        }
    }
    rep.high_variance = rep.variance_p > MetricReport::kHighVariance;
    rep.median_objective = median(objectives);
    std::size_t i = 0;
    for (const auto& r : records) {
        if (!r.has_estimate()) continue;
        if (objectives[i++] > MetricReport::kOutlierFactor * rep.median_objective) rep.outliers.push_back(r.seed);
    }
    return rep;
}

std::string record_to_json(const RunRecord& r) {
    json j;
    j["seed"] = r.seed;
    j["method"] = to_string(r.method);
    j["instance"] = r.instance;
    j["status"] = r.status;
    j["objective"] = r.objective;
    j["certificate_gap"] = r.certificate_gap ? json(*r.certificate_gap) : json(nullptr);
    j["est_voltages"] = r.est_voltages;
    j["true_voltages"] = r.true_voltages;
    j["est_parameters"] = r.est_parameters;
    j["true_parameters"] = r.true_parameters;
    j["timing"] = {{"wall_seconds", r.wall_seconds}, {"timestamp", r.timestamp}};
    return j.dump(1) + "\n";
}

RunRecord record_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        RunRecord r;
        r.seed = j.at("seed").get<std::uint64_t>();
        r.method = method_from_string(j.at("method").get<std::string>());
        r.instance = j.at("instance").get<std::string>();
        r.status = j.at("status").get<std::string>();
        r.objective = j.at("objective").get<double>();
        if (!j.at("certificate_gap").is_null()) r.certificate_gap = j.at("certificate_gap").get<double>();
        r.est_voltages = j.at("est_voltages").get<std::vector<double>>();
        r.true_voltages = j.at("true_voltages").get<std::vector<double>>();
        r.est_parameters = j.at("est_parameters").get<std::vector<double>>();
        r.true_parameters = j.at("true_parameters").get<std::vector<double>>();
        if (j.contains("timing")) {
            r.wall_seconds = j["timing"].value("wall_seconds", 0.0);
            r.timestamp = j["timing"].value("timestamp", "");
        }
        return r;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed run record: ") + e.what());
    }
}

std::string report_to_json(const std::vector<MetricReport>& reports) {
    json out = json::array();
    for (const auto& r : reports) {
        json j;
        j["method"] = to_string(r.method);
        j["instance"] = r.instance;
        j["runs"] = r.runs;
        j["failed"] = r.failed;
        j["optimal"] = r.optimal;
        j["rmse_v"] = r.rmse_v;
        j["nrmse_v"] = r.nrmse_v;
        j["variance_v"] = r.variance_v;
        j["rmse_p"] = r.rmse_p;
        j["nrmse_p"] = r.nrmse_p;
        j["variance_p"] = r.variance_p;
        j["median_parameters"] = r.median_parameters;
        j["median_error_coefficient_percent"] = r.median_error_coefficient;
        j["median_objective"] = r.median_objective;
        j["outlier_seeds"] = r.outliers;
        j["outlier_rule"] = "objective > 10 x median";
        j["high_variance"] = r.high_variance;
        j["high_variance_rule"] = "variance_p > 1";
        out.push_back(j);
    }
    return out.dump(2) + "\n";
}

std::string report_table(const std::vector<MetricReport>& reports) {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof line, "%-8s %5s %6s %11s %11s %11s %11s %11s %8s %s\n", "method", "runs", "failed",
                  "RMSE_v", "NRMSE_v", "var_v", "NRMSE_P", "var_P", "outliers", "flag");
    os << line;
    for (const auto& r : reports) {
        std::snprintf(line, sizeof line, "%-8s %5zu %6zu %11.3e %11.3e %11.3e %11.3e %11.3e %8zu %s\n",
                      to_string(r.method).c_str(), r.runs, r.failed, r.rmse_v, r.nrmse_v, r.variance_v, r.nrmse_p,
                      r.variance_p, r.outliers.size(), r.high_variance ? "high-variance" : "");
        os << line;
    }
    return os.str();
}

}  // namespace gridpse
