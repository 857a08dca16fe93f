#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gridpse {

enum class Method { Nlp, Mc, SbtMc };

std::string to_string(Method method);
/// Accepts "nlp", "mc", "sbt-mc". Throws DataError otherwise.
Method method_from_string(const std::string& name);

/// One estimation run. Voltage states are bus magnitudes, period-major.
struct RunRecord {
    std::uint64_t seed = 0;
    Method method = Method::Nlp;
    std::string instance;  ///< records aggregate only within one instance key
    std::vector<double> est_voltages, true_voltages;
    std::vector<double> est_parameters, true_parameters;
    double objective = 0.0;
    std::string status;
    std::optional<double> certificate_gap;  ///< nlp objective minus relaxed objective
    double wall_seconds = 0.0;
    std::string timestamp;

    /// False when the run produced no estimate (solver exception).
    bool has_estimate() const noexcept { return !est_voltages.empty(); }
};

/// Square root of the mean squared deviation over all runs and states.
/// Throws DataError on empty input or mismatched dimensions.
double rmse(const std::vector<std::vector<double>>& estimates, const std::vector<std::vector<double>>& truths);

/// rmse / |mean|. Throws DataError when |mean| is below 1e-300.
double nrmse(double rmse_value, double mean);

/// Grand mean over runs and states.
double grand_mean(const std::vector<std::vector<double>>& estimates);

/// Population variance across runs per state, averaged over states.
double variance_avg(const std::vector<std::vector<double>>& estimates);

/// 100·(est − truth)/truth. Throws DataError for zero truth.
double error_coefficient(double estimate, double truth);

struct MetricReport {
    Method method = Method::Nlp;
    std::string instance;
    std::size_t runs = 0;    ///< records with an estimate
    std::size_t failed = 0;  ///< records without one
    std::size_t optimal = 0;
    double rmse_v = 0.0, nrmse_v = 0.0, variance_v = 0.0;
    double rmse_p = 0.0, nrmse_p = 0.0, variance_p = 0.0;
    std::vector<double> median_parameters;         ///< group median per parameter
    std::vector<double> median_error_coefficient;  ///< percent, of the group median
    double median_objective = 0.0;
    std::vector<std::uint64_t> outliers;  ///< seeds whose objective exceeds 10× the median
    bool high_variance = false;           ///< variance_p > 1

    static constexpr double kOutlierFactor = 10.0;
    static constexpr double kHighVariance = 1.0;
};

/// Throws DataError when records are empty, mix methods or instances, or all lack estimates.
/// Records are sorted by seed first, so the report does not depend on arrival order.
MetricReport aggregate(std::vector<RunRecord> records);

std::string record_to_json(const RunRecord& record);
RunRecord record_from_json(const std::string& text);
std::string report_to_json(const std::vector<MetricReport>& reports);

/// Aligned columns, one row per report.
std::string report_table(const std::vector<MetricReport>& reports);

}  // namespace gridpse
