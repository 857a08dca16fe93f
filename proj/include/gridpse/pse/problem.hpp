#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "gridpse/grid/network.hpp"
#include "gridpse/measurement/types.hpp"
#include "gridpse/powerflow/powerflow.hpp"
#include "gridpse/solver/qcqp.hpp"

namespace gridpse {

enum class VariableKind { VoltageReal, VoltageImag, NoiseReal, NoiseImag, NoiseMagnitude, Parameter, Lifted };

std::string to_string(VariableKind kind);

/// `element` is a bus id (voltages, injection noise), a branch id (flow noise),
/// an unknown-parameter index, or a bilinear-definition index (lifted).
struct VariableInfo {
    VariableKind kind;
    std::size_t period = 0;
    int element = 0;
    bool flow = false;  ///< noise of a flow measurement

    bool operator==(const VariableInfo&) const = default;
};

class VariableSpace {
public:
    int add(const VariableInfo& info) {
        vars_.push_back(info);
        return static_cast<int>(vars_.size()) - 1;
    }
    std::size_t size() const noexcept { return vars_.size(); }
    const VariableInfo& operator[](std::size_t i) const { return vars_[i]; }
    const std::vector<VariableInfo>& all() const noexcept { return vars_; }
    std::vector<int> indices_of(VariableKind kind) const;

private:
    std::vector<VariableInfo> vars_;
};

enum class RowTag { RtuKcl, Flow, ZeroInjection, VoltageMagnitude, Reference };

std::string to_string(RowTag tag);

/// One equality row in lifted (affine) form.
struct ProblemRow {
    QuadraticFunction f;
    RowTag tag;
    std::size_t period = 0;
    int element = 0;      ///< bus id, or branch id for flow rows
    int noise = -1;       ///< noise variable entering with coefficient -1, if any
    bool imaginary = false;
};

/// lifted = left * right; left == right registers a square.
struct BilinearDefinition {
    int lifted;
    int left;
    int right;
};

struct PseOptions {
    /// Parameters enter as P̂ + ΔP and the variable is ΔP.
    bool delta_form = false;
    /// Add squared-magnitude rows at measured injection buses.
    bool include_vmag = true;
};

/// Variable indices of one period.
struct PeriodLayout {
    std::vector<int> vr, vi;                          ///< per bus position
    std::vector<int> inj_real, inj_imag, inj_mag;     ///< per injection measurement
    std::vector<int> flow_real, flow_imag;            ///< per flow measurement
};

/// The estimation problem: variables, lifted affine rows, bilinear definitions,
/// and a weighted least-squares objective over the noise variables.
class EstimationProblem {
public:
    Network network;
    MeasurementSet measurements;
    UnknownParameterSet unknowns;
    PseOptions options;

    VariableSpace space;
    std::vector<ProblemRow> rows;
    std::vector<BilinearDefinition> bilinear;
    std::vector<std::pair<int, double>> objective;  ///< Σ w x²
    std::vector<int> parameter_vars;                ///< per unknown
    std::vector<double> parameter_offset;           ///< P̂ in delta form, else 0
    std::vector<PeriodLayout> layout;
    bool magnitude_anchor = false;

    std::size_t num_vars() const noexcept { return space.size(); }
    std::size_t period_count() const noexcept { return layout.size(); }

    double objective_value(std::span<const double> x) const;

    /// Row with every lifted variable replaced by its product.
    QuadraticFunction unlifted_row(std::size_t r) const;

    /// Absolute parameter values at `x`.
    std::vector<double> parameter_values(std::span<const double> x) const;
    OperatingPoint voltages(std::span<const double> x, std::size_t period) const;

    /// Sets every lifted variable to its product.
    void complete_lifted(std::vector<double>& x) const;

    /// Point with the given voltages and absolute parameters, noise chosen so every row
    /// holds, and lifted variables consistent.
    std::vector<double> make_point(const std::vector<OperatingPoint>& voltages,
                                   const std::vector<double>& parameters) const;

    /// Exact nonconvex problem: unlifted rows, lifted variables fixed at zero.
    Qcqp exact_qcqp() const;

    /// Lifted affine rows with the objective; no bilinear coupling (relaxation base).
    Qcqp lifted_qcqp() const;

    /// Rows counted per tag.
    std::size_t count_rows(RowTag tag) const;
};

/// Builds the joint parameter-state estimation problem for every period in `measurements`.
/// Throws DataError for measurements referencing unknown buses or branches, flow meters
/// at non-terminal buses, measurements at zero-injection buses, and invalid unknown sets.
EstimationProblem build_pse(const Network& network, const MeasurementSet& measurements,
                            const UnknownParameterSet& unknowns, const PseOptions& options = {});

/// State estimation with known parameters: affine rows, no magnitude rows, and a
/// magnitude anchor at the slack.
EstimationProblem build_se(const Network& network, const MeasurementSet& measurements);

enum class EvalMode { Lifted, Unlifted };

struct Evaluation {
    double objective = 0.0;
    Eigen::VectorXd residuals;
    Eigen::SparseMatrix<double> jacobian;
    Eigen::VectorXd gradient;
};

Evaluation evaluate(const EstimationProblem& problem, std::span<const double> x, EvalMode mode);

/// ∇²(objective + Σ y_r row_r); zero row curvature in lifted mode.
Eigen::SparseMatrix<double> lagrangian_hessian(const EstimationProblem& problem, std::span<const double> x,
                                               std::span<const double> y, EvalMode mode);

}  // namespace gridpse
