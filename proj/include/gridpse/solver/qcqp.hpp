#pragma once

#include <limits>
#include <span>
#include <vector>

namespace gridpse {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct LinearTerm {
    int var;
    double coef;
};

/// coef * x_i * x_j; i == j denotes a square.
struct QuadTerm {
    int i;
    int j;
    double coef;
};

/// constant + Σ linear + Σ quadratic, the only function class the solver handles.
struct QuadraticFunction {
    double constant = 0.0;
    std::vector<LinearTerm> linear;
    std::vector<QuadTerm> quadratic;

    double value(std::span<const double> x) const;
    bool is_affine() const noexcept { return quadratic.empty(); }
};

enum class RowSense { Equal, LessEqual };

/// min objective(x) s.t. rows(x) = 0 or ≤ 0, lower ≤ x ≤ upper.
/// A variable with lower == upper is fixed and removed from the Newton system.
struct Qcqp {
    std::size_t num_vars = 0;
    QuadraticFunction objective;
    std::vector<QuadraticFunction> rows;
    std::vector<RowSense> sense;
    std::vector<double> lower;
    std::vector<double> upper;

    explicit Qcqp(std::size_t n = 0) : num_vars(n), lower(n, -kInfinity), upper(n, kInfinity) {}

    std::size_t add_row(QuadraticFunction f, RowSense s) {
        rows.push_back(std::move(f));
        sense.push_back(s);
        return rows.size() - 1;
    }
    std::size_t row_count() const noexcept { return rows.size(); }
};

}  // namespace gridpse
