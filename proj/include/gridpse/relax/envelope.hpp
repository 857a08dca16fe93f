#pragma once

#include <array>

namespace gridpse {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double width() const noexcept { return hi - lo; }
    bool contains(double v, double tol = 0.0) const noexcept { return v >= lo - tol && v <= hi + tol; }
    bool degenerate() const noexcept { return lo == hi; }

    bool operator==(const Interval&) const = default;
};

/// a·x + b·y + c·s ≤ rhs
struct EnvelopeRow {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double rhs = 0.0;

    double slack(double x, double y, double s) const noexcept { return rhs - (a * x + b * y + c * s); }
};

/// The four McCormick inequalities for s = x·y over x ∈ bx, y ∈ by:
/// two under-estimators (c = -1) followed by two over-estimators (c = +1).
/// Throws DataError for inverted bounds.
std::array<EnvelopeRow, 4> mccormick_rows(Interval bx, Interval by);

/// Relaxation of s = x²: the convex row x² - s ≤ 0 and the secant s ≤ (lo+hi)x - lo·hi,
/// returned as its affine row (a = -(lo+hi), b = 0, c = 1, rhs = -lo·hi).
struct SquareRows {
    EnvelopeRow secant;

    /// Feasible s interval at a fixed x.
    Interval s_range(double x) const noexcept;
};

SquareRows square_rows(Interval bx);

/// Feasible s interval of the four McCormick rows at fixed (x, y); may be empty (lo > hi).
Interval envelope_range(const std::array<EnvelopeRow, 4>& rows, double x, double y);

/// Range of x·y over the box (corner products).
Interval product_range(Interval bx, Interval by);
Interval square_range(Interval bx);

}  // namespace gridpse
