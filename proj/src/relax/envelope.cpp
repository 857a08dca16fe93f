#include "gridpse/relax/envelope.hpp"

#include <algorithm>
#include <limits>

#include "gridpse/error.hpp"

namespace gridpse {

namespace {

void check(Interval b, const char* name) {
    if (!(b.lo <= b.hi)) throw DataError(std::string("inverted bounds on ") + name);
}

}  // namespace

std::array<EnvelopeRow, 4> mccormick_rows(Interval bx, Interval by) {
    check(bx, "x");
    check(by, "y");
    return {{
        // s ≥ xL·y + yL·x − xL·yL
        {by.lo, bx.lo, -1.0, bx.lo * by.lo},
        // s ≥ xU·y + yU·x − xU·yU
        {by.hi, bx.hi, -1.0, bx.hi * by.hi},
        // s ≤ xU·y + yL·x − xU·yL
        {-by.lo, -bx.hi, 1.0, -bx.hi * by.lo},
        // s ≤ xL·y + yU·x − xL·yU
        {-by.hi, -bx.lo, 1.0, -bx.lo * by.hi},
    }};
}

SquareRows square_rows(Interval bx) {
    check(bx, "x");
    return {{-(bx.lo + bx.hi), 0.0, 1.0, -bx.lo * bx.hi}};
}

Interval SquareRows::s_range(double x) const noexcept { return {x * x, secant.rhs - secant.a * x}; }

Interval envelope_range(const std::array<EnvelopeRow, 4>& rows, double x, double y) {
    Interval r{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    for (const auto& row : rows) {
        const double bound = (row.rhs - row.a * x - row.b * y) / row.c;
        if (row.c < 0.0)
            r.lo = std::max(r.lo, bound);
        else
            r.hi = std::min(r.hi, bound);
    }
    return r;
}

Interval product_range(Interval bx, Interval by) {
    const double c[4] = {bx.lo * by.lo, bx.lo * by.hi, bx.hi * by.lo, bx.hi * by.hi};
    return {*std::min_element(c, c + 4), *std::max_element(c, c + 4)};
}

Interval square_range(Interval bx) {
    const double a = bx.lo * bx.lo, b = bx.hi * bx.hi;
    if (bx.lo <= 0.0 && bx.hi >= 0.0) return {0.0, std::max(a, b)};
    return {std::min(a, b), std::max(a, b)};
}

}  // namespace gridpse
