#pragma once

#include <cstddef>
#include <span>

namespace waxsep {

struct PearsonResult {
    double r = 0.0;
    double p = 1.0;  // two-sided
    std::size_t n = 0;
};

/// Sample correlation (single pass, co-moment updates) with the two-sided
/// p-value of t = r sqrt((n-2)/(1-r^2)) under Student t, n-2 degrees of freedom.
/// Throws for n < 3, length mismatch, non-finite input or zero variance.
PearsonResult pearson(std::span<const double> x, std::span<const double> y);

/// I_x(a, b) by Lentz's continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

/// P(|T| >= |t|) for Student t with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);

struct Quartiles {
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
    std::size_t n = 0;
};

/// Linear interpolation between order statistics at h = (n-1) q.
/// Throws on empty input.
Quartiles quartiles(std::span<const double> values);

}  // namespace waxsep
