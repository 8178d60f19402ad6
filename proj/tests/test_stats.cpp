#include "waxsep/image.hpp"
#include "waxsep/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace waxsep;

namespace {

double two_pass_r(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("perfect linear relations") {
    std::vector<double> x{1, 2, 3, 4, 5, 6}, y, z;
    for (double v : x) {
        y.push_back(2 * v + 1);
        z.push_back(-v);
    }
    CHECK(pearson(x, y).r == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(pearson(x, y).p == 0.0);
    CHECK(pearson(x, z).r == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(pearson(x, y).n == 6);
}

TEST_CASE("pearson errors") {
    std::vector<double> two{1, 2}, three{1, 2, 3}, flat{4, 4, 4}, four{1, 2, 3, 4};
    CHECK_THROWS_AS(pearson(two, two), Error);
    CHECK_THROWS_AS(pearson(three, four), Error);
    CHECK_THROWS_WITH_AS(pearson(three, flat), doctest::Contains("variance"), Error);
    std::vector<double> nan{1, std::nan(""), 3};
    CHECK_THROWS_AS(pearson(three, nan), Error);
}

TEST_CASE("pearson matches a two-pass covariance to 1e-12") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 3 + static_cast<std::size_t>(t) * 7 % 500;
        std::vector<double> x(n), y(n);
        const double shift = t % 3 == 0 ? 1e4 : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = g(rng) + shift;
            y[i] = 0.3 * x[i] + g(rng);
        }
        REQUIRE(std::abs(pearson(x, y).r - two_pass_r(x, y)) <= 1e-12);
    }
}

TEST_CASE("p-values agree with the Student t distribution") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 3 + static_cast<std::size_t>(t) % 60;
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = g(rng);
            y[i] = 0.5 * x[i] + g(rng);
        }
        const auto res = pearson(x, y);
        const double df = static_cast<double>(n - 2);
        const double tstat = res.r * std::sqrt(df / (1 - res.r * res.r));
        const boost::math::students_t dist(df);
        const double expect = 2 * boost::math::cdf(boost::math::complement(dist, std::abs(tstat)));
        REQUIRE(res.p == doctest::Approx(expect).epsilon(1e-10));
    }
    for (double df : {1.0, 2.0, 7.0, 30.0, 267.0}) {
        for (double tt : {0.0, 0.3, 1.0, 2.5, 8.0, 20.0}) {
            const boost::math::students_t dist(df);
            const double expect = 2 * boost::math::cdf(boost::math::complement(dist, tt));
            CHECK(student_t_two_sided_p(tt, df) == doctest::Approx(expect).epsilon(1e-10));
            CHECK(student_t_two_sided_p(-tt, df) == student_t_two_sided_p(tt, df));
        }
    }
}

TEST_CASE("incomplete beta agrees with boost") {
    for (double a : {0.5, 1.0, 2.5, 13.0, 134.5})
        for (double b : {0.5, 1.0, 3.0, 40.0})
            for (double x : {0.0, 0.01, 0.2, 0.5, 0.77, 0.999, 1.0})
                CHECK(regularized_incomplete_beta(a, b, x) ==
                      doctest::Approx(boost::math::ibeta(a, b, x)).epsilon(1e-10).scale(1e-300));
}

TEST_CASE("planted correlation 0.76 with N = 269") {
    std::mt19937_64 rng(269);
    std::normal_distribution<double> g(0.0, 1.0);
    const double rho = 0.76;
    int ok = 0;
    for (int t = 0; t < 50; ++t) {
        std::vector<double> x(269), y(269);
        for (std::size_t i = 0; i < 269; ++i) {
            x[i] = g(rng);
            y[i] = rho * x[i] + std::sqrt(1 - rho * rho) * g(rng);
        }
        const auto res = pearson(x, y);
        ok += res.r >= 0.68 && res.r <= 0.84 && res.p < 1e-30;
    }
    CHECK(ok == 50);
}

TEST_CASE("quartiles by linear interpolation") {
    std::vector<double> v{7, 1, 3, 5};
    const auto q = quartiles(v);
    CHECK(q.min == 1);
    CHECK(q.q1 == doctest::Approx(2.5));
    CHECK(q.median == doctest::Approx(4));
    CHECK(q.q3 == doctest::Approx(5.5));
    CHECK(q.max == 7);
    CHECK(q.n == 4);
    std::vector<double> one{3.5};
    CHECK(quartiles(one).q1 == 3.5);
    CHECK_THROWS_AS(quartiles(std::vector<double>{}), Error);
}
