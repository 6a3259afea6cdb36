#include <doctest.h>

#include <cmath>
#include <vector>

#include "kreduce/dual.hpp"

using namespace kreduce;

// f(x0, x1) = exp(x0) log(1 + x1) + x0^2 x1^3 has convenient closed-form
// mixed partials of every order used below.
namespace {
struct F {
    template <class S>
    S operator()(const std::vector<S>& x) const {
        return exp(x[0]) * log1p(x[1]) + x[0] * x[0] * (x[1] * x[1] * x[1]);
    }
};
} // namespace

TEST_CASE("first and second partials match closed forms") {
    const std::vector<double> x{0.3, 0.7};
    const double e = std::exp(0.3);
    const double l = std::log1p(0.7);
    F f;

    CHECK(partial1(f, x, 0) == doctest::Approx(e * l + 2 * 0.3 * std::pow(0.7, 3)).epsilon(1e-12));
    CHECK(partial1(f, x, 1) ==
          doctest::Approx(e / 1.7 + 0.09 * 3 * 0.49).epsilon(1e-12));
    CHECK(partial2(f, x, 0, 0) == doctest::Approx(e * l + 2 * std::pow(0.7, 3)).epsilon(1e-12));
    CHECK(partial2(f, x, 0, 1) == doctest::Approx(e / 1.7 + 2 * 0.3 * 3 * 0.49).epsilon(1e-12));
    CHECK(partial2(f, x, 1, 1) ==
          doctest::Approx(-e / (1.7 * 1.7) + 0.09 * 6 * 0.7).epsilon(1e-12));
}

TEST_CASE("third and fourth partials match closed forms") {
    const std::vector<double> x{0.3, 0.7};
    const double e = std::exp(0.3);
    F f;

    // d0 d1 d1 = -exp(x0)/(1+x1)^2 + 12 x0 x1
    CHECK(partial3(f, x, 0, 1, 1) ==
          doctest::Approx(-e / (1.7 * 1.7) + 12 * 0.3 * 0.7).epsilon(1e-12));
    // d1 d1 d1 = 2 exp(x0)/(1+x1)^3 + 6 x0^2
    CHECK(partial3(f, x, 1, 1, 1) ==
          doctest::Approx(2 * e / std::pow(1.7, 3) + 6 * 0.09).epsilon(1e-12));
    // d0 d1 d1 d0 = -exp(x0)/(1+x1)^2 + 12 x1
    CHECK(partial4(f, x, 0, 1, 1, 0) ==
          doctest::Approx(-e / (1.7 * 1.7) + 12 * 0.7).epsilon(1e-12));
    // d1^4 = -6 exp(x0)/(1+x1)^4
    CHECK(partial4(f, x, 1, 1, 1, 1) ==
          doctest::Approx(-6 * e / std::pow(1.7, 4)).epsilon(1e-12));
}

TEST_CASE("partials are symmetric in differentiation order") {
    const std::vector<double> x{-0.4, 1.2};
    F f;
    CHECK(partial2(f, x, 0, 1) == doctest::Approx(partial2(f, x, 1, 0)).epsilon(1e-13));
    CHECK(partial3(f, x, 0, 1, 1) == doctest::Approx(partial3(f, x, 1, 1, 0)).epsilon(1e-13));
    CHECK(partial4(f, x, 0, 0, 1, 1) == doctest::Approx(partial4(f, x, 1, 0, 1, 0)).epsilon(1e-13));
}

TEST_CASE("sqrt and division propagate through nested duals") {
    auto g = [](const auto& x) {
        auto s = x[0] * x[0] + x[1] * x[1];
        return sqrt(s) / (1.0 + s);
    };
    const std::vector<double> x{0.6, 0.8};
    // r = 1 at this point; d/dx0 [r/(1+r^2)] with r^2 = s:
    // f(s) = sqrt(s)/(1+s), f'(s) = (1 - s) / (2 sqrt(s) (1+s)^2); ds/dx0 = 2 x0.
    const double s = 1.0;
    const double fp = (1 - s) / (2 * std::sqrt(s) * (1 + s) * (1 + s));
    CHECK(partial1(g, x, 0) == doctest::Approx(fp * 2 * 0.6).epsilon(1e-12));

    // Second derivative cross-checked against central differences.
    const double h = 1e-5;
    auto at = [&](double a, double b) {
        std::vector<double> v{a, b};
        double ss = a * a + b * b;
        return std::sqrt(ss) / (1.0 + ss);
    };
    const double fd = (at(0.6 + h, 0.8 + h) - at(0.6 + h, 0.8 - h) - at(0.6 - h, 0.8 + h) +
                       at(0.6 - h, 0.8 - h)) /
                      (4 * h * h);
    CHECK(partial2(g, x, 0, 1) == doctest::Approx(fd).epsilon(1e-5));
}

TEST_CASE("complex helper arithmetic") {
    Cplx<double> a{1.0, 2.0}, b{-0.5, 0.25};
    auto c = a * b;
    CHECK(c.re == doctest::Approx(1.0 * -0.5 - 2.0 * 0.25));
    CHECK(c.im == doctest::Approx(1.0 * 0.25 + 2.0 * -0.5));
    CHECK(norm2(a) == doctest::Approx(5.0));
    auto d = conj(a) * a;
    CHECK(d.re == doctest::Approx(5.0));
    CHECK(d.im == doctest::Approx(0.0));
}
