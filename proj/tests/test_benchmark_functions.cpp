#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bers/benchmark_functions.hpp"
#include "oracles.hpp"

using namespace bers;

namespace {

BenchmarkTask task(BenchmarkKind k) { return BenchmarkTask{k}; }

// Formulas written out by hand. The Rosenbrock weight multiplies both squared terms.
double ref_raw(BenchmarkKind k, const Vector& x) {
    const double n = static_cast<double>(x.size());
    double s = 0.0;
    switch (k) {
        case BenchmarkKind::rosenbrock:
            for (Index i = 0; i + 1 < x.size(); ++i) {
                s += 100.0 * (std::pow(x(i + 1) - x(i) * x(i), 2) + std::pow(1.0 - x(i), 2));
            }
            return s;
        case BenchmarkKind::ackley: {
            double sq = 0.0;
            double cs = 0.0;
            for (Index i = 0; i < x.size(); ++i) {
                sq += x(i) * x(i);
                cs += std::cos(2.0 * std::numbers::pi * x(i));
            }
            return -20.0 * std::exp(-0.2 * std::sqrt(sq / n)) - std::exp(cs / n) + 20.0 +
                   std::numbers::e;
        }
        case BenchmarkKind::sphere:
            for (Index i = 0; i < x.size(); ++i) {
                s += std::pow(x(i) + 2.0, 2);
            }
            return s;
        case BenchmarkKind::rastrigin:
            for (Index i = 0; i < x.size(); ++i) {
                const double z = x(i) + 2.0;
                s += z * z - 10.0 * std::cos(2.0 * std::numbers::pi * z);
            }
            return 10.0 * n + s;
    }
    return 0.0;
}

}  // namespace

TEST_CASE("raw values at known points") {
    CHECK(evaluate_raw(task(BenchmarkKind::rosenbrock), Vector::Ones(10)) == 0.0);
    CHECK(evaluate_raw(task(BenchmarkKind::sphere), Vector::Zero(10)) == doctest::Approx(40.0));
    CHECK(evaluate_raw(task(BenchmarkKind::rastrigin), Vector::Zero(10)) == doctest::Approx(40.0));
    CHECK(std::abs(evaluate_raw(task(BenchmarkKind::ackley), Vector::Zero(10))) < 1e-12);
    CHECK(evaluate_raw(task(BenchmarkKind::sphere), Vector::Constant(10, -2.0)) == 0.0);
    CHECK(std::abs(evaluate_raw(task(BenchmarkKind::rastrigin), Vector::Constant(10, -2.0))) <
          1e-12);
}

TEST_CASE("optimum() points at the zero of each function") {
    for (auto k : {BenchmarkKind::rosenbrock, BenchmarkKind::ackley, BenchmarkKind::sphere,
                   BenchmarkKind::rastrigin}) {
        const auto t = task(k);
        CHECK(std::abs(evaluate_raw(t, t.optimum())) < 1e-12);
    }
    CHECK(task(BenchmarkKind::sphere).optimum() == task(BenchmarkKind::rastrigin).optimum());
}

TEST_CASE("transformed values") {
    CHECK(evaluate_transformed(task(BenchmarkKind::sphere), Vector::Zero(10)) ==
          doctest::Approx(std::sqrt(40.0)));
    CHECK(evaluate_transformed(task(BenchmarkKind::rosenbrock), Vector::Ones(10)) == 0.0);
    CHECK(std::abs(evaluate_transformed(task(BenchmarkKind::ackley), Vector::Zero(10))) < 1e-12);
}

TEST_CASE("raw functions agree with reference formulas and stay non-negative") {
    Rng rng(99);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    Vector x(10);
    double worst_rel = 0.0;
    for (int i = 0; i < 100000; ++i) {
        for (Index j = 0; j < 10; ++j) {
            x(j) = u(rng);
        }
        const auto k = static_cast<BenchmarkKind>(i % 4);
        const double v = evaluate_raw(task(k), x);
        const double ref = ref_raw(k, x);
        if (v < 0.0) {
            FAIL("negative raw value");
        }
        worst_rel = std::max(worst_rel, std::abs(v - ref) / std::max(1.0, std::abs(ref)));
    }
    CHECK(worst_rel < 1e-12);
}

TEST_CASE("dimension mismatch") {
    CHECK_THROWS_AS(evaluate_raw(task(BenchmarkKind::sphere), Vector::Zero(3)), DimensionMismatch);
}

TEST_CASE("model target transform") {
    CHECK(model_target_transform(0.0) == 0.0);
    CHECK(model_target_transform(std::numbers::e - 1.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(model_target_transform(-0.1), NegativeInput);
    Rng rng(4);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    for (int i = 0; i < 1000; ++i) {
        double a = u(rng);
        double b = u(rng);
        if (a > b) {
            std::swap(a, b);
        }
        CHECK(model_target_transform(a) <= model_target_transform(b));
    }
}

TEST_CASE("names round-trip") {
    for (auto k : {BenchmarkKind::rosenbrock, BenchmarkKind::ackley, BenchmarkKind::sphere,
                   BenchmarkKind::rastrigin}) {
        CHECK(parse_benchmark(benchmark_name(k)) == k);
    }
    CHECK_FALSE(parse_benchmark("griewank").has_value());
}
