#include "bers/benchmark_functions.hpp"

#include <cmath>
#include <numbers>

namespace bers {

std::string benchmark_name(BenchmarkKind kind) {
    switch (kind) {
        case BenchmarkKind::rosenbrock: return "rosenbrock";
        case BenchmarkKind::ackley: return "ackley";
        case BenchmarkKind::sphere: return "sphere";
        case BenchmarkKind::rastrigin: return "rastrigin";
    }
    return "unknown";
}

std::optional<BenchmarkKind> parse_benchmark(std::string_view name) {
    for (BenchmarkKind k : {BenchmarkKind::rosenbrock, BenchmarkKind::ackley,
                            BenchmarkKind::sphere, BenchmarkKind::rastrigin}) {
        if (benchmark_name(k) == name) {
            return k;
        }
    }
    return std::nullopt;
}

std::string BenchmarkTask::name() const { return benchmark_name(kind); }

Vector BenchmarkTask::optimum() const {
    switch (kind) {
        case BenchmarkKind::rosenbrock: return Vector::Ones(dimension);
        case BenchmarkKind::ackley: return Vector::Zero(dimension);
        case BenchmarkKind::sphere:
        case BenchmarkKind::rastrigin: return Vector::Constant(dimension, -2.0);
    }
    return Vector::Zero(dimension);
}

double evaluate_raw(const BenchmarkTask& task, const Vector& x) {
    if (x.size() != task.dimension) {
        throw DimensionMismatch("benchmark " + task.name() + " expects dimension " +
                                std::to_string(task.dimension));
    }
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double d = static_cast<double>(task.dimension);
    switch (task.kind) {
        case BenchmarkKind::rosenbrock: {
            double s = 0.0;
            for (Index i = 0; i + 1 < x.size(); ++i) {
                const double a = x(i + 1) - x(i) * x(i);
                const double b = 1.0 - x(i);
                s += 100.0 * (a * a + b * b);
            }
            return s;
        }
        case BenchmarkKind::ackley: {
            const double sq = x.squaredNorm() / d;
            double cs = 0.0;
            for (Index i = 0; i < x.size(); ++i) {
                cs += std::cos(two_pi * x(i));
            }
            return -20.0 * std::exp(-0.2 * std::sqrt(sq)) - std::exp(cs / d) + 20.0 +
                   std::numbers::e;
        }
        case BenchmarkKind::sphere:
            return (x.array() + 2.0).square().sum();
        case BenchmarkKind::rastrigin: {
            double s = 10.0 * d;
            for (Index i = 0; i < x.size(); ++i) {
                const double z = x(i) + 2.0;
                s += z * z - 10.0 * std::cos(two_pi * z);
            }
            return s;
        }
    }
    return 0.0;
}

double evaluate_transformed(const BenchmarkTask& task, const Vector& x) {
    const double y = evaluate_raw(task, x);
    switch (task.kind) {
        case BenchmarkKind::rosenbrock: return std::sqrt(std::max(y, 0.0)) / 10.0;
        case BenchmarkKind::ackley: return std::max(y, 0.0);  // round-off can dip below 0
        case BenchmarkKind::sphere:
        case BenchmarkKind::rastrigin: return std::sqrt(std::max(y, 0.0));
    }
    return y;
}

double model_target_transform(double y) {
    if (y < 0.0) {
        throw NegativeInput("log(1 + y) transform needs y >= 0, got " + std::to_string(y));
    }
    return std::log1p(y);
}

}  // namespace bers
