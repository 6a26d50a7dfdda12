#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "bers/numerics.hpp"

namespace bers {

enum class BenchmarkKind { rosenbrock, ackley, sphere, rastrigin };

/// A shifted test function on [-4, 4]^D with its optimizer-facing output transform.
struct BenchmarkTask {
    BenchmarkKind kind = BenchmarkKind::sphere;
    Index dimension = 10;
    double lower = -4.0;
    double upper = 4.0;

    std::string name() const;
    /// Location of the global minimum (value 0 before transforms).
    Vector optimum() const;
};

std::optional<BenchmarkKind> parse_benchmark(std::string_view name);
std::string benchmark_name(BenchmarkKind kind);

/// Exact function value. Points outside the box are allowed.
double evaluate_raw(const BenchmarkTask& task, const Vector& x);

/// sqrt(y)/10 for Rosenbrock, sqrt(y) for Sphere and Rastrigin, y for Ackley.
/// This is the fitness the optimizer minimizes.
double evaluate_transformed(const BenchmarkTask& task, const Vector& x);

/// log(1 + y), applied on top of the fitness for neural-linear training data.
/// Throws NegativeInput for y < 0.
double model_target_transform(double y);

}  // namespace bers
