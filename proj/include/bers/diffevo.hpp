#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <vector>

#include "bers/neural_linear.hpp"
#include "bers/numerics.hpp"

namespace bers {

struct DEConfig {
    double cr = 0.7;
    double f = 0.5;
    std::size_t np = 32;
    Index dimension = 10;
    double lower = -4.0;
    double upper = 4.0;
    /// Replace agents as soon as their trial wins (sequential variant)
    /// instead of committing the whole generation at once.
    bool in_place = false;

    /// Throws PopulationTooSmall for np < 4, std::invalid_argument otherwise.
    void validate() const;
};

struct Population {
    std::vector<Vector> points;
    std::vector<double> fitness;
    std::size_t best = 0;

    std::size_t size() const { return points.size(); }
    double best_fitness() const { return fitness[best]; }
    const Vector& best_point() const { return points[best]; }
    double mean_fitness() const;
    void update_best();
};

using Objective = std::function<double(const Vector&)>;
/// Observes every evaluation (point, value).
using EvaluationSink = std::function<void(const Vector&, double)>;

/// Replacement for the first mutation candidate. `coin` is consulted once
/// per agent and should draw from a stream separate from the optimizer's.
struct Injection {
    Vector point;
    std::function<bool()> coin;
};

Population initialize_population(const Objective& f, const DEConfig& cfg, Rng& rng,
                                 const EvaluationSink& sink = {});

/// One generation of rand/1/bin DE with greedy replacement and clipping to bounds.
Population de_generation(const Population& pop, const Objective& f, const DEConfig& cfg, Rng& rng,
                         const Injection* inject = nullptr, const EvaluationSink& sink = {});

struct StopRule {
    std::size_t max_generations = 400;
    /// Checked after each generation; the run stops once best <= target.
    double target_fitness = 0.15;
};

struct GenerationStats {
    std::size_t generation = 0;
    double best = 0.0;
    double mean = 0.0;
};

struct DEResult {
    Vector best_point;
    double best_value = 0.0;
    /// Row 0 is the initial population.
    std::vector<GenerationStats> history;
    Population population;
};

/// Runs DE until a stop condition. When `demo_sink` is set, every evaluated
/// (point, value) pair, including rejected trials, is appended to it.
DEResult run_de(const Objective& f, const DEConfig& cfg, const StopRule& stop, Rng& rng,
                Dataset* demo_sink = nullptr);

/// `generation,best_fitness,mean_fitness` with a header row.
void write_generation_csv(std::ostream& out, const std::vector<GenerationStats>& history);

}  // namespace bers
