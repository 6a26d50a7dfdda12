#pragma once

#include <cstddef>
#include <vector>

#include "bers/benchmark_functions.hpp"
#include "bers/bers.hpp"
#include "bers/diffevo.hpp"
#include "bers/supply_chain.hpp"

namespace bers {

/// Differential Evolution on a benchmark, one generation per episode. When
/// reuse is active, a source is chosen once per generation and its best
/// recorded point replaces the base vector of each agent whose reuse coin succeeds.
/// Collected demonstrations are (x, log(1 + fitness)).
class DeLearner : public BaseLearner {
public:
    DeLearner(BenchmarkTask task, DEConfig config);

    void initialize(EpisodeContext& ctx) override;
    void run_episode(EpisodeContext& ctx) override;
    double objective() const override { return population_.best_fitness(); }
    Index input_dim() const override { return config_.dimension; }

    const Population& population() const { return population_; }
    const BenchmarkTask& task() const { return task_; }
    /// Number of base vectors replaced by a source point so far.
    std::size_t injections() const { return injections_; }

private:
    struct BestCache {
        const Dataset* data = nullptr;
        std::size_t scanned = 0;
        std::size_t best = 0;
    };
    const Vector& best_of(const Dataset& ds);

    BenchmarkTask task_;
    DEConfig config_;
    Population population_;
    std::vector<BestCache> cache_;
    std::size_t injections_ = 0;
};

/// Rolls the exploration policy in the target scenario for one horizon per
/// episode from a random start, then draws `batches` training batches through
/// the reuse context. The objective is the discounted episode return.
class SupplyCollector : public BaseLearner {
public:
    SupplyCollector(supply::ScenarioCosts scenario, supply::EconParams econ,
                    supply::StochasticPolicy policy, std::size_t batches = 0,
                    std::size_t batch_size = 64);

    void initialize(EpisodeContext&) override {}
    void run_episode(EpisodeContext& ctx) override;
    double objective() const override { return last_return_; }
    Index input_dim() const override { return static_cast<Index>(supply::encoded_dim); }

    /// Batches drawn so far: entry 0 counts target batches, entry i + 1 source i.
    const std::vector<std::size_t>& batch_sources() const { return batch_sources_; }

private:
    supply::ScenarioCosts scenario_;
    supply::EconParams econ_;
    supply::StochasticPolicy policy_;
    std::size_t batches_;
    std::size_t batch_size_;
    double last_return_ = 0.0;
    std::vector<std::size_t> batch_sources_;
};

}  // namespace bers
