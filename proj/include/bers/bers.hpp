#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bers/neural_linear.hpp"
#include "bers/numerics.hpp"
#include "bers/source_weighting.hpp"

namespace bers {

/// Reuse probability p_m for episode m >= 1.
struct ReuseSchedule {
    enum class Mode { geometric, constant };
    Mode mode = Mode::geometric;
    double value = 0.99;

    static ReuseSchedule geometric(double rate) { return {Mode::geometric, rate}; }
    static ReuseSchedule constant(double p) { return {Mode::constant, p}; }
};

/// geometric(r) -> r^m, constant(p) -> p. Throws std::invalid_argument for m = 0
/// or a parameter outside [0, 1].
double schedule_p(const ReuseSchedule& schedule, std::size_t m);

/// Index i drawn with probability a_i.
std::size_t sample_source(const SourceWeights& a, Rng& rng);

struct ArmStats {
    std::vector<std::size_t> pulls;
    std::vector<double> reward_sum;

    explicit ArmStats(std::size_t arms = 0) : pulls(arms, 0), reward_sum(arms, 0.0) {}
    std::size_t arms() const { return pulls.size(); }
};

/// Unpulled arms first in index order, then argmax mean + sqrt(2 log t / n_i).
/// Ties go to the lowest index.
std::size_t ucb_select(const ArmStats& stats, std::size_t t);

/// UCB1 over raw improvements, min-max normalized to [0, 1] over a trailing window.
class UcbSelector {
public:
    explicit UcbSelector(std::size_t arms, std::size_t window = 50);

    std::size_t select() const;
    void record(std::size_t arm, double improvement);
    const ArmStats& stats() const { return stats_; }

private:
    ArmStats stats_;
    std::size_t window_;
    std::size_t t_ = 0;
    std::vector<double> recent_;
};

enum class Strategy { bers, ucb, equal, single, none };

std::string strategy_name(Strategy s);
std::optional<Strategy> parse_strategy(const std::string& name);

/// Independent generators for the environment, the reuse decisions, and model training.
struct RngStreams {
    Rng environment;
    Rng reuse;
    Rng model;

    explicit RngStreams(std::uint64_t seed, std::uint64_t salt = 0);
};

/// What a base learner may touch during one episode.
class EpisodeContext {
public:
    EpisodeContext(std::size_t episode, double p, Rng& environment, Rng& reuse,
                   std::span<const Dataset* const> sources, Dataset& target);

    std::size_t episode() const { return episode_; }
    double p() const { return p_; }
    Rng& environment() { return environment_; }

    /// True with probability p, drawn from the reuse stream (no draw when p <= 0).
    bool reuse_coin();
    /// Source index under the active strategy.
    std::size_t choose_source();
    /// Reports the objective improvement obtained while reusing `source`.
    void report_improvement(std::size_t source, double improvement);

    std::size_t source_count() const { return sources_.size(); }
    const Dataset& source(std::size_t i) const;
    const Dataset& target() const { return target_; }
    void collect(Demonstration d);

    /// `batch_size` rows drawn uniformly with replacement: from a source
    /// picked by choose_source when reuse_coin() succeeds, else from the target.
    /// Falls back to the target when the chosen source is empty, and returns
    /// an empty batch when neither has data. `from_source` gets the source index or -1.
    std::vector<Demonstration> sample_batch(std::size_t batch_size, long* from_source = nullptr);

    // Wiring set by the runner.
    std::function<std::size_t(Rng&)> selector;
    std::function<void(std::size_t, double)> improvement_sink;

private:
    std::size_t episode_;
    double p_;
    Rng& environment_;
    Rng& reuse_;
    std::span<const Dataset* const> sources_;
    Dataset& target_;
};

/// The learner solving the target task. It may only touch the environment
/// through the context's environment stream.
class BaseLearner {
public:
    virtual ~BaseLearner() = default;
    /// Called once before episode 1; may collect demonstrations.
    virtual void initialize(EpisodeContext& ctx) = 0;
    virtual void run_episode(EpisodeContext& ctx) = 0;
    /// Objective after the most recent episode (best fitness or episode return).
    virtual double objective() const = 0;
    virtual Index input_dim() const = 0;
};

struct BersConfig {
    Strategy strategy = Strategy::bers;
    ReuseSchedule schedule = ReuseSchedule::geometric(0.99);
    std::size_t episodes = 200;
    /// Used by Strategy::single.
    std::size_t single_source = 0;
    std::size_t pretrain_batches = 0;
    std::size_t refine_batches = 10;
    std::size_t batch_size = 256;
    /// Episodes after which a head snapshot is stored (0 = after pretraining).
    std::vector<std::size_t> snapshot_episodes;
};

struct HeadSnapshot {
    std::size_t episode = 0;
    std::vector<NigHead> heads;
};

struct RunTrace {
    std::uint64_t seed = 0;
    std::vector<double> objective;
    std::vector<double> p;
    /// Weights in force during each episode.
    std::vector<Vector> weights;
    std::vector<std::size_t> target_size;
    std::size_t qp_solves = 0;
    double initial_objective = 0.0;
    std::vector<HeadSnapshot> snapshots;

    std::size_t episodes() const { return objective.size(); }
    /// `episode,p_m,objective,a_1..a_N` with a header row.
    void write_csv(std::ostream& out) const;
};

/// Runs the reuse loop on `base`. `model` must have sources.size() + 1 heads
/// (the last one is the target). Pretraining runs first when
/// config.pretrain_batches > 0. `target` receives every demonstration the learner collects.
RunTrace run_bers(std::span<const Dataset> sources, BaseLearner& base, MultiHeadModel& model,
                  const BersConfig& config, std::uint64_t seed, Dataset& target);

/// The base learner on its own with the same stream layout (no reuse, no model).
RunTrace run_base_alone(BaseLearner& base, std::size_t episodes, std::uint64_t seed,
                        Dataset& target);

/// Weights after pretraining (entry 0) and after each refinement round on a
/// fixed target dataset. No environment interaction.
std::vector<QpSolution> run_weights_only(std::span<const Dataset> sources, const Dataset& target,
                                         MultiHeadModel& model, std::size_t pretrain_batches,
                                         std::size_t rounds, std::size_t refine_batches,
                                         std::size_t batch_size, std::uint64_t seed);

/// Simultaneous learners, one per task, each reusing the others' data. Task j
/// keeps its own QP over the other tasks; its trace weights have width N - 1.
/// `model` needs one head per task.
std::vector<RunTrace> run_multitask(std::span<BaseLearner* const> learners, MultiHeadModel& model,
                                    const BersConfig& config, std::uint64_t seed,
                                    std::vector<Dataset>& data);

}  // namespace bers
