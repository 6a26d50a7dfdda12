#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bers/neural_linear.hpp"
#include "bers/numerics.hpp"

namespace bers::supply {

inline constexpr std::size_t warehouse_count = 6;
inline constexpr std::size_t node_count = warehouse_count + 1;  // node 0 is the factory
inline constexpr std::size_t action_dim = 2 + warehouse_count + warehouse_count * warehouse_count;
inline constexpr std::size_t encoded_dim = node_count + action_dim + node_count;

inline constexpr double cheap_tier = 0.03;
inline constexpr double mid_tier = 1.50;
inline constexpr double high_tier = 3.00;

/// "factory", "A".."F".
std::string node_name(std::size_t node);
std::optional<std::size_t> parse_node(const std::string& name);

struct SupplyChainState {
    std::array<int, node_count> stock{};

    int total() const;
};

/// 44 entries: [production fraction | factory shares (keep, A..F) |
/// warehouse w shares over A..F for w = A..F, where w -> w means keep].
class ActionVector {
public:
    ActionVector() : values_(Vector::Zero(action_dim)) {}
    explicit ActionVector(Vector values);

    /// Zero production, everything kept in place.
    static ActionVector hold();

    double production() const { return values_(0); }
    /// Share of factory stock sent to `dest` (0 = keep, 1..6 = warehouse).
    double factory_share(std::size_t dest) const;
    /// Share of warehouse `from` (0..5) stock sent to warehouse `to` (0..5).
    double warehouse_share(std::size_t from, std::size_t to) const;

    double& production() { return values_(0); }
    double& factory_share(std::size_t dest);
    double& warehouse_share(std::size_t from, std::size_t to);

    const Vector& values() const { return values_; }

    /// Throws InvalidAction unless every block is a simplex within `tol`.
    void validate(double tol = 1e-9) const;

private:
    Vector values_;
};

/// Truck dispatch cost per route: factory -> warehouse and warehouse -> warehouse.
struct ScenarioCosts {
    std::string name;
    /// tier[from][to] with node indices; unused entries (to factory, self) are 0.
    std::array<std::array<double, node_count>, node_count> tier{};

    double route_cost(std::size_t from, std::size_t to) const { return tier[from][to]; }
    /// Throws ConfigError unless every route carries one of the three tiers.
    void validate() const;
    std::vector<std::pair<std::size_t, std::size_t>> cheap_routes() const;
};

/// Built-in layouts "scenario1".."scenario3" and "target".
ScenarioCosts builtin_scenario(const std::string& name);
std::vector<std::string> builtin_scenario_names();

struct EconParams {
    std::array<double, warehouse_count> demand_means{7, 6, 6, 5, 5, 5};
    double price = 0.6;
    double production_cost = 0.1;
    double storage_cost = 0.03;
    int truck_capacity = 4;
    int max_production = 35;
    int capacity = 50;
    std::size_t horizon = 200;
    double discount = 0.96;
    /// Charge storage on factory stock as well as warehouses.
    bool charge_factory_storage = true;
};

/// Scenario file: JSON with "name", "routes" {"factory->A": 0.03, ...} and optional "econ".
void save_scenario(std::ostream& out, const ScenarioCosts& scenario, const EconParams& econ);
std::pair<ScenarioCosts, EconParams> load_scenario(std::istream& in);

struct StepInfo {
    double revenue = 0.0;
    double production_cost = 0.0;
    double storage_cost = 0.0;
    double transport_cost = 0.0;
    int produced = 0;
    int sold = 0;
    int overflow = 0;
    int trucks = 0;
    std::array<int, warehouse_count> demand{};
};

struct StepResult {
    SupplyChainState next;
    double reward = 0.0;
    StepInfo info;
};

/// One period: produce, ship (from post-production stocks, floored to
/// units), receive with capacity clipping, serve Poisson demand (lost
/// sales), then charge storage on the closing stock.
StepResult step(const SupplyChainState& state, const ActionVector& action,
                const ScenarioCosts& scenario, const EconParams& econ, Rng& rng);

/// Normalized stocks of s and s', with the raw action between them (58 entries).
Vector encode_sa(const SupplyChainState& state, const ActionVector& action,
                 const SupplyChainState& next, const EconParams& econ = {});

/// Exploration policy: uniform production, Dirichlet(1) shipping blocks.
/// A positive `cheap_bias` multiplies the weight of the scenario's cheap routes by (1 + bias).
struct StochasticPolicy {
    double cheap_bias = 0.0;
    std::optional<ScenarioCosts> preferred;

    ActionVector sample(Rng& rng) const;
};

/// Uniform random stocks in [0, capacity].
SupplyChainState random_state(const EconParams& econ, Rng& rng);

struct CollectionConfig {
    std::size_t collect_steps = 30000;
    /// Number of observations kept after sub-sampling; 0 keeps everything.
    std::size_t subsample = 10000;
    std::size_t horizon = 200;
};

/// Rolls the policy for `collect_steps` transitions (episodes of `horizon`
/// steps from random starts) and sub-samples without replacement.
Dataset generate_demonstrations(const ScenarioCosts& scenario, const EconParams& econ,
                                const StochasticPolicy& policy, const CollectionConfig& cfg,
                                Rng& rng, std::size_t task_id = 0);

struct TrimResult {
    Dataset data;
    double lower = 0.0;
    double upper = 0.0;
};

/// Drops floor(frac n) lowest-reward and floor(frac n) highest-reward rows.
/// Requires 0 <= frac < 0.5.
TrimResult trim_outliers(const Dataset& ds, double frac);

/// `step,reward,stock_factory,...,stock_F` with a header row.
void write_episode_csv(std::ostream& out, const std::vector<SupplyChainState>& states,
                       const std::vector<double>& rewards);

}  // namespace bers::supply
