#include <doctest.h>

#include <cmath>
#include <sstream>

#include "bers/supply_chain.hpp"
#include "oracles.hpp"

using namespace bers;
using namespace bers::supply;

namespace {

const EconParams econ{};

ActionVector random_action(Rng& rng) { return StochasticPolicy{}.sample(rng); }

}  // namespace

TEST_CASE("dimensions") {
    CHECK(node_count == 7);
    CHECK(action_dim == 44);
    CHECK(encoded_dim == 58);
}

TEST_CASE("empty network with no production earns nothing") {
    Rng rng(1);
    const ScenarioCosts sc = builtin_scenario("scenario1");
    for (int i = 0; i < 20; ++i) {
        const StepResult r = step(SupplyChainState{}, ActionVector::hold(), sc, econ, rng);
        CHECK(r.reward == 0.0);
        CHECK(r.next.total() == 0);
    }
}

TEST_CASE("full production on an empty network") {
    Rng rng(2);
    ActionVector a = ActionVector::hold();
    a.production() = 1.0;
    const StepResult r = step(SupplyChainState{}, a, builtin_scenario("scenario1"), econ, rng);
    CHECK(r.info.produced == 35);
    CHECK(r.info.production_cost == doctest::Approx(3.5));
    CHECK(r.next.stock[0] == 35);
}

TEST_CASE("nine units need three trucks") {
    Rng rng(3);
    const ScenarioCosts sc = builtin_scenario("scenario1");
    SupplyChainState s;
    s.stock[0] = 9;
    ActionVector a = ActionVector::hold();
    a.factory_share(0) = 0.0;
    a.factory_share(1) = 1.0;
    const StepResult r = step(s, a, sc, econ, rng);
    CHECK(r.info.trucks == 3);
    CHECK(r.info.transport_cost == doctest::Approx(3.0 * sc.route_cost(0, 1)));
    CHECK(sc.route_cost(0, 1) == cheap_tier);
}

TEST_CASE("invalid actions and states are rejected") {
    Rng rng(4);
    const ScenarioCosts sc = builtin_scenario("target");
    ActionVector a = ActionVector::hold();
    a.factory_share(2) = 0.5;
    CHECK_THROWS_AS(step(SupplyChainState{}, a, sc, econ, rng), InvalidAction);
    ActionVector p = ActionVector::hold();
    p.production() = 1.5;
    CHECK_THROWS_AS(step(SupplyChainState{}, p, sc, econ, rng), InvalidAction);
    SupplyChainState over;
    over.stock[3] = 51;
    CHECK_THROWS_AS(step(over, ActionVector::hold(), sc, econ, rng), InvalidAction);
}

TEST_CASE("accounting identities over random steps") {
    Rng rng(5);
    for (const std::string& name : builtin_scenario_names()) {
        const ScenarioCosts sc = builtin_scenario(name);
        SupplyChainState s = random_state(econ, rng);
        for (int t = 0; t < 2000; ++t) {
            const ActionVector a = random_action(rng);
            const StepResult r = step(s, a, sc, econ, rng);
            const StepInfo& i = r.info;
            CHECK(r.reward == i.revenue - i.production_cost - i.storage_cost - i.transport_cost);
            CHECK(r.next.total() == s.total() + i.produced - i.sold - i.overflow);
            CHECK(i.revenue == econ.price * i.sold);
            CHECK(i.storage_cost == doctest::Approx(econ.storage_cost * r.next.total()));
            for (int v : r.next.stock) {
                CHECK(v >= 0);
                CHECK(v <= econ.capacity);
            }
            s = (t % 200 == 199) ? random_state(econ, rng) : r.next;
        }
    }
}

TEST_CASE("cheap-route shipping costs ceil(m/4) cheap trucks per route") {
    Rng rng(6);
    for (const std::string& name : {"scenario1", "scenario2", "scenario3", "target"}) {
        const ScenarioCosts sc = builtin_scenario(name);
        for (const auto& [from, to] : sc.cheap_routes()) {
            for (int m = 1; m <= 20; ++m) {
                SupplyChainState s;
                s.stock[from] = m;
                ActionVector a = ActionVector::hold();
                if (from == 0) {
                    a.factory_share(0) = 0.0;
                    a.factory_share(to) = 1.0;
                } else {
                    a.warehouse_share(from - 1, from - 1) = 0.0;
                    a.warehouse_share(from - 1, to - 1) = 1.0;
                }
                const StepResult r = step(s, a, sc, econ, rng);
                CHECK(r.info.transport_cost ==
                      doctest::Approx(std::ceil(m / 4.0) * cheap_tier));
            }
        }
    }
}

TEST_CASE("scenario layouts are valid and mutually distinct") {
    const auto names = builtin_scenario_names();
    for (const auto& n : names) {
        const ScenarioCosts sc = builtin_scenario(n);
        CHECK_NOTHROW(sc.validate());
        CHECK(sc.cheap_routes().size() == 6);
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        for (std::size_t j = i + 1; j < names.size(); ++j) {
            CHECK(builtin_scenario(names[i]).cheap_routes() !=
                  builtin_scenario(names[j]).cheap_routes());
        }
    }
    CHECK_THROWS_AS(builtin_scenario("scenario9"), ConfigError);
}

TEST_CASE("scenario file round trip") {
    ScenarioCosts sc = builtin_scenario("scenario2");
    EconParams e;
    e.price = 0.75;
    e.horizon = 50;
    std::stringstream ss;
    save_scenario(ss, sc, e);
    const auto [back, be] = load_scenario(ss);
    CHECK(back.name == sc.name);
    CHECK(back.tier == sc.tier);
    CHECK(be.price == 0.75);
    CHECK(be.horizon == 50);

    std::istringstream bad(R"({"name":"x","routes":{"factory->A":0.5}})");
    CHECK_THROWS_AS(load_scenario(bad), ConfigError);
}

TEST_CASE("encoding layout") {
    SupplyChainState full;
    full.stock.fill(50);
    const ActionVector hold = ActionVector::hold();
    const Vector x = encode_sa(full, hold, full);
    CHECK(x.size() == 58);
    CHECK((x.head(7).array() == 1.0).all());
    CHECK((x.tail(7).array() == 1.0).all());
    CHECK(x.segment(7, 44) == hold.values());

    const Vector z = encode_sa(SupplyChainState{}, hold, SupplyChainState{});
    CHECK(z.head(7).norm() == 0.0);
    CHECK(z.tail(7).norm() == 0.0);
    CHECK(z.sum() == doctest::Approx(7.0));  // one keep entry per simplex block
}

TEST_CASE("policy samples are valid actions and the bias favours cheap routes") {
    Rng rng(7);
    StochasticPolicy plain;
    StochasticPolicy biased{5.0, builtin_scenario("scenario1")};
    double plain_share = 0.0;
    double biased_share = 0.0;
    for (int i = 0; i < 2000; ++i) {
        const ActionVector a = plain.sample(rng);
        CHECK_NOTHROW(a.validate());
        const ActionVector b = biased.sample(rng);
        CHECK_NOTHROW(b.validate());
        plain_share += a.factory_share(1);
        biased_share += b.factory_share(1);
    }
    CHECK(biased_share > plain_share);
}

TEST_CASE("demonstration collection") {
    const ScenarioCosts sc = builtin_scenario("scenario1");
    Rng rng(8);
    const Dataset one = generate_demonstrations(sc, econ, {}, {1, 0, 200}, rng);
    CHECK(one.size() == 1);
    CHECK(one.input_dim() == 58);

    Rng r1(9);
    const Dataset sub = generate_demonstrations(sc, econ, {}, {3000, 1000, 200}, r1);
    CHECK(sub.size() == 1000);
}

TEST_CASE("scenarios that differ only in costs share the same transitions") {
    Rng r1(10);
    Rng r2(10);
    const CollectionConfig cfg{600, 300, 100};
    const Dataset a = generate_demonstrations(builtin_scenario("scenario1"), econ, {}, cfg, r1);
    const Dataset b = generate_demonstrations(builtin_scenario("scenario3"), econ, {}, cfg, r2);
    REQUIRE(a.size() == b.size());
    std::size_t differ = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].x == b[i].x);
        differ += a[i].y != b[i].y;
    }
    CHECK(differ > 0);
}

TEST_CASE("trimming") {
    Rng rng(11);
    Dataset ds(0, 1);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int i = 0; i < 10000; ++i) {
        ds.add({Vector::Constant(1, i), u(rng)});
    }
    const TrimResult none = trim_outliers(ds, 0.0);
    CHECK(none.data.size() == 10000);
    CHECK(none.lower == ds.targets().minCoeff());
    CHECK(none.upper == ds.targets().maxCoeff());

    const TrimResult t = trim_outliers(ds, 0.025);
    CHECK(t.data.size() == 9500);
    const Vector kept = t.data.targets();
    CHECK(kept.minCoeff() == t.lower);
    CHECK(kept.maxCoeff() == t.upper);
    std::size_t below = 0;
    std::size_t above = 0;
    for (const auto& d : ds) {
        below += d.y < t.lower;
        above += d.y > t.upper;
    }
    CHECK(below == 250);
    CHECK(above == 250);

    Dataset flat(0, 1);
    for (int i = 0; i < 40; ++i) {
        flat.add({Vector::Constant(1, i), 2.0});
    }
    const TrimResult f = trim_outliers(flat, 0.1);
    CHECK(f.data.size() == 32);
    CHECK(f.lower == 2.0);
    CHECK(f.upper == 2.0);
    CHECK_THROWS(trim_outliers(ds, 0.5));
}

TEST_CASE("seeded episodes are deterministic") {
    const ScenarioCosts sc = builtin_scenario("target");
    auto run = [&](std::uint64_t seed) {
        Rng rng(seed);
        SupplyChainState s = random_state(econ, rng);
        double total = 0.0;
        for (int t = 0; t < 200; ++t) {
            const StepResult r = step(s, random_action(rng), sc, econ, rng);
            total += r.reward;
            s = r.next;
        }
        return std::make_pair(total, s.stock);
    };
    CHECK(run(12) == run(12));
}

TEST_CASE("node names") {
    CHECK(node_name(0) == "factory");
    CHECK(node_name(6) == "F");
    CHECK(parse_node("C") == 3u);
    CHECK_FALSE(parse_node("G").has_value());
}
