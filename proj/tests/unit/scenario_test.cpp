#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <set>

#include "hieradmm/errors.hpp"
#include "hieradmm/scenario.hpp"

using namespace hieradmm;

namespace {

NodeId node(std::vector<int> path) { return NodeId(std::move(path)); }

GeneratorParams small_params(std::uint64_t seed, int levels = 3) {
  GeneratorParams params;
  params.seed = seed;
  params.levels = levels;
  params.horizon = 24;
  params.dt_hours = 1.0;
  return params;
}

}  // namespace

TEST_CASE("generation is a pure function of seed and parameters") {
  Scenario a = generate(small_params(42));
  Scenario b = generate(small_params(42));
  CHECK(to_json_string(a) == to_json_string(b));

  Scenario c = generate(small_params(43));
  CHECK(to_json_string(a) != to_json_string(c));
}

TEST_CASE("generated trees respect every structural cap over a seed sweep") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    GeneratorParams params = small_params(seed, 2 + static_cast<int>(seed % 4));
    params.horizon = 4;  // structure is what matters here
    Scenario s = generate(params);

    const auto branches = s.tree.branching_nodes();
    CHECK(branches.size() <= 15);
    CHECK(s.levels() == params.levels);
    for (const NodeId& branch : branches) {
      int branch_children = 0, leaf_children = 0;
      for (const NodeId& child : s.tree.children(branch)) {
        if (s.tree.is_leaf(child)) {
          ++leaf_children;
        } else {
          ++branch_children;
        }
      }
      CHECK(branch_children <= params.max_branch_children);
      CHECK(leaf_children <= params.max_leaves_per_branch);
      CHECK(branch_children + leaf_children >= 1);
      CHECK(branch.level() <= params.levels - 2);
    }
    for (const NodeId& leaf : s.tree.leaves()) {
      CHECK(s.prosumers.count(leaf) == 1);
    }
    // Constraints sit on branching nodes only; at least the power cap each.
    std::set<NodeId> constrained;
    for (const auto& spec : s.specs) {
      CHECK(!s.tree.is_leaf(spec.branch));
      constrained.insert(spec.branch);
    }
    CHECK(constrained.size() == branches.size());
  }
}

TEST_CASE("levels=2 builds a single aggregator over leaves") {
  Scenario s = generate(small_params(7, 2));
  CHECK(s.tree.branching_nodes() == std::vector<NodeId>{NodeId::root()});
  CHECK(s.tree.depth() == 1);
}

TEST_CASE("save/load round-trip is the identity") {
  Scenario s = generate(small_params(11, 4));
  const std::string path = "roundtrip_scenario.json";
  save(s, path);
  Scenario loaded = load(path);
  CHECK(to_json_string(loaded) == to_json_string(s));
  CHECK(loaded.horizon == s.horizon);
  CHECK(loaded.constraints.size() == s.constraints.size());
  for (std::size_t k = 0; k < s.constraints.size(); ++k) {
    CHECK(loaded.constraints[k].upper == s.constraints[k].upper);
    CHECK(loaded.constraints[k].lower == s.constraints[k].lower);
    CHECK(loaded.constraints[k].weights == s.constraints[k].weights);
  }
  std::remove(path.c_str());
}

TEST_CASE("missing prosumer is reported with the leaf id") {
  Scenario s = generate(small_params(3, 2));
  const NodeId victim = s.tree.leaves().front();
  s.prosumers.erase(victim);
  const std::string id = victim.str();
  CHECK_THROWS_WITH_AS(s.finalize(), doctest::Contains(id.c_str()), ValidationError);
}

TEST_CASE("constraint on a leaf is rejected") {
  Scenario s = generate(small_params(3, 2));
  ConstraintSpec bad;
  bad.branch = s.tree.leaves().front();
  bad.kind = ConstraintKind::kPower;
  bad.upper = std::vector<double>(s.horizon, 1.0);
  s.specs.push_back(bad);
  CHECK_THROWS_AS(s.finalize(), ValidationError);
}

TEST_CASE("parse errors carry a field path") {
  CHECK_THROWS_WITH_AS(from_json_string("{\"version\": 1}"),
                       doctest::Contains("horizon"), ParseError);
  CHECK_THROWS_AS(from_json_string("not json"), ParseError);
}

TEST_CASE("scalar bounds broadcast to the horizon") {
  const char* text = R"({
    "version": 1,
    "horizon": 3,
    "dt_hours": 1.0,
    "tree": {"nodes": [
      {"id": [], "parent": null},
      {"id": [1, 1], "parent": []},
      {"id": [1, 2], "parent": []}
    ]},
    "prosumers": [
      {"id": [1, 1], "capacity_kwh": 10, "soc0_kwh": 5, "p_charge_max_kw": 3,
       "p_discharge_max_kw": 3, "price_buy": 0.25, "price_sell": 0.1,
       "p_uncontrolled": [1, 2, 3]},
      {"id": [1, 2], "capacity_kwh": 8, "soc0_kwh": 4, "p_charge_max_kw": 2,
       "p_discharge_max_kw": 2, "price_buy": 0.25, "price_sell": 0.1,
       "p_uncontrolled": 0.5}
    ],
    "constraints": [
      {"branch": [], "kind": "power", "upper": 9.5}
    ],
    "root_objective": {"target": "peak_shaving", "weight": 1.0},
    "metadata": {}
  })";
  Scenario s = from_json_string(text);
  CHECK(s.prosumers.at(node({1, 2})).p_uncontrolled ==
        std::vector<double>{0.5, 0.5, 0.5});
  REQUIRE(s.specs[0].upper.has_value());
  CHECK(*s.specs[0].upper == std::vector<double>{9.5, 9.5, 9.5});
  // Action-space cap: 9.5 minus the summed base load per step.
  CHECK(s.constraints[0].upper[0] == doctest::Approx(9.5 - 1.5));
  CHECK(s.constraints[0].upper[2] == doctest::Approx(9.5 - 3.5));
}

TEST_CASE("action-space constraints are the absolute bounds minus base load") {
  Scenario s = generate(small_params(9, 2));
  const auto& spec = s.specs[0];
  REQUIRE(spec.kind == ConstraintKind::kPower);
  const auto& built = s.constraints[0];
  std::map<NodeId, std::vector<double>> base;
  for (const auto& [leaf, weight] : built.weights) {
    base.emplace(leaf, s.prosumers.at(leaf).p_uncontrolled);
  }
  const auto shift = aggregate(built, base);
  for (int t = 0; t < s.horizon; ++t) {
    CHECK(built.upper[t] ==
          doctest::Approx((*spec.upper)[t] - shift[t]).epsilon(1e-12));
  }
}

TEST_CASE("peak shaving target is the negated uncontrolled aggregate") {
  Scenario s = generate(small_params(13, 3));
  REQUIRE(s.peak_shaving_target);
  const auto base = s.uncontrolled_root_aggregate();
  for (int t = 0; t < s.horizon; ++t) {
    CHECK(s.root_objective.target[t] == doctest::Approx(-base[t]).epsilon(1e-12));
  }
  // The tracking objective at zero actions is w * ||base||^2.
  double expected = 0;
  for (double v : base) expected += v * v;
  double base_cost = 0;
  for (const auto& [leaf, prosumer] : s.prosumers) {
    base_cost += cost(prosumer, std::vector<double>(s.horizon, 0.0));
  }
  CHECK(total_objective(s, zero_actions(s)) ==
        doctest::Approx(expected + base_cost).epsilon(1e-10));
}

TEST_CASE("generator rejects out-of-range parameters") {
  GeneratorParams params = small_params(1);
  params.levels = 6;
  CHECK_THROWS_AS(generate(params), ValidationError);
  params = small_params(1);
  params.max_leaves_per_branch = 11;
  CHECK_THROWS_AS(generate(params), ValidationError);
  params = small_params(1);
  params.price_sell = 1.0;  // above price_buy
  CHECK_THROWS_AS(generate(params), ValidationError);
}
