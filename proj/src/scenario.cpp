#include "hieradmm/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

#include "hieradmm/errors.hpp"

namespace hieradmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = 3.14159265358979323846;

using Json = nlohmann::ordered_json;

// Deterministic draws on top of the engine's raw 64-bit output; avoids the
// implementation-defined std::*_distribution mappings.
struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}

  double uniform(double lo, double hi) {
    const double unit = static_cast<double>(engine() >> 11) * 0x1.0p-53;
    return lo + unit * (hi - lo);
  }
  int uniform_int(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(engine() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }
};

std::vector<double> broadcast(const Json& value, int horizon, const std::string& where) {
  if (value.is_number()) {
    return std::vector<double>(horizon, value.get<double>());
  }
  if (value.is_array()) {
    if (static_cast<int>(value.size()) != horizon) {
      throw ParseError(where + ": array has length " + std::to_string(value.size()) +
                       ", expected " + std::to_string(horizon));
    }
    std::vector<double> out;
    out.reserve(value.size());
    for (const auto& entry : value) {
      if (!entry.is_number()) throw ParseError(where + ": non-numeric entry");
      out.push_back(entry.get<double>());
    }
    return out;
  }
  throw ParseError(where + ": expected a number or an array");
}

Json node_to_json(const NodeId& node) {
  Json out = Json::array();
  for (int d : node.path()) out.push_back(d);
  return out;
}

NodeId node_from_json(const Json& value, const std::string& where) {
  if (!value.is_array()) throw ParseError(where + ": node id must be an integer array");
  std::vector<int> path;
  for (const auto& entry : value) {
    if (!entry.is_number_integer()) {
      throw ParseError(where + ": node id entries must be integers");
    }
    path.push_back(entry.get<int>());
  }
  try {
    return NodeId(std::move(path));
  } catch (const TreeError& err) {
    throw ParseError(where + ": " + err.what());
  }
}

}  // namespace

void GeneratorParams::validate() const {
  if (levels < 2 || levels > 5) {
    throw ValidationError("generator: levels must be in [2, 5]");
  }
  if (max_branch_children < 0 || max_branch_children > 2) {
    throw ValidationError("generator: at most 2 branching children per node");
  }
  if (min_leaves_per_branch < 1 || max_leaves_per_branch > 10 ||
      min_leaves_per_branch > max_leaves_per_branch) {
    throw ValidationError("generator: leaves per branch must stay within [1, 10]");
  }
  if (horizon < 1) throw ValidationError("generator: horizon must be positive");
  if (dt_hours <= 0) throw ValidationError("generator: dt must be positive");
  if (price_buy < price_sell) {
    throw ValidationError("generator: buy price must be >= sell price");
  }
  if (!(vmin < v0 && v0 < vmax)) {
    throw ValidationError("generator: need vmin < v0 < vmax");
  }
  if (cap_min_frac <= 0 || cap_min_frac > cap_max_frac) {
    throw ValidationError("generator: bad power cap fractions");
  }
}

void Scenario::finalize() {
  if (horizon < 1) throw ValidationError("scenario: horizon must be positive");
  if (dt_hours <= 0) throw ValidationError("scenario: dt must be positive");
  if (tree.depth() < 1) {
    throw ValidationError("scenario: tree needs at least one level below the root");
  }

  const auto leaf_nodes = tree.leaves();
  for (const NodeId& leaf : leaf_nodes) {
    auto it = prosumers.find(leaf);
    if (it == prosumers.end()) {
      throw ValidationError("scenario: no prosumer for leaf " + leaf.str());
    }
    if (it->second.id != leaf) {
      throw ValidationError("scenario: prosumer id mismatch at leaf " + leaf.str());
    }
    if (std::abs(it->second.battery.dt_hours - dt_hours) > 1e-12) {
      throw ValidationError("scenario: prosumer " + leaf.str() +
                            " uses a different step length");
    }
    it->second.validate(horizon);
  }
  for (const auto& [node, prosumer] : prosumers) {
    if (!tree.contains(node) || !tree.is_leaf(node)) {
      throw ValidationError("scenario: prosumer " + node.str() + " is not a leaf");
    }
  }

  constraints.clear();
  std::map<NodeId, int> ordinal;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    ConstraintSpec& spec = specs[k];
    const std::string where = "constraints[" + std::to_string(k) + "]";
    if (!tree.contains(spec.branch)) {
      throw ValidationError(where + ": branch " + spec.branch.str() + " not in tree");
    }
    if (tree.is_leaf(spec.branch)) {
      throw ValidationError(where + ": node " + spec.branch.str() +
                            " is a leaf, not a branching node");
    }
    const auto expected = tree.leaf_descendants(spec.branch);

    CouplingConstraint built;
    if (spec.kind == ConstraintKind::kVoltage) {
      const auto& got = spec.sens.grad_p;
      if (got.size() != expected.size()) {
        throw ValidationError(where + ": sensitivities must cover exactly the " +
                              std::to_string(expected.size()) + " leaf descendants");
      }
      built = voltage_constraint(tree, spec.branch, spec.sens, horizon);
    } else {
      if (!spec.upper && !spec.lower) {
        throw ValidationError(where + ": power constraint needs a bound");
      }
      std::map<NodeId, double> weights;
      if (spec.weights.empty()) {
        for (const NodeId& leaf : expected) weights.emplace(leaf, 1.0);
      } else {
        if (spec.weights.size() != expected.size()) {
          throw ValidationError(where + ": weights must cover exactly the " +
                                std::to_string(expected.size()) + " leaf descendants");
        }
        weights = spec.weights;
      }
      for (const NodeId& leaf : expected) {
        if (!weights.count(leaf)) {
          throw ValidationError(where + ": missing weight for leaf " + leaf.str());
        }
      }
      built.branch = spec.branch;
      built.weights = std::move(weights);
      built.upper = spec.upper ? *spec.upper : std::vector<double>(horizon, kInf);
      built.lower = spec.lower ? *spec.lower : std::vector<double>(horizon, -kInf);
      if (spec.upper && static_cast<int>(spec.upper->size()) != horizon) {
        throw ValidationError(where + ": upper bound length mismatch");
      }
      if (spec.lower && static_cast<int>(spec.lower->size()) != horizon) {
        throw ValidationError(where + ": lower bound length mismatch");
      }
      for (int t = 0; t < horizon; ++t) {
        if (built.lower[t] > built.upper[t]) {
          throw ValidationError(where + ": lower bound exceeds upper bound at step " +
                                std::to_string(t));
        }
      }
    }

    // Shift absolute bounds into battery-action space: the uncontrolled
    // contribution is constant, so v - S_B P_u bounds S_B x exactly.
    std::map<NodeId, std::vector<double>> uncontrolled;
    for (const auto& [leaf, weight] : built.weights) {
      uncontrolled.emplace(leaf, prosumers.at(leaf).p_uncontrolled);
    }
    const std::vector<double> shift = aggregate(built, uncontrolled);
    for (int t = 0; t < horizon; ++t) {
      if (built.upper[t] < kInf) built.upper[t] -= shift[t];
      if (built.lower[t] > -kInf) built.lower[t] -= shift[t];
    }
    built.id = spec.branch.str() + "#" + std::to_string(ordinal[spec.branch]++);
    constraints.push_back(std::move(built));
  }

  if (objective_weight < 0) {
    throw ValidationError("scenario: objective weight must be non-negative");
  }
  root_objective.weight = objective_weight;
  if (peak_shaving_target) {
    auto base = uncontrolled_root_aggregate();
    for (double& v : base) v = -v;
    root_objective.target = std::move(base);
  } else if (root_objective.target.empty()) {
    root_objective.target.assign(horizon, 0.0);
  } else if (static_cast<int>(root_objective.target.size()) != horizon) {
    throw ValidationError("scenario: objective target length mismatch");
  }
}

std::vector<double> Scenario::uncontrolled_root_aggregate() const {
  std::vector<double> out(horizon, 0.0);
  for (const auto& [leaf, prosumer] : prosumers) {
    for (int t = 0; t < horizon; ++t) out[t] += prosumer.p_uncontrolled[t];
  }
  return out;
}

Scenario::DisplaySeries Scenario::display_series(
    std::size_t spec_index, const std::map<NodeId, std::vector<double>>& x) const {
  if (spec_index >= specs.size()) throw ValidationError("display_series: bad index");
  const ConstraintSpec& spec = specs[spec_index];
  const CouplingConstraint& built = constraints[spec_index];

  const double offset = spec.kind == ConstraintKind::kVoltage ? spec.sens.v0 : 0.0;
  std::map<NodeId, std::vector<double>> uncontrolled;
  for (const auto& [leaf, weight] : built.weights) {
    uncontrolled.emplace(leaf, prosumers.at(leaf).p_uncontrolled);
  }
  DisplaySeries out;
  out.before = aggregate(built, uncontrolled);
  std::vector<double> action = aggregate(built, x);
  out.after = out.before;
  for (int t = 0; t < horizon; ++t) {
    out.before[t] += offset;
    out.after[t] += offset + action[t];
  }
  if (spec.kind == ConstraintKind::kVoltage) {
    out.upper.assign(horizon, spec.sens.vmax);
    out.lower.assign(horizon, spec.sens.vmin ? *spec.sens.vmin : -kInf);
  } else {
    out.upper = spec.upper ? *spec.upper : std::vector<double>(horizon, kInf);
    out.lower = spec.lower ? *spec.lower : std::vector<double>(horizon, -kInf);
  }
  return out;
}

double total_objective(const Scenario& scenario,
                       const std::map<NodeId, std::vector<double>>& x) {
  double value = 0;
  if (scenario.root_objective.weight > 0) {
    std::vector<double> agg(scenario.horizon, 0.0);
    for (const auto& [leaf, profile] : x) {
      if (!scenario.prosumers.count(leaf)) continue;
      for (int t = 0; t < scenario.horizon; ++t) agg[t] += profile[t];
    }
    for (int t = 0; t < scenario.horizon; ++t) {
      const double diff = agg[t] - scenario.root_objective.target[t];
      value += scenario.root_objective.weight * diff * diff;
    }
  }
  for (const auto& [leaf, prosumer] : scenario.prosumers) {
    value += cost(prosumer, x.at(leaf));
  }
  return value;
}

std::map<NodeId, std::vector<double>> zero_actions(const Scenario& scenario) {
  std::map<NodeId, std::vector<double>> out;
  for (const auto& [leaf, prosumer] : scenario.prosumers) {
    out.emplace(leaf, std::vector<double>(scenario.horizon, 0.0));
  }
  return out;
}

Scenario generate(const GeneratorParams& params) {
  params.validate();
  Rng rng(params.seed);

  // Tree: branching levels 0 .. levels-2, leaves hang off any branching node.
  // Each branching node draws its branching children first, then its leaf
  // count; one branch per level is forced when the draw would cut the depth
  // short.
  std::vector<NodeId> nodes{NodeId::root()};
  std::vector<NodeId> branch_frontier{NodeId::root()};
  std::vector<std::pair<NodeId, int>> leaf_plan;  // (branch, leaf count)
  for (int level = 0; level <= params.levels - 2; ++level) {
    std::vector<NodeId> next_frontier;
    std::vector<int> child_counter(branch_frontier.size(), 0);
    const bool last_branch_level = level == params.levels - 2;
    for (std::size_t i = 0; i < branch_frontier.size(); ++i) {
      const NodeId& branch = branch_frontier[i];
      int branch_children =
          last_branch_level ? 0 : rng.uniform_int(0, params.max_branch_children);
      for (int b = 0; b < branch_children; ++b) {
        NodeId child = branch.child(++child_counter[i]);
        nodes.push_back(child);
        next_frontier.push_back(child);
      }
      leaf_plan.emplace_back(branch, rng.uniform_int(params.min_leaves_per_branch,
                                                     params.max_leaves_per_branch));
    }
    if (!last_branch_level && next_frontier.empty()) {
      NodeId child = branch_frontier.front().child(++child_counter[0]);
      nodes.push_back(child);
      next_frontier.push_back(child);
    }
    // Leaf children extend the numbering after the branch children.
    for (std::size_t i = 0; i < branch_frontier.size(); ++i) {
      auto& [branch, count] = leaf_plan[leaf_plan.size() - branch_frontier.size() + i];
      for (int l = 0; l < count; ++l) nodes.push_back(branch.child(++child_counter[i]));
    }
    branch_frontier = std::move(next_frontier);
  }

  Scenario scenario;
  scenario.tree = Tree::from_nodes(nodes);
  scenario.horizon = params.horizon;
  scenario.dt_hours = params.dt_hours;

  // Prosumers in lexicographic leaf order: a smooth consumption base, a
  // midday PV bell, small noise, and a battery.
  const int horizon = params.horizon;
  for (const NodeId& leaf : scenario.tree.leaves()) {
    Prosumer prosumer;
    prosumer.id = leaf;
    const double base = rng.uniform(params.base_load_min_kw, params.base_load_max_kw);
    const double pv_peak = rng.uniform(params.pv_peak_min_kw, params.pv_peak_max_kw);
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    prosumer.p_uncontrolled.resize(horizon);
    const double sigma = horizon / 8.0;
    for (int t = 0; t < horizon; ++t) {
      const double tt = (t + 0.5) / horizon;
      const double load = base * (0.7 + 0.3 * std::sin(2.0 * kPi * tt + phase));
      const double mid = t + 0.5 - horizon / 2.0;
      const double pv = -pv_peak * std::exp(-mid * mid / (2.0 * sigma * sigma));
      const double noise = rng.uniform(-0.05, 0.05) * base;
      prosumer.p_uncontrolled[t] = load + pv + noise;
    }
    prosumer.battery.capacity_kwh =
        rng.uniform(params.capacity_min_kwh, params.capacity_max_kwh);
    const double p_max = rng.uniform(params.p_max_min_kw, params.p_max_max_kw);
    prosumer.battery.p_charge_max_kw = p_max;
    prosumer.battery.p_discharge_max_kw = p_max;
    prosumer.battery.soc0_kwh =
        rng.uniform(params.soc0_min_frac, params.soc0_max_frac) *
        prosumer.battery.capacity_kwh;
    prosumer.battery.dt_hours = params.dt_hours;
    prosumer.price_buy = params.price_buy;
    prosumer.price_sell = params.price_sell;
    scenario.prosumers.emplace(leaf, std::move(prosumer));
  }

  // Constraints per branching node: always a power cap below the uncontrolled
  // peak, plus a voltage band with probability voltage_probability. The
  // sensitivity range shrinks with the branch's leaf count so that deeper
  // aggregation levels see proportionally stiffer voltage.
  for (const NodeId& branch : scenario.tree.branching_nodes()) {
    const auto descendants = scenario.tree.leaf_descendants(branch);
    std::vector<double> agg(horizon, 0.0);
    for (const NodeId& leaf : descendants) {
      const auto& profile = scenario.prosumers.at(leaf).p_uncontrolled;
      for (int t = 0; t < horizon; ++t) agg[t] += profile[t];
    }
    const double peak = std::max(*std::max_element(agg.begin(), agg.end()),
                                 0.3 * static_cast<double>(descendants.size()));

    ConstraintSpec cap;
    cap.branch = branch;
    cap.kind = ConstraintKind::kPower;
    const double frac = rng.uniform(params.cap_min_frac, params.cap_max_frac);
    cap.upper = std::vector<double>(horizon, frac * peak);
    scenario.specs.push_back(std::move(cap));

    if (rng.bernoulli(params.voltage_probability)) {
      ConstraintSpec volt;
      volt.branch = branch;
      volt.kind = ConstraintKind::kVoltage;
      volt.sens.v0 = params.v0;
      volt.sens.vmax = params.vmax;
      volt.sens.vmin = params.vmin;
      const double scale = 3.0 / std::max<double>(3.0, descendants.size());
      for (const NodeId& leaf : descendants) {
        volt.sens.grad_p.emplace(
            leaf, scale * rng.uniform(params.grad_p_min, params.grad_p_max));
      }
      scenario.specs.push_back(std::move(volt));
    }
  }

  scenario.peak_shaving_target = true;
  scenario.objective_weight = 1.0;

  Json meta;
  meta["seed"] = params.seed;
  Json gen;
  gen["levels"] = params.levels;
  gen["max_branch_children"] = params.max_branch_children;
  gen["min_leaves_per_branch"] = params.min_leaves_per_branch;
  gen["max_leaves_per_branch"] = params.max_leaves_per_branch;
  gen["horizon"] = params.horizon;
  gen["dt_hours"] = params.dt_hours;
  gen["cap_min_frac"] = params.cap_min_frac;
  gen["cap_max_frac"] = params.cap_max_frac;
  gen["voltage_probability"] = params.voltage_probability;
  meta["generator"] = std::move(gen);
  scenario.metadata_json = meta.dump();

  scenario.finalize();
  return scenario;
}

std::string to_json_string(const Scenario& scenario) {
  Json doc;
  doc["version"] = 1;
  doc["horizon"] = scenario.horizon;
  doc["dt_hours"] = scenario.dt_hours;

  Json nodes = Json::array();
  for (const NodeId& node : scenario.tree.nodes()) {
    Json entry;
    entry["id"] = node_to_json(node);
    entry["parent"] = node.is_root() ? Json() : node_to_json(node.parent());
    nodes.push_back(std::move(entry));
  }
  doc["tree"] = Json{{"nodes", std::move(nodes)}};

  Json prosumers = Json::array();
  for (const auto& [leaf, prosumer] : scenario.prosumers) {
    Json entry;
    entry["id"] = node_to_json(leaf);
    entry["capacity_kwh"] = prosumer.battery.capacity_kwh;
    entry["soc0_kwh"] = prosumer.battery.soc0_kwh;
    entry["p_charge_max_kw"] = prosumer.battery.p_charge_max_kw;
    entry["p_discharge_max_kw"] = prosumer.battery.p_discharge_max_kw;
    entry["price_buy"] = prosumer.price_buy;
    entry["price_sell"] = prosumer.price_sell;
    entry["p_uncontrolled"] = prosumer.p_uncontrolled;
    prosumers.push_back(std::move(entry));
  }
  doc["prosumers"] = std::move(prosumers);

  Json constraints = Json::array();
  for (const ConstraintSpec& spec : scenario.specs) {
    Json entry;
    entry["branch"] = node_to_json(spec.branch);
    if (spec.kind == ConstraintKind::kPower) {
      entry["kind"] = "power";
      if (!spec.weights.empty()) {
        Json weights;
        for (const auto& [leaf, weight] : spec.weights) weights[leaf.str()] = weight;
        entry["weights"] = std::move(weights);
      }
      if (spec.upper) entry["upper"] = *spec.upper;
      if (spec.lower) entry["lower"] = *spec.lower;
    } else {
      entry["kind"] = "voltage";
      entry["v0"] = spec.sens.v0;
      entry["vmax"] = spec.sens.vmax;
      if (spec.sens.vmin) entry["vmin"] = *spec.sens.vmin;
      Json grad_p;
      for (const auto& [leaf, value] : spec.sens.grad_p) grad_p[leaf.str()] = value;
      entry["grad_p"] = std::move(grad_p);
      if (spec.sens.grad_q) {
        Json grad_q;
        for (const auto& [leaf, value] : *spec.sens.grad_q) grad_q[leaf.str()] = value;
        entry["grad_q"] = std::move(grad_q);
        if (spec.sens.tan_phi) entry["tan_phi"] = *spec.sens.tan_phi;
      }
    }
    constraints.push_back(std::move(entry));
  }
  doc["constraints"] = std::move(constraints);

  Json objective;
  if (scenario.peak_shaving_target) {
    objective["target"] = "peak_shaving";
  } else {
    objective["target"] = scenario.root_objective.target;
  }
  objective["weight"] = scenario.objective_weight;
  doc["root_objective"] = std::move(objective);
  doc["metadata"] = Json::parse(scenario.metadata_json);

  return doc.dump(2) + "\n";
}

Scenario from_json_string(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& err) {
    throw ParseError(std::string("scenario: invalid JSON: ") + err.what());
  }

  auto require = [&](const Json& obj, const char* field, const std::string& where) -> const Json& {
    if (!obj.contains(field)) throw ParseError(where + ": missing field '" + field + "'");
    return obj.at(field);
  };

  Scenario scenario;
  if (require(doc, "version", "scenario").get<int>() != 1) {
    throw ParseError("scenario: unsupported version");
  }
  scenario.horizon = require(doc, "horizon", "scenario").get<int>();
  scenario.dt_hours = require(doc, "dt_hours", "scenario").get<double>();
  if (scenario.horizon < 1) throw ParseError("scenario: horizon must be positive");

  std::vector<NodeId> nodes;
  const Json& tree = require(doc, "tree", "scenario");
  for (const Json& entry : require(tree, "nodes", "tree")) {
    NodeId node = node_from_json(require(entry, "id", "tree.nodes"), "tree.nodes");
    const Json& parent = require(entry, "parent", "tree.nodes");
    if (node.is_root()) {
      if (!parent.is_null()) throw ParseError("tree.nodes: root must have null parent");
    } else {
      if (node_from_json(parent, "tree.nodes") != node.parent()) {
        throw ParseError("tree.nodes: parent of " + node.str() +
                         " does not match its path");
      }
    }
    nodes.push_back(std::move(node));
  }
  try {
    scenario.tree = Tree::from_nodes(std::move(nodes));
  } catch (const TreeError& err) {
    throw ParseError(std::string("tree: ") + err.what());
  }

  for (const Json& entry : require(doc, "prosumers", "scenario")) {
    Prosumer prosumer;
    prosumer.id = node_from_json(require(entry, "id", "prosumers"), "prosumers");
    const std::string where = "prosumers[" + prosumer.id.str() + "]";
    prosumer.battery.capacity_kwh = require(entry, "capacity_kwh", where).get<double>();
    prosumer.battery.soc0_kwh = require(entry, "soc0_kwh", where).get<double>();
    prosumer.battery.p_charge_max_kw =
        require(entry, "p_charge_max_kw", where).get<double>();
    prosumer.battery.p_discharge_max_kw =
        require(entry, "p_discharge_max_kw", where).get<double>();
    prosumer.battery.dt_hours = scenario.dt_hours;
    prosumer.price_buy = require(entry, "price_buy", where).get<double>();
    prosumer.price_sell = require(entry, "price_sell", where).get<double>();
    prosumer.p_uncontrolled =
        broadcast(require(entry, "p_uncontrolled", where), scenario.horizon,
                  where + ".p_uncontrolled");
    NodeId id = prosumer.id;
    if (scenario.prosumers.count(id)) {
      throw ParseError(where + ": duplicate prosumer");
    }
    scenario.prosumers.emplace(id, std::move(prosumer));
  }

  for (const Json& entry : require(doc, "constraints", "scenario")) {
    const std::string where = "constraints[" + std::to_string(scenario.specs.size()) + "]";
    ConstraintSpec spec;
    spec.branch = node_from_json(require(entry, "branch", where), where);
    const std::string kind = require(entry, "kind", where).get<std::string>();
    if (kind == "power") {
      spec.kind = ConstraintKind::kPower;
      if (entry.contains("weights")) {
        for (const auto& [key, value] : entry.at("weights").items()) {
          spec.weights.emplace(NodeId::parse(key), value.get<double>());
        }
      }
      if (entry.contains("upper")) {
        spec.upper = broadcast(entry.at("upper"), scenario.horizon, where + ".upper");
      }
      if (entry.contains("lower")) {
        spec.lower = broadcast(entry.at("lower"), scenario.horizon, where + ".lower");
      }
    } else if (kind == "voltage") {
      spec.kind = ConstraintKind::kVoltage;
      spec.sens.v0 = require(entry, "v0", where).get<double>();
      spec.sens.vmax = require(entry, "vmax", where).get<double>();
      if (entry.contains("vmin")) spec.sens.vmin = entry.at("vmin").get<double>();
      for (const auto& [key, value] : require(entry, "grad_p", where).items()) {
        spec.sens.grad_p.emplace(NodeId::parse(key), value.get<double>());
      }
      if (entry.contains("grad_q")) {
        std::map<NodeId, double> grad_q;
        for (const auto& [key, value] : entry.at("grad_q").items()) {
          grad_q.emplace(NodeId::parse(key), value.get<double>());
        }
        spec.sens.grad_q = std::move(grad_q);
        if (entry.contains("tan_phi")) spec.sens.tan_phi = entry.at("tan_phi").get<double>();
      }
    } else {
      throw ParseError(where + ": unknown kind '" + kind + "'");
    }
    scenario.specs.push_back(std::move(spec));
  }

  const Json& objective = require(doc, "root_objective", "scenario");
  const Json& target = require(objective, "target", "root_objective");
  if (target.is_string()) {
    if (target.get<std::string>() != "peak_shaving") {
      throw ParseError("root_objective: unknown target keyword");
    }
    scenario.peak_shaving_target = true;
  } else {
    scenario.root_objective.target =
        broadcast(target, scenario.horizon, "root_objective.target");
  }
  scenario.objective_weight = require(objective, "weight", "root_objective").get<double>();
  scenario.metadata_json = doc.contains("metadata") ? doc.at("metadata").dump() : "{}";

  try {
    scenario.finalize();
  } catch (const ValidationError&) {
    throw;
  }
  return scenario;
}

void save(const Scenario& scenario, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << to_json_string(scenario);
  if (!out) throw Error("failed writing " + path);
}

Scenario load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_json_string(buffer.str());
}

}  // namespace hieradmm
