#include "platoon/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace platoon {

namespace {

class Reader {
 public:
  explicit Reader(std::string origin) : origin_(std::move(origin)) {}

  [[noreturn]] void fail(const YAML::Node& n, const std::string& what) const {
    std::ostringstream os;
    os << origin_;
    if (n.IsDefined() && n.Mark().line >= 0) os << ':' << n.Mark().line + 1;
    os << ": " << what;
    throw ScenarioError(os.str());
  }

  double real(const YAML::Node& n, const std::string& field) const {
    try {
      return n.as<double>();
    } catch (const YAML::Exception&) {
      fail(n, "field '" + field + "' must be a number");
    }
  }

  bool boolean(const YAML::Node& n, const std::string& field) const {
    try {
      return n.as<bool>();
    } catch (const YAML::Exception&) {
      fail(n, "field '" + field + "' must be true or false");
    }
  }

  std::string text(const YAML::Node& n, const std::string& field) const {
    if (!n.IsScalar()) fail(n, "field '" + field + "' must be a string");
    return n.as<std::string>();
  }

  Interval interval(const YAML::Node& n, const std::string& field) const {
    if (!n.IsSequence() || n.size() != 2) fail(n, "field '" + field + "' must be a pair [lo, hi]");
    const Interval i{real(n[0], field), real(n[1], field)};
    if (!i.valid()) fail(n, "field '" + field + "' has lo > hi");
    return i;
  }

  // Rejects keys outside `known`, which catches typos early.
  void keys(const YAML::Node& map, const std::string& section, std::initializer_list<const char*> known) const {
    if (!map.IsMap()) fail(map, "section '" + section + "' must be a mapping");
    for (const auto& kv : map) {
      const std::string k = kv.first.as<std::string>();
      if (std::none_of(known.begin(), known.end(), [&](const char* s) { return k == s; }))
        fail(kv.first, "unknown field '" + section + "." + k + "'");
    }
  }

 private:
  std::string origin_;
};

VehicleParams params_from(const Reader& r, const YAML::Node& n, const std::string& where) {
  VehicleParams p = presets::p0();
  if (n["preset"]) {
    const auto preset = presets::by_name(r.text(n["preset"], where + ".preset"));
    if (!preset) r.fail(n["preset"], "unknown preset '" + n["preset"].as<std::string>() + "'");
    p = *preset;
  }
  if (const auto o = n["overrides"]) {
    r.keys(o, where + ".overrides", {"a_dec", "a_acc", "v_max", "mass", "drag_coeff", "frontal_area", "length"});
    if (o["a_dec"]) p.a_dec = r.real(o["a_dec"], "a_dec");
    if (o["a_acc"]) p.a_acc = r.real(o["a_acc"], "a_acc");
    if (o["v_max"]) p.v_max = r.real(o["v_max"], "v_max");
    if (o["mass"]) p.mass = r.real(o["mass"], "mass");
    if (o["drag_coeff"]) p.drag_coeff = r.real(o["drag_coeff"], "drag_coeff");
    if (o["frontal_area"]) p.frontal_area = r.real(o["frontal_area"], "frontal_area");
    if (o["length"]) p.length = r.real(o["length"], "length");
  }
  try {
    validate(p);
  } catch (const std::invalid_argument& e) {
    r.fail(n, where + ": " + e.what());
  }
  return p;
}

}  // namespace

void validate(const Scenario& sc) {
  try {
    validate(sc.env);
    validate(sc.channel);
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(e.what());
  }
  if (sc.duration <= 0.0) throw ScenarioError("duration must be positive");
  if (sc.vehicles.empty()) throw ScenarioError("vehicles must not be empty");
  std::set<std::string> names;
  for (const auto& v : sc.vehicles) {
    if (!names.insert(v.name).second) throw ScenarioError("duplicate vehicle name '" + v.name + "'");
    if (v.init.v < 0.0 || v.init.v > v.params.v_max)
      throw ScenarioError("vehicle '" + v.name + "': initial speed outside [0, v_max]");
  }
  std::vector<const VehicleSpec*> order;
  for (const auto& v : sc.vehicles) order.push_back(&v);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->init.s > b->init.s; });
  for (std::size_t i = 1; i < order.size(); ++i)
    if (order[i]->init.s >= order[i - 1]->init.s - order[i - 1]->params.length)
      throw ScenarioError("vehicles '" + order[i - 1]->name + "' and '" + order[i]->name + "' overlap initially");
  for (const auto& e : sc.events) {
    if (e.t < 0.0) throw ScenarioError("event time must be non-negative");
    if (e.type == EventType::CutIn) {
      if (!names.insert(e.vehicle).second) throw ScenarioError("duplicate vehicle name '" + e.vehicle + "'");
      if (!names.count(e.ahead_of)) throw ScenarioError("cut_in.ahead_of names unknown vehicle '" + e.ahead_of + "'");
      if (e.gap < 0.0) throw ScenarioError("cut_in.gap must be non-negative");
    } else if (!names.count(e.vehicle)) {
      throw ScenarioError("event names unknown vehicle '" + e.vehicle + "'");
    }
  }
}

Scenario parse_scenario(const std::string& yaml_text, const std::string& origin) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::ParserException& e) {
    throw ScenarioError(origin + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  const Reader r(origin);
  if (!root.IsMap()) throw ScenarioError(origin + ": top level must be a mapping");
  r.keys(root, "scenario",
         {"version", "duration", "seed", "env", "road", "noise", "channel", "controller", "consensus", "logging",
          "vehicles", "events"});
  if (!root["version"]) throw ScenarioError(origin + ": missing field 'version'");
  if (root["version"].as<std::string>() != "1") r.fail(root["version"], "unsupported version (expected 1)");

  Scenario sc;
  if (root["duration"]) sc.duration = r.real(root["duration"], "duration");
  if (root["seed"]) sc.seed = root["seed"].as<std::uint64_t>();

  if (const auto e = root["env"]) {
    r.keys(e, "env", {"rho", "v_wind", "alpha", "g", "w", "s_sensor", "t_clear", "a_dec_cutin", "dt_p"});
    if (e["rho"]) sc.env.rho = r.interval(e["rho"], "env.rho");
    if (e["v_wind"]) sc.env.v_wind = r.interval(e["v_wind"], "env.v_wind");
    if (e["alpha"]) sc.env.alpha = r.interval(e["alpha"], "env.alpha");
    if (e["g"]) sc.env.g = r.real(e["g"], "env.g");
    if (e["w"]) sc.env.w = r.interval(e["w"], "env.w");
    if (e["s_sensor"]) sc.env.s_sensor = r.real(e["s_sensor"], "env.s_sensor");
    if (e["t_clear"]) sc.env.t_clear = r.real(e["t_clear"], "env.t_clear");
    if (e["a_dec_cutin"]) sc.env.a_dec_cutin = r.real(e["a_dec_cutin"], "env.a_dec_cutin");
    if (e["dt_p"]) sc.env.dt_p = r.real(e["dt_p"], "env.dt_p");
    try {
      validate(sc.env);
    } catch (const std::invalid_argument& ex) {
      r.fail(e, std::string("env: ") + ex.what());
    }
  }
  if (const auto d = root["road"]) {
    r.keys(d, "road", {"rho", "v_wind", "alpha", "incline_profile", "route_aware"});
    if (d["rho"]) sc.road.rho = r.real(d["rho"], "road.rho");
    if (d["v_wind"]) sc.road.v_wind = r.real(d["v_wind"], "road.v_wind");
    if (d["alpha"]) sc.road.alpha = r.real(d["alpha"], "road.alpha");
    if (d["route_aware"]) sc.road.route_aware = r.boolean(d["route_aware"], "road.route_aware");
    if (const auto p = d["incline_profile"]) {
      if (!p.IsSequence() || p.size() == 0) r.fail(p, "road.incline_profile must be a list of [s, alpha] pairs");
      std::vector<std::pair<double, double>> pts;
      for (const auto& q : p) {
        if (!q.IsSequence() || q.size() != 2) r.fail(q, "road.incline_profile entries must be [s, alpha]");
        pts.emplace_back(r.real(q[0], "road.incline_profile"), r.real(q[1], "road.incline_profile"));
      }
      try {
        InclineProfile check(pts);
      } catch (const std::invalid_argument& ex) {
        r.fail(p, std::string("road.incline_profile: ") + ex.what());
      }
      for (const auto& [s, a] : pts)
        if (!sc.env.alpha.contains(a)) r.fail(p, "road.incline_profile leaves the env.alpha interval");
      sc.road.incline_profile = pts;
    }
    if (sc.road.rho && !sc.env.rho.contains(*sc.road.rho)) r.fail(d["rho"], "road.rho outside env.rho");
    if (sc.road.v_wind && !sc.env.v_wind.contains(*sc.road.v_wind))
      r.fail(d["v_wind"], "road.v_wind outside env.v_wind");
    if (!sc.env.alpha.contains(sc.road.alpha)) r.fail(d, "road.alpha outside env.alpha");
  }
  if (const auto n = root["noise"]) {
    r.keys(n, "noise", {"position_width", "velocity_width"});
    if (n["position_width"]) sc.noise.position_width = r.real(n["position_width"], "noise.position_width");
    if (n["velocity_width"]) sc.noise.velocity_width = r.real(n["velocity_width"], "noise.velocity_width");
    if (sc.noise.position_width < 0.0 || sc.noise.velocity_width < 0.0) r.fail(n, "noise widths must be >= 0");
  }
  if (const auto c = root["channel"]) {
    r.keys(c, "channel", {"drop", "delay", "duplicate", "seed"});
    if (c["drop"]) sc.channel.drop_prob = r.real(c["drop"], "channel.drop");
    if (c["duplicate"]) sc.channel.duplicate_prob = r.real(c["duplicate"], "channel.duplicate");
    if (c["delay"]) {
      const Interval d = r.interval(c["delay"], "channel.delay");
      sc.channel.delay_min = static_cast<int>(d.lo);
      sc.channel.delay_max = static_cast<int>(d.hi);
    }
    if (c["seed"]) {
      sc.channel.seed = c["seed"].as<std::uint64_t>();
      sc.channel_seed_set = true;
    }
    try {
      validate(sc.channel);
    } catch (const std::invalid_argument& ex) {
      r.fail(c, std::string("channel: ") + ex.what());
    }
  }
  if (const auto c = root["controller"]) {
    r.keys(c, "controller", {"k_p", "k_d", "headway", "d_standstill"});
    if (c["k_p"]) sc.controller.k_p = r.real(c["k_p"], "controller.k_p");
    if (c["k_d"]) sc.controller.k_d = r.real(c["k_d"], "controller.k_d");
    if (c["headway"]) sc.controller.headway = r.real(c["headway"], "controller.headway");
    if (c["d_standstill"]) sc.controller.d_standstill = r.real(c["d_standstill"], "controller.d_standstill");
    if (sc.controller.headway <= 0.0) r.fail(c["headway"], "controller.headway must be positive");
  }
  if (const auto c = root["consensus"]) {
    r.keys(c, "consensus", {"enabled"});
    if (c["enabled"]) sc.consensus = r.boolean(c["enabled"], "consensus.enabled");
  }
  if (const auto l = root["logging"]) {
    r.keys(l, "logging", {"safe_distance"});
    if (l["safe_distance"]) sc.log_safe_distance = r.boolean(l["safe_distance"], "logging.safe_distance");
  }

  const auto vs = root["vehicles"];
  if (!vs || !vs.IsSequence() || vs.size() == 0) r.fail(root, "field 'vehicles' must be a non-empty list");
  for (const auto& v : vs) {
    r.keys(v, "vehicles[]", {"name", "preset", "overrides", "s", "v", "member", "target"});
    VehicleSpec spec;
    if (!v["name"]) r.fail(v, "vehicle is missing field 'name'");
    spec.name = r.text(v["name"], "name");
    spec.params = params_from(r, v, "vehicle '" + spec.name + "'");
    if (!v["s"]) r.fail(v, "vehicle '" + spec.name + "' is missing field 's'");
    spec.init.s = r.real(v["s"], "s");
    if (v["v"]) spec.init.v = r.real(v["v"], "v");
    if (v["member"]) spec.member = r.boolean(v["member"], "member");
    spec.target_speed = v["target"] ? r.real(v["target"], "target") : spec.init.v;
    sc.vehicles.push_back(spec);
  }

  if (const auto es = root["events"]) {
    if (!es.IsSequence()) r.fail(es, "field 'events' must be a list");
    for (const auto& e : es) {
      r.keys(e, "events[]", {"t", "type", "vehicle", "v", "a", "ahead_of", "gap", "preset", "overrides", "name"});
      Event ev;
      if (!e["t"]) r.fail(e, "event is missing field 't'");
      ev.t = r.real(e["t"], "t");
      if (!e["type"]) r.fail(e, "event is missing field 'type'");
      const std::string type = r.text(e["type"], "type");
      if (type == "full_brake") ev.type = EventType::FullBrake;
      else if (type == "depart") ev.type = EventType::Depart;
      else if (type == "cut_in") ev.type = EventType::CutIn;
      else if (type == "set_target") ev.type = EventType::SetTarget;
      else if (type == "hold_accel") ev.type = EventType::HoldAccel;
      else r.fail(e["type"], "unknown event type '" + type + "'");

      if (ev.type == EventType::CutIn) {
        if (!e["name"] || !e["ahead_of"] || !e["gap"] || !e["v"])
          r.fail(e, "cut_in needs 'name', 'ahead_of', 'gap' and 'v'");
        ev.vehicle = r.text(e["name"], "name");
        ev.ahead_of = r.text(e["ahead_of"], "ahead_of");
        ev.gap = r.real(e["gap"], "gap");
        ev.v = r.real(e["v"], "v");
        ev.params = params_from(r, e, "cut_in '" + ev.vehicle + "'");
      } else {
        if (!e["vehicle"]) r.fail(e, "event is missing field 'vehicle'");
        ev.vehicle = r.text(e["vehicle"], "vehicle");
        if (ev.type == EventType::SetTarget) {
          if (!e["v"]) r.fail(e, "set_target needs 'v'");
          ev.value = r.real(e["v"], "v");
        }
        if (ev.type == EventType::HoldAccel) {
          if (!e["a"]) r.fail(e, "hold_accel needs 'a'");
          ev.value = r.real(e["a"], "a");
        }
      }
      sc.events.push_back(ev);
    }
  }
  try {
    validate(sc);
  } catch (const ScenarioError& ex) {
    throw ScenarioError(origin + ": " + ex.what());
  }
  return sc;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path);
}

}  // namespace platoon
