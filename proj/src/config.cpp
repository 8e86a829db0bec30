#include "anderson/config.hpp"

#include <yaml-cpp/yaml.h>

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace anderson {

namespace {

struct ExperimentInfo {
  Experiment e;
  const char* name;
  const char* claim;
};

const std::array<ExperimentInfo, 16> kExperiments{{
    {Experiment::geometry_verify, "geometry-verify",
     "Separability geometry: every configuration is covered by the n^n candidate centers, and a distant cube is "
     "pre-separable from any cube whose particle cloud has small diameter"},
    {Experiment::wegner, "wegner",
     "Two-volume Wegner estimate: the spectra of two pre-separable cubes come within eps of each other with "
     "probability at most |C'||C| max_i |Pi_i C| s(F_V, 2 eps)"},
    {Experiment::cnr_pair, "cnr-pair",
     "Separable cubes fail to be simultaneously CNR at a common energy with probability at most L^{-4^N p}"},
    {Experiment::initial_scale, "initial-scale",
     "Lifshitz-tail initial scale: the lowest eigenvalue of a cube of radius L_0 stays below 2C L_0^{-1/2} with "
     "small probability"},
    {Experiment::initial_ds, "initial-ds",
     "Initial scale singularity bound: a cube whose lowest eigenvalue exceeds the gap threshold is non-singular "
     "at every energy up to E* by the Combes-Thomas estimate"},
    {Experiment::ds_estimate, "ds-estimate",
     "Double-singularity bound DS(k,n,N): two separable cubes of radius L_k are both (E,m)-singular at a common "
     "energy below E* with probability at most L_k^{-2p 4^{N-n}}"},
    {Experiment::tunnelling, "tunnelling",
     "A partially interactive cube is tunnelling with probability at most (1/2) L^{-4p 4^{N-n}}"},
    {Experiment::counts, "counts",
     "Counts of singular sub-cubes: at most kappa(n)+1 partially interactive and fewer than 2l fully interactive "
     "singular cubes of radius L_k inside a cube of radius L_{k+1}, outside an event of small probability"},
    {Experiment::lemma44_audit, "lemma44-audit",
     "A CNR cube containing no two separable singular sub-cubes is (E,m)-non-singular (deterministic radial "
     "descent)"},
    {Experiment::spectral_edge, "spectral-edge",
     "The bottom of the spectrum is 0 almost surely: restricted lowest eigenvalues are nonnegative and decrease "
     "towards 0 as the box grows"},
    {Experiment::weyl, "weyl",
     "[0, 4nd] lies in the spectrum: Weyl quasi-modes on wells of small potential have vanishing residual"},
    {Experiment::decay, "decay",
     "Exponential localization: eigenfunctions with energies below E* decay exponentially away from their "
     "centers"},
    {Experiment::dynamics, "dynamics",
     "Dynamical localization: position moments |X|^{s/2} f(H) P_I 1_K stay bounded in Hilbert-Schmidt norm "
     "uniformly in bounded f, for s < s* = 2p/alpha - Nd - 1"},
    {Experiment::kernel_decay, "kernel-decay",
     "Kernel decay: ||1_x f(H) P_I 1_y||_HS = |<x, f(H) P_I y>| decays like e^{-m L_j/2} + L_j^{-2p} across the "
     "annuli M_j"},
    {Experiment::ct_check, "ct-check",
     "Combes-Thomas estimate: |G(x,y;E)| <= 2 eta^{-1} e^{-eta |x-y|/(12 n d)} when dist(E, spectrum) >= eta "
     "in (0, 1]"},
    {Experiment::stollmann_check, "stollmann-check",
     "Diagonal monotonicity: adding t on one particle's projection raises every eigenvalue by at least t"},
}};

using FT = FieldType;
using json = nlohmann::json;

std::map<Experiment, std::vector<FieldSpec>> build_schemas() {
  std::map<Experiment, std::vector<FieldSpec>> s;
  const json null = nullptr;
  const std::vector<FieldSpec> grid{{"grid", FT::interval, null}, {"grid_step", FT::number, 0.0},
                                    {"augment", FT::boolean, true}};
  s[Experiment::geometry_verify] = {{"ns", FT::integer_list, json{1, 2, 3}}, {"Ls", FT::integer_list, json{1, 2, 3}}};
  s[Experiment::wegner] = {{"L", FT::integer, 1},
                           {"spacing", FT::integer, 3},
                           {"eps", FT::number_list, json{1e-3, 1e-2, 1e-1}}};
  s[Experiment::cnr_pair] = {{"L", FT::integer, 2},        {"spacing", FT::integer, 3},
                             {"window", FT::interval, null}, {"mirror", FT::boolean, false},
                             {"exact", FT::boolean, true},   {"samples", FT::integer, 0},
                             {"budget", FT::integer, 1000000}};
  s[Experiment::initial_scale] = {{"sizes", FT::integer_list, json{4, 8, 16}}, {"C_const", FT::number, 1.0}};
  s[Experiment::initial_ds] = {{"scan_all", FT::boolean, false},
                               {"grid_step", FT::number, 0.0},
                               {"dense_threshold", FT::integer, 3000}};
  s[Experiment::ds_estimate] = {{"levels", FT::integer_list, json{0, 1}}, {"spacing", FT::integer, 3}};
  s[Experiment::ds_estimate].insert(s[Experiment::ds_estimate].end(), grid.begin(), grid.end());
  s[Experiment::ds_estimate].push_back({"dense_threshold", FT::integer, 3000});
  s[Experiment::tunnelling] = {{"level", FT::integer, 1}, {"wells", FT::boxes, json::array()},
                               {"budget", FT::integer, 4096}, {"offset", FT::integer, null}};
  s[Experiment::tunnelling].insert(s[Experiment::tunnelling].end(), grid.begin(), grid.end());
  s[Experiment::counts] = {{"level", FT::integer, 1}, {"center_step", FT::integer, 1}, {"ell", FT::integer, 1}};
  s[Experiment::counts].insert(s[Experiment::counts].end(), grid.begin(), grid.end());
  s[Experiment::lemma44_audit] = s[Experiment::counts];
  s[Experiment::lemma44_audit].push_back({"exact", FT::boolean, true});
  s[Experiment::lemma44_audit].push_back({"samples", FT::integer, 0});
  s[Experiment::lemma44_audit].push_back({"budget", FT::integer, 1000000});
  s[Experiment::spectral_edge] = {{"box_sizes", FT::integer_list, json{50, 100, 200}},
                                  {"dense_threshold", FT::integer, 3000}};
  s[Experiment::weyl] = {{"energies", FT::number_list, null},
                         {"m_wells", FT::integer_list, json{8, 16, 32}},
                         {"k_E", FT::integer, 1},
                         {"well_eps", FT::number, null}};
  s[Experiment::decay] = {{"L", FT::integer, 200}, {"lowest_fraction", FT::number, 0.1}, {"window", FT::interval, null}};
  s[Experiment::dynamics] = {{"L", FT::integer, 25},         {"s", FT::number, 2.0},
                             {"interval", FT::interval, null}, {"K_radius", FT::integer, 1},
                             {"t_min", FT::number, 0.5},       {"t_max", FT::number, 10.0},
                             {"t_count", FT::integer, 50},     {"realizations", FT::integer, 1},
                             {"bound_tolerance", FT::number, 1e-9}};
  s[Experiment::kernel_decay] = {{"L", FT::integer, 10},
                                 {"interval", FT::interval, null},
                                 {"times", FT::number_list, json{1.0, 5.0}},
                                 {"annulus_factor", FT::number, 0.0},
                                 {"ladder_L0", FT::integer, 2},
                                 {"realizations", FT::integer, 1},
                                 {"route_tolerance", FT::number, 1e-10}};
  s[Experiment::ct_check] = {};
  s[Experiment::stollmann_check] = {{"ts", FT::number_list, json{0.1, 1.0, 10.0}}};
  return s;
}

int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

template <class T>
T scalar_as(const YAML::Node& n, const std::string& key, const char* type_name) {
  if (!n.IsScalar()) throw ConfigError("'" + key + "' must be " + type_name, line_of(n));
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("'" + key + "' must be " + type_name + ", got '" + n.Scalar() + "'", line_of(n));
  }
}

json convert_field(const YAML::Node& n, const FieldSpec& f) {
  const std::string& key = f.key;
  if (n.IsNull()) {
    if (f.fallback.is_null()) return nullptr;
    throw ConfigError("'" + key + "' may not be null", line_of(n));
  }
  switch (f.type) {
    case FT::integer:
      return scalar_as<long long>(n, key, "an integer");
    case FT::number:
      return scalar_as<double>(n, key, "a number");
    case FT::boolean:
      return scalar_as<bool>(n, key, "a boolean");
    case FT::integer_list:
    case FT::number_list: {
      if (!n.IsSequence()) throw ConfigError("'" + key + "' must be a list", line_of(n));
      json out = json::array();
      for (const auto& v : n) {
        if (f.type == FT::integer_list)
          out.push_back(scalar_as<long long>(v, key, "a list of integers"));
        else
          out.push_back(scalar_as<double>(v, key, "a list of numbers"));
      }
      return out;
    }
    case FT::interval: {
      if (!n.IsSequence() || n.size() != 2) throw ConfigError("'" + key + "' must be [lo, hi]", line_of(n));
      const double lo = scalar_as<double>(n[0], key, "a number pair");
      const double hi = scalar_as<double>(n[1], key, "a number pair");
      if (!(lo <= hi)) throw ConfigError("'" + key + "' needs lo <= hi", line_of(n));
      return json{lo, hi};
    }
    case FT::boxes: {
      if (!n.IsSequence()) throw ConfigError("'" + key + "' must be a list of {center, radius}", line_of(n));
      json out = json::array();
      for (const auto& b : n) {
        if (!b.IsMap()) throw ConfigError("'" + key + "' entries must be maps", line_of(b));
        json box = {{"center", json::array()}, {"radius", 0}};
        for (const auto& kv : b) {
          const auto k = kv.first.as<std::string>();
          if (k == "center") {
            if (!kv.second.IsSequence()) throw ConfigError("well center must be a list", line_of(kv.second));
            for (const auto& c : kv.second) box["center"].push_back(scalar_as<long long>(c, "center", "an integer"));
          } else if (k == "radius") {
            box["radius"] = scalar_as<long long>(kv.second, "radius", "an integer");
          } else {
            throw ConfigError("unknown key '" + k + "' in '" + key + "'", line_of(kv.first));
          }
        }
        out.push_back(box);
      }
      return out;
    }
  }
  return nullptr;
}

void check_keys(const YAML::Node& map, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& kv : map) {
    const auto k = kv.first.as<std::string>();
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where, line_of(kv.first));
  }
}

YAML::Node require_map(const YAML::Node& n, const std::string& key) {
  if (!n.IsMap()) throw ConfigError("'" + key + "' must be a map", line_of(n));
  return n;
}

ModelParams parse_params(const YAML::Node& node, ModelParams p) {
  if (!node) return p;
  require_map(node, "params");
  check_keys(node, {"mode", "N", "n", "d", "p", "alpha", "beta", "L0", "m", "E_star", "relaxed"}, "params");
  auto get_int = [&](const char* k, int& dst) {
    if (node[k]) dst = static_cast<int>(scalar_as<long long>(node[k], k, "an integer"));
  };
  auto get_num = [&](const char* k, double& dst) {
    if (node[k]) dst = scalar_as<double>(node[k], k, "a number");
  };
  if (node["mode"]) {
    try {
      p.mode = param_mode_from_string(scalar_as<std::string>(node["mode"], "mode", "a string"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what(), line_of(node["mode"]));
    }
  }
  get_int("N", p.N);
  get_int("n", p.n);
  get_int("d", p.d);
  get_num("p", p.p);
  get_num("alpha", p.alpha);
  get_num("beta", p.beta);
  get_int("L0", p.L0);
  if (node["relaxed"]) p.relaxed = scalar_as<bool>(node["relaxed"], "relaxed", "a boolean");
  if (p.mode == ParamMode::paper) {
    for (const char* k : {"m", "E_star"})
      if (node[k]) throw ConfigError(std::string("'") + k + "' is derived from N, d and L0 in paper mode", line_of(node[k]));
    if (p.alpha != 1.5) throw ConfigError("paper mode fixes alpha = 3/2", line_of(node["alpha"]));
    if (!p.relaxed && !(p.p > 6.0 * p.N * p.d))
      throw ConfigError("paper mode requires p > 6Nd (6Nd = " + std::to_string(6 * p.N * p.d) + ")",
                        line_of(node["p"] ? node["p"] : node));
    if (p.N >= 1 && p.d >= 1 && p.L0 >= 1) {
      p.m = paper_mass(p.N, p.d, p.L0);
      p.E_star = paper_energy_cutoff(p.N, p.d, p.m);
    }
  } else {
    get_num("m", p.m);
    get_num("E_star", p.E_star);
  }
  if (!(p.beta > 0.0 && p.beta < 1.0)) throw ConfigError("beta must lie in (0, 1)", line_of(node["beta"] ? node["beta"] : node));
  if (!(p.alpha > 1.0)) throw ConfigError("alpha must be > 1", line_of(node["alpha"] ? node["alpha"] : node));
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), line_of(node));
  }
  return p;
}

DisorderEnsemble parse_ensemble(const YAML::Node& node) {
  DisorderEnsemble e;
  if (!node) return e;
  require_map(node, "ensemble");
  if (node["kind"]) {
    try {
      e.kind = ensemble_kind_from_string(scalar_as<std::string>(node["kind"], "kind", "a string"));
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(ex.what(), line_of(node["kind"]));
    }
  }
  std::set<std::string> allowed{"kind"};
  switch (e.kind) {
    case EnsembleKind::uniform01:
      break;
    case EnsembleKind::scaled_uniform:
      allowed.insert("a");
      break;
    case EnsembleKind::smoothed_log_holder:
      allowed.insert({"C", "A"});
      break;
    case EnsembleKind::constant:
      allowed.insert("value");
      break;
  }
  check_keys(node, allowed, "ensemble of kind " + to_string(e.kind));
  if (node["a"]) e.a = scalar_as<double>(node["a"], "a", "a number");
  if (node["C"]) e.C = scalar_as<double>(node["C"], "C", "a number");
  if (node["A"]) e.A = scalar_as<double>(node["A"], "A", "a number");
  if (node["value"]) e.value = scalar_as<double>(node["value"], "value", "a number");
  try {
    e.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what(), line_of(node));
  }
  return e;
}

InteractionSpec parse_interaction(const YAML::Node& node) {
  InteractionSpec s;
  if (!node) return s;
  require_map(node, "interaction");
  check_keys(node, {"phi"}, "interaction");
  if (node["phi"]) {
    const auto v = convert_field(node["phi"], {"phi", FT::number_list, json::array()});
    for (const auto& x : v) s.phi.push_back(x.get<double>());
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what(), line_of(node));
  }
  return s;
}

json default_block(Experiment e) {
  json b = json::object();
  for (const auto& f : block_schema(e)) b[f.key] = f.fallback;
  return b;
}

// Constraints between block entries that the schema cannot express.
void check_block(Experiment e, const json& b, const ModelParams& p, int line) {
  auto positive = [&](const char* k) {
    if (b.contains(k) && !b[k].is_null() && b[k].get<double>() <= 0)
      throw ConfigError(std::string("'") + k + "' must be positive", line);
  };
  auto nonneg = [&](const char* k) {
    if (b.contains(k) && !b[k].is_null() && b[k].get<double>() < 0)
      throw ConfigError(std::string("'") + k + "' must be nonnegative", line);
  };
  for (const char* k : {"L", "spacing", "t_count", "realizations", "ladder_L0", "k_E", "center_step", "ell",
                        "dense_threshold", "budget", "offset"})
    positive(k);
  nonneg("K_radius");
  nonneg("grid_step");
  nonneg("samples");
  if (b.contains("level") && (b["level"].get<int>() < 1))
    throw ConfigError("'level' must be >= 1", line);
  if (e == Experiment::wegner)
    for (const auto& x : b["eps"])
      if (x.get<double>() <= 0) throw ConfigError("'eps' values must be positive", line);
  if (e == Experiment::decay) {
    const double f = b["lowest_fraction"].get<double>();
    if (!(f > 0 && f <= 1)) throw ConfigError("'lowest_fraction' must lie in (0, 1]", line);
  }
  if (e == Experiment::dynamics) {
    if (b["t_count"].get<int>() < 2) throw ConfigError("'t_count' must be >= 2", line);
    if (b["t_max"].get<double>() < b["t_min"].get<double>()) throw ConfigError("'t_max' must be >= 't_min'", line);
    positive("s");
    if (p.mode == ParamMode::paper && b["s"].get<double>() >= p.s_star())
      throw ConfigError("paper mode needs s < s* = " + format_number(p.s_star()), line);
  }
  if (e == Experiment::weyl && !b["energies"].is_null())
    for (const auto& x : b["energies"])
      if (x.get<double>() < 0 || x.get<double>() > 4.0 * p.n * p.d)
        throw ConfigError("weyl energies must lie in [0, 4nd]", line);
  if (e == Experiment::geometry_verify)
    for (const auto& x : b["ns"])
      if (x.get<int>() < 1 || x.get<int>() > 4) throw ConfigError("'ns' values must lie in 1..4", line);
}

void emit_value(std::ostream& os, const json& v) {
  if (v.is_null()) {
    os << "null";
  } else if (v.is_boolean()) {
    os << (v.get<bool>() ? "true" : "false");
  } else if (v.is_number_integer()) {
    os << v.get<long long>();
  } else if (v.is_number()) {
    os << format_number(v.get<double>());
  } else if (v.is_string()) {
    os << json(v.get<std::string>()).dump();
  } else if (v.is_array()) {
    os << "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) os << ", ";
      emit_value(os, v[i]);
    }
    os << "]";
  } else if (v.is_object()) {
    os << "{";
    bool first = true;
    for (const auto& [k, x] : v.items()) {
      if (!first) os << ", ";
      first = false;
      os << k << ": ";
      emit_value(os, x);
    }
    os << "}";
  }
}

}  // namespace

const std::vector<Experiment>& all_experiments() {
  static const std::vector<Experiment> all = [] {
    std::vector<Experiment> v;
    for (const auto& i : kExperiments) v.push_back(i.e);
    return v;
  }();
  return all;
}

std::string to_string(Experiment e) {
  for (const auto& i : kExperiments)
    if (i.e == e) return i.name;
  throw std::invalid_argument("unknown experiment");
}

Experiment experiment_from_string(const std::string& s) {
  for (const auto& i : kExperiments)
    if (s == i.name) return i.e;
  throw std::invalid_argument("unknown experiment '" + s + "'");
}

std::string paper_claim(Experiment e) {
  for (const auto& i : kExperiments)
    if (i.e == e) return i.claim;
  throw std::invalid_argument("unknown experiment");
}

const std::vector<FieldSpec>& block_schema(Experiment e) {
  static const auto schemas = build_schemas();
  return schemas.at(e);
}

ModelParams default_params(Experiment e) {
  ModelParams p;
  // Single-particle defaults for the experiments that diagonalize large boxes.
  if (e == Experiment::decay || e == Experiment::spectral_edge) p.n = 1;
  return p;
}

std::size_t default_trials(Experiment e) {
  switch (e) {
    case Experiment::counts: return 20;
    case Experiment::lemma44_audit: return 5;
    default: return 100;
  }
}

RunConfig RunConfig::defaults(Experiment e) {
  RunConfig c;
  c.experiment = e;
  c.trials = default_trials(e);
  c.params = default_params(e);
  c.block = default_block(e);
  return c;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  auto params_eq = [](const ModelParams& x, const ModelParams& y) {
    return x.N == y.N && x.n == y.n && x.d == y.d && x.p == y.p && x.alpha == y.alpha && x.beta == y.beta &&
           x.L0 == y.L0 && x.m == y.m && x.E_star == y.E_star && x.mode == y.mode && x.relaxed == y.relaxed;
  };
  auto ens_eq = [](const DisorderEnsemble& x, const DisorderEnsemble& y) {
    return x.kind == y.kind && x.a == y.a && x.C == y.C && x.A == y.A && x.value == y.value;
  };
  return a.schema_version == b.schema_version && a.experiment == b.experiment && params_eq(a.params, b.params) &&
         ens_eq(a.ensemble, b.ensemble) && a.interaction.phi == b.interaction.phi && a.block == b.block &&
         a.trials == b.trials && a.seed == b.seed && a.workers == b.workers && a.output_dir == b.output_dir;
}

RunConfig parse_config_string(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.msg, e.mark.line + 1);
  }
  if (!root.IsMap()) throw ConfigError("config must be a map", line_of(root));
  if (!root["schema_version"]) throw ConfigError("missing required key 'schema_version'");
  if (!root["experiment"]) throw ConfigError("missing required key 'experiment'");
  RunConfig c;
  c.schema_version = static_cast<int>(scalar_as<long long>(root["schema_version"], "schema_version", "an integer"));
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version) + " (expected " +
                          std::to_string(kSchemaVersion) + ")",
                      line_of(root["schema_version"]));
  const auto name = scalar_as<std::string>(root["experiment"], "experiment", "a string");
  try {
    c.experiment = experiment_from_string(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), line_of(root["experiment"]));
  }
  c.trials = default_trials(c.experiment);
  check_keys(root,
             {"schema_version", "experiment", "seed", "workers", "trials", "output_dir", "params", "ensemble",
              "interaction", name},
             "config");
  if (root["seed"]) c.seed = scalar_as<std::uint64_t>(root["seed"], "seed", "an unsigned 64-bit integer");
  if (root["workers"]) {
    c.workers = static_cast<int>(scalar_as<long long>(root["workers"], "workers", "an integer"));
    if (c.workers < 1) throw ConfigError("'workers' must be >= 1", line_of(root["workers"]));
  }
  if (root["trials"]) {
    const auto t = scalar_as<long long>(root["trials"], "trials", "an integer");
    if (t < 1) throw ConfigError("'trials' must be >= 1", line_of(root["trials"]));
    c.trials = static_cast<std::size_t>(t);
  }
  if (root["output_dir"]) c.output_dir = scalar_as<std::string>(root["output_dir"], "output_dir", "a string");
  c.params = parse_params(root["params"], default_params(c.experiment));
  c.ensemble = parse_ensemble(root["ensemble"]);
  c.interaction = parse_interaction(root["interaction"]);

  c.block = default_block(c.experiment);
  int block_line = 0;
  if (const auto blk = root[name]) {
    if (!blk.IsNull()) {
      require_map(blk, name);
      std::set<std::string> allowed;
      for (const auto& f : block_schema(c.experiment)) allowed.insert(f.key);
      check_keys(blk, allowed, "block '" + name + "'");
      for (const auto& f : block_schema(c.experiment))
        if (blk[f.key]) c.block[f.key] = convert_field(blk[f.key], f);
      block_line = line_of(blk);
    }
  }
  check_block(c.experiment, c.block, c.params, block_line);
  return c;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config_string(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string serialize(const RunConfig& c) {
  std::ostringstream os;
  os << "schema_version: " << c.schema_version << "\n";
  os << "experiment: " << to_string(c.experiment) << "\n";
  if (c.seed) os << "seed: " << *c.seed << "\n";
  os << "workers: " << c.workers << "\n";
  os << "trials: " << c.trials << "\n";
  os << "output_dir: " << json(c.output_dir).dump() << "\n";
  const auto& p = c.params;
  os << "params:\n";
  os << "  mode: " << to_string(p.mode) << "\n";
  os << "  N: " << p.N << "\n  n: " << p.n << "\n  d: " << p.d << "\n";
  os << "  p: " << format_number(p.p) << "\n";
  os << "  alpha: " << format_number(p.alpha) << "\n";
  os << "  beta: " << format_number(p.beta) << "\n";
  os << "  L0: " << p.L0 << "\n";
  if (p.mode == ParamMode::calibrated) {
    os << "  m: " << format_number(p.m) << "\n";
    os << "  E_star: " << format_number(p.E_star) << "\n";
  }
  os << "  relaxed: " << (p.relaxed ? "true" : "false") << "\n";
  const auto& e = c.ensemble;
  os << "ensemble:\n  kind: " << to_string(e.kind) << "\n";
  switch (e.kind) {
    case EnsembleKind::uniform01:
      break;
    case EnsembleKind::scaled_uniform:
      os << "  a: " << format_number(e.a) << "\n";
      break;
    case EnsembleKind::smoothed_log_holder:
      os << "  C: " << format_number(e.C) << "\n  A: " << format_number(e.A) << "\n";
      break;
    case EnsembleKind::constant:
      os << "  value: " << format_number(e.value) << "\n";
      break;
  }
  os << "interaction:\n  phi: ";
  emit_value(os, json(c.interaction.phi));
  os << "\n";
  const auto& schema = block_schema(c.experiment);
  if (!schema.empty()) {
    os << to_string(c.experiment) << ":\n";
    for (const auto& f : schema) {
      os << "  " << f.key << ": ";
      const json& v = c.block.contains(f.key) ? c.block[f.key] : f.fallback;
      if (f.type == FT::number && v.is_number()) {
        os << format_number(v.get<double>());
      } else if (f.type == FT::number_list && v.is_array()) {
        os << "[";
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << format_number(v[i].get<double>());
        os << "]";
      } else {
        emit_value(os, v);
      }
      os << "\n";
    }
  }
  return os.str();
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const RunConfig& c,
                           const std::function<const char*(const char*)>& getenv_fn) {
  if (flag) return *flag;
  if (c.seed) return *c.seed;
  if (const char* env = getenv_fn ? getenv_fn("ANDERSON_SEED") : nullptr) {
    std::uint64_t v = 0;
    const char* end = env + std::char_traits<char>::length(env);
    int base = 10;
    const char* start = env;
    if (end - env > 2 && env[0] == '0' && (env[1] == 'x' || env[1] == 'X')) {
      base = 16;
      start += 2;
    }
    const auto [ptr, ec] = std::from_chars(start, end, v, base);
    if (ec != std::errc() || ptr != end) throw ConfigError(std::string("ANDERSON_SEED is not an unsigned integer: '") + env + "'");
    return v;
  }
  return kDefaultSeed;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_number failed");
  return std::string(buf, ptr);
}

}  // namespace anderson
