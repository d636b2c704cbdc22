#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "slq/cli.hpp"

namespace slq::cli {

namespace {

using nlohmann::json;

const std::vector<std::string> kCoefficientNames = {"a1", "a2", "b1", "b2", "q", "r", "g"};

// ---- YAML to JSON ---------------------------------------------------------

json scalar_from_yaml(const YAML::Node& node) {
  const std::string s = node.Scalar();
  if (node.Tag() == "!") return s;  // quoted
  if (s == "~" || s == "null" || s.empty()) return nullptr;
  if (s == "true" || s == "True") return true;
  if (s == "false" || s == "False") return false;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (...) {
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (...) {
  }
  return s;
}

json json_from_yaml(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Map: {
      json out = json::object();
      for (const auto& kv : node) out[kv.first.as<std::string>()] = json_from_yaml(kv.second);
      return out;
    }
    case YAML::NodeType::Sequence: {
      json out = json::array();
      for (const auto& item : node) out.push_back(json_from_yaml(item));
      return out;
    }
    case YAML::NodeType::Scalar:
      return scalar_from_yaml(node);
    default:
      return nullptr;
  }
}

// ---- validation -----------------------------------------------------------

class Validator {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& path, const std::string& what) {
    errors.push_back(path + ": " + what);
  }

  bool object(const json& j, const std::string& path, const std::set<std::string>& allowed) {
    if (!j.is_object()) {
      fail(path, "expected a mapping");
      return false;
    }
    for (const auto& [k, v] : j.items())
      if (!allowed.count(k)) fail(join(path, k), "unknown key");
    return true;
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  template <class T>
  void number(const json& parent, const std::string& path, const std::string& key, T& out,
              std::optional<double> lo = std::nullopt, std::optional<double> hi = std::nullopt,
              bool lo_strict = false) {
    if (!parent.contains(key)) return;
    const json& v = parent.at(key);
    const std::string p = join(path, key);
    if (!v.is_number()) {
      fail(p, "expected a number");
      return;
    }
    if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) {
        fail(p, "expected an integer");
        return;
      }
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
      fail(p, "must be finite");
      return;
    }
    if (lo && (lo_strict ? !(d > *lo) : !(d >= *lo))) {
      std::ostringstream os;
      os << "must be " << (lo_strict ? "> " : ">= ") << *lo;
      fail(p, os.str());
      return;
    }
    if (hi && !(d <= *hi)) {
      std::ostringstream os;
      os << "must be <= " << *hi;
      fail(p, os.str());
      return;
    }
    out = v.get<T>();
  }

  void string(const json& parent, const std::string& path, const std::string& key,
              std::string& out, const std::vector<std::string>& choices = {}) {
    if (!parent.contains(key)) return;
    const json& v = parent.at(key);
    const std::string p = join(path, key);
    if (!v.is_string()) {
      fail(p, "expected a string");
      return;
    }
    const std::string s = v.get<std::string>();
    if (!choices.empty() && std::find(choices.begin(), choices.end(), s) == choices.end()) {
      std::string list;
      for (const auto& c : choices) list += (list.empty() ? "" : ", ") + c;
      fail(p, "must be one of " + list);
      return;
    }
    out = s;
  }

  void boolean(const json& parent, const std::string& path, const std::string& key, bool& out) {
    if (!parent.contains(key)) return;
    if (!parent.at(key).is_boolean()) {
      fail(join(path, key), "expected true or false");
      return;
    }
    out = parent.at(key).get<bool>();
  }

  void string_list(const json& parent, const std::string& path, const std::string& key,
                   std::vector<std::string>& out, const std::vector<std::string>& choices) {
    if (!parent.contains(key)) return;
    const json& v = parent.at(key);
    const std::string p = join(path, key);
    if (!v.is_array()) {
      fail(p, "expected a list");
      return;
    }
    std::vector<std::string> items;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string ip = p + "[" + std::to_string(i) + "]";
      if (!v[i].is_string()) {
        fail(ip, "expected a string");
        continue;
      }
      const std::string s = v[i].get<std::string>();
      if (std::find(choices.begin(), choices.end(), s) == choices.end()) {
        fail(ip, "unknown value '" + s + "'");
        continue;
      }
      if (std::find(items.begin(), items.end(), s) == items.end()) items.push_back(s);
    }
    out = items;
  }
};

void apply_preset(const std::string& name, ProblemConfig& p) {
  p.preset = name;
  auto& c = p.coefficients;
  c = {{"a1", CoefficientConfig::constant(0.0)}, {"a2", CoefficientConfig::constant(0.0)},
       {"b1", CoefficientConfig::constant(1.0)}, {"b2", CoefficientConfig::constant(0.0)},
       {"q", CoefficientConfig::constant(0.0)},  {"r", CoefficientConfig::constant(1.0)},
       {"g", CoefficientConfig::constant(1.0)}};
  auto tanh_of_w = [](double base, double scale) {
    CoefficientConfig k = CoefficientConfig::constant(1.0);
    k.noise = "tanh_w";
    k.base = base;
    k.scale = scale;
    return k;
  };
  if (name == "heat-1d-deterministic") {
    p.dimension = 1;
    p.modes = 8;
    c["q"] = CoefficientConfig::constant(1.0);
  } else if (name == "heat-2d-deterministic") {
    p.dimension = 2;
    p.modes = 9;
    c["q"] = CoefficientConfig::constant(1.0);
  } else if (name == "heat-1d-random") {
    p.dimension = 1;
    p.modes = 4;
    c["a1"] = tanh_of_w(0.0, 0.3);
    c["a2"] = CoefficientConfig::constant(0.2);
    c["b2"] = CoefficientConfig::constant(0.5);
    c["q"] = CoefficientConfig::constant(1.0);
    c["g"] = tanh_of_w(1.0, 0.5);
  } else if (name == "scalar-benchmark") {
    p.dimension = 1;
    p.modes = 1;
    p.eigenvalues = std::vector<double>{0.0};
  } else if (name == "wonham-random") {
    p.dimension = 1;
    p.modes = 1;
    p.eigenvalues = std::vector<double>{0.0};
    c["a1"] = tanh_of_w(0.0, 0.3);
    c["a2"] = CoefficientConfig::constant(0.2);
    c["b2"] = CoefficientConfig::constant(1.0);
    c["q"] = CoefficientConfig::constant(1.0);
    c["g"] = tanh_of_w(1.0, 0.5);
  } else if (name == "null") {
    p.dimension = 1;
    p.modes = 4;
    for (const char* k : {"a1", "a2", "b1", "b2", "q", "g"}) c[k] = CoefficientConfig::constant(0.0);
  }
}

CoefficientConfig parse_coefficient(Validator& v, const json& j, const std::string& path) {
  CoefficientConfig c;
  if (j.is_number()) {
    c.c0 = j.get<double>();
    if (!std::isfinite(c.c0)) v.fail(path, "must be finite");
    return c;
  }
  if (!v.object(j, path, {"spatial", "c0", "c1", "frequency", "noise", "base", "scale"})) return c;
  v.string(j, path, "spatial", c.spatial, {"constant", "affine", "cosine"});
  v.number(j, path, "c0", c.c0);
  v.number(j, path, "c1", c.c1);
  v.number(j, path, "frequency", c.frequency, 0.0);
  v.string(j, path, "noise", c.noise,
           {"none", "affine_w", "sin_w", "cos_w", "tanh_w", "clip_w2"});
  v.number(j, path, "base", c.base);
  v.number(j, path, "scale", c.scale);
  return c;
}

}  // namespace

const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> k = {"stationarity",       "value",
                                             "optimality",         "transposition",
                                             "hlambda_transposition", "cost_decomposition"};
  return k;
}

const std::vector<std::string>& known_presets() {
  static const std::vector<std::string> k = {"custom",           "heat-1d-deterministic",
                                             "heat-2d-deterministic", "heat-1d-random",
                                             "scalar-benchmark", "wonham-random",
                                             "null"};
  return k;
}

ConfigErrors::ConfigErrors(std::vector<std::string> errors)
    : ConfigError([&] {
        std::string s = "invalid configuration:";
        for (const auto& e : errors) s += "\n  " + e;
        return s;
      }()),
      errors_(std::move(errors)) {}

ExperimentConfig config_from_json(const nlohmann::json& doc) {
  Validator v;
  ExperimentConfig cfg;
  cfg.verify.checks = known_checks();
  apply_preset("custom", cfg.problem);
  if (!v.object(doc, "", {"seed", "workers", "problem", "solver", "verify", "output"}))
    throw ConfigErrors(v.errors);

  if (doc.contains("seed")) {
    const json& s = doc.at("seed");
    if (!s.is_number_integer() || (s.is_number_integer() && s.get<long long>() < 0 &&
                                   !s.is_number_unsigned())) {
      v.fail("seed", "expected a non-negative integer");
    } else {
      cfg.seed = s.get<std::uint64_t>();
    }
  }
  v.number(doc, "", "workers", cfg.workers, 1.0);

  if (!doc.contains("problem")) {
    v.fail("problem", "missing mandatory section");
  } else {
    const json& p = doc.at("problem");
    if (v.object(p, "problem",
                 {"preset", "dimension", "modes", "horizon", "eigenvalues", "coefficients",
                  "r_min"})) {
      std::string preset = "custom";
      v.string(p, "problem", "preset", preset, known_presets());
      apply_preset(preset, cfg.problem);
      ProblemConfig& pc = cfg.problem;
      v.number(p, "problem", "dimension", pc.dimension, 1.0, 2.0);
      v.number(p, "problem", "modes", pc.modes, 1.0, 4096.0);
      v.number(p, "problem", "horizon", pc.horizon, 0.0, std::nullopt, true);
      v.number(p, "problem", "r_min", pc.r_min, 0.0, std::nullopt, true);
      if (p.contains("eigenvalues")) {
        const json& e = p.at("eigenvalues");
        if (!e.is_array() || e.empty()) {
          v.fail("problem.eigenvalues", "expected a non-empty list of numbers");
        } else {
          std::vector<double> mu;
          for (std::size_t i = 0; i < e.size(); ++i) {
            if (!e[i].is_number() || e[i].get<double>() > 0.0) {
              v.fail("problem.eigenvalues[" + std::to_string(i) + "]",
                     "expected a number <= 0");
            } else {
              mu.push_back(e[i].get<double>());
            }
          }
          pc.eigenvalues = mu;
        }
      }
      if (pc.eigenvalues) {
        if (p.contains("modes") && pc.modes != static_cast<int>(pc.eigenvalues->size()))
          v.fail("problem.modes", "conflicts with the length of problem.eigenvalues");
        pc.modes = static_cast<int>(pc.eigenvalues->size());
      }
      if (p.contains("coefficients")) {
        const json& c = p.at("coefficients");
        std::set<std::string> names(kCoefficientNames.begin(), kCoefficientNames.end());
        if (v.object(c, "problem.coefficients", names))
          for (const auto& [k, val] : c.items())
            if (names.count(k))
              pc.coefficients[k] = parse_coefficient(v, val, "problem.coefficients." + k);
      }
    }
  }

  if (doc.contains("solver")) {
    const json& s = doc.at("solver");
    if (v.object(s, "solver",
                 {"regime", "steps", "paths", "feature_degree", "tol", "max_iters"})) {
      SolverConfig& sc = cfg.solver;
      v.string(s, "solver", "regime", sc.regime, {"auto", "ode", "bsde", "fixed-point"});
      v.number(s, "solver", "steps", sc.steps, 1.0, 1e7);
      v.number(s, "solver", "paths", sc.paths, 1.0, 1e8);
      v.number(s, "solver", "feature_degree", sc.feature_degree, 0.0, 12.0);
      v.number(s, "solver", "tol", sc.tol, 0.0);
      v.number(s, "solver", "max_iters", sc.max_iters, 1.0, 1e4);
    }
  }

  if (doc.contains("verify")) {
    const json& s = doc.at("verify");
    if (v.object(s, "verify",
                 {"checks", "paths", "tolerance", "perturbations", "random_controls",
                  "stationarity_samples", "stationarity_tolerance", "fixed_point_tolerance",
                  "eta_scale"})) {
      VerifyConfig& vc = cfg.verify;
      v.string_list(s, "verify", "checks", vc.checks, known_checks());
      v.number(s, "verify", "paths", vc.paths, 2.0, 1e8);
      v.number(s, "verify", "tolerance", vc.tolerance, 0.0, std::nullopt, true);
      v.number(s, "verify", "perturbations", vc.perturbations, 1.0, 1e4);
      v.number(s, "verify", "random_controls", vc.random_controls, 0.0, 1e4);
      v.number(s, "verify", "stationarity_samples", vc.stationarity_samples, 1.0, 1e8);
      v.number(s, "verify", "stationarity_tolerance", vc.stationarity_tolerance, 0.0,
               std::nullopt, true);
      v.number(s, "verify", "fixed_point_tolerance", vc.fixed_point_tolerance, 0.0,
               std::nullopt, true);
      v.number(s, "verify", "eta_scale", vc.eta_scale);
    }
  }

  if (doc.contains("output")) {
    const json& s = doc.at("output");
    if (v.object(s, "output", {"directory", "formats", "dump_trajectories"})) {
      OutputConfig& oc = cfg.output;
      v.string(s, "output", "directory", oc.directory);
      v.string_list(s, "output", "formats", oc.formats, {"csv", "json"});
      if (s.contains("formats") && oc.formats.empty())
        v.fail("output.formats", "must name at least one format");
      v.boolean(s, "output", "dump_trajectories", oc.dump_trajectories);
    }
  }

  if (!v.errors.empty()) throw ConfigErrors(v.errors);
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  json doc;
  if (first != std::string::npos && text[first] == '{') {
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigErrors({std::string("<document>: malformed JSON: ") + e.what()});
    }
  } else {
    try {
      doc = json_from_yaml(YAML::Load(text));
    } catch (const YAML::Exception& e) {
      throw ConfigErrors({std::string("<document>: malformed YAML: ") + e.what()});
    }
  }
  return config_from_json(doc);
}

ExperimentConfig parse_config(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigErrors({"<file>: cannot read " + file.string()});
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config_text(os.str());
}

nlohmann::ordered_json canonical_config(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed ? nlohmann::ordered_json(*cfg.seed) : nlohmann::ordered_json(nullptr);
  const ProblemConfig& p = cfg.problem;
  auto& pj = j["problem"];
  pj["preset"] = p.preset;
  pj["dimension"] = p.dimension;
  pj["modes"] = p.modes;
  pj["horizon"] = p.horizon;
  pj["eigenvalues"] =
      p.eigenvalues ? nlohmann::ordered_json(*p.eigenvalues) : nlohmann::ordered_json(nullptr);
  pj["r_min"] = p.r_min;
  for (const auto& name : kCoefficientNames) {
    const CoefficientConfig& c = p.coefficients.at(name);
    auto& cj = pj["coefficients"][name];
    cj["spatial"] = c.spatial;
    cj["c0"] = c.c0;
    cj["c1"] = c.c1;
    cj["frequency"] = c.frequency;
    cj["noise"] = c.noise;
    cj["base"] = c.base;
    cj["scale"] = c.scale;
  }
  const SolverConfig& s = cfg.solver;
  j["solver"] = {{"regime", s.regime},
                 {"steps", s.steps},
                 {"paths", s.paths},
                 {"feature_degree", s.feature_degree},
                 {"tol", s.tol},
                 {"max_iters", s.max_iters}};
  const VerifyConfig& v = cfg.verify;
  j["verify"] = {{"checks", v.checks},
                 {"paths", v.paths},
                 {"tolerance", v.tolerance},
                 {"perturbations", v.perturbations},
                 {"random_controls", v.random_controls},
                 {"stationarity_samples", v.stationarity_samples},
                 {"stationarity_tolerance", v.stationarity_tolerance},
                 {"fixed_point_tolerance", v.fixed_point_tolerance},
                 {"eta_scale", v.eta_scale}};
  // The output location and worker count do not change results.
  j["output"] = {{"formats", cfg.output.formats},
                 {"dump_trajectories", cfg.output.dump_trajectories}};
  return j;
}

void apply_overrides(ExperimentConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.output.directory = *o.out;
  if (o.paths) {
    if (*o.paths < 2) throw ConfigErrors({"--paths: must be >= 2"});
    cfg.solver.paths = *o.paths;
    cfg.verify.paths = *o.paths;
  }
  if (o.steps) {
    if (*o.steps < 1) throw ConfigErrors({"--steps: must be >= 1"});
    cfg.solver.steps = *o.steps;
  }
  if (o.workers) {
    if (*o.workers < 1) throw ConfigErrors({"--workers: must be >= 1"});
    cfg.workers = *o.workers;
  }
  if (o.dump_trajectories) cfg.output.dump_trajectories = true;
}

namespace {

ParabolicCoefficient to_parabolic(const CoefficientConfig& c, int dimension,
                                  const std::string& label) {
  ParabolicCoefficient out;
  out.label = label;
  auto profile = [c](double x) {
    if (c.spatial == "affine") return c.c0 + c.c1 * x;
    if (c.spatial == "cosine") return c.c0 + c.c1 * std::cos(c.frequency * std::numbers::pi * x);
    return c.c0;
  };
  if (dimension == 2 && c.spatial != "constant") {
    out.spatial = [profile](double x, double y) { return profile(x) * profile(y); };
  } else {
    out.spatial = [profile](double x, double) { return profile(x); };
  }
  if (c.noise == "none" || c.scale == 0.0) {
    if (c.base != 1.0) {
      const double b = c.base;
      out.multiplier = [b](double, double) { return b; };
    }
    return out;
  }
  std::function<double(double)> h;
  if (c.noise == "affine_w") h = [](double w) { return w; };
  if (c.noise == "sin_w") h = [](double w) { return std::sin(w); };
  if (c.noise == "cos_w") h = [](double w) { return std::cos(w); };
  if (c.noise == "tanh_w") h = [](double w) { return std::tanh(w); };
  if (c.noise == "clip_w2") h = [](double w) { return std::clamp(w * w, 0.0, 4.0); };
  const double base = c.base, scale = c.scale;
  out.multiplier = [h, base, scale](double, double w) { return base + scale * h(w); };
  out.random = true;
  return out;
}

}  // namespace

LQProblem build_problem(const ExperimentConfig& cfg) {
  const ProblemConfig& p = cfg.problem;
  const SpectralBasis basis = p.eigenvalues ? SpectralBasis::with_eigenvalues(p.dimension, *p.eigenvalues)
                                            : SpectralBasis::build(p.dimension, p.modes);
  ParabolicSpec spec;
  spec.a1 = to_parabolic(p.coefficients.at("a1"), p.dimension, "a1");
  spec.a2 = to_parabolic(p.coefficients.at("a2"), p.dimension, "a2");
  spec.b1 = to_parabolic(p.coefficients.at("b1"), p.dimension, "b1");
  spec.b2 = to_parabolic(p.coefficients.at("b2"), p.dimension, "b2");
  spec.q = to_parabolic(p.coefficients.at("q"), p.dimension, "q");
  spec.r = to_parabolic(p.coefficients.at("r"), p.dimension, "r");
  spec.g = to_parabolic(p.coefficients.at("g"), p.dimension, "g");
  return from_parabolic_spec(spec, basis, p.horizon, cfg.solver.steps, p.r_min);
}

}  // namespace slq::cli
