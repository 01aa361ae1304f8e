#include "inrun/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "inrun/error.hpp"

namespace inrun {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  if (s.back() == ',') out.emplace_back();
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double to_double(const std::string& s) {
  char* end = nullptr;
  errno = 0;
  const double x = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(x))
    throw ConfigError("expected a finite number, got '" + s + "'");
  return x;
}

std::uint64_t to_u64(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("expected a non-negative integer, got '" + s + "'");
  errno = 0;
  const auto x = std::strtoull(s.c_str(), nullptr, 10);
  if (errno == ERANGE) throw ConfigError("integer out of range: '" + s + "'");
  return x;
}

std::size_t to_size(const std::string& s) { return static_cast<std::size_t>(to_u64(s)); }

bool to_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

void require(bool ok, const std::string& what, const std::string& value) {
  if (!ok) throw ConfigError(what + " (got " + value + ")");
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& s, F&& one) {
  std::vector<T> out;
  for (const auto& item : split_list(s)) out.push_back(one(item));
  return out;
}

template <typename T, typename F>
std::string fmt_list(const std::vector<T>& xs, F&& one) {
  std::vector<std::string> items;
  for (const auto& x : xs) items.push_back(one(x));
  return join(items);
}

struct Key {
  std::string section;
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define INRUN_KEY(sec, key, setter, getter)                                                    \
  Key {                                                                                        \
    sec, key, [](ExperimentConfig& c, const std::string& v) { setter; },                       \
        [](const ExperimentConfig& c) -> std::string { return getter; }                        \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      INRUN_KEY("experiment", "name", c.kind = parse_experiment(v), to_string(c.kind)),
      INRUN_KEY("experiment", "seed", c.seed = to_u64(v), std::to_string(c.seed)),
      INRUN_KEY("experiment", "output_dir", require(!v.empty(), "must not be empty", "''"); c.output_dir = v,
                c.output_dir),
      INRUN_KEY("experiment", "score_steps", c.score_steps = to_size(v); require(c.score_steps >= 1, "must be >= 1", v),
                std::to_string(c.score_steps)),
      INRUN_KEY("experiment", "eta_grid", c.eta_grid = parse_list<double>(v, to_double);
                for (double e : c.eta_grid) require(e > 0.0, "values must be > 0", v), fmt_list(c.eta_grid, fmt_double)),
      INRUN_KEY("experiment", "arms", c.arms = parse_list<OptimizerKind>(v, parse_optimizer),
                fmt_list(c.arms, [](OptimizerKind k) { return to_string(k); })),
      INRUN_KEY("experiment", "permutations", c.permutations = to_size(v);
                require(c.permutations >= 1, "must be >= 1", v), std::to_string(c.permutations)),
      INRUN_KEY("experiment", "truncation_tol", c.truncation_tol = to_double(v), fmt_double(c.truncation_tol)),
      INRUN_KEY("experiment", "tmc_utility", c.tmc_utility = parse_tmc_utility(v), to_string(c.tmc_utility)),
      INRUN_KEY("experiment", "seeds", c.seeds = to_size(v); require(c.seeds >= 1, "must be >= 1", v),
                std::to_string(c.seeds)),
      INRUN_KEY("experiment", "prune_ratios", c.prune_ratios = parse_list<double>(v, to_double);
                for (double r : c.prune_ratios) require(r >= 0.0 && r < 1.0, "values must lie in [0, 1)", v),
                fmt_list(c.prune_ratios, fmt_double)),
      INRUN_KEY("experiment", "prune_method", c.prune_method = parse_method(v), to_string(c.prune_method)),
      INRUN_KEY("experiment", "batch_sizes", c.batch_sizes = parse_list<std::size_t>(v, to_size);
                for (auto b : c.batch_sizes) require(b >= 1, "values must be >= 1", v),
                fmt_list(c.batch_sizes, [](std::size_t b) { return std::to_string(b); })),
      INRUN_KEY("experiment", "repetitions", c.repetitions = to_size(v); require(c.repetitions >= 1, "must be >= 1", v),
                std::to_string(c.repetitions)),
      INRUN_KEY("experiment", "warmup_steps", c.warmup_steps = to_size(v), std::to_string(c.warmup_steps)),
      INRUN_KEY("experiment", "timed_steps", c.timed_steps = to_size(v); require(c.timed_steps >= 1, "must be >= 1", v),
                std::to_string(c.timed_steps)),
      INRUN_KEY("experiment", "stress_steps", c.stress_steps = to_size(v);
                require(c.stress_steps >= 1, "must be >= 1", v), std::to_string(c.stress_steps)),
      INRUN_KEY("experiment", "stress_samples", c.stress_samples = to_size(v);
                require(c.stress_samples >= 2, "must be >= 2", v), std::to_string(c.stress_samples)),
      INRUN_KEY("experiment", "recheck_oracle", c.recheck_oracle = to_bool(v), fmt_bool(c.recheck_oracle)),

      INRUN_KEY("dataset", "kind", c.data.kind = parse_data_kind(v), to_string(c.data.kind)),
      INRUN_KEY("dataset", "n", c.data.n = to_size(v); require(c.data.n >= 10, "must be >= 10", v),
                std::to_string(c.data.n)),
      INRUN_KEY("dataset", "dim", c.data.dim = to_size(v); require(c.data.dim >= 1, "must be >= 1", v),
                std::to_string(c.data.dim)),
      INRUN_KEY("dataset", "flip_fraction", c.data.flip_fraction = to_double(v);
                require(c.data.flip_fraction >= 0.0 && c.data.flip_fraction <= 0.5, "must lie in [0, 0.5]", v),
                fmt_double(c.data.flip_fraction)),
      INRUN_KEY("dataset", "val_fraction", c.data.val_fraction = to_double(v);
                require(c.data.val_fraction >= 0.0 && c.data.val_fraction < 1.0, "must lie in [0, 1)", v),
                fmt_double(c.data.val_fraction)),
      INRUN_KEY("dataset", "test_fraction", c.data.test_fraction = to_double(v);
                require(c.data.test_fraction >= 0.0 && c.data.test_fraction < 1.0, "must lie in [0, 1)", v),
                fmt_double(c.data.test_fraction)),
      INRUN_KEY("dataset", "separation", c.data.separation = to_double(v);
                require(c.data.separation >= 0.0, "must be >= 0", v), fmt_double(c.data.separation)),
      INRUN_KEY("dataset", "scale_spread", c.data.scale_spread = to_double(v);
                require(std::abs(c.data.scale_spread) <= 12.0, "must lie in [-12, 12]", v),
                fmt_double(c.data.scale_spread)),
      INRUN_KEY("dataset", "path", c.data_path = v, c.data_path),

      INRUN_KEY("model", "hidden", c.hidden = parse_list<std::size_t>(v, to_size);
                for (auto h : c.hidden) require(h >= 1, "widths must be >= 1", v),
                fmt_list(c.hidden, [](std::size_t h) { return std::to_string(h); })),
      INRUN_KEY("model", "activation", c.activation = parse_activation(v), to_string(c.activation)),
      INRUN_KEY("model", "bias", c.bias = to_bool(v), fmt_bool(c.bias)),

      INRUN_KEY("optimizer", "name", c.optimizer = parse_optimizer(v), to_string(c.optimizer)),
      INRUN_KEY("optimizer", "eta", c.eta = to_double(v); require(c.eta > 0.0, "must be > 0", v), fmt_double(c.eta)),
      INRUN_KEY("optimizer", "sgd_eta", c.sgd_eta = to_double(v); require(c.sgd_eta > 0.0, "must be > 0", v),
                fmt_double(c.sgd_eta)),
      INRUN_KEY("optimizer", "momentum", c.momentum = to_double(v);
                require(c.momentum >= 0.0 && c.momentum < 1.0, "must lie in [0, 1)", v), fmt_double(c.momentum)),
      INRUN_KEY("optimizer", "beta1", c.beta1 = to_double(v);
                require(c.beta1 >= 0.0 && c.beta1 < 1.0, "must lie in [0, 1)", v), fmt_double(c.beta1)),
      INRUN_KEY("optimizer", "beta2", c.beta2 = to_double(v);
                require(c.beta2 >= 0.0 && c.beta2 < 1.0, "must lie in [0, 1)", v), fmt_double(c.beta2)),
      INRUN_KEY("optimizer", "epsilon", c.epsilon = to_double(v); require(c.epsilon > 0.0, "must be > 0", v),
                fmt_double(c.epsilon)),
      INRUN_KEY("optimizer", "bias_correction", c.bias_correction = to_bool(v), fmt_bool(c.bias_correction)),
      INRUN_KEY("optimizer", "steps", c.steps = to_size(v); require(c.steps >= 1, "must be >= 1", v),
                std::to_string(c.steps)),
      INRUN_KEY("optimizer", "batch_size", c.batch_size = to_size(v); require(c.batch_size >= 1, "must be >= 1", v),
                std::to_string(c.batch_size)),

      INRUN_KEY("attribution", "methods", c.methods = parse_list<ScoreMethod>(v, parse_method),
                fmt_list(c.methods, [](ScoreMethod m) { return to_string(m); })),
      INRUN_KEY("attribution", "include_history", c.include_history = to_bool(v), fmt_bool(c.include_history)),
      INRUN_KEY("attribution", "val_samples", c.val_samples = to_size(v), std::to_string(c.val_samples)),
  };
  return table;
}

#undef INRUN_KEY

const char* const kSections[] = {"experiment", "dataset", "model", "optimizer", "attribution"};

}  // namespace

ExperimentConfig parse_config(std::istream& in, const std::string& name, std::ostream* log) {
  ExperimentConfig cfg;
  std::map<std::string, std::size_t> seen;  // "section.key" -> line
  std::string section;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = name + ":" + std::to_string(lineno);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const char* s : kSections) known = known || section == s;
      if (!known) throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + ": key '" + key + "' appears before any section");
    const std::string full = section + "." + key;
    const Key* match = nullptr;
    for (const auto& k : keys())
      if (k.section == section && k.name == key) match = &k;
    if (!match) throw ConfigError(where + ": unknown key '" + key + "' in [" + section + "]");
    if (seen.count(full))
      throw ConfigError(where + ": duplicate key '" + key + "' (first set on line " + std::to_string(seen[full]) + ")");
    seen[full] = lineno;
    try {
      match->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + key + ": " + e.what());
    }
  }
  if (!seen.count("experiment.name")) throw ConfigError(name + ": missing required key 'name' in [experiment]");

  const ExperimentConfig defaults;
  for (const auto& k : keys()) {
    if (seen.count(k.section + "." + k.name)) continue;
    if (log) *log << name << ": default " << k.section << "." << k.name << " = " << k.get(defaults) << '\n';
  }

  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    // validate() messages start with the offending key; point at its line when it was set.
    const std::string msg = e.what();
    const std::string key = msg.substr(0, msg.find(':'));
    for (const auto& k : keys())
      if (k.name == key && seen.count(k.section + "." + k.name))
        throw ConfigError(name + ":" + std::to_string(seen[k.section + "." + k.name]) + ": " + msg);
    throw ConfigError(name + ": " + msg);
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path, std::ostream* log) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(f, path, log);
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const char* section : kSections) {
    out += std::string("[") + section + "]\n";
    for (const auto& k : keys())
      if (k.section == section) out += k.name + " = " + k.get(cfg) + "\n";
    out += "\n";
  }
  out.pop_back();
  return out;
}

}  // namespace inrun
