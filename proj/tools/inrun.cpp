// Command-line front end. Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "inrun/checks.hpp"
#include "inrun/config.hpp"
#include "inrun/data.hpp"
#include "inrun/error.hpp"
#include "inrun/experiments.hpp"

namespace {

using namespace inrun;

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

// One line, tab-free, prefixed so scripts can grep for it.
int fail(int code, const std::string& kind, const std::string& msg) {
  std::string flat = msg;
  for (auto& c : flat)
    if (c == '\n' || c == '\t') c = ' ';
  std::cerr << "error: " << kind << ": " << flat << '\n';
  return code;
}

void print_files(const std::vector<std::string>& files) {
  for (const auto& f : files) std::cout << "wrote " << f << '\n';
}

std::string fixed(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

int run_experiment(ExperimentKind kind, const std::string& config_path) {
  const ExperimentConfig cfg = parse_config_file(config_path, &std::cerr);
  if (cfg.kind != kind)
    throw ConfigError(config_path + ": name = " + to_string(cfg.kind) + " does not match subcommand " +
                      to_string(kind));
  std::cout << "config_hash " << config_hash(cfg) << '\n';
  switch (kind) {
    case ExperimentKind::fidelity: {
      const auto r = run_fidelity(cfg);
      print_files(r.files);
      for (const auto& [m, c] : r.correlations)
        std::cout << to_string(m) << " pearson " << fixed(c.pearson_r) << " spearman " << fixed(c.spearman_rho)
                  << " n " << c.n << '\n';
      if (cfg.recheck_oracle) std::cout << "oracle recheck max gap " << r.recheck_max_gap << '\n';
      break;
    }
    case ExperimentKind::lr_sweep: {
      const auto r = run_lr_sweep(cfg);
      print_files(r.files);
      for (const auto& row : r.rows)
        std::cout << "eta " << row.eta << ' ' << to_string(row.method) << " pearson " << fixed(row.pearson) << '\n';
      break;
    }
    case ExperimentKind::optimizer_dependence: {
      const auto r = run_optimizer_dependence(cfg);
      print_files(r.files);
      for (std::size_t k = 0; k < r.triples.size(); ++k) {
        const auto& t = r.triples[k];
        std::cout << "triple " << k << " cross pearson " << fixed(t.cross.pearson_r) << " spearman "
                  << fixed(t.cross.spearman_rho) << " same pearson " << fixed(t.same_pearson) << '\n';
      }
      break;
    }
    case ExperimentKind::pruning: {
      const auto r = run_pruning(cfg);
      print_files(r.files);
      for (double ratio : cfg.prune_ratios)
        for (const char* st : {"bottom", "random", "top"})
          std::cout << "ratio " << ratio << ' ' << st << " mean_accuracy " << fixed(r.mean_accuracy(ratio, st)) << '\n';
      for (std::size_t s = 0; s < r.flipped_in_bottom.size(); ++s)
        std::cout << "seed " << s << " flipped_in_bottom20 " << fixed(r.flipped_in_bottom[s]) << '\n';
      break;
    }
    case ExperimentKind::efficiency: {
      const auto r = run_efficiency(cfg);
      print_files(r.files);
      for (const auto& row : r.rows)
        std::cout << row.mode << " B " << row.batch_size << " sps " << fixed(row.sps) << " peak_extra_bytes "
                  << row.peak_extra_bytes << '\n';
      for (const auto& [mode, f] : r.time_fits)
        std::cout << mode << " slope " << f.slope << " r2 " << fixed(f.r_squared) << '\n';
      break;
    }
    case ExperimentKind::diagnostics: {
      const auto r = run_diagnostics(cfg);
      print_files(r.files);
      std::cout << "p50 step 1 " << r.records.front().p50 << " step " << r.records.back().step << ' '
                << r.records.back().p50 << '\n';
      std::cout << "stress pearson " << fixed(r.stress.pearson_r) << " spearman " << fixed(r.stress.spearman_rho)
                << '\n';
      break;
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"In-run data attribution for SGD and Adam"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  DataSpec gen;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic two-class dataset as CSV");
  gen_cmd->add_option("--kind", gen.kind, "gaussian_mixture or xor_rings")
      ->transform(CLI::CheckedTransformer(
          std::map<std::string, DataKind>{{"gaussian_mixture", DataKind::gaussian_mixture},
                                          {"xor_rings", DataKind::xor_rings}}));
  gen_cmd->add_option("--n", gen.n, "number of rows")->capture_default_str();
  gen_cmd->add_option("--dim", gen.dim, "feature dimension")->capture_default_str();
  gen_cmd->add_option("--flip-fraction", gen.flip_fraction, "share of rows whose label is flipped")->capture_default_str();
  gen_cmd->add_option("--val-fraction", gen.val_fraction, "share of rows in the validation split")->capture_default_str();
  gen_cmd->add_option("--separation", gen.separation, "distance between class means")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
  gen_cmd->add_option("--out", gen_out, "output CSV path")->required();

  std::string config_path;
  const std::pair<const char*, ExperimentKind> experiments[] = {
      {"fidelity", ExperimentKind::fidelity},
      {"lr-sweep", ExperimentKind::lr_sweep},
      {"optimizer-dependence", ExperimentKind::optimizer_dependence},
      {"pruning", ExperimentKind::pruning},
      {"efficiency", ExperimentKind::efficiency},
      {"diagnostics", ExperimentKind::diagnostics},
  };
  std::vector<std::pair<CLI::App*, ExperimentKind>> experiment_cmds;
  for (const auto& [name, kind] : experiments) {
    auto* cmd = app.add_subcommand(name, "Run the " + std::string(name) + " experiment");
    cmd->add_option("--config", config_path, "sectioned key=value config file")->required();
    experiment_cmds.emplace_back(cmd, kind);
  }

  std::size_t check_batch = 6;
  std::uint64_t check_seed = 0;
  std::size_t check_instances = 100;
  auto* check_cmd = app.add_subcommand("oracle-check", "Run the exhaustive-Shapley and ghost-equivalence suites");
  check_cmd->add_option("--batch", check_batch, "players for the exhaustive checks (2..12)")->capture_default_str();
  check_cmd->add_option("--seed", check_seed, "seed for the random instances")->capture_default_str();
  check_cmd->add_option("--instances", check_instances, "random networks for the ghost checks")->capture_default_str();

  if (argc > 1 && argv[1][0] != '-') {
    const std::string first = argv[1];
    bool known = false;
    for (const auto* sub : app.get_subcommands({})) known = known || sub->get_name() == first;
    if (!known) {
      std::cerr << app.help();
      return fail(kUsage, "usage", "unknown subcommand '" + first + "'");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help();
    return fail(kUsage, "usage", e.what());
  }

  try {
    if (gen_cmd->parsed()) {
      const auto parent = std::filesystem::path(gen_out).parent_path();
      if (!parent.empty()) std::filesystem::create_directories(parent);
      write_csv(generate(gen), gen_out);
      std::cout << "wrote " << gen_out << '\n';
      return kOk;
    }
    if (check_cmd->parsed()) {
      bool all = true;
      for (const auto& r : run_oracle_checks(check_batch, check_seed, check_instances)) {
        all = all && r.pass;
        std::printf("%s %s observed=%.3e tol=%.0e (%s)\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.observed,
                    r.tolerance, r.detail.c_str());
      }
      return all ? kOk : kRuntime;
    }
    for (const auto& [cmd, kind] : experiment_cmds)
      if (cmd->parsed()) return run_experiment(kind, config_path);
  } catch (const ConfigError& e) {
    return fail(kUsage, "config", e.what());
  } catch (const std::exception& e) {
    return fail(kRuntime, "runtime", e.what());
  }
  return fail(kUsage, "usage", "no subcommand");
}
