// convbias: command-line front end for the experiment harness.
//
//   convbias gen-curve --task cls --n 10:100:10 --trials 100 --out gen.csv
//   convbias init-study --config init.cfg --seed 7
//
// Exit status: 0 success, 1 configuration error, 2 numerical failure.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "convbias/harness.hpp"

namespace {

using namespace convbias;

struct Options {
  std::string task = "cls";
  std::size_t d = 100;
  std::size_t k = 5;
  std::string n;
  std::size_t trials = 0;
  double alpha = 0.1;
  double b = 0.1;
  std::size_t max_steps = 100000;
  std::size_t xhinge_steps = 1000;
  std::size_t snapshot_t = 150;
  std::uint64_t seed = 0;
  std::string out = "-";
  std::string format = "csv";
  std::string config;
  bool dump_weights = false;
  std::string init = "gaussian";
  bool with_fc = false;
  std::size_t threads = 0;
  double rel_tol = kDefaultMultiplicityTol;
  std::size_t w1_draws = kDefaultDegenerateDraws;
};

// Long option names a config file may set; identical to the flag names.
const std::vector<std::string> kConfigKeys = {
    "task", "d", "k", "n", "trials", "alpha", "b", "max-steps", "xhinge-steps", "snapshot-t",
    "seed", "out", "format", "dump-weights", "init", "with-fc", "threads", "rel-tol", "w1-draws"};
const std::vector<std::string> kFlagKeys = {"dump-weights", "with-fc"};

void add_shared(CLI::App* sub, Options& o) {
  sub->add_option("--task", o.task, "cls, 1stctrl, 3rdctrl or parity");
  sub->add_option("--d", o.d, "input dimension");
  sub->add_option("--k", o.k, "filter size");
  sub->add_option("--n", o.n, "training set size N or grid lo:hi:step");
  sub->add_option("--trials", o.trials, "trials per n (init-study: inits; prop1-check: w1 draws)");
  sub->add_option("--alpha", o.alpha, "step size for hinge and X-hinge");
  sub->add_option("--b", o.b, "initialisation scale");
  sub->add_option("--max-steps", o.max_steps, "hinge step budget");
  sub->add_option("--xhinge-steps", o.xhinge_steps, "X-hinge steps");
  sub->add_option("--snapshot-t", o.snapshot_t, "X-hinge snapshot step for init-study");
  sub->add_option("--seed", o.seed, "base seed");
  sub->add_option("--out", o.out, "output path, - for stdout");
  sub->add_option("--format", o.format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
  sub->add_option("--config", o.config, "key=value config file");
  sub->add_flag("--dump-weights", o.dump_weights, "write final weights next to the output");
  sub->add_option("--init", o.init, "1-layer init: gaussian, uniform or zero")
      ->check(CLI::IsMember({"gaussian", "uniform", "zero"}));
  sub->add_flag("--with-fc", o.with_fc, "also train the fully connected model");
  sub->add_option("--threads", o.threads, "worker threads (0: all cores)");
  sub->add_option("--rel-tol", o.rel_tol, "top singular value multiplicity tolerance");
  sub->add_option("--w1-draws", o.w1_draws, "filter draws in the degenerate asym branch");
}

bool is_true(const std::string& v) { return v == "1" || v == "true" || v == "yes" || v == "on"; }

// Turns config file entries into leading command-line tokens so that flags
// given on the real command line (parsed later, last one wins) override them.
std::vector<std::string> config_tokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  std::vector<std::string> tokens;
  for (const auto& [key, value] : parse_config_text(ss.str())) {
    if (std::find(kConfigKeys.begin(), kConfigKeys.end(), key) == kConfigKeys.end()) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    if (std::find(kFlagKeys.begin(), kFlagKeys.end(), key) != kFlagKeys.end()) {
      if (is_true(value)) tokens.push_back("--" + key);
      continue;
    }
    tokens.push_back("--" + key);
    tokens.push_back(value);
  }
  return tokens;
}

ExperimentSpec to_spec(const std::string& experiment, const Options& o) {
  ExperimentSpec s;
  s.experiment = parse_experiment(experiment);
  s.task = parse_task(o.task);
  s.d = o.d;
  s.k = o.k;
  if (!o.n.empty()) s.n_values = parse_n_grid(o.n);
  s.trials = o.trials;
  s.alpha = o.alpha;
  s.b = o.b;
  s.max_steps = o.max_steps;
  s.xhinge_steps = o.xhinge_steps;
  s.snapshot_t = o.snapshot_t;
  s.base_seed = o.seed;
  s.out = o.out;
  s.format = o.format == "json" ? OutputFormat::json : OutputFormat::csv;
  s.dump_weights = o.dump_weights;
  s.onelayer_init = o.init == "zero"      ? InitScheme::Kind::zero
                    : o.init == "uniform" ? InitScheme::Kind::uniform
                                          : InitScheme::Kind::gaussian;
  s.with_fc = o.with_fc;
  s.threads = o.threads;
  s.rel_tol = o.rel_tol;
  s.w1_draws = o.w1_draws;
  if (s.experiment == Experiment::parity_curve) s.task = Task::parity;
  return s;
}

std::string sidecar(const ExperimentSpec& s, const std::string& suffix) {
  if (s.out == "-") return std::string(to_string(s.experiment)) + suffix;
  return s.out + suffix;
}

void write_outputs(const ExperimentSpec& spec, const ExperimentResult& res) {
  std::ofstream file;
  std::ostream* os = &std::cout;
  if (spec.out != "-") {
    file.open(spec.out);
    if (!file) throw ConfigError("cannot open output '" + spec.out + "'");
    os = &file;
  }
  if (spec.format == OutputFormat::json) {
    write_json(*os, spec, res.rows);
  } else {
    write_csv(*os, res.rows);
  }
  if (!res.traces.empty()) {
    std::ofstream t(sidecar(spec, ".traces.csv"));
    if (!t) throw ConfigError("cannot open trace output");
    write_traces_csv(t, res.traces);
  }
  if (spec.dump_weights) {
    std::ofstream w(sidecar(spec, ".weights.csv"));
    if (!w) throw ConfigError("cannot open weights output");
    write_weights_csv(w, res.weights);
  }
}

// Position right after the subcommand name, where config tokens go.
std::size_t subcommand_index(const std::vector<std::string>& args) {
  for (std::size_t i = 1; i < args.size(); ++i)
    if (args[i].rfind("-", 0) != 0) return i;
  return args.size();
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);

  CLI::App app{"Convolutional inductive bias experiments"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  Options opts;
  const char* names[] = {"gen-curve",       "asym-vs-losses", "init-study",
                         "analysis-curves", "prop1-check",    "parity-curve"};
  for (const char* name : names) add_shared(app.add_subcommand(name), opts);

  try {
    // Find --config before the real parse so file values can be overridden.
    std::string config_path;
    for (std::size_t i = 1; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
      if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    }
    if (!config_path.empty()) {
      const auto tokens = config_tokens(config_path);
      const std::size_t at = std::min(subcommand_index(args) + 1, args.size());
      args.insert(args.begin() + static_cast<long>(at), tokens.begin(), tokens.end());
    }
    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    app.parse(std::move(rev));
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const Error& e) {
    std::cerr << "convbias: " << e.what() << '\n';
    return e.kind() == ErrorKind::configuration ? 1 : 2;
  }

  try {
    const std::string experiment = app.get_subcommands().front()->get_name();
    const ExperimentSpec spec = to_spec(experiment, opts);
    const ExperimentResult res = run_experiment(spec);
    write_outputs(spec, res);
  } catch (const OverflowError& e) {
    std::cerr << "convbias: " << e.what() << " (largest safe step " << e.advised_max_step()
              << ")\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "convbias: " << e.what() << '\n';
    return e.kind() == ErrorKind::configuration ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "convbias: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
