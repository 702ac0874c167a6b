// Command line front end. Every subcommand loads a config file, applies the
// command line overrides, runs the experiment, and prints a one line record.
#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "gac/harness.hpp"
#include "gac/version.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
  std::optional<std::string> plot;
};

void attach(CLI::App* cmd, CommonArgs& args, bool config_required) {
  auto* c = cmd->add_option("--config", args.config, "experiment config file (TOML)");
  if (config_required) c->required();
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--out", args.out, "override the output path");
  cmd->add_option("--threads", args.threads,
                  "worker threads (0 = GAC_THREADS or hardware)");
  cmd->add_option("--plot", args.plot, "also write a two column x,y file");
}

int run(const std::string& expected_kind, const CommonArgs& args) {
  gac::ExperimentConfig cfg;
  if (!args.config.empty()) {
    cfg = gac::load_config(args.config);
    if (cfg.kind != expected_kind) {
      std::fprintf(stderr, "gac: config kind '%s' does not match subcommand '%s'\n",
                   cfg.kind.c_str(), expected_kind.c_str());
      return 1;
    }
  } else {
    // Only `verify` runs without a config; defaults apply.
    gac::toml::Document doc =
        gac::toml::Document::parse_string("[experiment]\nkind = \"verify\"\n", "<builtin>");
    cfg = gac::config_from_document(std::move(doc));
  }

  gac::RunOverrides ov;
  ov.seed = args.seed;
  ov.out = args.out;
  ov.threads = args.threads;
  ov.plot = args.plot;
  const gac::RunRecord rec = gac::run_experiment(cfg, ov);

  std::fprintf(stdout, "[%s] %s", rec.kind.c_str(), rec.summary.c_str());
  if (!rec.flags.empty()) {
    std::fprintf(stdout, " flags:");
    for (const std::string& f : rec.flags) std::fprintf(stdout, " %s", f.c_str());
  }
  std::fprintf(stdout, " (%.2fs)\n", rec.wall_seconds);
  return rec.exit_code;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"group action channel toolkit"};
  app.set_version_flag("--version", std::string(gac::toolkit_version));
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* kind;
    const char* help;
    bool config_required;
  };
  const Sub subs[] = {
      {"simulate", "simulate", "draw observations and write a batch file", true},
      {"moments", "moments", "tabulate exact and empirical moment tensors", true},
      {"cutoff", "cutoff", "search for the moment order cutoff", true},
      {"divergence", "divergence-sweep", "sweep chi-square / KL divergence over sigma", true},
      {"bound", "bound-sweep", "sweep the orbit MSE lower bound", true},
      {"mle", "mle-sweep", "marginal MLE replicate sweep", true},
      {"verify", "verify", "check the built in worked examples", false},
  };

  CommonArgs args[sizeof(subs) / sizeof(subs[0])];
  CLI::App* cmds[sizeof(subs) / sizeof(subs[0])];
  for (std::size_t i = 0; i < sizeof(subs) / sizeof(subs[0]); ++i) {
    cmds[i] = app.add_subcommand(subs[i].name, subs[i].help);
    attach(cmds[i], args[i], subs[i].config_required);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  for (std::size_t i = 0; i < sizeof(subs) / sizeof(subs[0]); ++i) {
    if (cmds[i]->parsed()) {
      try {
        return run(subs[i].kind, args[i]);
      } catch (const std::exception& e) {
        std::fprintf(stderr, "gac: %s\n", e.what());
        return 1;
      }
    }
  }
  return 1;
}
