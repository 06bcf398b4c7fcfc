#include "mrsi/pipeline/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

using namespace mrsi;
namespace fs = std::filesystem;

namespace {

struct Common
{
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::optional<std::string> out;
  std::optional<double> af;
  std::optional<std::string> pred, ref;
};

void add_common(CLI::App *cmd, Common &c, bool with_af)
{
  cmd->add_option("--config", c.config, "experiment config (JSON)")->required();
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--threads", c.threads, "worker threads (1 gives bitwise reproducible output)")
    ->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "override the output directory");
  if (with_af) {
    cmd->add_option("--af", c.af, "acceleration factor (default: trajectory.af)")->check(CLI::Range(1.0, 1e6));
  }
}

int run(std::string const &name, Common const &c)
{
  auto cfg = load_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
  }
  if (c.out) {
    cfg.output = *c.out;
  }
  set_threads(c.threads);
  fs::path const out = cfg.output;
  double const af = c.af.value_or(cfg.trajectory.af);
  log::info("{}: output '{}', {} thread(s)", name, out.string(), c.threads);

  if (name == "gen-traj") {
    pipeline::cmd_gen_traj(cfg, out);
  } else if (name == "simulate") {
    pipeline::cmd_simulate(cfg, out);
  } else if (name == "preprocess") {
    pipeline::cmd_preprocess(cfg, out);
  } else if (name == "recon-tgv") {
    pipeline::cmd_recon_tgv(cfg, out, af);
  } else if (name == "train") {
    pipeline::cmd_train(cfg, out);
  } else if (name == "recon-net") {
    pipeline::cmd_recon_net(cfg, out, af);
  } else if (name == "metrics") {
    std::optional<fs::path> pred, ref;
    if (c.pred) {
      pred = *c.pred;
    }
    if (c.ref) {
      ref = *c.ref;
    }
    auto const rows = pipeline::cmd_metrics(cfg, out, af, pred, ref);
    std::fputs(pipeline::metrics_csv(rows).c_str(), stdout);
  } else if (name == "report") {
    pipeline::cmd_report(cfg, out);
  } else if (name == "run") {
    pipeline::cmd_gen_traj(cfg, out);
    pipeline::cmd_simulate(cfg, out);
    pipeline::cmd_preprocess(cfg, out);
    pipeline::cmd_recon_tgv(cfg, out, 1.0);
    pipeline::cmd_train(cfg, out);
    pipeline::cmd_report(cfg, out);
    std::ifstream f(out / "report" / "metrics.csv");
    std::cout << f.rdbuf();
  }
  return 0;
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"ECCENTRIC MRSI simulation and reconstruction pipeline"};
  app.require_subcommand(1);
  Common c;
  struct Sub
  {
    char const *name, *help;
    bool af;
  };
  Sub const subs[] = {
    {"gen-traj", "generate the fully sampled ECCENTRIC trajectory", false},
    {"simulate", "simulate the phantom acquisition with noise", false},
    {"preprocess", "coil maps, B0, lipid mask, water and lipid removal", false},
    {"recon-tgv", "per-timepoint TGV water reconstruction (and TGV-ER if enabled)", true},
    {"train", "train the Interlacer network", false},
    {"recon-net", "network reconstruction", true},
    {"metrics", "score reconstructions against the simulated truth", true},
    {"report", "reconstruct AF 1..5 with both methods and write the report", false},
    {"run", "all stages in order, ending with the report", false},
  };
  for (auto const &s : subs) {
    auto *cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, c, s.af);
    if (std::string(s.name) == "metrics") {
      cmd->add_option("--pred", c.pred, "dataset directory to score (with --ref)");
      cmd->add_option("--ref", c.ref, "reference dataset directory");
    }
  }
  try {
    app.parse(argc, argv);
  } catch (CLI::ParseError const &e) {
    int const rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  std::string const name = app.get_subcommands().front()->get_name();
  try {
    return run(name, c);
  } catch (Error const &e) {
    log::error("{}", e.what());
    return exit_code(e.code());
  } catch (std::bad_alloc const &) {
    log::error("out of memory");
    return 4;
  } catch (std::exception const &e) {
    log::error("{}", e.what());
    return 3;
  }
}
