#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ibn/runner.hpp"

// ibnforge: seeded experiment runner.  Modes: validate, pretrain-hdt,
// train, eval, export-figs.  Artifacts land under --out.

namespace {

void add_common(CLI::App* cmd, ibn::run::CliArgs* a, bool* seed_set,
                bool* episodes_set) {
  cmd->add_option("--config", a->config_path,
                  "JSON config file (defaults used when omitted)");
  cmd->add_option("--out", a->out_dir, "output directory")
      ->capture_default_str();
  cmd->add_option("--seed", a->seed, "root seed (overrides the config)")
      ->each([seed_set](const std::string&) { *seed_set = true; });
  cmd->add_option("--episodes", a->episodes,
                  "episode count (overrides the config)")
      ->each([episodes_set](const std::string&) { *episodes_set = true; });
  cmd->add_option("--parallel", a->parallel,
                  "BLAS thread count; keep 1 for bit-reproducible runs")
      ->capture_default_str();
  cmd->add_option("--override", a->overrides,
                  "config override, block.key=value; repeatable")
      ->take_all();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"intent-driven AAV service simulator and trainer"};
  app.require_subcommand(1);

  ibn::run::CliArgs a;
  bool seed_set = false, episodes_set = false;

  auto* validate = app.add_subcommand("validate", "check a config and exit");
  auto* pretrain =
      app.add_subcommand("pretrain-hdt", "train the intent predictor");
  auto* train = app.add_subcommand("train", "train the AAV policies");
  auto* eval =
      app.add_subcommand("eval", "run one frozen-policy episode");
  auto* figs = app.add_subcommand("export-figs",
                                  "export trajectory, density, and service "
                                  "range data for plotting");
  for (CLI::App* cmd : {validate, pretrain, train, eval, figs})
    add_common(cmd, &a, &seed_set, &episodes_set);

  CLI11_PARSE(app, argc, argv);
  a.has_seed = seed_set;
  a.has_episodes = episodes_set;

  if (validate->parsed()) return ibn::run::cmd_validate(a);
  if (pretrain->parsed()) return ibn::run::cmd_pretrain_hdt(a);
  if (train->parsed()) return ibn::run::cmd_train(a);
  if (eval->parsed()) return ibn::run::cmd_eval(a);
  return ibn::run::cmd_export_figs(a);
}
