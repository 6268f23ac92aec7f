#pragma once
#include <cstdint>
#include <string>
#include <vector>

// Orchestrates the run modes behind the command-line tool.  Every mode
// loads the config, applies overrides and flag values, validates, and
// writes its artifacts plus a manifest under the output directory.

namespace ibn::run {

struct CliArgs {
  std::string config_path;  // empty: built-in defaults
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  bool has_seed = false;
  uint64_t seed = 0;
  bool has_episodes = false;
  int episodes = 0;
  int parallel = 1;
};

int cmd_validate(const CliArgs& a);
int cmd_pretrain_hdt(const CliArgs& a);
int cmd_train(const CliArgs& a);
int cmd_eval(const CliArgs& a);
int cmd_export_figs(const CliArgs& a);

}  // namespace ibn::run
