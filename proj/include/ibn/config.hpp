#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "ibn/damappo.hpp"
#include "ibn/env.hpp"
#include "ibn/hdt.hpp"
#include "ibn/intent.hpp"
#include "json.hpp"

// Run configuration: one JSON file with per-module blocks, dotted-key
// overrides, a canonical serialization, and a content hash recorded in run
// manifests.  All randomness in a run derives from the single root seed.

namespace ibn::cfg {

struct RunConfig {
  uint64_t seed = 1;
  int episodes = 200;
  intent::GenConfig intent;
  hdt::HdtConfig hdt;
  hdt::TrainOptions hdt_train;
  env::EnvConfig env;  // carries crowd, channel, and qoe parameter blocks
  da::TrainConfig da;
};

// Canonical JSON (sorted keys, every recognized field present).
nlohmann::json to_json(const RunConfig& c);

// Strict parse: any unrecognized key raises with its dotted path.  Window
// dims (l_h, k, n_output) live in the hdt block and are copied into env.
RunConfig from_json(const nlohmann::json& j);

// "block.key=value"; value parses as JSON when possible, else as a string.
// Unknown paths raise.
void apply_override(nlohmann::json& j, const std::string& kv);

// FNV-1a over the canonical dump of the effective config.
uint64_t config_hash(const nlohmann::json& canonical);
std::string hash_hex(uint64_t h);

struct CheckResult {
  std::string name;
  bool ok = false;
  std::string detail;
};

// Every cross-module constraint, named; run modes refuse to start unless
// all pass.
std::vector<CheckResult> validate(const RunConfig& c);

// Read file, apply overrides in order, parse strictly.  canonical_out, when
// given, receives the effective canonical JSON (what config_hash covers).
RunConfig load_file(const std::string& path,
                    const std::vector<std::string>& overrides,
                    nlohmann::json* canonical_out = nullptr);

}  // namespace ibn::cfg
