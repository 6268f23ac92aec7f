#include "ibn/runner.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>

#include "ibn/checkpoint.hpp"
#include "ibn/config.hpp"
#include "ibn/damappo.hpp"
#include "ibn/env.hpp"
#include "ibn/hdt.hpp"
#include "json.hpp"

extern "C" void openblas_set_num_threads(int);

namespace ibn::run {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Loaded {
  cfg::RunConfig c;
  json canonical;
};

Loaded load(const CliArgs& a) {
  json j;
  if (a.config_path.empty()) {
    j = cfg::to_json(cfg::RunConfig{});
    for (const auto& kv : a.overrides) cfg::apply_override(j, kv);
  } else {
    std::ifstream f(a.config_path);
    if (!f) throw std::runtime_error("config: cannot open " + a.config_path);
    try {
      j = json::parse(f);
    } catch (const std::exception& ex) {
      throw std::runtime_error("config: parse error in " + a.config_path +
                               ": " + ex.what());
    }
    for (const auto& kv : a.overrides) cfg::apply_override(j, kv);
  }
  if (a.has_seed) j["seed"] = a.seed;
  if (a.has_episodes) j["episodes"] = a.episodes;
  Loaded out;
  out.c = cfg::from_json(j);
  out.canonical = cfg::to_json(out.c);
  return out;
}

// Prints failures; true when the config is runnable.
bool validated(const cfg::RunConfig& c) {
  bool ok = true;
  for (const auto& r : cfg::validate(c))
    if (!r.ok) {
      std::fprintf(stderr, "config check failed: %s: %s\n", r.name.c_str(),
                   r.detail.c_str());
      ok = false;
    }
  return ok;
}

void ensure_dirs(const std::string& out) {
  for (const char* sub : {"curves", "ckpt", "traces", "heatmaps"})
    fs::create_directories(fs::path(out) / sub);
}

void write_manifest(const std::string& out, const std::string& mode,
                    const Loaded& l, std::vector<std::string> artifacts,
                    json extra) {
  std::sort(artifacts.begin(), artifacts.end());
  json m = {{"mode", mode},
            {"seed", l.c.seed},
            {"config_hash", cfg::hash_hex(cfg::config_hash(l.canonical))},
            {"artifacts", artifacts}};
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = *it;
  std::ofstream f(fs::path(out) / "manifest.json");
  if (!f) throw std::runtime_error("cannot write manifest under " + out);
  f << m.dump(2) << "\n";
}

intent::Dataset make_data(const cfg::RunConfig& c) {
  Rng root(c.seed);
  Rng dr = root.substream("data");
  return intent::synth_generate(c.intent, dr);
}

// Samples pooled across every stream of a split.
std::vector<hdt::Sample> pool_samples(const intent::Dataset& d,
                                      const intent::NormStats& st,
                                      const hdt::HdtConfig& hc) {
  std::vector<hdt::Sample> out;
  for (const auto& s : d.streams) {
    auto v = hdt::make_samples(s, st, hc);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

// Memoizing wrapper; episodes revisit the same windows constantly.
da::Predictor cached_predictor(std::shared_ptr<hdt::HdtModel> m) {
  auto cache = std::make_shared<
      std::map<std::vector<double>, std::vector<double>>>();
  return [m, cache](const std::vector<double>& w) {
    auto it = cache->find(w);
    if (it != cache->end()) return it->second;
    auto y = m->predict(w);
    (*cache)[w] = y;
    return y;
  };
}

struct PredictorBundle {
  da::Predictor pred;
  intent::NormStats stats;
  bool from_checkpoint = false;
};

// Uses the pretrained predictor when its checkpoint exists so that the
// normalization baked into the policy inputs matches; otherwise a zero
// predictor over stats fitted on the training split.
PredictorBundle make_predictor(const cfg::RunConfig& c,
                               const std::string& out,
                               const intent::Dataset& data) {
  PredictorBundle b;
  fs::path ck = fs::path(out) / "ckpt" / "hdt.ckpt";
  if (fs::exists(ck)) {
    auto m = std::make_shared<hdt::HdtModel>(
        hdt::load_hdt(ck.string(), &b.stats));
    if (m->config().l_h != c.hdt.l_h || m->config().k != c.hdt.k ||
        m->config().n_output != c.hdt.n_output)
      throw std::runtime_error(
          "hdt checkpoint window dims do not match the config");
    b.pred = cached_predictor(m);
    b.from_checkpoint = true;
  } else {
    b.stats = intent::fit_stats(intent::split_dataset(data).train);
    b.pred = da::zero_predictor(c.env.pred_len());
    b.from_checkpoint = false;
  }
  return b;
}

std::string agent_prefix(int a) { return "agent" + std::to_string(a) + "."; }

void save_policy(const std::string& path, std::vector<da::AgentNets>& agents,
                 const cfg::RunConfig& c) {
  Checkpoint ck;
  ck.meta["kind"] = "da-policy";
  ck.meta["n_aav"] = int(agents.size());
  ck.meta["hidden"] = c.da.hidden;
  ck.meta["flat_policy"] = c.da.flat_policy;
  ck.meta["centralized_critic"] = c.da.centralized_critic;
  for (size_t a = 0; a < agents.size(); ++a) {
    auto& ag = agents[a];
    auto pp = ag.policy.parameters();
    auto pn = ag.policy.parameter_names();
    for (size_t i = 0; i < pp.size(); ++i)
      ck.add(agent_prefix(int(a)) + pn[i], pp[i]);
    auto vp = ag.critic.parameters();
    auto vn = ag.critic.parameter_names();
    for (size_t i = 0; i < vp.size(); ++i)
      ck.add(agent_prefix(int(a)) + vn[i], vp[i]);
  }
  save_checkpoint(path, ck);
}

void load_policy(const std::string& path, std::vector<da::AgentNets>& agents,
                 const cfg::RunConfig& c) {
  Checkpoint ck = load_checkpoint(path);
  if (!ck.meta.contains("kind") || ck.meta["kind"] != "da-policy")
    throw std::runtime_error("checkpoint is not a policy: " + path);
  if (ck.meta["n_aav"].get<int>() != int(agents.size()) ||
      ck.meta["hidden"].get<int>() != c.da.hidden ||
      ck.meta["flat_policy"].get<bool>() != c.da.flat_policy ||
      ck.meta["centralized_critic"].get<bool>() != c.da.centralized_critic)
    throw std::runtime_error("policy checkpoint does not match the config");
  auto restore = [&](const std::string& name, Tensor& t) {
    Tensor s = ck.get(name);
    if (s.shape() != t.shape())
      throw std::runtime_error("checkpoint shape mismatch at " + name);
    t.values() = s.values();
  };
  for (size_t a = 0; a < agents.size(); ++a) {
    auto& ag = agents[a];
    auto pp = ag.policy.parameters();
    auto pn = ag.policy.parameter_names();
    for (size_t i = 0; i < pp.size(); ++i)
      restore(agent_prefix(int(a)) + pn[i], pp[i]);
    auto vp = ag.critic.parameters();
    auto vn = ag.critic.parameter_names();
    for (size_t i = 0; i < vp.size(); ++i)
      restore(agent_prefix(int(a)) + vn[i], vp[i]);
  }
}

struct EpisodeArtifacts {
  double objective = 0;
  std::vector<double> slot_mean_reward;
  std::map<int64_t, std::vector<double>> density_snaps;
};

// One frozen-policy (or random-action) episode with optional density
// snapshots.  Deterministic given (config, seed): the policy mode draws
// nothing and random mode draws from a named substream.
EpisodeArtifacts rollout(env::Env& e, std::vector<da::AgentNets>* agents,
                         const da::Predictor& pred, uint64_t seed,
                         const std::set<int64_t>& snap_slots) {
  const auto& ec = e.config();
  e.reset(seed);
  Rng rng = Rng(seed).substream(agents ? "episode.act" : "episode.random");
  EpisodeArtifacts out;
  if (snap_slots.count(0)) out.density_snaps[0] = e.density_counts();

  while (true) {
    std::vector<std::vector<double>> preds(size_t(ec.n_aav));
    std::vector<env::AavAction> acts(size_t(ec.n_aav));
    for (int a = 0; a < ec.n_aav; ++a) {
      preds[size_t(a)] = pred(e.pooled_window(a));
      if (agents) {
        auto obs = e.observe(a, preds[size_t(a)]);
        da::ActResult r = da::act((*agents)[size_t(a)].policy, obs, rng, true);
        acts[size_t(a)].vx = r.v[0];
        acts[size_t(a)].vy = r.v[1];
        acts[size_t(a)].m.assign(r.bits.begin(),
                                 r.bits.begin() + ec.n_output);
        acts[size_t(a)].m_bs.assign(r.bits.begin() + ec.n_output,
                                    r.bits.end());
      } else {
        acts[size_t(a)].vx = rng.uniform(-ec.v_max, ec.v_max);
        acts[size_t(a)].vy = rng.uniform(-ec.v_max, ec.v_max);
        acts[size_t(a)].m.resize(size_t(ec.n_output));
        acts[size_t(a)].m_bs.resize(size_t(ec.n_l));
        for (auto& bb : acts[size_t(a)].m)
          bb = uint8_t(rng.uniform_int(0, 1));
        for (auto& bb : acts[size_t(a)].m_bs)
          bb = uint8_t(rng.uniform_int(0, 1));
      }
    }
    auto so = e.step(acts, preds);
    double m = 0;
    for (double r : so.rewards) m += r;
    out.slot_mean_reward.push_back(m / double(ec.n_aav));
    int64_t now = e.state().slot;
    if (snap_slots.count(now)) out.density_snaps[now] = e.density_counts();
    if (so.done) break;
  }
  out.objective = e.episode_objective();
  return out;
}

void write_slot_rewards_csv(const std::string& path,
                            const std::vector<double>& r) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "slot,mean_reward\n";
  char buf[48];
  for (size_t i = 0; i < r.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g\n", i, r[i]);
    f << buf;
  }
}

int guarded(const CliArgs& a, const char* mode,
            int (*body)(const CliArgs&, const Loaded&)) {
  openblas_set_num_threads(a.parallel > 1 ? a.parallel : 1);
  Loaded l;
  try {
    l = load(a);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "%s\n", ex.what());
    return 2;
  }
  if (!validated(l.c)) return 1;
  try {
    return body(a, l);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "%s: %s\n", mode, ex.what());
    return 1;
  }
}

int pretrain_body(const CliArgs& a, const Loaded& l) {
  const cfg::RunConfig& c = l.c;
  ensure_dirs(a.out_dir);
  intent::Dataset data = make_data(c);
  intent::Split split = intent::split_dataset(data);
  intent::NormStats stats = intent::fit_stats(split.train);
  auto train_s = pool_samples(split.train, stats, c.hdt);
  auto val_s = pool_samples(split.val, stats, c.hdt);
  if (train_s.empty() || val_s.empty())
    throw std::runtime_error("synthetic dataset produced no windows");

  hdt::HdtConfig hc = c.hdt;
  hc.seed = mix_seed(c.seed, "hdt.init");
  hdt::HdtModel m(hc);
  hdt::TrainOptions topt = c.hdt_train;
  topt.seed = mix_seed(c.seed, "hdt.train");
  hdt::TrainReport rep = train_model(m, train_s, val_s, stats, topt);

  std::string curve = a.out_dir + "/curves/pretrain_hdt.csv";
  std::string ck = a.out_dir + "/ckpt/hdt.ckpt";
  hdt::write_curve_csv(curve, rep.curve);
  hdt::save_hdt(ck, m, stats);
  write_manifest(a.out_dir, "pretrain-hdt", l,
                 {"curves/pretrain_hdt.csv", "ckpt/hdt.ckpt"},
                 {{"train_windows", train_s.size()},
                  {"val_windows", val_s.size()},
                  {"best_val_mse", rep.best_val_mse},
                  {"best_epoch", rep.best_epoch},
                  {"final_val_acc", rep.final_val_acc}});
  std::printf("pretrain-hdt: %zu train / %zu val windows, best val mse %.6g "
              "(epoch %d), val acc %.4f\n",
              train_s.size(), val_s.size(), rep.best_val_mse, rep.best_epoch,
              rep.final_val_acc);
  std::printf("wrote %s\nwrote %s\n", curve.c_str(), ck.c_str());
  return 0;
}

int train_body(const CliArgs& a, const Loaded& l) {
  const cfg::RunConfig& c = l.c;
  ensure_dirs(a.out_dir);
  intent::Dataset data = make_data(c);
  PredictorBundle pb = make_predictor(c, a.out_dir, data);
  env::Env e(c.env, data, pb.stats);

  da::TrainOutput to =
      da::train_loop(e, pb.pred, c.da, c.episodes, mix_seed(c.seed, "da.train"));

  std::string curve = a.out_dir + "/curves/reward_curve.csv";
  std::string ck = a.out_dir + "/ckpt/policy.ckpt";
  da::write_reward_curve_csv(curve, to.curve);
  save_policy(ck, to.agents, c);
  double final_obj = to.curve.empty() ? 0.0 : to.curve.back().objective;
  write_manifest(a.out_dir, "train", l,
                 {"curves/reward_curve.csv", "ckpt/policy.ckpt"},
                 {{"episodes", c.episodes},
                  {"predictor_checkpoint", pb.from_checkpoint},
                  {"final_objective", final_obj}});
  std::printf("train: %d episodes, final objective %.6g, predictor %s\n",
              c.episodes, final_obj,
              pb.from_checkpoint ? "checkpoint" : "zero");
  std::printf("wrote %s\nwrote %s\n", curve.c_str(), ck.c_str());
  return 0;
}

int eval_body(const CliArgs& a, const Loaded& l) {
  const cfg::RunConfig& c = l.c;
  fs::path pk = fs::path(a.out_dir) / "ckpt" / "policy.ckpt";
  if (!fs::exists(pk))
    throw std::runtime_error("missing checkpoint " + pk.string() +
                             " (run train first)");
  ensure_dirs(a.out_dir);
  intent::Dataset data = make_data(c);
  PredictorBundle pb = make_predictor(c, a.out_dir, data);
  env::Env e(c.env, data, pb.stats);
  auto agents = da::make_agents(e, c.da, mix_seed(c.seed, "eval.init"));
  load_policy(pk.string(), agents, c);

  EpisodeArtifacts ea =
      rollout(e, &agents, pb.pred, mix_seed(c.seed, "eval.episode"), {});

  std::string trace = a.out_dir + "/traces/eval.jsonl";
  std::string curve = a.out_dir + "/curves/eval_rewards.csv";
  env::write_trace_jsonl(trace, e.trace());
  write_slot_rewards_csv(curve, ea.slot_mean_reward);
  write_manifest(a.out_dir, "eval", l,
                 {"traces/eval.jsonl", "curves/eval_rewards.csv"},
                 {{"objective", ea.objective}});
  std::printf("eval: objective %.10g over %zu slots\n", ea.objective,
              ea.slot_mean_reward.size());
  std::printf("wrote %s\nwrote %s\n", trace.c_str(), curve.c_str());
  return 0;
}

int export_body(const CliArgs& a, const Loaded& l) {
  const cfg::RunConfig& c = l.c;
  ensure_dirs(a.out_dir);
  intent::Dataset data = make_data(c);
  PredictorBundle pb = make_predictor(c, a.out_dir, data);
  env::Env e(c.env, data, pb.stats);

  fs::path pk = fs::path(a.out_dir) / "ckpt" / "policy.ckpt";
  std::vector<da::AgentNets> agents;
  bool with_policy = fs::exists(pk);
  if (with_policy) {
    agents = da::make_agents(e, c.da, mix_seed(c.seed, "eval.init"));
    load_policy(pk.string(), agents, c);
  }

  std::set<int64_t> snaps;
  for (int q = 0; q <= 4; ++q) snaps.insert(c.env.slots * q / 4);
  EpisodeArtifacts ea = rollout(e, with_policy ? &agents : nullptr, pb.pred,
                                mix_seed(c.seed, "figs.episode"), snaps);

  std::vector<std::string> artifacts = {"traces/figure_episode.jsonl",
                                        "heatmaps/service_overlay.csv"};
  env::write_trace_jsonl(a.out_dir + "/traces/figure_episode.jsonl",
                         e.trace());
  env::write_service_overlay_csv(a.out_dir + "/heatmaps/service_overlay.csv",
                                 e.trace(), c.env.service_radius);
  for (const auto& [slot, counts] : ea.density_snaps) {
    std::string rel = "heatmaps/density_slot" + std::to_string(slot) + ".csv";
    env::write_heatmap_csv(a.out_dir + "/" + rel, e.grid(), counts);
    artifacts.push_back(rel);
  }
  write_manifest(a.out_dir, "export-figs", l, artifacts,
                 {{"objective", ea.objective}, {"policy", with_policy}});
  std::printf("export-figs: %zu density snapshots, policy=%s\n",
              ea.density_snaps.size(), with_policy ? "checkpoint" : "random");
  for (const auto& p : artifacts)
    std::printf("wrote %s/%s\n", a.out_dir.c_str(), p.c_str());
  return 0;
}

}  // namespace

int cmd_validate(const CliArgs& a) {
  Loaded l;
  try {
    l = load(a);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "%s\n", ex.what());
    return 2;
  }
  bool all = true;
  for (const auto& r : cfg::validate(l.c)) {
    std::printf("[%s] %s: %s\n", r.ok ? " OK " : "FAIL", r.name.c_str(),
                r.detail.c_str());
    all = all && r.ok;
  }
  std::printf("config hash %s\n",
              cfg::hash_hex(cfg::config_hash(l.canonical)).c_str());
  return all ? 0 : 1;
}

int cmd_pretrain_hdt(const CliArgs& a) {
  return guarded(a, "pretrain-hdt", pretrain_body);
}
int cmd_train(const CliArgs& a) { return guarded(a, "train", train_body); }
int cmd_eval(const CliArgs& a) { return guarded(a, "eval", eval_body); }
int cmd_export_figs(const CliArgs& a) {
  return guarded(a, "export-figs", export_body);
}

}  // namespace ibn::run
