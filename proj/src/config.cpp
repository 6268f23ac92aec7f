#include "ibn/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ibn::cfg {

namespace {

using nlohmann::json;

// Pulls j[key] with a type check; absent keys keep the default.
struct BlockReader {
  const json& j;
  std::string prefix;
  std::set<std::string> seen;

  BlockReader(const json& jj, std::string p) : j(jj), prefix(std::move(p)) {}

  template <typename T>
  void get(const char* key, T& out) {
    seen.insert(key);
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
      out = it->get<T>();
    } catch (const std::exception&) {
      throw std::invalid_argument("config: bad value type at " + prefix + "." +
                                  key);
    }
  }

  void finish() const {
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!seen.count(it.key()))
        throw std::invalid_argument("config: unknown key " + prefix + "." +
                                    it.key());
  }
};

json intent_json(const intent::GenConfig& g) {
  return json{{"n_users", g.n_users},
              {"n_devices", g.n_devices},
              {"horizon", g.horizon},
              {"day_len", g.day_len},
              {"gate_open", g.gate_open},
              {"gate_close", g.gate_close},
              {"periods", g.periods},
              {"fire_prob", g.fire_prob},
              {"follow_src", g.follow_src},
              {"follow_dst", g.follow_dst},
              {"follow_delay", g.follow_delay},
              {"follow_prob", g.follow_prob},
              {"base_duration", g.base_duration},
              {"on_command", g.on_command},
              {"off_command", g.off_command},
              {"emit_off", g.emit_off}};
}

void intent_from(const json& j, intent::GenConfig& g) {
  BlockReader r(j, "intent");
  r.get("n_users", g.n_users);
  r.get("n_devices", g.n_devices);
  r.get("horizon", g.horizon);
  r.get("day_len", g.day_len);
  r.get("gate_open", g.gate_open);
  r.get("gate_close", g.gate_close);
  r.get("periods", g.periods);
  r.get("fire_prob", g.fire_prob);
  r.get("follow_src", g.follow_src);
  r.get("follow_dst", g.follow_dst);
  r.get("follow_delay", g.follow_delay);
  r.get("follow_prob", g.follow_prob);
  r.get("base_duration", g.base_duration);
  r.get("on_command", g.on_command);
  r.get("off_command", g.off_command);
  r.get("emit_off", g.emit_off);
  r.finish();
}

json hdt_json(const hdt::HdtConfig& h, const hdt::TrainOptions& t) {
  return json{{"d", h.d},
              {"l_h", h.l_h},
              {"k", h.k},
              {"n_layers", h.n_layers},
              {"n_output", h.n_output},
              {"ffn_width", h.ffn_width},
              {"dot_similarity", h.dot_similarity},
              {"relative_time", h.relative_time},
              {"max_epochs", t.max_epochs},
              {"batch", t.batch},
              {"patience", t.patience},
              {"lr", t.lr},
              {"warmup_epochs", t.warmup_epochs},
              {"target_val_mse", t.target_val_mse},
              {"target_val_acc", t.target_val_acc}};
}

void hdt_from(const json& j, hdt::HdtConfig& h, hdt::TrainOptions& t) {
  BlockReader r(j, "hdt");
  r.get("d", h.d);
  r.get("l_h", h.l_h);
  r.get("k", h.k);
  r.get("n_layers", h.n_layers);
  r.get("n_output", h.n_output);
  r.get("ffn_width", h.ffn_width);
  r.get("dot_similarity", h.dot_similarity);
  r.get("relative_time", h.relative_time);
  r.get("max_epochs", t.max_epochs);
  r.get("batch", t.batch);
  r.get("patience", t.patience);
  r.get("lr", t.lr);
  r.get("warmup_epochs", t.warmup_epochs);
  r.get("target_val_mse", t.target_val_mse);
  r.get("target_val_acc", t.target_val_acc);
  r.finish();
}

json mobility_json(const mob::FieldParams& f) {
  return json{{"f_t", f.f_t},     {"f_v", f.f_v},     {"f_eps", f.f_eps},
              {"p_min", f.p_min}, {"p_max", f.p_max}, {"alpha", f.alpha},
              {"beta", f.beta},   {"gamma", f.gamma}};
}

void mobility_from(const json& j, mob::FieldParams& f) {
  BlockReader r(j, "mobility");
  r.get("f_t", f.f_t);
  r.get("f_v", f.f_v);
  r.get("f_eps", f.f_eps);
  r.get("p_min", f.p_min);
  r.get("p_max", f.p_max);
  r.get("alpha", f.alpha);
  r.get("beta", f.beta);
  r.get("gamma", f.gamma);
  r.finish();
}

json channel_json(const chan::ChannelParams& ac,
                  const chan::ChannelParams& bh) {
  return json{{"a", ac.a},
              {"b", ac.b},
              {"d0", ac.d0},
              {"lambda", ac.lambda},
              {"eta_los", ac.eta_los},
              {"delta_nlos_mean", ac.delta_nlos_mean},
              {"delta_nlos_sd", ac.delta_nlos_sd},
              {"sigma_sh_los", ac.sigma_sh_los},
              {"sigma_sh_nlos", ac.sigma_sh_nlos},
              {"k0_db", ac.k0_db},
              {"kappa", ac.kappa},
              {"k_min_db", ac.k_min_db},
              {"p_tx_access_dbm", ac.p_tx_dbm},
              {"p_tx_backhaul_dbm", bh.p_tx_dbm},
              {"g_t_dbi", ac.g_t_dbi},
              {"g_r_dbi", ac.g_r_dbi},
              {"b_w_hz", ac.b_w_hz},
              {"n0_dbm_hz", ac.n0_dbm_hz},
              {"t_delay_max", ac.t_delay_max}};
}

void channel_from(const json& j, chan::ChannelParams& ac,
                  chan::ChannelParams& bh) {
  BlockReader r(j, "channel");
  r.get("a", ac.a);
  r.get("b", ac.b);
  r.get("d0", ac.d0);
  r.get("lambda", ac.lambda);
  r.get("eta_los", ac.eta_los);
  r.get("delta_nlos_mean", ac.delta_nlos_mean);
  r.get("delta_nlos_sd", ac.delta_nlos_sd);
  r.get("sigma_sh_los", ac.sigma_sh_los);
  r.get("sigma_sh_nlos", ac.sigma_sh_nlos);
  r.get("k0_db", ac.k0_db);
  r.get("kappa", ac.kappa);
  r.get("k_min_db", ac.k_min_db);
  r.get("p_tx_access_dbm", ac.p_tx_dbm);
  r.get("p_tx_backhaul_dbm", bh.p_tx_dbm);
  r.get("g_t_dbi", ac.g_t_dbi);
  r.get("g_r_dbi", ac.g_r_dbi);
  r.get("b_w_hz", ac.b_w_hz);
  r.get("n0_dbm_hz", ac.n0_dbm_hz);
  r.get("t_delay_max", ac.t_delay_max);
  r.finish();
  // the two links differ only in transmit power
  double p_ac = ac.p_tx_dbm, p_bh = bh.p_tx_dbm;
  bh = ac;
  ac.p_tx_dbm = p_ac;
  bh.p_tx_dbm = p_bh;
}

json qoe_json(const qoe::QoeParams& q) {
  return json{{"t1", q.t1},         {"t2", q.t2},
              {"k1", q.k1},         {"k2", q.k2},
              {"k3", q.k3},         {"alpha_q", q.alpha_q},
              {"gamma_q", q.gamma_q}, {"alpha_b", q.alpha_b},
              {"beta_b", q.beta_b}, {"n", q.n},
              {"t_a", q.t_a},       {"t_b", q.t_b}};
}

void qoe_from(const json& j, qoe::QoeParams& q) {
  BlockReader r(j, "qoe");
  r.get("t1", q.t1);
  r.get("t2", q.t2);
  r.get("k1", q.k1);
  r.get("k2", q.k2);
  r.get("k3", q.k3);
  r.get("alpha_q", q.alpha_q);
  r.get("gamma_q", q.gamma_q);
  r.get("alpha_b", q.alpha_b);
  r.get("beta_b", q.beta_b);
  r.get("n", q.n);
  r.get("t_a", q.t_a);
  r.get("t_b", q.t_b);
  r.finish();
}

json env_json(const env::EnvConfig& e) {
  json spawn = json::array();
  for (const auto& p : e.aav_spawn) spawn.push_back({p[0], p[1]});
  return json{{"n_aav", e.n_aav},
              {"n_users", e.n_users},
              {"n_l", e.n_l},
              {"arena", e.arena},
              {"aav_alt", e.aav_alt},
              {"bs_x", e.bs_x},
              {"bs_y", e.bs_y},
              {"bs_z", e.bs_z},
              {"dt", e.dt},
              {"slots", e.slots},
              {"v_max", e.v_max},
              {"reassign_every", e.reassign_every},
              {"eikonal_every", e.eikonal_every},
              {"payload_bits", e.payload_bits},
              {"service_radius", e.service_radius},
              {"grid_n", e.grid_n},
              {"aav_spawn", spawn}};
}

void env_from(const json& j, env::EnvConfig& e) {
  BlockReader r(j, "env");
  r.get("n_aav", e.n_aav);
  r.get("n_users", e.n_users);
  r.get("n_l", e.n_l);
  r.get("arena", e.arena);
  r.get("aav_alt", e.aav_alt);
  r.get("bs_x", e.bs_x);
  r.get("bs_y", e.bs_y);
  r.get("bs_z", e.bs_z);
  r.get("dt", e.dt);
  r.get("slots", e.slots);
  r.get("v_max", e.v_max);
  r.get("reassign_every", e.reassign_every);
  r.get("eikonal_every", e.eikonal_every);
  r.get("payload_bits", e.payload_bits);
  r.get("service_radius", e.service_radius);
  r.get("grid_n", e.grid_n);
  r.seen.insert("aav_spawn");
  if (auto it = j.find("aav_spawn"); it != j.end()) {
    e.aav_spawn.clear();
    for (const auto& p : *it) {
      if (!p.is_array() || p.size() != 2)
        throw std::invalid_argument(
            "config: env.aav_spawn entries must be [x, y]");
      e.aav_spawn.push_back({p[0].get<double>(), p[1].get<double>()});
    }
  }
  r.finish();
}

json da_json(const da::TrainConfig& d) {
  return json{{"gamma", d.hyper.gamma},
              {"n_step", d.hyper.n_step},
              {"clip_eps", d.hyper.clip_eps},
              {"c1_entropy", d.hyper.c1_entropy},
              {"c2_value", d.hyper.c2_value},
              {"epochs", d.hyper.epochs},
              {"minibatch", d.hyper.minibatch},
              {"lr", d.hyper.lr},
              {"grad_clip", d.hyper.grad_clip},
              {"hidden", d.hidden},
              {"update_every", d.update_every},
              {"centralized_critic", d.centralized_critic},
              {"flat_policy", d.flat_policy}};
}

void da_from(const json& j, da::TrainConfig& d) {
  BlockReader r(j, "damappo");
  r.get("gamma", d.hyper.gamma);
  r.get("n_step", d.hyper.n_step);
  r.get("clip_eps", d.hyper.clip_eps);
  r.get("c1_entropy", d.hyper.c1_entropy);
  r.get("c2_value", d.hyper.c2_value);
  r.get("epochs", d.hyper.epochs);
  r.get("minibatch", d.hyper.minibatch);
  r.get("lr", d.hyper.lr);
  r.get("grad_clip", d.hyper.grad_clip);
  r.get("hidden", d.hidden);
  r.get("update_every", d.update_every);
  r.get("centralized_critic", d.centralized_critic);
  r.get("flat_policy", d.flat_policy);
  r.finish();
}

}  // namespace

nlohmann::json to_json(const RunConfig& c) {
  return json{{"seed", c.seed},
              {"episodes", c.episodes},
              {"intent", intent_json(c.intent)},
              {"hdt", hdt_json(c.hdt, c.hdt_train)},
              {"mobility", mobility_json(c.env.crowd)},
              {"channel", channel_json(c.env.ch_access, c.env.ch_backhaul)},
              {"qoe", qoe_json(c.env.qoe)},
              {"env", env_json(c.env)},
              {"damappo", da_json(c.da)}};
}

RunConfig from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: root not an object");
  RunConfig c;
  static const std::set<std::string> blocks = {
      "seed", "episodes", "intent", "hdt",    "mobility",
      "channel", "qoe",   "env",    "damappo"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!blocks.count(it.key()))
      throw std::invalid_argument("config: unknown key " + it.key());
  if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
  if (j.contains("episodes")) c.episodes = j.at("episodes").get<int>();
  if (j.contains("intent")) intent_from(j.at("intent"), c.intent);
  if (j.contains("hdt")) hdt_from(j.at("hdt"), c.hdt, c.hdt_train);
  if (j.contains("mobility")) mobility_from(j.at("mobility"), c.env.crowd);
  if (j.contains("channel"))
    channel_from(j.at("channel"), c.env.ch_access, c.env.ch_backhaul);
  if (j.contains("qoe")) qoe_from(j.at("qoe"), c.env.qoe);
  if (j.contains("env")) env_from(j.at("env"), c.env);
  if (j.contains("damappo")) da_from(j.at("damappo"), c.da);
  // single source for window dims and the slot length
  c.env.l_h = c.hdt.l_h;
  c.env.k = c.hdt.k;
  c.env.n_output = c.hdt.n_output;
  c.env.crowd.dt = c.env.dt;
  return c;
}

void apply_override(nlohmann::json& j, const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override must look like block.key=value: " +
                                kv);
  std::string path = kv.substr(0, eq);
  std::string raw = kv.substr(eq + 1);

  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw std::invalid_argument("override: empty key path");

  // Only keys present in the canonical schema are addressable; a typo
  // fails instead of silently adding a dead key.
  json defaults = to_json(RunConfig{});
  const json* dnode = &defaults;
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!dnode->is_object() || !dnode->contains(parts[i]))
      throw std::invalid_argument("override: unknown path " + path);
    dnode = &(*dnode)[parts[i]];
  }
  if (!dnode->is_object() || !dnode->contains(parts.back()))
    throw std::invalid_argument("override: unknown path " + path);

  json* node = &j;
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object())
      throw std::invalid_argument("override: bad path " + path);
    node = &(*node)[parts[i]];  // creates absent blocks
    if (node->is_null()) *node = json::object();
  }

  json value;
  try {
    value = json::parse(raw);
  } catch (const std::exception&) {
    value = raw;  // unquoted strings pass through
  }
  if (!node->is_object()) throw std::invalid_argument("override: bad path " + path);
  (*node)[parts.back()] = value;
}

uint64_t config_hash(const nlohmann::json& canonical) {
  std::string s = canonical.dump();
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_hex(uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

std::vector<CheckResult> validate(const RunConfig& c) {
  std::vector<CheckResult> out;
  auto check = [&](const std::string& name, bool ok, const std::string& why) {
    out.push_back({name, ok, ok ? "ok" : why});
  };
  const auto& m = c.env.crowd;
  check("mobility.density_thresholds", m.p_min < m.p_max,
        "p_min must be below p_max");
  check("mobility.speeds", m.f_t > 0 && m.f_v > 0 && m.f_eps > 0,
        "speeds must be positive");
  check("mobility.slot_length", c.env.dt > 0, "dt must be positive");

  const auto& ch = c.env.ch_access;
  check("channel.bandwidth", ch.b_w_hz > 0, "bandwidth must be positive");
  check("channel.geometry", ch.d0 > 0 && ch.lambda > 0,
        "d0 and lambda must be positive");
  check("channel.delay_cap", ch.t_delay_max > 0,
        "t_delay_max must be positive");

  const auto& q = c.env.qoe;
  check("qoe.knees", q.t1 > 0 && q.t1 < q.t2, "need 0 < t1 < t2");
  check("qoe.thresholds", q.t_a >= 0 && q.t_b >= 0 && q.t_b <= q.t2,
        "need 0 <= t_a and 0 <= t_b <= t2");

  const auto& h = c.hdt;
  check("hdt.window", h.l_h >= 1 && h.k >= 1, "l_h and k must be >= 1");
  check("hdt.horizon", h.n_output >= 1 && h.n_output <= h.l_h,
        "need 1 <= n_output <= l_h");
  check("hdt.dims", h.d >= 1 && h.n_layers >= 1 && h.ffn() >= 1,
        "model dims must be >= 1");
  check("hdt.schedule",
        c.hdt_train.max_epochs >= 1 && c.hdt_train.batch >= 1 &&
            c.hdt_train.lr > 0,
        "epochs, batch, and lr must be positive");

  const auto& e = c.env;
  check("env.population", e.n_aav >= 1 && e.n_users >= 1 && e.n_l >= 1,
        "counts must be >= 1");
  check("env.arena",
        e.arena > 0 && e.grid_n >= 2 && e.v_max > 0 && e.slots >= 1,
        "arena, grid, v_max, slots must be positive");
  check("env.payload", e.payload_bits > 0 && e.service_radius > 0,
        "payload and service radius must be positive");
  bool spawn_ok = e.aav_spawn.empty() || int(e.aav_spawn.size()) == e.n_aav;
  for (const auto& p : e.aav_spawn)
    spawn_ok = spawn_ok && p[0] >= 0 && p[0] <= e.arena && p[1] >= 0 &&
               p[1] <= e.arena;
  check("env.spawn", spawn_ok,
        "aav_spawn must list one in-arena point per AAV or be empty");
  check("env.window_shape",
        e.l_h == h.l_h && e.k == h.k && e.n_output == h.n_output,
        "env window dims must match the predictor");

  const auto& g = c.intent;
  check("intent.population", g.n_users == e.n_users,
        "intent.n_users must equal env.n_users");
  check("intent.generator",
        g.n_devices >= 1 && g.horizon >= 1 && g.day_len >= 1 &&
            g.gate_open >= 0 && g.gate_open < g.gate_close &&
            g.gate_close <= g.day_len,
        "device count, horizon, and gate must be consistent");
  check("intent.probabilities",
        g.fire_prob >= 0 && g.fire_prob <= 1 && g.follow_prob >= 0 &&
            g.follow_prob <= 1,
        "probabilities must lie in [0, 1]");
  bool periods_ok =
      g.periods.empty() || int(g.periods.size()) == g.n_devices;
  for (int p : g.periods) periods_ok = periods_ok && p >= 1;
  check("intent.periods", periods_ok,
        "periods must be empty or one positive entry per device");
  check("intent.follow_pair",
        g.follow_src >= 0 && g.follow_src < g.n_devices && g.follow_dst >= 0 &&
            g.follow_dst < g.n_devices,
        "follow devices must exist");
  check("intent.horizon_covers_episode", g.horizon >= e.slots,
        "generator horizon must cover the episode length");

  const auto& d = c.da;
  check("damappo.discount", d.hyper.gamma > 0 && d.hyper.gamma <= 1,
        "gamma must lie in (0, 1]");
  check("damappo.clip", d.hyper.clip_eps > 0 && d.hyper.clip_eps < 1,
        "clip_eps must lie in (0, 1)");
  check("damappo.schedule",
        d.hyper.epochs >= 1 && d.hyper.minibatch >= 1 && d.hyper.n_step >= 1 &&
            d.update_every >= 1 && d.hidden >= 1,
        "epochs, minibatch, n_step, update cadence, hidden must be >= 1");
  check("damappo.gradient", d.hyper.grad_clip > 0 && d.hyper.lr >= 0,
        "grad_clip must be positive and lr non-negative");
  check("run.episodes", c.episodes >= 1, "episodes must be >= 1");
  return out;
}

RunConfig load_file(const std::string& path,
                    const std::vector<std::string>& overrides,
                    nlohmann::json* canonical_out) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const std::exception& ex) {
    throw std::runtime_error("config: parse error in " + path + ": " +
                             ex.what());
  }
  for (const auto& kv : overrides) apply_override(j, kv);
  RunConfig c = from_json(j);
  if (canonical_out) *canonical_out = to_json(c);
  return c;
}

}  // namespace ibn::cfg
