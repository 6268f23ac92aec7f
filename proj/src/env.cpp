#include "ibn/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

namespace ibn::env {

const char* route_name(Route r) {
  switch (r) {
    case Route::Aav: return "aav";
    case Route::Bs: return "bs";
    default: return "unserved";
  }
}

Env::Env(const EnvConfig& cfg, const intent::Dataset& data,
         const intent::NormStats& stats)
    : cfg_(cfg), data_(&data), stats_(stats) {
  if (cfg.n_aav < 1 || cfg.n_users < 1 || cfg.n_l < 1)
    throw std::invalid_argument("env: n_aav, n_users, n_l must be >= 1");
  if (int(data.streams.size()) < cfg.n_users)
    throw std::invalid_argument("env: dataset has fewer streams than users");
  grid_.nx = cfg.grid_n;
  grid_.ny = cfg.grid_n;
  grid_.h = cfg.arena / double(cfg.grid_n);
  grid_.origin_x = 0.0;
  grid_.origin_y = 0.0;

  slot_index_.resize(size_t(cfg.n_users));
  for (int u = 0; u < cfg.n_users; ++u) {
    const auto& acts = data.streams[size_t(u)].actions;
    int64_t top = acts.empty() ? -1 : acts.back().t;
    auto& idx = slot_index_[size_t(u)];
    idx.assign(size_t(top + 1), {0, 0});
    for (int64_t i = 0; i < int64_t(acts.size());) {
      int64_t j = i;
      while (j < int64_t(acts.size()) && acts[size_t(j)].t == acts[size_t(i)].t)
        ++j;
      idx[size_t(acts[size_t(i)].t)] = {i, j};
      i = j;
    }
  }
}

void Env::assign_users() {
  st_.assigned.assign(size_t(cfg_.n_aav), {});
  st_.owner.assign(size_t(cfg_.n_users), -1);
  for (int u = 0; u < cfg_.n_users; ++u) {
    int best = -1;
    double bd = 0.0;
    for (int a = 0; a < cfg_.n_aav; ++a) {
      if (int(st_.assigned[size_t(a)].size()) >= cfg_.n_l) continue;
      double dx = st_.aav[size_t(a)][0] - st_.ux[size_t(u)];
      double dy = st_.aav[size_t(a)][1] - st_.uy[size_t(u)];
      double d = dx * dx + dy * dy;
      if (best < 0 || d < bd) {
        best = a;
        bd = d;
      }
    }
    if (best >= 0) {
      st_.assigned[size_t(best)].push_back(u);
      st_.owner[size_t(u)] = best;
    }
  }
}

void Env::refresh_fields() {
  density_ = mob::density_from_positions(grid_, st_.ux, st_.uy);
  speed_ = mob::speed_field(cfg_.crowd, density_);
  std::vector<double> discomfort(size_t(grid_.cells()), 0.0);
  cost_ = mob::cost_field(cfg_.crowd, speed_, discomfort);
  phi_ok_.assign(size_t(grid_.cells()), 0);
  phi_cache_.resize(size_t(grid_.cells()));
}

const std::vector<double>& Env::phi_for(int goal_cell) {
  if (!phi_ok_[size_t(goal_cell)]) {
    phi_cache_[size_t(goal_cell)] = mob::solve_eikonal(grid_, cost_,
                                                       {goal_cell});
    phi_ok_[size_t(goal_cell)] = 1;
  }
  return phi_cache_[size_t(goal_cell)];
}

const WorldState& Env::reset(uint64_t seed) {
  Rng root(seed);
  Rng rng_pos = root.substream("env.users");
  rng_goal_ = root.substream("env.goals");
  rng_chan_ = root.substream("env.chan");
  Rng rng_nlos = root.substream("env.nlos");

  st_.bs = {cfg_.bs_x, cfg_.bs_y, cfg_.bs_z};
  st_.aav.assign(size_t(cfg_.n_aav), {0.0, 0.0, cfg_.aav_alt});
  for (int a = 0; a < cfg_.n_aav; ++a) {
    if (a < int(cfg_.aav_spawn.size())) {
      st_.aav[size_t(a)][0] = cfg_.aav_spawn[size_t(a)][0];
      st_.aav[size_t(a)][1] = cfg_.aav_spawn[size_t(a)][1];
    } else {
      st_.aav[size_t(a)][0] = cfg_.arena * double(a + 1) / double(cfg_.n_aav + 1);
      st_.aav[size_t(a)][1] = cfg_.arena * 0.5;
    }
  }
  st_.ux.resize(size_t(cfg_.n_users));
  st_.uy.resize(size_t(cfg_.n_users));
  goal_.resize(size_t(cfg_.n_users));
  for (int u = 0; u < cfg_.n_users; ++u) {
    st_.ux[size_t(u)] = rng_pos.uniform() * cfg_.arena;
    st_.uy[size_t(u)] = rng_pos.uniform() * cfg_.arena;
    goal_[size_t(u)] = int(rng_goal_.uniform_int(0, grid_.cells() - 1));
  }
  st_.slot = 0;
  assign_users();

  delta_nlos_user_.resize(size_t(cfg_.n_aav * cfg_.n_users));
  delta_nlos_bs_.resize(size_t(cfg_.n_aav));
  for (int a = 0; a < cfg_.n_aav; ++a) {
    for (int u = 0; u < cfg_.n_users; ++u)
      delta_nlos_user_[size_t(a * cfg_.n_users + u)] =
          chan::episode_delta_nlos(cfg_.ch_access, rng_nlos);
    delta_nlos_bs_[size_t(a)] =
        chan::episode_delta_nlos(cfg_.ch_backhaul, rng_nlos);
  }

  refresh_fields();
  log_.clear();
  trace_.clear();
  trace_.push_back({0, st_.aav, st_.ux, st_.uy, {}});
  return st_;
}

namespace {

void check_binary(const std::vector<uint8_t>& bits, size_t want,
                  const char* name) {
  if (bits.size() != want)
    throw std::invalid_argument(std::string(name) + ": wrong length");
  for (uint8_t b : bits)
    if (b > 1)
      throw std::invalid_argument(std::string(name) + ": non-binary entry");
}

}  // namespace

void Env::resolve_services(const std::vector<AavAction>& acts,
                           const std::vector<std::vector<double>>& preds,
                           StepOutcome& out) {
  // kept (device, command) pairs per AAV, pooled across m-selected rows
  std::vector<std::set<std::pair<long, long>>> kept(size_t(cfg_.n_aav));
  for (int a = 0; a < cfg_.n_aav; ++a) {
    const auto& pred = preds[size_t(a)];
    for (int64_t r = 0; r < cfg_.n_output; ++r) {
      if (!acts[size_t(a)].m[size_t(r)]) continue;
      for (int64_t j = 0; j < cfg_.k; ++j) {
        const double* row = pred.data() + (r * cfg_.k + j) * 4;
        kept[size_t(a)].insert({std::llround(stats_.denormalize(1, row[1])),
                                std::llround(stats_.denormalize(3, row[3]))});
      }
    }
  }

  for (int u = 0; u < cfg_.n_users; ++u) {
    const auto& idx = slot_index_[size_t(u)];
    if (st_.slot >= int64_t(idx.size())) continue;
    auto [lo, hi] = idx[size_t(st_.slot)];
    if (lo == hi) continue;
    const auto& actions = data_->streams[size_t(u)].actions;
    std::set<std::pair<long, long>> truth;
    for (int64_t i = lo; i < hi; ++i)
      truth.insert({actions[size_t(i)].device, actions[size_t(i)].command});

    ServiceRecord rec;
    rec.slot = st_.slot;
    rec.user = u;
    rec.aav = st_.owner[size_t(u)];
    if (rec.aav < 0) {
      rec.route = Route::Unserved;
      rec.delay_s = cfg_.ch_access.t_delay_max;
    } else {
      int a = rec.aav;
      bool covered = true;
      for (const auto& p : truth)
        covered = covered && kept[size_t(a)].count(p) > 0;
      int seat = -1;
      const auto& mates = st_.assigned[size_t(a)];
      for (size_t s = 0; s < mates.size(); ++s)
        if (mates[s] == u) seat = int(s);

      chan::ChannelParams pa = cfg_.ch_access;
      pa.delta_nlos_db = delta_nlos_user_[size_t(a * cfg_.n_users + u)];
      auto ga = chan::geometry(st_.aav[size_t(a)][0], st_.aav[size_t(a)][1],
                               st_.aav[size_t(a)][2], st_.ux[size_t(u)],
                               st_.uy[size_t(u)], 0.0);
      if (covered) {
        rec.route = Route::Aav;
        rec.delay_s =
            chan::draw_link(ga, pa, cfg_.payload_bits, rng_chan_).delay_s;
      } else if (seat >= 0 && acts[size_t(a)].m_bs[size_t(seat)]) {
        rec.route = Route::Bs;
        chan::ChannelParams pb = cfg_.ch_backhaul;
        pb.delta_nlos_db = delta_nlos_bs_[size_t(a)];
        auto gb = chan::geometry(st_.aav[size_t(a)][0], st_.aav[size_t(a)][1],
                                 st_.aav[size_t(a)][2], st_.bs[0], st_.bs[1],
                                 st_.bs[2]);
        rec.delay_s =
            chan::draw_link(ga, pa, cfg_.payload_bits, rng_chan_).delay_s +
            chan::draw_link(gb, pb, cfg_.payload_bits, rng_chan_).delay_s;
      } else {
        rec.route = Route::Unserved;
        rec.delay_s = cfg_.ch_access.t_delay_max;
      }
    }
    rec.q1 = qoe::qoe_normalized(rec.delay_s, cfg_.qoe);
    out.records.push_back(rec);
    log_.push_back(rec);
  }
}

StepOutcome Env::step(const std::vector<AavAction>& acts,
                      const std::vector<std::vector<double>>& preds) {
  if (st_.slot >= cfg_.slots) throw std::logic_error("env: episode finished");
  if (int(acts.size()) != cfg_.n_aav || int(preds.size()) != cfg_.n_aav)
    throw std::invalid_argument("env: need one action and prediction per AAV");
  for (int a = 0; a < cfg_.n_aav; ++a) {
    check_binary(acts[size_t(a)].m, size_t(cfg_.n_output), "m");
    check_binary(acts[size_t(a)].m_bs, size_t(cfg_.n_l), "m_bs");
    if (int64_t(preds[size_t(a)].size()) != cfg_.pred_len())
      throw std::invalid_argument("env: prediction length mismatch");
  }

  if (cfg_.reassign_every > 0 && st_.slot > 0 &&
      st_.slot % cfg_.reassign_every == 0)
    assign_users();

  for (int a = 0; a < cfg_.n_aav; ++a) {
    double vx = acts[size_t(a)].vx, vy = acts[size_t(a)].vy;
    double n = std::hypot(vx, vy);
    if (n > cfg_.v_max) {
      vx *= cfg_.v_max / n;
      vy *= cfg_.v_max / n;
    }
    auto& p = st_.aav[size_t(a)];
    p[0] = std::clamp(p[0] + vx * cfg_.dt, 0.0, cfg_.arena);
    p[1] = std::clamp(p[1] + vy * cfg_.dt, 0.0, cfg_.arena);
  }

  if (cfg_.eikonal_every > 0 && st_.slot % cfg_.eikonal_every == 0)
    refresh_fields();
  for (int u = 0; u < cfg_.n_users; ++u) {
    const auto& phi = phi_for(goal_[size_t(u)]);
    mob::advance(grid_, speed_, phi, cfg_.dt, &st_.ux[size_t(u)],
                 &st_.uy[size_t(u)]);
    double gx = grid_.cell_cx(goal_[size_t(u)]);
    double gy = grid_.cell_cy(goal_[size_t(u)]);
    if (std::hypot(st_.ux[size_t(u)] - gx, st_.uy[size_t(u)] - gy) <= grid_.h)
      goal_[size_t(u)] = int(rng_goal_.uniform_int(0, grid_.cells() - 1));
  }

  StepOutcome out;
  resolve_services(acts, preds, out);

  out.rewards.assign(size_t(cfg_.n_aav), 0.0);
  for (const auto& rec : out.records)
    if (rec.aav >= 0) out.rewards[size_t(rec.aav)] += rec.q1;
  for (int a = 0; a < cfg_.n_aav; ++a) {
    size_t n = st_.assigned[size_t(a)].size();
    if (n > 0) out.rewards[size_t(a)] /= double(n);
  }

  st_.slot += 1;
  out.done = st_.slot >= cfg_.slots;
  trace_.push_back({st_.slot, st_.aav, st_.ux, st_.uy, out.records});
  return out;
}

namespace {

// Real rows carry the window-relative slot fraction in field 0, matching the
// representation the predictor is trained on.
void relabel_time(intent::Window& w, int64_t n_output) {
  double span = double(w.l_h + n_output);
  for (int64_t r = 0; r < w.l_h; ++r)
    for (int64_t j = 0; j < w.k; ++j)
      if (w.mask[size_t(r * w.k + j)])
        w.x[size_t((r * w.k + j) * 4)] = double(r) / span;
}

}  // namespace

std::vector<double> Env::observe(int aav,
                                 const std::vector<double>& pred) const {
  if (aav < 0 || aav >= cfg_.n_aav)
    throw std::invalid_argument("observe: bad aav id");
  if (int64_t(pred.size()) != cfg_.pred_len())
    throw std::invalid_argument("observe: prediction length mismatch");
  std::vector<double> obs;
  obs.reserve(size_t(obs_len()));
  obs.insert(obs.end(), pred.begin(), pred.end());
  for (int i = 0; i < 3; ++i)
    obs.push_back(st_.aav[size_t(aav)][size_t(i)] / cfg_.arena);
  const auto& mates = st_.assigned[size_t(aav)];
  for (int s = 0; s < cfg_.n_l; ++s) {
    if (s < int(mates.size())) {
      int u = mates[size_t(s)];
      auto w = intent::make_window(data_->streams[size_t(u)], stats_, st_.slot,
                                   cfg_.l_h, cfg_.k);
      relabel_time(w, cfg_.n_output);
      obs.insert(obs.end(), w.x.begin(), w.x.end());
      obs.push_back(st_.ux[size_t(u)] / cfg_.arena);
      obs.push_back(st_.uy[size_t(u)] / cfg_.arena);
    } else {
      obs.insert(obs.end(), size_t(cfg_.window_len() + 2), 0.0);
    }
  }
  return obs;
}

int64_t Env::obs_len() const {
  return cfg_.pred_len() + 3 + cfg_.n_l * (cfg_.window_len() + 2);
}

std::vector<double> Env::pooled_window(int aav) const {
  if (aav < 0 || aav >= cfg_.n_aav)
    throw std::invalid_argument("pooled_window: bad aav id");
  intent::Stream merged;
  merged.user_id = -1;
  for (int u : st_.assigned[size_t(aav)]) {
    const auto& acts = data_->streams[size_t(u)].actions;
    merged.actions.insert(merged.actions.end(), acts.begin(), acts.end());
  }
  std::stable_sort(
      merged.actions.begin(), merged.actions.end(),
      [](const intent::Action& a, const intent::Action& b) { return a.t < b.t; });
  auto w = intent::make_window(merged, stats_, st_.slot, cfg_.l_h, cfg_.k);
  relabel_time(w, cfg_.n_output);
  return w.x;
}

double Env::episode_objective() const {
  if (log_.empty()) return 0.0;
  std::vector<double> q;
  q.reserve(log_.size());
  for (const auto& r : log_) q.push_back(r.q1);
  return qoe::objective(q);
}

std::vector<double> Env::density_counts() const {
  auto p = mob::density_from_positions(grid_, st_.ux, st_.uy);
  for (double& v : p) v *= grid_.h * grid_.h;
  return p;
}

void write_trace_jsonl(const std::string& path,
                       const std::vector<TraceRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  char buf[128];
  for (const auto& r : rows) {
    f << "{\"slot\":" << r.slot << ",\"aav\":[";
    for (size_t a = 0; a < r.aav.size(); ++a) {
      std::snprintf(buf, sizeof buf, "[%.10g,%.10g,%.10g]", r.aav[a][0],
                    r.aav[a][1], r.aav[a][2]);
      f << (a ? "," : "") << buf;
    }
    f << "],\"users\":[";
    for (size_t u = 0; u < r.ux.size(); ++u) {
      std::snprintf(buf, sizeof buf, "[%.10g,%.10g]", r.ux[u], r.uy[u]);
      f << (u ? "," : "") << buf;
    }
    f << "],\"records\":[";
    for (size_t i = 0; i < r.records.size(); ++i) {
      const auto& rec = r.records[i];
      std::snprintf(buf, sizeof buf,
                    "{\"user\":%d,\"aav\":%d,\"route\":\"%s\",\"delay_s\":%."
                    "10g,\"q1\":%.10g}",
                    rec.user, rec.aav, route_name(rec.route), rec.delay_s,
                    rec.q1);
      f << (i ? "," : "") << buf;
    }
    f << "]}\n";
  }
}

void write_heatmap_csv(const std::string& path, const mob::GridSpec& g,
                       const std::vector<double>& counts) {
  if (int(counts.size()) != g.cells())
    throw std::invalid_argument("heatmap: grid size mismatch");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "x,y,count\n";
  char buf[96];
  for (int i = 0; i < g.cells(); ++i) {
    std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g\n", g.cell_cx(i),
                  g.cell_cy(i), counts[size_t(i)]);
    f << buf;
  }
}

void write_service_overlay_csv(const std::string& path,
                               const std::vector<TraceRow>& rows,
                               double radius) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "slot,aav,x,y,radius\n";
  char buf[128];
  for (const auto& r : rows)
    for (size_t a = 0; a < r.aav.size(); ++a) {
      std::snprintf(buf, sizeof buf, "%lld,%zu,%.10g,%.10g,%.10g\n",
                    (long long)r.slot, a, r.aav[a][0], r.aav[a][1], radius);
      f << buf;
    }
}

}  // namespace ibn::env
