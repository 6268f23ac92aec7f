#pragma once
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ibn/channel.hpp"
#include "ibn/intent.hpp"
#include "ibn/mobility.hpp"
#include "ibn/qoe.hpp"
#include "ibn/rng.hpp"

// Episodic world model tying together user crowds, intent streams, AAV
// motion, link physics, and per-intent QoE scoring.

namespace ibn::env {

struct EnvConfig {
  int n_aav = 2;
  int n_users = 6;
  int n_l = 3;  // service seats per AAV
  double arena = 500.0;
  double aav_alt = 100.0;
  double bs_x = 250.0, bs_y = 250.0, bs_z = 25.0;
  double dt = 0.2;
  int64_t slots = 1000;  // episode length
  double v_max = 15.0;
  int reassign_every = 0;  // 0 = assign at reset only
  int eikonal_every = 25;  // crowd-field refresh cadence, slots
  double payload_bits = 8e8;
  double service_radius = 120.0;  // overlay annotation only
  int grid_n = 25;
  // window dims; must match the predictor that feeds observe()
  int64_t l_h = 8, k = 2, n_output = 4;
  // spawn points; empty = evenly spaced along the arena mid-line
  std::vector<std::array<double, 2>> aav_spawn;
  chan::ChannelParams ch_access;    // AAV to user
  chan::ChannelParams ch_backhaul;  // AAV to BS
  qoe::QoeParams qoe;
  mob::FieldParams crowd;

  EnvConfig() {
    ch_access.p_tx_dbm = 23.0;
    ch_backhaul.p_tx_dbm = 30.0;
  }
  int64_t pred_len() const { return n_output * k * 4; }
  int64_t window_len() const { return l_h * k * 4; }
};

enum class Route { Aav, Bs, Unserved };
const char* route_name(Route r);

struct ServiceRecord {
  int64_t slot = 0;
  int user = 0;
  int aav = -1;  // -1 when unassigned
  Route route = Route::Unserved;
  double delay_s = 0.0;
  double q1 = 0.0;
};

struct WorldState {
  std::array<double, 3> bs{};
  std::vector<std::array<double, 3>> aav;
  std::vector<double> ux, uy;
  std::vector<std::vector<int>> assigned;  // per AAV, <= n_l user ids
  std::vector<int> owner;                  // per user: AAV id or -1
  int64_t slot = 0;
};

struct AavAction {
  double vx = 0.0, vy = 0.0;  // m/s; norm-clipped to v_max on apply
  std::vector<uint8_t> m;     // n_output keep bits over predicted rows
  std::vector<uint8_t> m_bs;  // n_l forward bits, indexed by seat
};

struct StepOutcome {
  std::vector<double> rewards;         // per AAV, each in [0,1]
  std::vector<ServiceRecord> records;  // intents resolved this slot
  bool done = false;
};

struct TraceRow {
  int64_t slot = 0;
  std::vector<std::array<double, 3>> aav;
  std::vector<double> ux, uy;
  std::vector<ServiceRecord> records;
};

class Env {
 public:
  // Streams supply per-user intents; stats drive window normalization and
  // the rounding of predicted (device, command) pairs.
  Env(const EnvConfig& cfg, const intent::Dataset& data,
      const intent::NormStats& stats);

  const WorldState& reset(uint64_t seed);
  // preds[i]: flattened n_output*k*4 prediction for AAV i, normalized units.
  StepOutcome step(const std::vector<AavAction>& acts,
                   const std::vector<std::vector<double>>& preds);

  // [pred | own position | per seat: user window, user position]
  std::vector<double> observe(int aav, const std::vector<double>& pred) const;
  int64_t obs_len() const;
  // Merged recent actions of the AAV's assigned users; predictor input.
  std::vector<double> pooled_window(int aav) const;

  const WorldState& state() const { return st_; }
  const EnvConfig& config() const { return cfg_; }
  const std::vector<ServiceRecord>& episode_log() const { return log_; }
  const std::vector<TraceRow>& trace() const { return trace_; }
  double episode_objective() const;  // mean q1 over the episode log
  // Per-cell user headcounts; sums to n_users.
  std::vector<double> density_counts() const;
  const mob::GridSpec& grid() const { return grid_; }

 private:
  void assign_users();
  void refresh_fields();
  const std::vector<double>& phi_for(int goal_cell);
  void resolve_services(const std::vector<AavAction>& acts,
                        const std::vector<std::vector<double>>& preds,
                        StepOutcome& out);

  EnvConfig cfg_;
  const intent::Dataset* data_;
  intent::NormStats stats_;
  mob::GridSpec grid_;
  WorldState st_;
  std::vector<int> goal_;  // per-user goal cell
  std::vector<double> density_, speed_, cost_;
  std::vector<std::vector<double>> phi_cache_;  // per goal cell, lazy
  std::vector<uint8_t> phi_ok_;
  // slot -> [begin, end) into each stream's action vector
  std::vector<std::vector<std::pair<int64_t, int64_t>>> slot_index_;
  std::vector<double> delta_nlos_user_;  // n_aav * n_users, per episode
  std::vector<double> delta_nlos_bs_;    // n_aav
  Rng rng_goal_{0}, rng_chan_{0};
  std::vector<ServiceRecord> log_;
  std::vector<TraceRow> trace_;
};

void write_trace_jsonl(const std::string& path,
                       const std::vector<TraceRow>& rows);
// Rows of cx,cy,count over the grid.
void write_heatmap_csv(const std::string& path, const mob::GridSpec& g,
                       const std::vector<double>& counts);
// One circle per AAV per sampled slot: slot,aav,x,y,radius.
void write_service_overlay_csv(const std::string& path,
                               const std::vector<TraceRow>& rows,
                               double radius);

}  // namespace ibn::env
