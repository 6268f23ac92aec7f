#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "ibn/rng.hpp"

// User-intent data model: per-user chronological streams of device actions,
// fixed-size windows for sequence models, and a seeded synthetic generator.

namespace ibn::intent {

struct Action {
  int64_t t = 0;     // slot index, >= 0
  int device = 0;    // device index
  int duration = 1;  // running duration in slots, > 0
  int command = 0;   // command code
};

struct Stream {
  int user_id = 0;
  std::vector<Action> actions;  // sorted by t, insertion order within a slot
};

struct Dataset {
  std::vector<Stream> streams;
  int64_t max_slot() const;  // largest action slot, -1 if empty
};

// CSV with header: user_id,timestamp,device_id,duration,command.
// Malformed rows raise with their line number.
Dataset ingest_csv(const std::string& path);
void write_csv(const std::string& path, const Dataset& d);

// Per-field min-max over a fitted split; maps raw values to [0,1].
// Constant fields map to 0.5.
struct NormStats {
  double lo[4] = {0, 0, 0, 0};
  double hi[4] = {1, 1, 1, 1};
  double normalize(int field, double v) const;
  double denormalize(int field, double v) const;
};
NormStats fit_stats(const Dataset& train);

// A window is the l_h x k x 4 slice of one stream covering slots
// [t0 - l_h, t0), zero-padded, with a per-row pad mask (1 = real action).
// Fields are normalized; a slot with more than k actions keeps the newest k.
struct Window {
  int64_t l_h = 0, k = 0;
  std::vector<double> x;      // l_h * k * 4
  std::vector<uint8_t> mask;  // l_h * k
};
Window make_window(const Stream& s, const NormStats& st, int64_t t0,
                   int64_t l_h, int64_t k);

// One JSON object per window row for eyeballing.
void dump_windows_jsonl(const std::string& path,
                        const std::vector<Window>& windows);

// Chronological split by global time cuts (defaults 7:2:1).
struct Split {
  Dataset train, val, test;
};
Split split_dataset(const Dataset& d, double train_frac = 0.7,
                    double val_frac = 0.2);

// Synthetic traffic: per-user periodic device schedules (period + per-user
// phase), time-of-day gating, an on/off command pair per firing, and a
// correlated follow-up rule (src fires -> dst fires `follow_delay` slots
// later with probability follow_prob).
struct GenConfig {
  int n_users = 6;
  int n_devices = 4;
  int64_t horizon = 2000;  // slots
  int day_len = 50;
  int gate_open = 0;   // devices may fire when (t % day_len) in [open, close)
  int gate_close = 50;
  std::vector<int> periods;  // per device; defaults to 5 + 2*d
  double fire_prob = 1.0;    // chance a scheduled slot actually fires
  int follow_src = 0;
  int follow_dst = 1;
  int follow_delay = 2;
  double follow_prob = 0.8;
  int base_duration = 2;  // on-duration = base_duration + device % 3
  int on_command = 1;
  int off_command = 0;
  bool emit_off = true;  // also emit the off action when the duration ends
};
Dataset synth_generate(const GenConfig& cfg, Rng& rng);

}  // namespace ibn::intent
