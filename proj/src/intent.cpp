#include "ibn/intent.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ibn::intent {

int64_t Dataset::max_slot() const {
  int64_t m = -1;
  for (const auto& s : streams)
    for (const auto& a : s.actions) m = std::max(m, a.t);
  return m;
}

static int64_t parse_int(const std::string& field, int line, const char* what) {
  int64_t out = 0;
  auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  if (ec != std::errc() || p != field.data() + field.size())
    throw std::runtime_error("csv line " + std::to_string(line) + ": bad " +
                             what + " '" + field + "'");
  return out;
}

Dataset ingest_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("csv: cannot read " + path);
  std::string line;
  int lineno = 0;
  if (!std::getline(f, line)) throw std::runtime_error("csv: empty file " + path);
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "user_id,timestamp,device_id,duration,command")
    throw std::runtime_error("csv line 1: unexpected header '" + line + "'");

  std::map<int, Stream> by_user;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5)
      throw std::runtime_error("csv line " + std::to_string(lineno) +
                               ": expected 5 fields, got " +
                               std::to_string(cells.size()));
    int user = int(parse_int(cells[0], lineno, "user_id"));
    Action a;
    a.t = parse_int(cells[1], lineno, "timestamp");
    a.device = int(parse_int(cells[2], lineno, "device_id"));
    a.duration = int(parse_int(cells[3], lineno, "duration"));
    a.command = int(parse_int(cells[4], lineno, "command"));
    if (a.t < 0)
      throw std::runtime_error("csv line " + std::to_string(lineno) +
                               ": negative timestamp");
    if (a.duration <= 0)
      throw std::runtime_error("csv line " + std::to_string(lineno) +
                               ": duration must be positive");
    auto& s = by_user[user];
    s.user_id = user;
    s.actions.push_back(a);
  }
  Dataset d;
  for (auto& [id, s] : by_user) {
    std::stable_sort(s.actions.begin(), s.actions.end(),
                     [](const Action& a, const Action& b) { return a.t < b.t; });
    d.streams.push_back(std::move(s));
  }
  return d;
}

void write_csv(const std::string& path, const Dataset& d) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("csv: cannot write " + path);
  f << "user_id,timestamp,device_id,duration,command\n";
  for (const auto& s : d.streams)
    for (const auto& a : s.actions)
      f << s.user_id << ',' << a.t << ',' << a.device << ',' << a.duration
        << ',' << a.command << '\n';
}

double NormStats::normalize(int field, double v) const {
  double span = hi[field] - lo[field];
  if (span <= 0.0) return 0.5;
  return (v - lo[field]) / span;
}

double NormStats::denormalize(int field, double v) const {
  double span = hi[field] - lo[field];
  if (span <= 0.0) return lo[field];
  return lo[field] + v * span;
}

NormStats fit_stats(const Dataset& train) {
  NormStats st;
  bool first = true;
  for (const auto& s : train.streams)
    for (const auto& a : s.actions) {
      double f[4] = {double(a.t), double(a.device), double(a.duration),
                     double(a.command)};
      for (int i = 0; i < 4; ++i) {
        if (first || f[i] < st.lo[i]) st.lo[i] = f[i];
        if (first || f[i] > st.hi[i]) st.hi[i] = f[i];
      }
      first = false;
    }
  if (first) throw std::runtime_error("fit_stats: empty dataset");
  return st;
}

Window make_window(const Stream& s, const NormStats& st, int64_t t0,
                   int64_t l_h, int64_t k) {
  if (l_h <= 0 || k <= 0) throw std::runtime_error("make_window: bad dims");
  Window w;
  w.l_h = l_h;
  w.k = k;
  w.x.assign(size_t(l_h * k * 4), 0.0);
  w.mask.assign(size_t(l_h * k), 0);
  // bucket actions by slot, keeping insertion order
  size_t nrows = size_t(l_h);
  std::vector<std::vector<const Action*>> rows(nrows);
  for (const auto& a : s.actions) {
    if (a.t < t0 - l_h || a.t >= t0) continue;
    rows[size_t(a.t - (t0 - l_h))].push_back(&a);
  }
  for (int64_t r = 0; r < l_h; ++r) {
    auto& bucket = rows[size_t(r)];
    // overlong slots keep the newest k
    size_t start = bucket.size() > size_t(k) ? bucket.size() - size_t(k) : 0;
    for (size_t i = start; i < bucket.size(); ++i) {
      int64_t slot = int64_t(i - start);
      const Action* a = bucket[i];
      size_t base = size_t((r * k + slot) * 4);
      w.x[base + 0] = st.normalize(0, double(a->t));
      w.x[base + 1] = st.normalize(1, double(a->device));
      w.x[base + 2] = st.normalize(2, double(a->duration));
      w.x[base + 3] = st.normalize(3, double(a->command));
      w.mask[size_t(r * k + slot)] = 1;
    }
  }
  return w;
}

void dump_windows_jsonl(const std::string& path,
                        const std::vector<Window>& windows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("dump_windows: cannot write " + path);
  for (const auto& w : windows) {
    nlohmann::json j;
    j["l_h"] = w.l_h;
    j["k"] = w.k;
    j["x"] = w.x;
    j["mask"] = w.mask;
    f << j.dump() << '\n';
  }
}

Split split_dataset(const Dataset& d, double train_frac, double val_frac) {
  int64_t horizon = d.max_slot() + 1;
  int64_t t_cut = std::llround(double(horizon) * train_frac);
  int64_t v_cut = std::llround(double(horizon) * (train_frac + val_frac));
  Split out;
  for (const auto& s : d.streams) {
    Stream tr, va, te;
    tr.user_id = va.user_id = te.user_id = s.user_id;
    for (const auto& a : s.actions) {
      if (a.t < t_cut)
        tr.actions.push_back(a);
      else if (a.t < v_cut)
        va.actions.push_back(a);
      else
        te.actions.push_back(a);
    }
    out.train.streams.push_back(std::move(tr));
    out.val.streams.push_back(std::move(va));
    out.test.streams.push_back(std::move(te));
  }
  return out;
}

Dataset synth_generate(const GenConfig& cfg, Rng& rng) {
  if (cfg.n_devices <= 0 || cfg.n_users <= 0 || cfg.horizon <= 0)
    throw std::runtime_error("synth_generate: bad config");
  std::vector<int> periods = cfg.periods;
  if (periods.empty())
    for (int d = 0; d < cfg.n_devices; ++d) periods.push_back(5 + 2 * d);
  if (int(periods.size()) != cfg.n_devices)
    throw std::runtime_error("synth_generate: periods size mismatch");

  Dataset out;
  for (int u = 0; u < cfg.n_users; ++u) {
    Rng r = rng.substream("user." + std::to_string(u));
    Stream s;
    s.user_id = u;
    std::vector<int> phase(size_t(cfg.n_devices));
    for (int d = 0; d < cfg.n_devices; ++d)
      phase[size_t(d)] = r.uniform_int(0, periods[size_t(d)] - 1);

    auto fire = [&](int64_t t, int dev) {
      int dur = cfg.base_duration + dev % 3;
      s.actions.push_back({t, dev, dur, cfg.on_command});
      if (cfg.emit_off && t + dur < cfg.horizon)
        s.actions.push_back({t + dur, dev, dur, cfg.off_command});
    };

    auto gated = [&](int64_t t) {
      int64_t tod = t % cfg.day_len;
      return tod >= cfg.gate_open && tod < cfg.gate_close;
    };
    for (int64_t t = 0; t < cfg.horizon; ++t) {
      if (!gated(t)) continue;
      for (int d = 0; d < cfg.n_devices; ++d) {
        if (t % periods[size_t(d)] != phase[size_t(d)]) continue;
        if (cfg.fire_prob < 1.0 && r.uniform() >= cfg.fire_prob) continue;
        fire(t, d);
        if (d == cfg.follow_src && cfg.follow_dst >= 0 &&
            cfg.follow_dst < cfg.n_devices &&
            t + cfg.follow_delay < cfg.horizon && gated(t + cfg.follow_delay) &&
            r.uniform() < cfg.follow_prob)
          fire(t + cfg.follow_delay, cfg.follow_dst);
      }
    }
    std::stable_sort(s.actions.begin(), s.actions.end(),
                     [](const Action& a, const Action& b) { return a.t < b.t; });
    out.streams.push_back(std::move(s));
  }
  return out;
}

}  // namespace ibn::intent
