#pragma once
#include <cstdint>
#include <string>
#include <vector>

namespace ibn::qoe {

struct QoeParams {
  double t1 = 3.2;       // first knee, s
  double t2 = 9.5;       // second knee, equals the delay cap
  double k1 = 0.18;      // initial utility depth
  double k2 = 0.023;     // mid-range drop rate
  double k3 = 0.0078;    // tail quadratic rate
  double alpha_q = 0.65;
  double gamma_q = 1.45;
  int alpha_b = 4;       // assist-curve shape
  int beta_b = 1;
  int n = 5;             // defection sigmoid steepness
  double t_a = 1.0;      // assist tolerance threshold, s
  double t_b = 6.0;      // defection threshold, s

  double beta_q() const;  // second-segment elevation, continuity at t1
};

// Three-segment utility of the realized response time.
double utility(double delay_s, const QoeParams& p);

// Accumulated assist dissatisfaction: Beta(alpha_b, beta_b) mass between
// t_a and the realized delay, on the [t_a, t2] axis. Zero below t_a.
double assist_penalty(double delay_s, const QoeParams& p);

// Defection toward self-service: 0 below t_b, 1 beyond t2, smooth between.
double defection_penalty(double delay_s, const QoeParams& p);

// (utility - assist - defection + 2) / 3, clamped to [0, 1].
double qoe_normalized(double delay_s, const QoeParams& p);

// Mean over all (user, slot) scores. Throws on an empty set.
double objective(const std::vector<double>& q1_values);

struct QoeLogRow {
  int64_t slot = 0;
  int user = 0;
  int aav = -1;                // -1 when unassigned
  std::string route;           // "aav", "bs" or "unserved"
  double delay_s = 0.0;
  double q1 = 0.0;
};

void write_qoe_log_csv(const std::string& path,
                       const std::vector<QoeLogRow>& rows);

}  // namespace ibn::qoe
