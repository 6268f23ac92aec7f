#include "ibn/qoe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ibn::qoe {

double QoeParams::beta_q() const { return 1.0 - k1 * std::exp(-alpha_q * t1); }

double utility(double t, const QoeParams& p) {
  if (t <= p.t1) return 1.0 - p.k1 * std::exp(-p.alpha_q * t);
  double bq = p.beta_q();
  if (t <= p.t2) return bq - p.k2 * std::pow(t - p.t1, p.gamma_q);
  double at_t2 = bq - p.k2 * std::pow(p.t2 - p.t1, p.gamma_q);
  return std::max(0.0, at_t2 - p.k3 * (t - p.t2) * (t - p.t2));
}

namespace {
// Regularized incomplete Beta for integer shape parameters:
// I_x(a, b) = sum_{j=a}^{a+b-1} C(a+b-1, j) x^j (1-x)^{a+b-1-j}
double beta_cdf_int(double x, int a, int b) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  int m = a + b - 1;
  double total = 0.0;
  double comb = 1.0;
  for (int j = 0; j < a; ++j) comb = comb * double(m - j) / double(j + 1);
  // comb now C(m, a); walk j upward re-using the ratio
  for (int j = a; j <= m; ++j) {
    total += comb * std::pow(x, j) * std::pow(1.0 - x, m - j);
    comb = comb * double(m - j) / double(j + 1);
  }
  return total;
}
}  // namespace

double assist_penalty(double t, const QoeParams& p) {
  if (t <= p.t_a) return 0.0;
  double x = (std::min(t, p.t2) - p.t_a) / (p.t2 - p.t_a);
  return beta_cdf_int(x, p.alpha_b, p.beta_b);
}

double defection_penalty(double t, const QoeParams& p) {
  if (t <= p.t_b) return 0.0;
  if (t >= p.t2) return 1.0;
  double x = (t - p.t_b) / (p.t2 - p.t_b);
  double xn = std::pow(x, p.n), yn = std::pow(1.0 - x, p.n);
  return xn / (xn + yn);
}

double qoe_normalized(double t, const QoeParams& p) {
  double raw = utility(t, p) - assist_penalty(t, p) - defection_penalty(t, p);
  return std::clamp((raw + 2.0) / 3.0, 0.0, 1.0);
}

double objective(const std::vector<double>& q1_values) {
  if (q1_values.empty()) throw std::invalid_argument("objective of empty set");
  double sum = 0.0;
  for (double v : q1_values) sum += v;
  return sum / double(q1_values.size());
}

void write_qoe_log_csv(const std::string& path,
                       const std::vector<QoeLogRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "slot,user,aav,route,delay_s,q1\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%lld,%d,%d,%s,%.17g,%.17g\n",
                  static_cast<long long>(r.slot), r.user, r.aav,
                  r.route.c_str(), r.delay_s, r.q1);
    f << buf;
  }
}

}  // namespace ibn::qoe
