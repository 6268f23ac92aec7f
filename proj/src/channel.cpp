#include "ibn/channel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ibn::chan {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kDegPerRad = 180.0 / kPi;
}  // namespace

double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
double lin_to_db(double lin) { return 10.0 * std::log10(lin); }

LinkGeometry geometry(double ax, double ay, double az, double bx, double by,
                      double bz) {
  LinkGeometry g;
  double dx = ax - bx, dy = ay - by, dz = az - bz;
  g.d_2d = std::hypot(dx, dy);
  g.d_3d = std::sqrt(dx * dx + dy * dy + dz * dz);
  g.psi_deg = (g.d_2d == 0.0) ? 90.0
                              : std::atan2(std::fabs(dz), g.d_2d) * kDegPerRad;
  return g;
}

double p_los(double psi_deg, const ChannelParams& p) {
  return 1.0 / (1.0 + p.a * std::exp(-p.b * (psi_deg - p.a)));
}

double path_loss_db(const LinkGeometry& g, const ChannelParams& p, bool los) {
  double d = std::max(g.d_3d, p.d0);
  double pl = 20.0 * std::log10(4.0 * kPi * d / p.lambda) +
              p.eta_los * std::log10(d / p.d0);
  if (!los) pl += p.delta_nlos_db;
  return pl;
}

double episode_delta_nlos(const ChannelParams& p, Rng& rng) {
  return rng.normal(p.delta_nlos_mean, p.delta_nlos_sd);
}

double large_scale_gain_db(const LinkGeometry& g, const ChannelParams& p,
                           Rng& rng) {
  double pl = p_los(g.psi_deg, p);
  double x_l = p.sigma_sh_los > 0 ? rng.normal(0.0, p.sigma_sh_los) : 0.0;
  double x_n = p.sigma_sh_nlos > 0 ? rng.normal(0.0, p.sigma_sh_nlos) : 0.0;
  double los = -path_loss_db(g, p, true) + x_l;
  double nlos = -path_loss_db(g, p, false) + x_n;
  return pl * los + (1.0 - pl) * nlos;
}

double rician_k_db(double psi_deg, const ChannelParams& p) {
  return std::max(p.k0_db - p.kappa * psi_deg, p.k_min_db);
}

double small_scale_power(double k_db, const ChannelParams& p, Rng& rng) {
  double k = db_to_lin(k_db);
  double specular = std::sqrt(k / (k + 1.0));
  double scat = std::sqrt(1.0 / (k + 1.0));
  // CN(0,1): independent re/im each N(0, 1/2)
  double re = rng.normal(0.0, std::sqrt(0.5));
  double im = rng.normal(0.0, std::sqrt(0.5));
  double hr = specular * std::cos(p.phi0) + scat * re;
  double hi = specular * std::sin(p.phi0) + scat * im;
  return hr * hr + hi * hi;
}

double capacity_bps(double snr_lin, const ChannelParams& p) {
  return p.b_w_hz * std::log2(1.0 + snr_lin);
}

ChannelDraw draw_link(const LinkGeometry& g, const ChannelParams& p,
                      double payload_bits, Rng& rng) {
  if (payload_bits <= 0) throw std::invalid_argument("payload must be > 0");
  ChannelDraw d;
  d.rng_state_id = rng.seed();
  d.p_los = p_los(g.psi_deg, p);
  d.g_large_db = large_scale_gain_db(g, p, rng);
  d.k_db = rician_k_db(g.psi_deg, p);
  d.h2 = small_scale_power(d.k_db, p, rng);
  double base_db = p.p_tx_dbm + p.g_t_dbi + p.g_r_dbi - p.n0_dbm_hz -
                   10.0 * std::log10(p.b_w_hz);
  d.snr_lin = p.literal_snr
                  ? db_to_lin(base_db)
                  : db_to_lin(base_db) * db_to_lin(d.g_large_db) * d.h2;
  d.capacity_bps = capacity_bps(d.snr_lin, p);
  d.delay_s = (d.capacity_bps <= 0)
                  ? p.t_delay_max
                  : std::min(payload_bits / d.capacity_bps, p.t_delay_max);
  return d;
}

void write_link_log_csv(const std::string& path,
                        const std::vector<LinkLogRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "slot,link_type,d3d,psi_deg,g_large_db,k_db,snr_db,capacity_bps,"
       "delay_s\n";
  char buf[320];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf,
                  "%lld,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(r.slot), r.link_type.c_str(), r.d3d,
                  r.psi_deg, r.g_large_db, r.k_db, r.snr_db, r.capacity_bps,
                  r.delay_s);
    f << buf;
  }
}

}  // namespace ibn::chan
