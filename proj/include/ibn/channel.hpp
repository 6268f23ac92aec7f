#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "ibn/rng.hpp"

namespace ibn::chan {

struct ChannelParams {
  double a = 0.6;               // LoS weight
  double b = 0.2;               // LoS weight
  double d0 = 1.0;              // reference distance, m
  double lambda = 0.125;        // carrier wavelength, m
  double eta_los = 2.0;         // LoS excess-loss slope, dB per decade
  double delta_nlos_db = 7.8;   // extra NLoS loss for the current episode, dB
  double delta_nlos_mean = 7.8;
  double delta_nlos_sd = 1.1;
  double sigma_sh_los = 3.0;    // shadowing std dev, dB
  double sigma_sh_nlos = 8.0;
  double k0_db = 15.0;          // Rician K at zero elevation
  double kappa = 0.4;           // K slope, dB per degree
  double k_min_db = -20.0;
  double p_tx_dbm = 30.0;       // 30 for backhaul, 23 for access links
  double g_t_dbi = 3.0;
  double g_r_dbi = 3.0;
  double b_w_hz = 20e6;
  double n0_dbm_hz = -169.0;
  double phi0 = 0.0;            // deterministic LoS phase, rad
  double t_delay_max = 9.5;     // outage / unserved delay cap, s
  bool literal_snr = false;     // cancel gain and fading out of capacity
};

struct LinkGeometry {
  double d_3d = 0.0;
  double d_2d = 0.0;
  double psi_deg = 0.0;  // elevation angle, degrees
};

struct ChannelDraw {
  double p_los = 0.0;
  double g_large_db = 0.0;
  double k_db = 0.0;
  double h2 = 0.0;        // small-scale power, linear
  double snr_lin = 0.0;
  double capacity_bps = 0.0;
  double delay_s = 0.0;
  uint64_t rng_state_id = 0;
};

double db_to_lin(double db);
double lin_to_db(double lin);

// Antenna a may be airborne; b is at ground level. psi = 90 when stacked.
LinkGeometry geometry(double ax, double ay, double az, double bx, double by,
                      double bz);

double p_los(double psi_deg, const ChannelParams& p);

// los=false adds the episode's extra NLoS attenuation on top of the LoS curve.
double path_loss_db(const LinkGeometry& g, const ChannelParams& p, bool los);

// Fresh per-episode NLoS offset.
double episode_delta_nlos(const ChannelParams& p, Rng& rng);

// Probabilistic LoS/NLoS mixture of path loss and shadowing, in dB.
double large_scale_gain_db(const LinkGeometry& g, const ChannelParams& p,
                           Rng& rng);

double rician_k_db(double psi_deg, const ChannelParams& p);

// |specular line + scattered component|^2, unit mean power.
double small_scale_power(double k_db, const ChannelParams& p, Rng& rng);

double capacity_bps(double snr_lin, const ChannelParams& p);

// One full stochastic link realization plus the payload's transfer delay.
ChannelDraw draw_link(const LinkGeometry& g, const ChannelParams& p,
                      double payload_bits, Rng& rng);

struct LinkLogRow {
  int64_t slot = 0;
  std::string link_type;  // "aav_user" or "aav_bs"
  double d3d = 0, psi_deg = 0, g_large_db = 0, k_db = 0, snr_db = 0,
         capacity_bps = 0, delay_s = 0;
};

void write_link_log_csv(const std::string& path,
                        const std::vector<LinkLogRow>& rows);

}  // namespace ibn::chan
