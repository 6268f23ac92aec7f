#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "ibn/channel.hpp"
#include "ibn/rng.hpp"

using namespace ibn;
using namespace ibn::chan;

TEST_CASE("link geometry: distances and elevation angle") {
  auto g = geometry(100, 0, 100, 0, 0, 0);
  CHECK(g.d_2d == doctest::Approx(100.0));
  CHECK(g.d_3d == doctest::Approx(141.4213562373095));
  CHECK(g.psi_deg == doctest::Approx(45.0));

  auto above = geometry(5, 5, 80, 5, 5, 0);
  CHECK(above.psi_deg == doctest::Approx(90.0));
  CHECK(above.d_2d == doctest::Approx(0.0));

  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    auto r = geometry(rng.uniform(-500, 500), rng.uniform(-500, 500),
                      rng.uniform(0, 300), rng.uniform(-500, 500),
                      rng.uniform(-500, 500), 0);
    CHECK(r.d_3d >= r.d_2d);
    CHECK(r.psi_deg >= 0.0);
    CHECK(r.psi_deg <= 90.0);
  }
}

TEST_CASE("line-of-sight probability curve") {
  ChannelParams p;
  CHECK(p_los(45.0, p) == doctest::Approx(0.9999165205).epsilon(1e-9));
  CHECK(p_los(1e6, p) == doctest::Approx(1.0));
  double prev = 0.0;
  for (int d = 0; d <= 90; ++d) {
    double v = p_los(double(d), p);
    CHECK(v > prev);
    CHECK(v < 1.0);
    prev = v;
  }
}

TEST_CASE("path loss: reference distance, mixture offset, monotonicity") {
  ChannelParams p;
  LinkGeometry g0;
  g0.d_3d = 1.0;
  CHECK(path_loss_db(g0, p, true) == doctest::Approx(40.0459970203).epsilon(1e-9));

  LinkGeometry g1;
  g1.d_3d = 141.4213562373095;
  CHECK(path_loss_db(g1, p, true) == doctest::Approx(87.3573269726).epsilon(1e-9));
  CHECK(path_loss_db(g1, p, false) - path_loss_db(g1, p, true) ==
        doctest::Approx(7.8));

  double prev = -1.0;
  for (double d = 1.0; d < 2000.0; d *= 1.7) {
    LinkGeometry g;
    g.d_3d = d;
    double pl = path_loss_db(g, p, true);
    CHECK(pl > prev);
    prev = pl;
  }

  // below the reference distance the loss is clamped
  LinkGeometry tiny;
  tiny.d_3d = 0.01;
  CHECK(path_loss_db(tiny, p, true) == doctest::Approx(40.0459970203));
}

TEST_CASE("large-scale gain blends the two propagation states") {
  ChannelParams p;
  p.sigma_sh_los = 0.0;
  p.sigma_sh_nlos = 0.0;
  LinkGeometry g;
  g.d_3d = 141.4213562373095;
  g.psi_deg = 45.0;
  Rng rng(5);
  CHECK(large_scale_gain_db(g, p, rng) ==
        doctest::Approx(-87.3579781129).epsilon(1e-9));

  LinkGeometry over;
  over.d_3d = 100.0;
  over.psi_deg = 90.0;
  double expect = -path_loss_db(over, p, true);
  CHECK(large_scale_gain_db(over, p, rng) ==
        doctest::Approx(expect).epsilon(1e-5));

  SUBCASE("shadowed sample mean matches the analytic blend") {
    ChannelParams ps;  // defaults keep sigma 3 / 8
    double analytic = p_los(g.psi_deg, ps) * (-path_loss_db(g, ps, true)) +
                      (1 - p_los(g.psi_deg, ps)) * (-path_loss_db(g, ps, false));
    Rng r2(99);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) sum += large_scale_gain_db(g, ps, r2);
    CHECK(std::fabs(sum / n - analytic) < 0.1);
  }
}

TEST_CASE("specular-line factor falls with elevation down to its floor") {
  ChannelParams p;
  CHECK(rician_k_db(45.0, p) == doctest::Approx(-3.0));
  CHECK(rician_k_db(0.0, p) == doctest::Approx(15.0));
  CHECK(rician_k_db(90.0, p) == doctest::Approx(-20.0));
  double prev = 100.0;
  for (int d = 0; d <= 90; d += 5) {
    double v = rician_k_db(double(d), p);
    CHECK(v <= prev);
    prev = v;
  }
}

TEST_CASE("small-scale power has unit mean for every mixing ratio") {
  ChannelParams p;
  SUBCASE("pure deterministic limit") {
    Rng rng(1);
    CHECK(small_scale_power(300.0, p, rng) == doctest::Approx(1.0).epsilon(1e-9));
  }
  for (double kdb : {-20.0, -3.0, 0.0, 15.0}) {
    Rng rng(uint64_t(kdb * 10 + 4000));
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) sum += small_scale_power(kdb, p, rng);
    CHECK(sum / n == doctest::Approx(1.0).epsilon(0.02));
  }
}

TEST_CASE("capacity chain reproduces the closed-form reference point") {
  ChannelParams p;
  p.sigma_sh_los = 0.0;
  p.sigma_sh_nlos = 0.0;
  // base SNR with unity gain and fading: 30+3+3+169-73.0103 dB
  double base_db = p.p_tx_dbm + p.g_t_dbi + p.g_r_dbi - p.n0_dbm_hz -
                   10.0 * std::log10(p.b_w_hz);
  CHECK(base_db == doctest::Approx(131.9897000433602).epsilon(1e-12));
  CHECK(capacity_bps(db_to_lin(base_db), p) ==
        doctest::Approx(8.7692058562e8).epsilon(1e-9));
}

TEST_CASE("payload transfer: linearity and the outage cap") {
  ChannelParams p;
  LinkGeometry g = geometry(50, 0, 100, 0, 0, 0);
  Rng r1(42), r2(42);
  auto d1 = draw_link(g, p, 4096.0, r1);
  auto d2 = draw_link(g, p, 8192.0, r2);
  CHECK(d2.capacity_bps == doctest::Approx(d1.capacity_bps));
  CHECK(d2.delay_s == doctest::Approx(2.0 * d1.delay_s));

  Rng r3(42);
  auto d3 = draw_link(g, p, 1e30, r3);
  CHECK(d3.delay_s == doctest::Approx(p.t_delay_max));

  CHECK_THROWS(draw_link(g, p, 0.0, r3));
}

TEST_CASE("literal equation mode cancels gain and fading from capacity") {
  ChannelParams p;
  p.literal_snr = true;
  LinkGeometry g = geometry(200, 0, 100, 0, 0, 0);
  Rng r1(7), r2(8);
  auto a = draw_link(g, p, 4096.0, r1);
  auto b = draw_link(g, p, 4096.0, r2);
  CHECK(a.snr_lin == doctest::Approx(b.snr_lin));
  CHECK(a.capacity_bps == doctest::Approx(8.7692058562e8).epsilon(1e-9));
}

TEST_CASE("expected capacity does not grow with distance") {
  ChannelParams p;
  double prev = 1e300;
  for (int i = 0; i < 10; ++i) {
    double d2d = 20.0 + 60.0 * i;
    LinkGeometry g = geometry(d2d, 0, 100, 0, 0, 0);
    double sum = 0.0;
    const int n = 1000;
    Rng rng(900 + uint64_t(i));
    for (int j = 0; j < n; ++j) sum += draw_link(g, p, 4096.0, rng).capacity_bps;
    double mean = sum / n;
    CHECK(mean <= prev * 1.02);  // small Monte-Carlo slack
    prev = mean;
  }
}

TEST_CASE("decibel conversions round-trip") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    double v = rng.uniform(-200.0, 200.0);
    CHECK(lin_to_db(db_to_lin(v)) == doctest::Approx(v).epsilon(1e-9));
  }
}

TEST_CASE("per-episode extra attenuation draw is reproducible") {
  ChannelParams p;
  Rng a(10), b(10);
  double x = episode_delta_nlos(p, a);
  CHECK(x == episode_delta_nlos(p, b));
  double sum = 0.0, sq = 0.0;
  Rng r(77);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double v = episode_delta_nlos(p, r);
    sum += v;
    sq += v * v;
  }
  double mean = sum / n;
  CHECK(mean == doctest::Approx(7.8).epsilon(0.005));
  CHECK(std::sqrt(sq / n - mean * mean) == doctest::Approx(1.1).epsilon(0.02));
}

TEST_CASE("link log export format") {
  std::vector<LinkLogRow> rows(2);
  rows[0].slot = 3;
  rows[0].link_type = "aav_user";
  rows[1].slot = 4;
  rows[1].link_type = "aav_bs";
  write_link_log_csv("chan_log.csv", rows);
  std::ifstream f("chan_log.csv");
  std::string line;
  std::getline(f, line);
  CHECK(line ==
        "slot,link_type,d3d,psi_deg,g_large_db,k_db,snr_db,capacity_bps,"
        "delay_s");
  int n = 0;
  while (std::getline(f, line)) ++n;
  CHECK(n == 2);
}
