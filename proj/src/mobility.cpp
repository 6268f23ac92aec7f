#include "ibn/mobility.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <stdexcept>

#include "json.hpp"

namespace ibn::mob {

int GridSpec::cell_of(double x, double y) const {
  int ix = int(std::floor((x - origin_x) / h));
  int iy = int(std::floor((y - origin_y) / h));
  ix = std::clamp(ix, 0, nx - 1);
  iy = std::clamp(iy, 0, ny - 1);
  return iy * nx + ix;
}

double GridSpec::cell_cx(int idx) const {
  return origin_x + (idx % nx + 0.5) * h;
}
double GridSpec::cell_cy(int idx) const {
  return origin_y + (idx / nx + 0.5) * h;
}

std::vector<double> density_from_positions(const GridSpec& g,
                                           const std::vector<double>& xs,
                                           const std::vector<double>& ys) {
  if (xs.size() != ys.size())
    throw std::runtime_error("density: coordinate count mismatch");
  std::vector<double> p(size_t(g.cells()), 0.0);
  double inv_area = 1.0 / (g.h * g.h);
  for (size_t i = 0; i < xs.size(); ++i)
    p[size_t(g.cell_of(xs[i], ys[i]))] += inv_area;
  return p;
}

std::vector<double> speed_field(const FieldParams& fp,
                                const std::vector<double>& density) {
  std::vector<double> f(density.size());
  for (size_t i = 0; i < density.size(); ++i) {
    double p = density[i];
    double v;
    if (p <= fp.p_min)
      v = fp.f_t;
    else if (p >= fp.p_max)
      v = fp.f_v;
    else
      v = fp.f_t + (p - fp.p_min) / (fp.p_max - fp.p_min);
    f[i] = std::max(v, fp.f_eps);
  }
  return f;
}

std::vector<double> cost_field(const FieldParams& fp,
                               const std::vector<double>& speed,
                               const std::vector<double>& discomfort) {
  if (speed.size() != discomfort.size())
    throw std::runtime_error("cost_field: size mismatch");
  std::vector<double> c(speed.size());
  for (size_t i = 0; i < speed.size(); ++i)
    c[i] = (fp.alpha * speed[i] + fp.beta + fp.gamma * discomfort[i]) / speed[i];
  return c;
}

std::vector<double> solve_eikonal(const GridSpec& g,
                                  const std::vector<double>& cost,
                                  const std::vector<int>& goal_cells,
                                  const double* dir_mult) {
  if (int(cost.size()) != g.cells())
    throw std::runtime_error("solve_eikonal: cost size mismatch");
  const double mx = dir_mult ? dir_mult[0] : 1.0;
  const double my = dir_mult ? dir_mult[1] : 1.0;
  std::vector<double> phi(size_t(g.cells()), kInf);
  std::vector<uint8_t> known(size_t(g.cells()), 0);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  for (int gc : goal_cells) {
    if (gc < 0 || gc >= g.cells())
      throw std::runtime_error("solve_eikonal: goal cell out of range");
    phi[size_t(gc)] = 0.0;
    heap.push({0.0, gc});
  }

  auto update = [&](int idx) {
    double c = cost[size_t(idx)];
    if (!std::isfinite(c)) return;  // wall
    int x = idx % g.nx, y = idx / g.nx;
    double a = kInf, b = kInf;  // best upwind neighbor per axis
    if (x > 0) a = std::min(a, phi[size_t(idx - 1)]);
    if (x + 1 < g.nx) a = std::min(a, phi[size_t(idx + 1)]);
    if (y > 0) b = std::min(b, phi[size_t(idx - g.nx)]);
    if (y + 1 < g.ny) b = std::min(b, phi[size_t(idx + g.nx)]);
    double cx = c * g.h * mx, cy = c * g.h * my;
    double cand = kInf;
    if (std::isfinite(a) && std::isfinite(b)) {
      // ((phi-a)/cx)^2 + ((phi-b)/cy)^2 = 1, root above max(a,b)
      double ix = 1.0 / (cx * cx), iy = 1.0 / (cy * cy);
      double A = ix + iy;
      double B = -2.0 * (a * ix + b * iy);
      double C = a * a * ix + b * b * iy - 1.0;
      double disc = B * B - 4.0 * A * C;
      if (disc >= 0.0) {
        double root = (-B + std::sqrt(disc)) / (2.0 * A);
        if (root >= std::max(a, b)) cand = root;
      }
    }
    if (!std::isfinite(cand)) {
      if (std::isfinite(a)) cand = a + cx;
      if (std::isfinite(b)) cand = std::min(cand, b + cy);
    }
    if (cand < phi[size_t(idx)]) {
      phi[size_t(idx)] = cand;
      heap.push({cand, idx});
    }
  };

  while (!heap.empty()) {
    auto [d, idx] = heap.top();
    heap.pop();
    if (known[size_t(idx)] || d > phi[size_t(idx)]) continue;
    known[size_t(idx)] = 1;
    int x = idx % g.nx, y = idx / g.nx;
    if (x > 0 && !known[size_t(idx - 1)]) update(idx - 1);
    if (x + 1 < g.nx && !known[size_t(idx + 1)]) update(idx + 1);
    if (y > 0 && !known[size_t(idx - g.nx)]) update(idx - g.nx);
    if (y + 1 < g.ny && !known[size_t(idx + g.nx)]) update(idx + g.nx);
  }
  return phi;
}

// central difference with one-sided fallback; 0 when no finite neighbor pair
static void cell_gradient(const GridSpec& g, const std::vector<double>& phi,
                          int idx, double* gx, double* gy) {
  *gx = 0.0;
  *gy = 0.0;
  if (!std::isfinite(phi[size_t(idx)])) return;
  int x = idx % g.nx, y = idx / g.nx;
  double c = phi[size_t(idx)];
  double xm = x > 0 ? phi[size_t(idx - 1)] : kInf;
  double xp = x + 1 < g.nx ? phi[size_t(idx + 1)] : kInf;
  if (std::isfinite(xm) && std::isfinite(xp))
    *gx = (xp - xm) / (2.0 * g.h);
  else if (std::isfinite(xp))
    *gx = (xp - c) / g.h;
  else if (std::isfinite(xm))
    *gx = (c - xm) / g.h;
  double ym = y > 0 ? phi[size_t(idx - g.nx)] : kInf;
  double yp = y + 1 < g.ny ? phi[size_t(idx + g.nx)] : kInf;
  if (std::isfinite(ym) && std::isfinite(yp))
    *gy = (yp - ym) / (2.0 * g.h);
  else if (std::isfinite(yp))
    *gy = (yp - c) / g.h;
  else if (std::isfinite(ym))
    *gy = (c - ym) / g.h;
}

void phi_gradient(const GridSpec& g, const std::vector<double>& phi, double x,
                  double y, double* gx, double* gy) {
  // bilinear over the four nearest cell centers
  double fx = (x - g.origin_x) / g.h - 0.5;
  double fy = (y - g.origin_y) / g.h - 0.5;
  int ix = int(std::floor(fx)), iy = int(std::floor(fy));
  double tx = fx - ix, ty = fy - iy;
  ix = std::clamp(ix, 0, g.nx - 2);
  iy = std::clamp(iy, 0, g.ny - 2);
  tx = std::clamp(tx, 0.0, 1.0);
  ty = std::clamp(ty, 0.0, 1.0);
  double gx00, gy00, gx10, gy10, gx01, gy01, gx11, gy11;
  cell_gradient(g, phi, iy * g.nx + ix, &gx00, &gy00);
  cell_gradient(g, phi, iy * g.nx + ix + 1, &gx10, &gy10);
  cell_gradient(g, phi, (iy + 1) * g.nx + ix, &gx01, &gy01);
  cell_gradient(g, phi, (iy + 1) * g.nx + ix + 1, &gx11, &gy11);
  *gx = (1 - tx) * (1 - ty) * gx00 + tx * (1 - ty) * gx10 +
        (1 - tx) * ty * gx01 + tx * ty * gx11;
  *gy = (1 - tx) * (1 - ty) * gy00 + tx * (1 - ty) * gy10 +
        (1 - tx) * ty * gy01 + tx * ty * gy11;
}

void velocity_at(const GridSpec& g, const std::vector<double>& speed,
                 const std::vector<double>& phi, double x, double y,
                 double* vx, double* vy) {
  *vx = 0.0;
  *vy = 0.0;
  int idx = g.cell_of(x, y);
  if (!std::isfinite(phi[size_t(idx)])) return;
  double gx, gy;
  phi_gradient(g, phi, x, y, &gx, &gy);
  double norm = std::hypot(gx, gy);
  if (norm < 1e-12) return;
  double f = speed[size_t(idx)];
  *vx = -f * gx / norm;
  *vy = -f * gy / norm;
}

void advance(const GridSpec& g, const std::vector<double>& speed,
             const std::vector<double>& phi, double dt, double* x, double* y) {
  double vx, vy;
  velocity_at(g, speed, phi, *x, *y, &vx, &vy);
  *x += vx * dt;
  *y += vy * dt;
  double eps = 1e-9;
  *x = std::clamp(*x, g.origin_x, g.origin_x + g.width() - eps);
  *y = std::clamp(*y, g.origin_y, g.origin_y + g.height() - eps);
}

void write_trajectory_jsonl(const std::string& path,
                            const std::vector<TrajectoryRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("trajectory: cannot write " + path);
  for (const auto& r : rows) {
    nlohmann::json j;
    j["slot"] = r.slot;
    j["user_id"] = r.user_id;
    j["x"] = r.x;
    j["y"] = r.y;
    f << j.dump() << '\n';
  }
}

}  // namespace ibn::mob
