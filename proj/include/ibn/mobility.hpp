#pragma once
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

// Continuum-crowd ground mobility: density-dependent walking speed, a unit
// cost field, a first-order upwind fast-marching Eikonal solve per goal, and
// gradient-descent stepping of the walkers.

namespace ibn::mob {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct GridSpec {
  int nx = 50, ny = 50;
  double h = 10.0;  // cell edge, meters
  double origin_x = 0.0, origin_y = 0.0;

  int cells() const { return nx * ny; }
  int cell_of(double x, double y) const;      // clamped to the grid
  double cell_cx(int idx) const;               // cell-center world coords
  double cell_cy(int idx) const;
  double width() const { return nx * h; }
  double height() const { return ny * h; }
};

struct FieldParams {
  double f_t = 1.3;    // free-walk speed, m/s
  double f_v = 0.2;    // jammed speed, m/s
  double f_eps = 1e-3; // speed floor
  double p_min = 0.5;  // density thresholds, 1/m^2
  double p_max = 5.0;
  double alpha = 1.0;  // cost weights: time
  double beta = 0.5;   //               distance
  double gamma = 2.0;  //               discomfort
  double dt = 0.2;     // slot length, seconds
};

// p[cell] = headcount / h^2, so sum(p) * h^2 equals the walker count.
std::vector<double> density_from_positions(const GridSpec& g,
                                           const std::vector<double>& xs,
                                           const std::vector<double>& ys);

// Piecewise density response: f_t below p_min, f_v above p_max, and the
// linear blend f_t + (p - p_min)/(p_max - p_min) in between, floored at
// f_eps.
std::vector<double> speed_field(const FieldParams& fp,
                                const std::vector<double>& density);

// C = (alpha*f + beta + gamma*g) / f.  Infinite discomfort marks a wall.
std::vector<double> cost_field(const FieldParams& fp,
                               const std::vector<double>& speed,
                               const std::vector<double>& discomfort);

// First-order upwind fast marching for |grad phi| = C with phi = 0 on the
// goal cells.  Unreachable cells stay +inf.  dir_mult, when given, scales the
// unit cost per axis {x, y} (axis-anisotropic option; {1,1} is isotropic).
std::vector<double> solve_eikonal(const GridSpec& g,
                                  const std::vector<double>& cost,
                                  const std::vector<int>& goal_cells,
                                  const double* dir_mult = nullptr);

// grad phi at a world position: per-cell central differences (one-sided at
// borders and next to walls), bilinearly interpolated.
void phi_gradient(const GridSpec& g, const std::vector<double>& phi, double x,
                  double y, double* gx, double* gy);

// v = -f * grad/|grad| evaluated at (x, y); zero when the gradient vanishes
// or the cell is unreachable.
void velocity_at(const GridSpec& g, const std::vector<double>& speed,
                 const std::vector<double>& phi, double x, double y,
                 double* vx, double* vy);

// One explicit Euler step, clamped to the grid interior.
void advance(const GridSpec& g, const std::vector<double>& speed,
             const std::vector<double>& phi, double dt, double* x, double* y);

struct TrajectoryRow {
  int64_t slot;
  int user_id;
  double x, y;
};
void write_trajectory_jsonl(const std::string& path,
                            const std::vector<TrajectoryRow>& rows);

}  // namespace ibn::mob
