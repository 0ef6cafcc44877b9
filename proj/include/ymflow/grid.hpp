#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ymflow {

// Mesh density descriptor. Nodes are uniform in a computational coordinate xi
// with ln y = xi for y <= 1 (geometric) and spacing ~ y^far_exponent for y >> 1.
struct Grading {
  double far_exponent = 0.9;
  double blend = 2.0;       // xi-width of the geometric-to-algebraic transition
  int fd_order = 6;         // 4 or 6
  int end_corrections = 6;  // Gregory difference terms at each end
};

// Smooth step: 0 for x <= 0, 1 for x >= 1, built from exp(-1/x).
double smoothstep(double x);
double smoothstep_deriv(double x);
double smoothstep_deriv2(double x);

// chi(y) = 1 on [0,1], 0 on [2,inf).
inline double chi(double y) { return 1.0 - smoothstep(y - 1.0); }
inline double chi_deriv(double y) { return -smoothstep_deriv(y - 1.0); }
inline double chi_deriv2(double y) { return -smoothstep_deriv2(y - 1.0); }

struct Stencil {
  std::size_t start = 0;
  std::vector<double> w1;  // d/dxi weights (unit spacing)
  std::vector<double> w2;  // d^2/dxi^2 weights (unit spacing)
};

class RadialGrid {
 public:
  RadialGrid(double y_min, double y_max, std::size_t n, int d, const Grading& grading);

  std::size_t size() const { return y_.size(); }
  const std::vector<double>& nodes() const { return y_; }
  double y(std::size_t i) const { return y_[i]; }
  double y_min() const { return y_.front(); }
  double y_max() const { return y_.back(); }
  int d() const { return d_; }
  const Grading& grading() const { return grading_; }
  double h() const { return h_; }
  double kappa() const { return kappa_; }
  std::size_t one_index() const { return i_one_; }  // node with y == 1 (or 0 when y_min >= 1)

  // d(ln y)/dxi and its xi-derivative; dy/dxi.
  double dlog(std::size_t i) const { return up_[i]; }
  double dlog2(std::size_t i) const { return upp_[i]; }
  double jac(std::size_t i) const { return y_[i] * up_[i]; }

  const Stencil& stencil(std::size_t i) const { return st_[i]; }

  std::vector<double> d_xi(std::span<const double> f) const;
  std::vector<double> d2_xi(std::span<const double> f) const;
  // Lambda = y d/dy and Lambda^2.
  std::vector<double> lambda(std::span<const double> f) const;
  std::vector<double> lambda2(std::span<const double> f) const;

  // Weights including y^{d-3} dy.
  const std::vector<double>& quad_weights() const { return qw_; }
  // int_{y_i0}^{y_i1} f y^{d-3} dy (Gregory-corrected trapezoid in xi).
  double integrate(std::span<const double> f, std::size_t i0, std::size_t i1) const;
  double integrate(std::span<const double> f) const { return integrate(f, 0, size() - 1); }
  // Last node index with y <= Y.
  std::size_t index_below(double Y) const;

  // C_i = int_{y_anchor}^{y_i} F(y) dy (no weight), high-order interval rule.
  std::vector<double> cumulative(std::span<const double> F, std::size_t anchor) const;

  // Lagrange interpolation in ln y; throws outside [y_min, y_max].
  double interpolate(std::span<const double> f, double y) const;

  std::string descriptor() const;

 private:
  void build_stencils();
  void build_quadrature();

  int d_;
  Grading grading_;
  double h_ = 0.0, kappa_ = 0.0;
  std::size_t i_one_ = 0;
  std::vector<double> xi_, y_, up_, upp_, qw_;
  std::vector<Stencil> st_;
  std::vector<double> greg_;  // left-end trapezoid corrections (units of h)
  std::vector<std::vector<double>> interval_w_;  // 6-point interval weights per stencil shift
};

using GridPtr = std::shared_ptr<const RadialGrid>;

GridPtr build_grid(double y_min, double y_max, std::size_t n, int d, const Grading& grading = {});

class GridFunction {
 public:
  GridFunction() = default;
  GridFunction(GridPtr grid, std::vector<double> values);
  static GridFunction zeros(GridPtr grid);
  static GridFunction sample(GridPtr grid, const std::function<double(double)>& fn);

  const GridPtr& grid_ptr() const { return grid_; }
  const RadialGrid& grid() const { return *grid_; }
  std::size_t size() const { return v_.size(); }
  double operator[](std::size_t i) const { return v_[i]; }
  double& operator[](std::size_t i) { return v_[i]; }
  const std::vector<double>& values() const { return v_; }
  std::vector<double>& values() { return v_; }
  std::span<const double> span() const { return v_; }
  bool finite() const;

  GridFunction& operator+=(const GridFunction& o);
  GridFunction& operator-=(const GridFunction& o);
  GridFunction& operator*=(const GridFunction& o);
  GridFunction& operator*=(double a);
  GridFunction& axpy(double a, const GridFunction& x);  // this += a x

  std::optional<int> origin_order;  // f ~ c y^{2p+2} near 0
  std::optional<double> tail_order;  // f ~ c y^q at y_max

 private:
  GridPtr grid_;
  std::vector<double> v_;
};

GridFunction operator+(GridFunction a, const GridFunction& b);
GridFunction operator-(GridFunction a, const GridFunction& b);
GridFunction operator*(GridFunction a, const GridFunction& b);
GridFunction operator*(double s, GridFunction a);
GridFunction operator-(GridFunction a);
GridFunction map(const GridFunction& u, const std::function<double(double, double)>& fn);  // fn(y, u)

void require_same_grid(const GridFunction& a, const GridFunction& b);

double weighted_inner(const GridFunction& f, const GridFunction& g);
double weighted_norm(const GridFunction& f);
// Norm restricted to y <= Y.
double weighted_norm_below(const GridFunction& f, double Y);

GridFunction cutoff(GridPtr grid, double scale);

struct PowerFit {
  double amplitude = 0.0;
  double exponent = 0.0;
  double residual_se = 0.0;  // residual standard error of ln|f|
};

// Least-squares fit of ln|f| against ln y on nodes with y in [y_lo, y_hi].
PowerFit fit_power_law(const GridFunction& f, double y_lo, double y_hi);
// Slopes on the first and last decade of the mesh.
double origin_slope(const GridFunction& f);
double tail_slope(const GridFunction& f);
// Checks origin_order / tail_order annotations against measured slopes (5%).
bool orders_consistent(const GridFunction& f, double tol = 0.05);

}  // namespace ymflow
