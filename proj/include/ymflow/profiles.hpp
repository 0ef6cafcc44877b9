#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ymflow/linops.hpp"

namespace ymflow {

// Exponents (m_1..m_L) of b_1^{m_1} ... b_L^{m_L}.
using MultiIndex = std::vector<int>;

// Sum of k m_k.
int weight_of(const MultiIndex& m);

// Polynomial in b = (b_1..b_L) with grid-function coefficients.
class BPolynomial {
 public:
  BPolynomial() = default;
  BPolynomial(GridPtr grid, int L) : grid_(std::move(grid)), L_(L) {}

  const GridPtr& grid() const { return grid_; }
  int L() const { return L_; }
  const std::map<MultiIndex, GridFunction>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  // Adds s * f to the coefficient of m.
  void add(const MultiIndex& m, const GridFunction& f, double s = 1.0);
  BPolynomial& operator+=(const BPolynomial& o);
  BPolynomial& operator*=(double s);

  // Common weight of all monomials, or nullopt when mixed (the zero polynomial counts as homogeneous of any degree, reported as 0).
  std::optional<int> homogeneity() const;
  // Monomials of weight p only.
  BPolynomial part(int p) const;
  // Monomials of weight > p only.
  BPolynomial above(int p) const;

  GridFunction evaluate(std::span<const double> b) const;
  // d/db_j, 1-based j.
  BPolynomial derivative(int j) const;
  bool depends_on(int j) const;
  // Multiplies every monomial by b_j (1-based).
  BPolynomial times_b(int j, double s = 1.0) const;
  // Coefficient-wise map.
  template <class F>
  BPolynomial map(F&& fn) const {
    BPolynomial out(grid_, L_);
    for (const auto& [m, f] : terms_) out.terms_.emplace(m, fn(f));
    return out;
  }
  // Multiplies every coefficient by a grid function.
  BPolynomial times(const GridFunction& w) const;

 private:
  GridPtr grid_;
  int L_ = 0;
  std::map<MultiIndex, GridFunction> terms_;
};

// Product keeping monomials of weight <= max_weight.
BPolynomial multiply(const BPolynomial& a, const BPolynomial& b, int max_weight);

std::string format_multi(const MultiIndex& m);

// f^{(j)}(Q)/j! for j = 0..j_max; zero for j >= 4.
std::vector<GridFunction> taylor_weights(const OperatorContext& ctx, int j_max);

struct ApproximateProfile {
  int L = 0;
  std::vector<GridFunction> T;                // T_0 .. T_L
  std::vector<BPolynomial> S;                 // S_0 .. S_{L+2}; S_0 = S_1 = 0
  std::vector<BPolynomial> F;                 // F_2 .. F_{L+2} at the same index
  std::vector<std::vector<BPolynomial>> dS;   // dS[k][j] = dS_k/db_j, j = 1..L
  BPolynomial Psi;                            // unlocalized residual: E_{L+2} + (d-2)/y^2 (weight > L+2 nonlinearity)
  BPolynomial dropped;                        // the nonlinear part of Psi alone
  double worst_roundtrip = 0.0;               // over all (k, monomial) inversions
  std::vector<std::string> inversion_log;     // "k=3 m=(1,1,0,0) roundtrip=..."
};

ApproximateProfile build_sk(const OperatorContext& ctx, const ProfileSet& ladder, int L);

// Constant C of the cone |b_k| <= C b_1^k.
inline constexpr double kConeConstant = 10.0;

// Throws config_error outside 0 < b_1 < b*, |b_k| <= C b_1^k (b = 0 is allowed).
void check_cone(const ModelParams& p, std::span<const double> b);

struct QbParts {
  GridFunction Qb;
  GridFunction Theta;  // Qb - Q
};

QbParts assemble_qb(const OperatorContext& ctx, const ApproximateProfile& prof, std::span<const double> b);
// Q + chi_{B_1} Theta with B_1 = b_1^{-(1+eta)/2}.
GridFunction localize_qb(const OperatorContext& ctx, const ApproximateProfile& prof, std::span<const double> b,
                         double eta);

struct ResidualNorms {
  int m = 0;
  double full_L = 0.0;        // int |L^{hbar+m+1} Psi|^2
  double full_weighted = 0.0;  // int |Psi|^2 / (1 + y^{4(hbar+m+1)})
  double b0_L = 0.0;          // same on y <= 2 B_0
  double b0_weighted = 0.0;
  double m_L = 0.0;           // int_{y <= 2M} |L^{hbar+m+1} Psi|^2
};

struct ResidualReport {
  GridFunction psi;         // chi Psi_b plus the three cutoff terms, each formed without cancellation
  GridFunction psi_direct;  // the flow operator applied to the localized profile on the mesh
  std::vector<ResidualNorms> norms;  // m = 0 .. m_max
  double B0 = 0.0, B1 = 0.0;
  double dropped = 0.0;  // weighted norm of the truncated (homogeneity > L+2) part of the nonlinearity / of Psi
  double b1_s_ratio = 0.0;  // |(b_1)_s| / b_1^2 under the modulation law
};

// Renormalized-flow residual of the (localized) profile with d/ds taken along the exact modulation law.
ResidualReport residual_psi(const OperatorContext& ctx, const ApproximateProfile& prof, std::span<const double> b,
                            double eta, bool localize = true, int m_max = 1);

struct PowerLawScan {
  std::vector<double> b1;
  std::vector<std::vector<double>> norms;  // norms[m][i]: weighted Psi norm on y <= 2 B_0
  std::vector<double> slope, target;       // least-squares log-log slope vs 2m + 4 + 2(1 - delta)
  bool separated = true;                   // 2 B_0 <= B_1 at every b_1
};

// Scan along b = (b_1, 0, ..., 0).
PowerLawScan residual_power_law(const OperatorContext& ctx, const ApproximateProfile& prof,
                                const std::vector<double>& b1, double eta, int m_max = 1);

// (b_k)_s = b_{k+1} - (2k - gamma) b_1 b_k with b_{L+1} = 0.
std::vector<double> modulation_law(const ModelParams& p, std::span<const double> b);

}  // namespace ymflow
