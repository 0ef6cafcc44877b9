#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ymflow/linops.hpp"

namespace ymflow {

struct PhiM {
  double M = 0.0;
  GridFunction phi;
  std::vector<double> c;           // c_{0,M} .. c_{L,M}
  std::vector<GridFunction> LmPhi;  // L^m Phi_M, m = 0..L
  Eigen::MatrixXd gram;            // gram(i,k) = <L^i T_k, Phi_M>
  double norm_const = 0.0;         // <chi_M Lambda Q, Lambda Q>
};

PhiM build_phi_m(const OperatorContext& ctx, const ProfileSet& ladder, int L, double M);

// Worst relative defects of the orthogonality structure of Phi_M.
struct PhiMDefects {
  double orthogonality = 0.0;  // max_k |<Phi,T_k>| / (||Phi|| ||T_k||), k >= 1
  double diagonal = 0.0;       // max_k |gram(k,k) - (-1)^k N| / N
  double off_diagonal = 0.0;   // max_{i!=k} |gram(i,k)| / N
};
PhiMDefects phi_m_defects(const PhiM& phi, const ProfileSet& ladder);

enum class Lemma { hardy, Astar, A, L, iterate };

std::string lemma_name(Lemma l);

struct FormTerm {
  std::string name;
  double sample_min = 0.0;    // min over samples of LHS / term
  double subspace_min = 0.0;  // generalized-eigen minimum of LHS / term on the constrained subspace
};

struct CoercivityReport {
  Lemma lemma = Lemma::iterate;
  std::string parameters;
  std::string constraint;
  std::vector<FormTerm> terms;
  double min_ratio = 0.0;      // over samples and terms
  double subspace_min = 0.0;   // over terms
  double target = 0.0;         // pass threshold
  double max_constraint = 0.0; // worst post-projection |<u, L^m Phi>| relative
  int samples = 0;
  int basis_size = 0;
  std::uint64_t seed = 0;
  bool pass = false;
  std::string status = "ok";
};

struct CoercivityOptions {
  int samples = 200;
  std::uint64_t seed = 7;
  int intervals = 40;
  int degree = 0;  // 0: automatic
  double y_lo = 0.0, y_hi = 0.0;  // 0: y_min*10 and y_max/10
};

// Hardy inequality on [1, y_max] with u(1) = 0.
CoercivityReport hardy_check(const ModelParams& p, double alpha, double y_max, const CoercivityOptions& opt = {});

// Lemma-specific quadratic-form domination. For Astar `weight` is alpha, for A it is p; otherwise unused.
CoercivityReport coercivity_check(const OperatorContext& ctx, const PhiM& phi, Lemma which, int k, int i,
                                  double weight = 0.0, const CoercivityOptions& opt = {});

// Evaluates the same forms on a caller-supplied u; flags unmet constraints instead of evaluating.
CoercivityReport coercivity_evaluate(const OperatorContext& ctx, const PhiM& phi, Lemma which, int k, int i,
                                     double weight, const GridFunction& u);

}  // namespace ymflow
