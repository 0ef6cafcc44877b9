#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "ymflow/error.hpp"

namespace ymflow {

// Dormand-Prince 5(4) with PI-free standard step control.
template <class Real>
class BasicDopri5 {
 public:
  using State = std::vector<Real>;
  using Rhs = std::function<void(Real, const State&, State&)>;

  BasicDopri5(Rhs rhs, Real rtol, Real atol) : rhs_(std::move(rhs)), rtol_(rtol), atol_(atol) {}

  void reset(Real x, State y, Real h0) {
    x_ = x;
    y_ = std::move(y);
    h_ = h0;
  }

  Real x() const { return x_; }
  const State& y() const { return y_; }
  std::size_t accepted() const { return accepted_; }
  std::size_t rejected() const { return rejected_; }
  void set_max_steps(std::size_t m) { max_steps_ = m; }

  // Integrates to x_target exactly (last step clamped).
  void advance_to(Real x_target) {
    using std::abs;
    using std::pow;
    const Real dir = x_target >= x_ ? 1 : -1;
    std::size_t steps = 0;
    while (dir * (x_target - x_) > 0.0) {
      if (++steps > max_steps_) throw numerical_error("ODE integration: too many steps");
      Real h = std::min(abs(h_), abs(x_target - x_)) * dir;
      const bool clamped = abs(h) < abs(h_);
      const Real err = attempt(h);
      if (err <= 1.0) {
        x_ = clamped ? x_target : x_ + h;
        y_.swap(ynew_);
        ++accepted_;
        const Real fac = err == 0 ? Real(5) : std::clamp(Real(0.9) * pow(err, Real(-0.2)), Real(0.2), Real(5));
        if (!clamped) h_ = h * fac;
      } else {
        ++rejected_;
        h_ = h * std::clamp(Real(0.9) * pow(err, Real(-0.2)), Real(0.1), Real(0.9));
        if (abs(h_) < Real(1e-14) * std::max(Real(1), abs(x_))) throw numerical_error("ODE integration: step underflow");
      }
    }
  }

 private:
  Real attempt(Real h) {
    using std::abs;
    static constexpr Real c2 = Real(1) / 5, c3 = Real(3) / 10, c4 = Real(4) / 5, c5 = Real(8) / 9;
    static constexpr Real a21 = Real(1) / 5;
    static constexpr Real a31 = Real(3) / 40, a32 = Real(9) / 40;
    static constexpr Real a41 = Real(44) / 45, a42 = -Real(56) / 15, a43 = Real(32) / 9;
    static constexpr Real a51 = Real(19372) / 6561, a52 = -Real(25360) / 2187, a53 = Real(64448) / 6561, a54 = -Real(212) / 729;
    static constexpr Real a61 = Real(9017) / 3168, a62 = -Real(355) / 33, a63 = Real(46732) / 5247, a64 = Real(49) / 176,
                            a65 = -Real(5103) / 18656;
    static constexpr Real b1 = Real(35) / 384, b3 = Real(500) / 1113, b4 = Real(125) / 192, b5 = -Real(2187) / 6784, b6 = Real(11) / 84;
    static constexpr Real e1 = Real(71) / 57600, e3 = -Real(71) / 16695, e4 = Real(71) / 1920, e5 = -Real(17253) / 339200,
                            e6 = Real(22) / 525, e7 = -Real(1) / 40;
    const std::size_t n = y_.size();
    for (auto* k : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &tmp_, &ynew_}) k->resize(n);
    rhs_(x_, y_, k1_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y_[i] + h * a21 * k1_[i];
    rhs_(x_ + c2 * h, tmp_, k2_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y_[i] + h * (a31 * k1_[i] + a32 * k2_[i]);
    rhs_(x_ + c3 * h, tmp_, k3_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y_[i] + h * (a41 * k1_[i] + a42 * k2_[i] + a43 * k3_[i]);
    rhs_(x_ + c4 * h, tmp_, k4_);
    for (std::size_t i = 0; i < n; ++i)
      tmp_[i] = y_[i] + h * (a51 * k1_[i] + a52 * k2_[i] + a53 * k3_[i] + a54 * k4_[i]);
    rhs_(x_ + c5 * h, tmp_, k5_);
    for (std::size_t i = 0; i < n; ++i)
      tmp_[i] = y_[i] + h * (a61 * k1_[i] + a62 * k2_[i] + a63 * k3_[i] + a64 * k4_[i] + a65 * k5_[i]);
    rhs_(x_ + h, tmp_, k6_);
    for (std::size_t i = 0; i < n; ++i)
      ynew_[i] = y_[i] + h * (b1 * k1_[i] + b3 * k3_[i] + b4 * k4_[i] + b5 * k5_[i] + b6 * k6_[i]);
    rhs_(x_ + h, ynew_, k7_);
    Real err = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Real e = h * (e1 * k1_[i] + e3 * k3_[i] + e4 * k4_[i] + e5 * k5_[i] + e6 * k6_[i] + e7 * k7_[i]);
      const Real sc = atol_ + rtol_ * std::max(abs(y_[i]), abs(ynew_[i]));
      err += (e / sc) * (e / sc);
    }
    using std::sqrt;
    err = sqrt(err / Real(n));
    if (!std::isfinite(err)) return Real(1e10);
    return err;
  }

  Rhs rhs_;
  Real rtol_, atol_;
  Real x_ = 0, h_ = Real(1e-3);
  State y_, k1_, k2_, k3_, k4_, k5_, k6_, k7_, tmp_, ynew_;
  std::size_t accepted_ = 0, rejected_ = 0, max_steps_ = 10'000'000;
};

using Dopri5 = BasicDopri5<double>;

}  // namespace ymflow
