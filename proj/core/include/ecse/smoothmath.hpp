#pragma once

#include <span>
#include <stdexcept>

#include "ecse/linalg.hpp"

namespace ecse {

// Radial cutoff window: fc(r) is 1 for r <= r_c - delta_rc, 0 for r >= r_c,
// and switches in between through a tanh profile whose derivative vanishes at
// both seams, so the function is continuously differentiable everywhere.
struct CutoffParams {
  double r_c;
  double delta_rc;

  CutoffParams(double r_c_, double delta_rc_) : r_c(r_c_), delta_rc(delta_rc_) {
    if (!(r_c > 0.0)) throw std::invalid_argument("CutoffParams: r_c must be > 0");
    if (!(delta_rc > 0.0) || delta_rc > r_c)
      throw std::invalid_argument("CutoffParams: need 0 < delta_rc <= r_c");
  }
};

// Angular gate: qc1(z) is 0 for z <= omega and 1 for z >= omega + delta_omega.
// z is a squared cross product of unit vectors, so omega + delta_omega may not
// exceed its range [0, 1].
struct AngularParams {
  double omega;
  double delta_omega;

  AngularParams(double omega_, double delta_omega_)
      : omega(omega_), delta_omega(delta_omega_) {
    if (omega < 0.0) throw std::invalid_argument("AngularParams: omega must be >= 0");
    if (!(delta_omega > 0.0))
      throw std::invalid_argument("AngularParams: delta_omega must be > 0");
    if (omega + delta_omega > 1.0)
      throw std::invalid_argument("AngularParams: omega + delta_omega must be <= 1");
  }
};

double fc(double r, const CutoffParams& p);

// Raw-threshold overloads; used where the gate thresholds are derived
// quantities (weight pruning, pair stitching) rather than angular config.
double qc1(double z, double omega, double delta_omega);
double qc2(double z, double omega, double delta_omega);

inline double qc1(double z, const AngularParams& p) { return qc1(z, p.omega, p.delta_omega); }
inline double qc2(double z, const AngularParams& p) { return qc2(z, p.omega, p.delta_omega); }

// exp-weighted average of the values; underestimates the true max and
// converges to it as beta grows. Exponents are evaluated relative to the
// largest value so no intermediate overflows for any beta.
double smooth_max(std::span<const double> xs, double beta);
double smooth_min(std::span<const double> xs, double beta);

// Weighted variants. Zero-weight entries are skipped before accumulation, so
// including them leaves the result bit-identical. All weights zero (or an
// empty input) is an error: the caller must fall back to something else.
double smooth_max_weighted(std::span<const double> xs, std::span<const double> ws,
                           double beta);
double smooth_min_weighted(std::span<const double> xs, std::span<const double> ws,
                           double beta);

// T(beta) = W(exp(-1)) / beta. For any pair {x1, x2},
// smooth_max({x1, x2}, beta) + T(beta) >= max(x1, x2).
double t_of_beta(double beta);

// Proper rotation whose rows are an orthonormal right-handed basis attached to
// an ordered pair of directions: (v1_hat, u1_hat, u2_hat) with
// u1 = v1_hat x v2_hat and u2 = v1_hat x u1_hat.
struct Frame {
  Mat3 rotation;  // rows are the basis vectors, expressed in global coordinates

  // Global coordinates -> frame coordinates.
  Vec3 to_local(const Vec3& v) const { return rotation * v; }
  // Frame coordinates -> global coordinates.
  Vec3 to_global(const Vec3& v) const { return transpose(rotation) * v; }
};

// Throws std::domain_error when |v1_hat x v2_hat|^2 falls below 1e-24. Frame
// weights are exactly zero long before that regime, so a caller that only
// requests frames with nonzero weight never hits the threshold.
Frame frame_from_pair(const Vec3& v1, const Vec3& v2);

}  // namespace ecse
