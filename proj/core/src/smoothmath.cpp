#include "ecse/smoothmath.hpp"

#include <cmath>
#include <limits>

namespace ecse {

namespace {

// Interior switch profile on x in (-1, 1): goes from 1 at x = -1 to 0 at
// x = +1, with all derivatives vanishing at both ends (the 1/(x -+ 1) poles
// flatten tanh out essentially).
double switch_profile(double x) {
  return 0.5 * (std::tanh(1.0 / (x + 1.0) + 1.0 / (x - 1.0)) + 1.0);
}

}  // namespace

double fc(double r, const CutoffParams& p) {
  if (r <= p.r_c - p.delta_rc) return 1.0;
  if (r >= p.r_c) return 0.0;
  const double x = 2.0 * (r - p.r_c + 0.5 * p.delta_rc) / p.delta_rc;
  return switch_profile(x);
}

double qc1(double z, double omega, double delta_omega) {
  if (z <= omega) return 0.0;
  if (z >= omega + delta_omega) return 1.0;
  const double x = 2.0 * (z - omega - 0.5 * delta_omega) / delta_omega;
  return 1.0 - switch_profile(x);
}

double qc2(double z, double omega, double delta_omega) {
  if (z <= omega) return 0.0;
  if (z >= omega + delta_omega) return z;
  const double x = 2.0 * (z - omega - 0.5 * delta_omega) / delta_omega;
  return z * (1.0 - switch_profile(x));
}

namespace {

// Shared exp-weighted mean; sign = +1 for max, -1 for min. Shifting the
// exponent by the extremum keeps every exp() argument <= 0.
double smooth_extremum_weighted(std::span<const double> xs, std::span<const double> ws,
                                double beta, double sign) {
  if (xs.size() != ws.size())
    throw std::invalid_argument("smooth extremum: value/weight size mismatch");
  if (!(beta > 0.0)) throw std::invalid_argument("smooth extremum: beta must be > 0");

  double shift = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (ws[i] < 0.0) throw std::invalid_argument("smooth extremum: negative weight");
    if (ws[i] == 0.0) continue;
    any = true;
    shift = std::max(shift, sign * xs[i]);
  }
  if (!any)
    throw std::invalid_argument("smooth extremum: no entry with positive weight");

  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (ws[i] == 0.0) continue;  // skipped before accumulation: bit-identical result
    const double e = std::exp(beta * (sign * xs[i] - shift)) * ws[i];
    num += e * xs[i];
    den += e;
  }
  return num / den;
}

}  // namespace

namespace {

double smooth_extremum(std::span<const double> xs, double beta, double sign) {
  if (xs.empty()) throw std::invalid_argument("smooth extremum: empty input");
  if (!(beta > 0.0)) throw std::invalid_argument("smooth extremum: beta must be > 0");
  double shift = sign * xs[0];
  for (double x : xs) shift = std::max(shift, sign * x);
  double num = 0.0;
  double den = 0.0;
  for (double x : xs) {
    const double e = std::exp(beta * (sign * x - shift));
    num += e * x;
    den += e;
  }
  return num / den;
}

}  // namespace

double smooth_max(std::span<const double> xs, double beta) {
  return smooth_extremum(xs, beta, +1.0);
}

double smooth_min(std::span<const double> xs, double beta) {
  return smooth_extremum(xs, beta, -1.0);
}

double smooth_max_weighted(std::span<const double> xs, std::span<const double> ws,
                           double beta) {
  return smooth_extremum_weighted(xs, ws, beta, +1.0);
}

double smooth_min_weighted(std::span<const double> xs, std::span<const double> ws,
                           double beta) {
  return smooth_extremum_weighted(xs, ws, beta, -1.0);
}

namespace {

// Positive root of w * exp(w) = exp(-1), solved once by Newton iteration.
double lambert_w_of_inv_e() {
  const double target = std::exp(-1.0);
  double w = 0.27;
  for (int it = 0; it < 64; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - target;
    const double df = ew * (1.0 + w);
    const double step = f / df;
    w -= step;
    if (std::abs(step) < 1e-15) break;
  }
  return w;
}

}  // namespace

double t_of_beta(double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("t_of_beta: beta must be > 0");
  static const double w_inv_e = lambert_w_of_inv_e();
  return w_inv_e / beta;
}

Frame frame_from_pair(const Vec3& v1, const Vec3& v2) {
  const double n1 = norm(v1);
  const double n2 = norm(v2);
  if (n1 == 0.0 || n2 == 0.0)
    throw std::domain_error("frame_from_pair: zero-length direction");
  const Vec3 v1h = v1 * (1.0 / n1);
  const Vec3 v2h = v2 * (1.0 / n2);
  const Vec3 u1 = cross(v1h, v2h);
  const double c2 = norm2(u1);
  if (c2 < 1e-24)
    throw std::domain_error("frame_from_pair: directions are collinear");
  const Vec3 u1h = u1 * (1.0 / std::sqrt(c2));
  const Vec3 u2h = cross(v1h, u1h);
  return Frame{Mat3::from_rows(v1h, u1h, u2h)};
}

}  // namespace ecse
