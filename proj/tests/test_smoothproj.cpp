#include <cmath>

#include "doctest.h"
#include "ecse/rng.hpp"
#include "ecse/smoothproj.hpp"

using namespace ecse;

namespace {

// Direct piecewise-polynomial oracles for the centered cardinal splines.
double triangle_oracle(double x) {  // p = 1
  const double a = std::abs(x);
  return a >= 1.0 ? 0.0 : 1.0 - a;
}

double quadratic_oracle(double x) {  // p = 2, support [-1.5, 1.5]
  const double t = x + 1.5;
  if (t <= 0.0 || t >= 3.0) return 0.0;
  if (t < 1.0) return 0.5 * t * t;
  if (t < 2.0) return 0.5 * (-2.0 * t * t + 6.0 * t - 3.0);
  return 0.5 * (3.0 - t) * (3.0 - t);
}

AtomicEnvironment env_of(const std::vector<Vec3>& disps) {
  AtomicEnvironment env;
  for (const Vec3& d : disps) {
    env.displacements.push_back(d);
    env.distances.push_back(norm(d));
    env.neighbor_species.push_back(0);
  }
  return env;
}

double simpson(double a, double b, int n, const std::function<double(double)>& f) {
  // n must be even
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int k = 1; k < n; ++k) acc += f(a + k * h) * (k % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

// Simpson loses accuracy across spline knots; split there first.
double simpson_with_knots(double a, double b, const std::vector<double>& knots,
                          const std::function<double(double)>& f) {
  std::vector<double> cuts = {a, b};
  for (double k : knots)
    if (k > a && k < b) cuts.push_back(k);
  std::sort(cuts.begin(), cuts.end());
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    acc += simpson(cuts[i], cuts[i + 1], 64, f);
  return acc;
}

}  // namespace

TEST_CASE("bspline_eval: centered values, support, nonnegativity") {
  CHECK(bspline_eval(2, 0.0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(bspline_eval(0, 0.0) == 1.0);
  CHECK(bspline_eval(1, 0.0) == doctest::Approx(1.0).epsilon(1e-15));

  for (int p = 0; p <= 3; ++p) {
    const double half = 0.5 * (p + 1);
    CHECK(bspline_eval(p, half + 0.1) == 0.0);
    CHECK(bspline_eval(p, -half - 0.1) == 0.0);
    for (double x = -3.0; x <= 3.0; x += 0.01) CHECK(bspline_eval(p, x) >= 0.0);
  }
  CHECK_THROWS_AS(bspline_eval(4, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(bspline_eval(-1, 0.0), std::invalid_argument);
}

TEST_CASE("bspline_eval matches the direct piecewise oracles") {
  for (double x = -2.5; x <= 2.5; x += 0.003) {
    CHECK(bspline_eval(1, x) == doctest::Approx(triangle_oracle(x)).epsilon(1e-14));
    CHECK(bspline_eval(2, x) == doctest::Approx(quadratic_oracle(x)).epsilon(1e-14));
  }
  // symmetry of the cubic
  for (double x = 0.0; x <= 2.1; x += 0.01)
    CHECK(bspline_eval(3, x) == doctest::Approx(bspline_eval(3, -x)).epsilon(1e-14));
}

TEST_CASE("partition of unity over the shifted family") {
  for (int p = 1; p <= 3; ++p) {
    for (double x = -2.0; x <= 2.0; x += 0.0007) {
      double acc = 0.0;
      for (int i = -8; i <= 8; ++i) acc += bspline_eval(p, x - i);
      CHECK(acc == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("project_environment: empty, unit mass, boundary insensitivity") {
  GridSpec spec;
  spec.extents = {13, 13, 13};
  spec.spacing = 0.5;
  spec.origin = {-3.0, -3.0, -3.0};
  const CutoffParams cut(2.5, 0.5);

  const VoxelGrid empty = project_environment(env_of({}), spec, 2, cut);
  for (double c : empty.coefficients) CHECK(c == 0.0);

  // single neighbor deep inside: gate is 1 and the 3D partition of unity
  // makes the coefficients sum to exactly one
  const VoxelGrid one = project_environment(env_of({{0.4, -0.3, 0.7}}), spec, 2, cut);
  double acc = 0.0;
  for (double c : one.coefficients) acc += c;
  CHECK(acc == doctest::Approx(1.0).epsilon(1e-12));

  // a neighbor exactly at the cutoff deposits nothing, bitwise
  const VoxelGrid with_boundary =
      project_environment(env_of({{0.4, -0.3, 0.7}, {2.5, 0, 0}}), spec, 2, cut);
  for (std::size_t k = 0; k < one.coefficients.size(); ++k)
    CHECK(with_boundary.coefficients[k] == one.coefficients[k]);
}

TEST_CASE("projection is smooth under small displacements and voxel crossings") {
  GridSpec spec;
  spec.extents = {13, 13, 13};
  spec.spacing = 0.5;
  spec.origin = {-3.0, -3.0, -3.0};
  const CutoffParams cut(2.5, 0.5);

  // crossing a voxel boundary: x = origin + (i + 0.5) * spacing
  const Vec3 at_boundary{-3.0 + 6.5 * 0.5, 0.1, 0.2};
  const double delta = 1e-6;
  const VoxelGrid minus =
      project_environment(env_of({at_boundary - Vec3{delta, 0, 0}}), spec, 1, cut);
  const VoxelGrid plus =
      project_environment(env_of({at_boundary + Vec3{delta, 0, 0}}), spec, 1, cut);
  double worst = 0.0;
  for (std::size_t k = 0; k < minus.coefficients.size(); ++k)
    worst = std::max(worst, std::abs(plus.coefficients[k] - minus.coefficients[k]));
  CHECK(worst < 1e-4);

  // generic point: coefficient changes are O(delta)
  Rng rng(301);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec3 p{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
    const VoxelGrid base = project_environment(env_of({p}), spec, 2, cut);
    const VoxelGrid moved =
        project_environment(env_of({p + Vec3{delta, -delta, delta}}), spec, 2, cut);
    double gap = 0.0;
    for (std::size_t k = 0; k < base.coefficients.size(); ++k)
      gap = std::max(gap, std::abs(moved.coefficients[k] - base.coefficients[k]));
    CHECK(gap < 50.0 * delta);
  }
}

TEST_CASE("integral projection equals order-(p+1) projection times the cell volume") {
  GridSpec spec;
  spec.extents = {11, 11, 11};
  spec.spacing = 0.6;
  spec.origin = {-3.0, -3.0, -3.0};
  const CutoffParams cut(2.5, 0.5);
  Rng rng(303);
  for (int p = 0; p <= 2; ++p) {
    std::vector<Vec3> pts;
    for (int k = 0; k < 4; ++k)
      pts.push_back(
          {rng.uniform(-1.8, 1.8), rng.uniform(-1.8, 1.8), rng.uniform(-1.8, 1.8)});
    const AtomicEnvironment env = env_of(pts);
    const VoxelGrid integral = integral_projection(env, spec, p, cut);
    const VoxelGrid direct = project_environment(env, spec, p + 1, cut);
    const double vol = spec.spacing * spec.spacing * spec.spacing;
    for (std::size_t k = 0; k < integral.coefficients.size(); ++k)
      CHECK(integral.coefficients[k] ==
            doctest::Approx(vol * direct.coefficients[k]).epsilon(1e-10));
  }

  const VoxelGrid empty = integral_projection(env_of({}), spec, 1, cut);
  for (double c : empty.coefficients) CHECK(c == 0.0);
}

TEST_CASE("integral projection against a numerical quadrature oracle") {
  GridSpec spec;
  spec.extents = {9, 9, 9};
  spec.spacing = 0.5;
  spec.origin = {-2.0, -2.0, -2.0};
  const CutoffParams cut(2.2, 0.5);
  const Vec3 point{0.31, -0.42, 0.17};
  const AtomicEnvironment env = env_of({point});
  const int p = 1;
  const VoxelGrid grid = integral_projection(env, spec, p, cut);
  const double gate = fc(norm(point), cut);

  // the gated density factorizes, so per-axis Simpson integrals suffice
  for (int i1 = 2; i1 <= 6; ++i1) {
    for (int i2 = 2; i2 <= 6; ++i2) {
      for (int i3 = 2; i3 <= 6; ++i3) {
        double expect = gate;
        const int idx[3] = {i1, i2, i3};
        for (int c = 0; c < 3; ++c) {
          const double center = spec.origin[std::size_t(c)] + idx[c] * spec.spacing;
          const double lo = center - 0.5 * spec.spacing;
          const double hi = center + 0.5 * spec.spacing;
          std::vector<double> knots;
          for (int k = -2; k <= 2; ++k)
            knots.push_back(point[std::size_t(c)] + k * spec.spacing);
          expect *= simpson_with_knots(lo, hi, knots, [&](double x) {
            return bspline_eval(p, (x - point[std::size_t(c)]) / spec.spacing);
          });
        }
        CHECK(grid.coefficients[spec.flat_index(i1, i2, i3)] ==
              doctest::Approx(expect).epsilon(1e-8));
      }
    }
  }
}

TEST_CASE("grid origin shifts move integral-projection coefficients by one index") {
  GridSpec spec;
  spec.extents = {11, 11, 11};
  spec.spacing = 0.5;
  spec.origin = {-2.5, -2.5, -2.5};
  const CutoffParams cut(2.0, 0.4);
  const AtomicEnvironment env = env_of({{0.2, 0.3, -0.4}, {-0.8, 0.5, 0.9}});
  const VoxelGrid base = integral_projection(env, spec, 1, cut);

  GridSpec shifted = spec;
  shifted.origin.x -= spec.spacing;
  const VoxelGrid moved = integral_projection(env, shifted, 1, cut);
  for (int i1 = 0; i1 + 1 < spec.extents[0]; ++i1)
    for (int i2 = 0; i2 < spec.extents[1]; ++i2)
      for (int i3 = 0; i3 < spec.extents[2]; ++i3)
        CHECK(moved.coefficients[shifted.flat_index(i1 + 1, i2, i3)] ==
              doctest::Approx(base.coefficients[spec.flat_index(i1, i2, i3)])
                  .epsilon(1e-12));
}

TEST_CASE("smooth_conv: empty, boundary and linearity") {
  const CutoffParams cut(2.0, 0.5);
  const ConvKernel kernel = gaussian_poly_kernel(4, 2, 0.8);

  // no points within the cutoff
  const std::vector<Vec3> far = {{5.0, 0, 0}, {0, -4.0, 0}};
  const std::vector<double> far_features = {1.0, 2.0, 3.0, 4.0};
  const auto zero = smooth_conv(far, far_features, {0, 0, 0}, kernel, cut);
  for (double v : zero) CHECK(v == 0.0);

  // a point exactly at the cutoff contributes nothing
  const std::vector<Vec3> mixed = {{0.5, 0.2, 0}, {2.0, 0, 0}};
  const std::vector<double> mixed_features = {1.0, -0.5, 9.0, 9.0};
  const std::vector<Vec3> near = {{0.5, 0.2, 0}};
  const std::vector<double> near_features = {1.0, -0.5};
  const auto a = smooth_conv(mixed, mixed_features, {0, 0, 0}, kernel, cut);
  const auto b = smooth_conv(near, near_features, {0, 0, 0}, kernel, cut);
  for (std::size_t m = 0; m < a.size(); ++m) CHECK(a[m] == b[m]);

  // two identical points double the single-point contribution exactly
  const std::vector<Vec3> twice = {{0.5, 0.2, 0}, {0.5, 0.2, 0}};
  const std::vector<double> twice_features = {1.0, -0.5, 1.0, -0.5};
  const auto doubled = smooth_conv(twice, twice_features, {0, 0, 0}, kernel, cut);
  for (std::size_t m = 0; m < doubled.size(); ++m)
    CHECK(doubled[m] == doctest::Approx(2.0 * b[m]).epsilon(1e-15));
}

TEST_CASE("smooth_aggregate: gating, bounds and permutation invariance") {
  const CutoffParams cut(2.0, 0.5);

  const std::vector<double> values = {1.0, -2.0, 0.5};
  const std::vector<double> far = {3.0, 2.5, 4.0};
  CHECK(smooth_aggregate(values, far, AggregateMode::Sum, cut, 2.0) == 0.0);
  CHECK(smooth_aggregate(values, far, AggregateMode::Max, cut, 2.0) == 0.0);

  // single plateau point in max mode recovers its value exactly; the
  // smooth-max bound gives the general slack
  const std::vector<double> one_v = {0.7};
  const std::vector<double> one_d = {0.5};
  CHECK(smooth_aggregate(one_v, one_d, AggregateMode::Max, cut, 3.0) == 0.7);

  const std::vector<double> two_v = {0.7, 0.2};
  const std::vector<double> two_d = {0.5, 0.6};
  const double sm = smooth_aggregate(two_v, two_d, AggregateMode::Max, cut, 3.0);
  CHECK(sm <= 0.7);
  CHECK(sm + t_of_beta(3.0) >= 0.7 - 1e-12);

  // permutation invariance in every mode
  Rng rng(305);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(6);
    std::vector<double> vs(n), ds(n);
    for (std::size_t k = 0; k < n; ++k) {
      vs[k] = rng.uniform(-2.0, 2.0);
      ds[k] = rng.uniform(0.1, 2.5);
    }
    std::vector<std::size_t> perm(n);
    for (std::size_t k = 0; k < n; ++k) perm[k] = k;
    rng.shuffle(perm);
    std::vector<double> vp(n), dp(n);
    for (std::size_t k = 0; k < n; ++k) {
      vp[k] = vs[perm[k]];
      dp[k] = ds[perm[k]];
    }
    for (AggregateMode mode : {AggregateMode::Sum, AggregateMode::Max,
                               AggregateMode::Min, AggregateMode::Mean}) {
      const double base = smooth_aggregate(vs, ds, mode, cut, 4.0);
      const double permuted = smooth_aggregate(vp, dp, mode, cut, 4.0);
      CHECK(permuted == doctest::Approx(base).epsilon(1e-12));
    }
  }

  // mean handles the all-outside case and reduces to a gated average
  const std::vector<double> v2 = {2.0, 4.0};
  const std::vector<double> d_in = {0.1, 0.2};
  const std::vector<double> d_out = {3.0, 4.0};
  CHECK(smooth_aggregate(v2, d_in, AggregateMode::Mean, cut, 1.0) ==
        doctest::Approx(3.0).epsilon(1e-15));
  CHECK(smooth_aggregate(v2, d_out, AggregateMode::Mean, cut, 1.0) == 0.0);
  CHECK_THROWS_AS(smooth_aggregate(v2, d_in, AggregateMode::Max, cut, 0.0),
                  std::invalid_argument);
}
