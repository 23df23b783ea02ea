#pragma once

#include <array>
#include <functional>
#include <vector>

#include "ecse/smoothmath.hpp"
#include "ecse/structure.hpp"

namespace ecse {

// Centered cardinal B-spline of order p (piecewise polynomial of degree p,
// p-1 times continuously differentiable) on unit knot spacing: support
// [-(p+1)/2, (p+1)/2], nonnegative, and the integer translates sum to one.
// Orders 0 through 3.
double bspline_eval(int p, double x);

// Uniform voxel grid; the basis function of voxel (i1, i2, i3) peaks at
// origin + spacing * (i1, i2, i3) and voxel cells are centered there.
struct GridSpec {
  std::array<int, 3> extents{};
  double spacing = 1.0;
  Vec3 origin{};

  std::size_t count() const {
    return static_cast<std::size_t>(extents[0]) * static_cast<std::size_t>(extents[1]) *
           static_cast<std::size_t>(extents[2]);
  }
  std::size_t flat_index(int i1, int i2, int i3) const {
    return (static_cast<std::size_t>(i1) * static_cast<std::size_t>(extents[1]) +
            static_cast<std::size_t>(i2)) *
               static_cast<std::size_t>(extents[2]) +
           static_cast<std::size_t>(i3);
  }
};

struct VoxelGrid {
  GridSpec spec;
  std::vector<double> coefficients;
};

// Smooth projection of an environment onto the grid: every neighbor deposits
// the tensor-product B-spline stencil scaled by its fc gate, so atoms at the
// cutoff radius change no coefficient.
VoxelGrid project_environment(const AtomicEnvironment& env, const GridSpec& spec, int p,
                              const CutoffParams& cutoff);

// Density route: the per-voxel integrals of the gated point density. Equals
// the order-(p+1) direct projection times spacing^3.
VoxelGrid integral_projection(const AtomicEnvironment& env, const GridSpec& spec, int p,
                              const CutoffParams& cutoff);

// A collection of n_out x n_in smooth kernel functions for the point
// convolution.
struct ConvKernel {
  std::size_t n_out = 0;
  std::size_t n_in = 0;
  std::function<double(std::size_t m, std::size_t n, const Vec3&)> g;
};

// Gaussian-times-monomial kernels: g_mn(d) = poly_mn(d) * exp(-|d|^2 / 2 sigma^2).
ConvKernel gaussian_poly_kernel(std::size_t n_out, std::size_t n_in, double sigma);

// Smooth point convolution evaluated at `query`:
// out_m = sum_i sum_n g_mn(r_i - query) f_i_n fc(|r_i - query|).
std::vector<double> smooth_conv(const std::vector<Vec3>& points,
                                const std::vector<double>& features,  // n_points * n_in
                                const Vec3& query, const ConvKernel& kernel,
                                const CutoffParams& cutoff);

enum class AggregateMode { Sum, Max, Min, Mean };

// Smooth permutation-invariant aggregation over values carried by points at
// the given distances. Sum and mean use fc gating directly; max and min shift
// every value by log(fc(r)), which drives boundary points to -inf (+inf for
// min) so they drop out smoothly. Returns 0 when no point is inside the
// cutoff.
double smooth_aggregate(std::span<const double> values, std::span<const double> distances,
                        AggregateMode mode, const CutoffParams& cutoff, double beta);

}  // namespace ecse
