#include "ecse/smoothproj.hpp"

#include <cmath>
#include <stdexcept>

namespace ecse {

namespace {

// Cardinal B-spline M_{k} with support [0, k], by the Cox-de Boor recursion.
double cardinal_bspline(int k, double t) {
  if (t <= 0.0 || t >= static_cast<double>(k)) {
    // Support boundaries evaluate to 0 for k >= 2; for k == 1 use [0, 1).
    if (k == 1) return (t >= 0.0 && t < 1.0) ? 1.0 : 0.0;
    return 0.0;
  }
  if (k == 1) return 1.0;
  const double km1 = static_cast<double>(k - 1);
  return (t / km1) * cardinal_bspline(k - 1, t) +
         ((static_cast<double>(k) - t) / km1) * cardinal_bspline(k - 1, t - 1.0);
}

}  // namespace

double bspline_eval(int p, double x) {
  if (p < 0 || p > 3) throw std::invalid_argument("bspline_eval: order must be in 0..3");
  return cardinal_bspline(p + 1, x + 0.5 * static_cast<double>(p + 1));
}

namespace {

template <typename Deposit>
void stencil_walk(const AtomicEnvironment& env, const GridSpec& spec, int p,
                  const CutoffParams& cutoff, Deposit&& deposit) {
  const double half_support = 0.5 * static_cast<double>(p + 1);
  for (std::size_t nb = 0; nb < env.size(); ++nb) {
    const double gate = fc(env.distances[nb], cutoff);
    if (gate == 0.0) continue;
    const Vec3& r = env.displacements[nb];
    double u[3];
    int lo[3], hi[3];
    bool inside = true;
    for (int c = 0; c < 3; ++c) {
      u[c] = (r[static_cast<std::size_t>(c)] - spec.origin[static_cast<std::size_t>(c)]) /
             spec.spacing;
      lo[c] = static_cast<int>(std::ceil(u[c] - half_support));
      hi[c] = static_cast<int>(std::floor(u[c] + half_support));
      lo[c] = std::max(lo[c], 0);
      hi[c] = std::min(hi[c], spec.extents[static_cast<std::size_t>(c)] - 1);
      if (lo[c] > hi[c]) inside = false;
    }
    if (!inside) continue;
    for (int i1 = lo[0]; i1 <= hi[0]; ++i1) {
      for (int i2 = lo[1]; i2 <= hi[1]; ++i2) {
        for (int i3 = lo[2]; i3 <= hi[2]; ++i3) {
          deposit(spec.flat_index(i1, i2, i3), gate, u[0] - i1, u[1] - i2, u[2] - i3);
        }
      }
    }
  }
}

}  // namespace

VoxelGrid project_environment(const AtomicEnvironment& env, const GridSpec& spec, int p,
                              const CutoffParams& cutoff) {
  VoxelGrid grid{spec, std::vector<double>(spec.count(), 0.0)};
  stencil_walk(env, spec, p, cutoff,
               [&](std::size_t idx, double gate, double x, double y, double z) {
                 grid.coefficients[idx] +=
                     gate * bspline_eval(p, x) * bspline_eval(p, y) * bspline_eval(p, z);
               });
  return grid;
}

VoxelGrid integral_projection(const AtomicEnvironment& env, const GridSpec& spec, int p,
                              const CutoffParams& cutoff) {
  if (p > 2)
    throw std::invalid_argument("integral_projection: needs order p+1 <= 3");
  // The integral of an order-p bell over one voxel is the order-(p+1) spline
  // at the voxel center, times the spacing; the 3D product gives spacing^3.
  const double cell_volume = spec.spacing * spec.spacing * spec.spacing;
  VoxelGrid grid{spec, std::vector<double>(spec.count(), 0.0)};
  // The (p+1) stencil is one voxel wider.
  stencil_walk(env, spec, p + 1, cutoff,
               [&](std::size_t idx, double gate, double x, double y, double z) {
                 grid.coefficients[idx] += gate * cell_volume * bspline_eval(p + 1, x) *
                                           bspline_eval(p + 1, y) * bspline_eval(p + 1, z);
               });
  return grid;
}

ConvKernel gaussian_poly_kernel(std::size_t n_out, std::size_t n_in, double sigma) {
  if (!(sigma > 0.0))
    throw std::invalid_argument("gaussian_poly_kernel: sigma must be > 0");
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  ConvKernel kernel;
  kernel.n_out = n_out;
  kernel.n_in = n_in;
  kernel.g = [n_in, inv2s2](std::size_t m, std::size_t n, const Vec3& d) {
    const double gauss = std::exp(-norm2(d) * inv2s2);
    double poly = 1.0;
    switch ((m * n_in + n) % 7) {
      case 0: poly = 1.0; break;
      case 1: poly = d.x; break;
      case 2: poly = d.y; break;
      case 3: poly = d.z; break;
      case 4: poly = d.x * d.y; break;
      case 5: poly = d.y * d.z; break;
      case 6: poly = norm2(d); break;
    }
    return poly * gauss;
  };
  return kernel;
}

std::vector<double> smooth_conv(const std::vector<Vec3>& points,
                                const std::vector<double>& features, const Vec3& query,
                                const ConvKernel& kernel, const CutoffParams& cutoff) {
  if (features.size() != points.size() * kernel.n_in)
    throw std::invalid_argument("smooth_conv: feature array size mismatch");
  std::vector<double> out(kernel.n_out, 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 d = points[i] - query;
    const double gate = fc(norm(d), cutoff);
    if (gate == 0.0) continue;
    for (std::size_t m = 0; m < kernel.n_out; ++m) {
      double acc = 0.0;
      for (std::size_t n = 0; n < kernel.n_in; ++n)
        acc += kernel.g(m, n, d) * features[i * kernel.n_in + n];
      out[m] += acc * gate;
    }
  }
  return out;
}

double smooth_aggregate(std::span<const double> values, std::span<const double> distances,
                        AggregateMode mode, const CutoffParams& cutoff, double beta) {
  if (values.size() != distances.size())
    throw std::invalid_argument("smooth_aggregate: value/distance size mismatch");

  std::vector<double> gated_values;
  std::vector<double> gates;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double gate = fc(distances[i], cutoff);
    if (gate == 0.0) continue;
    gates.push_back(gate);
    gated_values.push_back(values[i]);
  }
  if (gated_values.empty()) return 0.0;

  switch (mode) {
    case AggregateMode::Sum: {
      double acc = 0.0;
      for (std::size_t i = 0; i < gated_values.size(); ++i)
        acc += gates[i] * gated_values[i];
      return acc;
    }
    case AggregateMode::Mean: {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < gated_values.size(); ++i) {
        num += gates[i] * gated_values[i];
        den += gates[i];
      }
      return num / den;
    }
    case AggregateMode::Max: {
      if (!(beta > 0.0)) throw std::invalid_argument("smooth_aggregate: beta must be > 0");
      std::vector<double> shifted(gated_values.size());
      for (std::size_t i = 0; i < shifted.size(); ++i)
        shifted[i] = gated_values[i] + std::log(gates[i]);
      return smooth_max(shifted, beta);
    }
    case AggregateMode::Min: {
      if (!(beta > 0.0)) throw std::invalid_argument("smooth_aggregate: beta must be > 0");
      std::vector<double> shifted(gated_values.size());
      for (std::size_t i = 0; i < shifted.size(); ++i)
        shifted[i] = gated_values[i] - std::log(gates[i]);
      return smooth_min(shifted, beta);
    }
  }
  return 0.0;
}

}  // namespace ecse
