#include "ecse/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "ecse/neighborlist.hpp"
#include "ecse/rng.hpp"
#include "ecse/rotations.hpp"

namespace ecse {

namespace {

std::string format_row(const char* fmt, ...) {
  char buf[256];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return buf;
}

}  // namespace

Predictor make_raw_predictor(const Backbone& backbone) {
  Predictor p;
  p.name = "raw";
  p.kind = backbone.output_kind();
  p.rank = backbone.output_rank();
  p.eval = [&backbone](const Structure& s) {
    const NeighborList nl(s, backbone.cutoff());
    return backbone.evaluate(s, nl);
  };
  return p;
}

Predictor make_symmetrized_predictor(const Backbone& backbone, const EcseConfig& cfg,
                                     const Backbone* aux) {
  cfg.validate();
  Predictor p;
  p.name = "symmetrized";
  p.kind = backbone.output_kind();
  p.rank = backbone.output_rank();
  const double cutoff = std::max(backbone.cutoff(), cfg.outer.r_c);
  p.eval = [&backbone, cfg, aux, cutoff](const Structure& s) {
    const NeighborList nl(s, cutoff);
    return symmetrize_structure(s, nl, backbone, cfg, aux);
  };
  return p;
}

// ---------------------------------------------------------------------------

EquivarianceReport verify_equivariance(const Predictor& model,
                                       const std::vector<Structure>& structures,
                                       std::size_t n_rotations, std::uint64_t seed,
                                       double tol, bool checked) {
  Rng rng(seed);
  EquivarianceReport report;
  report.tol = tol;
  report.checked = checked;
  for (std::size_t si = 0; si < structures.size(); ++si) {
    const Structure& s = structures[si];
    const Prediction base = model.eval(s);
    double base_norm = 0.0;
    for (double v : base.values) base_norm += v * v;
    base_norm = std::sqrt(base_norm);
    const double denom = std::max(base_norm, 1e-300);
    for (std::size_t ri = 0; ri < n_rotations; ++ri) {
      const Frame rot = random_rotation(rng);
      const Structure rs = rotate_structure(s, rot.rotation);
      const Prediction pr = model.eval(rs);
      const std::vector<double> expected =
          transform_values(base.values, base.rank, rot.rotation);
      double gap = 0.0;
      for (std::size_t c = 0; c < expected.size(); ++c) {
        const double d = pr.values[c] - expected[c];
        gap += d * d;
      }
      gap = std::sqrt(gap) / denom;
      report.cases.push_back({si, ri, gap});
      report.max_discrepancy = std::max(report.max_discrepancy, gap);
    }
  }
  report.pass = !checked || report.max_discrepancy <= tol;
  return report;
}

std::string EquivarianceReport::to_csv() const {
  std::string out = "structure_id,rotation_id,discrepancy\n";
  for (const EquivarianceCase& c : cases)
    out += format_row("%zu,%zu,%.17g\n", c.structure_id, c.rotation_id, c.discrepancy);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> default_amplitudes() {
  return {1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
}

SmoothnessReport verify_smoothness(const Predictor& model,
                                   const std::vector<Structure>& structures,
                                   std::span<const double> amplitudes,
                                   std::size_t n_perturbations, std::uint64_t seed) {
  for (std::size_t i = 1; i < amplitudes.size(); ++i)
    if (amplitudes[i] <= amplitudes[i - 1])
      throw std::invalid_argument("verify_smoothness: amplitudes must be ascending");

  Rng rng(seed);
  SmoothnessReport report;
  for (std::size_t si = 0; si < structures.size(); ++si) {
    const Structure& s = structures[si];
    const double base = model.eval(s).scalar_value();
    for (double sigma : amplitudes) {
      for (std::size_t pi = 0; pi < n_perturbations; ++pi) {
        Structure perturbed = s;
        for (Vec3& pos : perturbed.positions) {
          pos.x += sigma * rng.gaussian();
          pos.y += sigma * rng.gaussian();
          pos.z += sigma * rng.gaussian();
        }
        const double shifted = model.eval(perturbed).scalar_value();
        report.rows.push_back({si, sigma, pi, std::abs(shifted - base)});
      }
    }
  }

  // Reference scale: median |delta| / sigma at the amplitude nearest 1e-3.
  double ref_sigma = amplitudes[0];
  for (double a : amplitudes)
    if (std::abs(std::log(a / 1e-3)) < std::abs(std::log(ref_sigma / 1e-3))) ref_sigma = a;
  std::vector<double> ratios;
  for (const SmoothnessRow& r : report.rows)
    if (r.sigma == ref_sigma) ratios.push_back(r.delta / r.sigma);
  std::sort(ratios.begin(), ratios.end());
  report.scale = ratios.empty() ? 0.0 : ratios[ratios.size() / 2];

  // Log-log slope over the small-amplitude range (sigma <= 1e-3).
  std::vector<double> lx, ly;
  for (double sigma : amplitudes) {
    if (sigma > 1e-3 * (1.0 + 1e-12)) continue;
    double peak = 0.0;
    for (const SmoothnessRow& r : report.rows)
      if (r.sigma == sigma) peak = std::max(peak, r.delta);
    if (peak > 0.0) {
      lx.push_back(std::log(sigma));
      ly.push_back(std::log(peak));
    }
  }
  if (lx.size() >= 2) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      mx += lx[i];
      my += ly[i];
    }
    mx /= double(lx.size());
    my /= double(lx.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      num += (lx[i] - mx) * (ly[i] - my);
      den += (lx[i] - mx) * (lx[i] - mx);
    }
    report.slope = num / den;
  }

  // Spike census: small noise must never produce a large jump.
  if (report.scale > 0.0) {
    for (const SmoothnessRow& r : report.rows) {
      if (r.sigma <= 1e-4 * (1.0 + 1e-12) && r.delta > 1e3 * r.sigma * report.scale)
        ++report.spike_events;
      if (r.sigma <= 1e-3 * (1.0 + 1e-12))
        report.max_ratio = std::max(report.max_ratio, r.delta / (r.sigma * report.scale));
    }
  }
  return report;
}

std::string SmoothnessReport::to_csv() const {
  std::string out = "structure_id,sigma,perturbation_id,delta\n";
  for (const SmoothnessRow& r : rows)
    out += format_row("%zu,%.10g,%zu,%.17g\n", r.structure_id, r.sigma,
                      r.perturbation_id, r.delta);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Vec3> central_difference_forces(const Predictor& model, const Structure& s,
                                            double h) {
  std::vector<Vec3> f(s.size(), Vec3{});
  Structure probe = s;
  for (std::size_t a = 0; a < s.size(); ++a) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double orig = s.positions[a][c];
      probe.positions[a][c] = orig + h;
      const double ep = model.eval(probe).scalar_value();
      probe.positions[a][c] = orig - h;
      const double em = model.eval(probe).scalar_value();
      probe.positions[a][c] = orig;
      f[a][c] = -(ep - em) / (2.0 * h);
    }
  }
  return f;
}

double diff_norm(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += norm2(a[i] - b[i]);
  return std::sqrt(acc);
}

}  // namespace

FdForcesResult fd_forces(const Predictor& model, const Structure& s, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_forces: h must be > 0");
  FdForcesResult result;
  result.forces = central_difference_forces(model, s, h);
  const auto f_half = central_difference_forces(model, s, 0.5 * h);
  const auto f_quarter = central_difference_forces(model, s, 0.25 * h);
  const double d1 = diff_norm(result.forces, f_half);
  const double d2 = diff_norm(f_half, f_quarter);
  result.richardson_ratio = d2 > 0.0 ? d1 / d2 : std::numeric_limits<double>::infinity();
  result.force_sum = Vec3{};
  for (const Vec3& f : result.forces) result.force_sum += f;
  return result;
}

std::string FdForcesResult::to_csv() const {
  std::string out = "atom,fx,fy,fz\n";
  for (std::size_t a = 0; a < forces.size(); ++a)
    out += format_row("%zu,%.17g,%.17g,%.17g\n", a, forces[a].x, forces[a].y,
                      forces[a].z);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<TradeoffRow> sweep_tradeoff(
    const Backbone& backbone, const Backbone* aux,
    const std::vector<Structure>& structures,
    const std::vector<std::pair<std::string, EcseConfig>>& presets,
    const TradeoffOptions& opts) {
  if (presets.size() < 2)
    throw std::invalid_argument("sweep_tradeoff: need at least two presets");

  std::vector<TradeoffRow> rows;
  for (const auto& [name, cfg] : presets) {
    cfg.validate();
    TradeoffRow row;
    row.preset = name;

    const auto t0 = std::chrono::steady_clock::now();

    // Mean final-ensemble size per environment.
    std::size_t frames = 0;
    std::size_t envs = 0;
    const double cutoff = std::max(backbone.cutoff(), cfg.outer.r_c);
    for (const Structure& s : structures) {
      const NeighborList nl(s, cutoff);
      for (std::size_t i = 0; i < s.size(); ++i) {
        frames += final_ensemble(environment(s, nl, i), cfg).size();
        ++envs;
      }
    }
    row.mean_frames_per_env = envs ? double(frames) / double(envs) : 0.0;

    const Predictor model = make_symmetrized_predictor(backbone, cfg, aux);
    const EquivarianceReport eq =
        verify_equivariance(model, structures, opts.n_rotations, opts.seed, 1e-10);
    row.equivariance_max = eq.max_discrepancy;

    const SmoothnessReport sm = verify_smoothness(model, structures, opts.amplitudes,
                                                  opts.n_perturbations, opts.seed);
    row.smoothness_slope = sm.slope;
    row.spike_events = sm.spike_events;

    const auto t1 = std::chrono::steady_clock::now();
    row.wall_time_s = std::chrono::duration<double>(t1 - t0).count();
    rows.push_back(row);
  }
  return rows;
}

std::string tradeoff_csv(const std::vector<TradeoffRow>& rows) {
  std::string out =
      "preset,mean_frames_per_env,smoothness_slope,spike_events,equivariance_max,"
      "wall_time_s\n";
  for (const TradeoffRow& r : rows)
    out += format_row("%s,%.10g,%.10g,%zu,%.10g,%.10g\n", r.preset.c_str(),
                      r.mean_frames_per_env, r.smoothness_slope, r.spike_events,
                      r.equivariance_max, r.wall_time_s);
  return out;
}

}  // namespace ecse
