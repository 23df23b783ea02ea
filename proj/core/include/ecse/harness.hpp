#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ecse/backbone.hpp"
#include "ecse/ecse_config.hpp"
#include "ecse/symmetrize.hpp"

namespace ecse {

// A model under test: any structure -> prediction map, raw or symmetrized.
struct Predictor {
  std::string name;
  OutputKind kind = OutputKind::Scalar;
  int rank = 0;
  std::function<Prediction(const Structure&)> eval;
};

Predictor make_raw_predictor(const Backbone& backbone);
Predictor make_symmetrized_predictor(const Backbone& backbone, const EcseConfig& cfg,
                                     const Backbone* aux = nullptr);

// ---------------------------------------------------------------------------

struct EquivarianceCase {
  std::size_t structure_id;
  std::size_t rotation_id;
  double discrepancy;  // relative scalar gap or norm-relative covariant gap
};

struct EquivarianceReport {
  std::vector<EquivarianceCase> cases;
  double max_discrepancy = 0.0;
  double tol = 0.0;
  bool checked = false;  // raw models are reported without pass/fail
  bool pass = false;

  std::string to_csv() const;
};

// Compares y(R s) against R y(s) for n_rotations uniform rotations per
// structure. `checked` selects whether the tolerance verdict applies (raw
// unsymmetrized models are expected to fail).
EquivarianceReport verify_equivariance(const Predictor& model,
                                       const std::vector<Structure>& structures,
                                       std::size_t n_rotations, std::uint64_t seed,
                                       double tol, bool checked = true);

// ---------------------------------------------------------------------------

struct SmoothnessRow {
  std::size_t structure_id;
  double sigma;
  std::size_t perturbation_id;
  double delta;  // |prediction change|
};

struct SmoothnessReport {
  std::vector<SmoothnessRow> rows;
  double slope = 0.0;        // log-log fit of max |delta| vs sigma, sigma <= 1e-3
  double scale = 0.0;        // median |delta| / sigma at the amplitude nearest 1e-3
  std::size_t spike_events = 0;  // rows with sigma <= 1e-4 and delta > 1e3 sigma scale
  double max_ratio = 0.0;        // max delta / (sigma scale) over sigma <= 1e-3

  std::string to_csv() const;
};

// Gaussian perturbations of every coordinate at each amplitude, n_perturbations
// i.i.d. draws per (structure, amplitude) cell.
SmoothnessReport verify_smoothness(const Predictor& model,
                                   const std::vector<Structure>& structures,
                                   std::span<const double> amplitudes,
                                   std::size_t n_perturbations, std::uint64_t seed);

// Default amplitude ladder 1e-6 .. 1e-1.
std::vector<double> default_amplitudes();

// ---------------------------------------------------------------------------

struct FdForcesResult {
  std::vector<Vec3> forces;  // central differences at step h
  double richardson_ratio;   // |F(h)-F(h/2)| / |F(h/2)-F(h/4)|, ~4 for O(h^2)
  Vec3 force_sum;

  std::string to_csv() const;
};

FdForcesResult fd_forces(const Predictor& model, const Structure& s, double h);

// ---------------------------------------------------------------------------

struct TradeoffRow {
  std::string preset;
  double mean_frames_per_env = 0.0;
  double smoothness_slope = 0.0;
  std::size_t spike_events = 0;
  double equivariance_max = 0.0;
  double wall_time_s = 0.0;
};

struct TradeoffOptions {
  std::size_t n_rotations = 5;
  std::size_t n_perturbations = 10;
  std::vector<double> amplitudes = {1e-6, 1e-5, 1e-4, 1e-3};
  std::uint64_t seed = 0;
};

// Quantifies the smoothness / cost tradeoff across presets on the given
// structures (mean final-ensemble size per environment, smoothness slope and
// spikes, exact-equivariance check, wall time).
std::vector<TradeoffRow> sweep_tradeoff(
    const Backbone& backbone, const Backbone* aux,
    const std::vector<Structure>& structures,
    const std::vector<std::pair<std::string, EcseConfig>>& presets,
    const TradeoffOptions& opts);

std::string tradeoff_csv(const std::vector<TradeoffRow>& rows);

}  // namespace ecse
