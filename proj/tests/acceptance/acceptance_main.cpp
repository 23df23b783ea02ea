// Acceptance suite: one pass/fail line per criterion, exit 1 on any failure.
//
// Every tolerance is pinned here; seeds make the whole run reproducible.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <vector>

#include "ecse/harness.hpp"
#include "ecse/mlp_backbone.hpp"
#include "ecse/pet.hpp"
#include "ecse/rng.hpp"
#include "ecse/rotations.hpp"
#include "ecse/smoothproj.hpp"
#include "ecse/symmetrize.hpp"
#include "ecse/training.hpp"

using namespace ecse;

namespace {

bool g_all_pass = true;

void report(int criterion, bool pass, const char* label, const std::string& detail) {
  g_all_pass = g_all_pass && pass;
  std::printf("[%s] criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, label,
              detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// fixtures

constexpr int kH = 0, kC = 5;

PetBackbone make_micro_pet(std::uint64_t seed, bool two_body = false) {
  PetConfig cfg;
  cfg.n_species = 8;
  cfg.d_pet = 32;
  cfg.n_gnn = 2;
  cfg.n_tl = 2;
  cfg.n_heads = 2;
  cfg.d_ffn = 64;
  cfg.r_c = 4.0;
  cfg.delta_rc = 0.5;
  cfg.two_body = two_body;
  PetBackbone pet(cfg);
  pet.random_init(seed);
  return pet;
}

MlpBackbone make_mlp(OutputKind kind, std::uint64_t seed) {
  MlpConfig cfg;
  cfg.n_species = 8;
  cfg.output = kind;
  MlpBackbone mlp(cfg);
  mlp.random_init(seed);
  return mlp;
}

// Local invariant fallback used where the protocol needs one for
// local-environment backbones.
class LocalInvariantAux final : public Backbone {
 public:
  OutputKind output_kind() const override { return OutputKind::Scalar; }
  int output_rank() const override { return 0; }
  Locality locality() const override { return Locality::LocalEnvironment; }
  double cutoff() const override { return 7.5; }
  Prediction evaluate_env(const AtomicEnvironment& env) const override {
    const CutoffParams cut(7.5, 0.5);
    double acc = 0.05 * env.center_species;
    for (std::size_t k = 0; k < env.size(); ++k)
      acc += fc(env.distances[k], cut) * std::exp(-0.7 * env.distances[k]);
    return Prediction::scalar(acc);
  }
  std::span<double> parameters() override { return {}; }
  std::span<const double> parameters() const override { return {}; }
};

class LocalInvariantVectorAux final : public Backbone {
 public:
  OutputKind output_kind() const override { return OutputKind::Vector; }
  int output_rank() const override { return 1; }
  Locality locality() const override { return Locality::LocalEnvironment; }
  double cutoff() const override { return 7.5; }
  Prediction evaluate_env(const AtomicEnvironment& env) const override {
    // equivariant by construction: a gated sum of the displacements
    const CutoffParams cut(7.5, 0.5);
    Vec3 v{};
    for (std::size_t k = 0; k < env.size(); ++k)
      v += fc(env.distances[k], cut) * env.displacements[k];
    return Prediction::vector(v);
  }
  std::span<double> parameters() override { return {}; }
  std::span<const double> parameters() const override { return {}; }
};

std::vector<Structure> random_periodic_structures(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Structure> out;
  while (out.size() < n) {
    Structure s;
    const double a = rng.uniform(5.5, 6.5);
    s.cell = Mat3::from_rows({a, 0, 0}, {rng.uniform(-0.5, 0.5), a, 0},
                             {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), a});
    for (int k = 0; k < 6; ++k) {
      s.species.push_back(rng.uniform_index(2) == 0 ? kH : kC);
      s.positions.push_back(
          {rng.uniform(0.0, a), rng.uniform(0.0, a), rng.uniform(0.0, a)});
    }
    try {
      const NeighborList nl(s, 4.0, /*d_min=*/1.6);
      bool capacity_ok = true;
      for (std::size_t i = 0; i < s.size(); ++i)
        if (nl.neighbors_of(i).size() > 14) capacity_ok = false;
      if (!capacity_ok) continue;
    } catch (const std::runtime_error&) {
      continue;  // close contact between periodic images; redraw
    }
    out.push_back(std::move(s));
  }
  return out;
}

EcseConfig loose_ch4() {
  EcseConfig cfg = EcseConfig::preset("loose");
  cfg.outer = CutoffParams(7.5, cfg.outer.delta_rc);  // cover the 3.5-sphere diameter
  return cfg;
}

EcseConfig tight_ch4() {
  EcseConfig cfg = EcseConfig::preset("tight");
  cfg.outer = CutoffParams(7.5, cfg.outer.delta_rc);
  return cfg;
}

// ---------------------------------------------------------------------------

void criterion_1_exact_equivariance(const std::vector<Structure>& ch4,
                                    const std::vector<Structure>& periodic) {
  const auto t0 = std::chrono::steady_clock::now();
  const PetBackbone pet = make_micro_pet(2001);
  const PetBackbone aux = make_micro_pet(2004, /*two_body=*/true);
  const MlpBackbone mlp_scalar = make_mlp(OutputKind::Scalar, 2002);
  const MlpBackbone mlp_vector = make_mlp(OutputKind::Vector, 2003);
  const LocalInvariantAux local_aux;
  const LocalInvariantVectorAux local_vec_aux;

  double worst = 0.0;

  {
    EcseConfig cfg = loose_ch4();
    cfg.mode = EcseMode::GlobalPool;
    const Predictor p = make_symmetrized_predictor(pet, cfg, &aux);
    worst = std::max(worst,
                     verify_equivariance(p, ch4, 20, 3001, 1e-10).max_discrepancy);
  }
  {
    EcseConfig cfg = EcseConfig::preset("loose");
    cfg.mode = EcseMode::GlobalPool;
    const Predictor p = make_symmetrized_predictor(pet, cfg, &aux);
    worst = std::max(worst,
                     verify_equivariance(p, periodic, 20, 3002, 1e-10).max_discrepancy);
  }
  {
    EcseConfig cfg = loose_ch4();
    const Predictor p = make_symmetrized_predictor(mlp_scalar, cfg, &local_aux);
    worst = std::max(worst,
                     verify_equivariance(p, ch4, 20, 3003, 1e-10).max_discrepancy);
  }
  {
    EcseConfig cfg = EcseConfig::preset("loose");
    const Predictor p = make_symmetrized_predictor(mlp_scalar, cfg, &local_aux);
    worst = std::max(worst,
                     verify_equivariance(p, periodic, 20, 3004, 1e-10).max_discrepancy);
  }
  {
    // covariant 3-vector output variant
    EcseConfig cfg = loose_ch4();
    const Predictor p = make_symmetrized_predictor(mlp_vector, cfg, &local_vec_aux);
    worst = std::max(worst,
                     verify_equivariance(p, ch4, 20, 3005, 1e-10).max_discrepancy);
  }

  const double elapsed = seconds_since(t0);
  report(1, worst <= 1e-10 && elapsed <= 600.0, "exact equivariance",
         fmt("max relative discrepancy %.3e <= 1e-10 over PET+MLP(+vector), "
             "%.0f s <= 600 s",
             worst, elapsed));
}

void criterion_2_smoothness(const std::vector<Structure>& ch4) {
  const auto t0 = std::chrono::steady_clock::now();
  const PetBackbone pet = make_micro_pet(2001);
  const PetBackbone aux = make_micro_pet(2004, /*two_body=*/true);
  const std::vector<double> ladder = default_amplitudes();

  bool pass = true;
  std::string detail;
  for (const bool prune_on : {true, false}) {
    EcseConfig cfg = loose_ch4();
    cfg.mode = EcseMode::GlobalPool;
    cfg.prune_enabled = prune_on;
    const Predictor p = make_symmetrized_predictor(pet, cfg, &aux);
    const SmoothnessReport rep = verify_smoothness(p, ch4, ladder, 50, 4001);
    const bool ok =
        rep.slope >= 0.8 && rep.slope <= 1.2 && rep.spike_events == 0;
    pass = pass && ok;
    detail += fmt("prune=%s slope %.3f spikes %zu; ", prune_on ? "on" : "off",
                  rep.slope, rep.spike_events);
  }
  const double elapsed = seconds_since(t0);
  pass = pass && elapsed <= 1800.0;
  report(2, pass, "smoothness experiment (100 x 50)",
         detail + fmt("%.0f s <= 1800 s", elapsed));
}

void criterion_3_non_vacuousness(const std::vector<Structure>& ch4) {
  const PetBackbone pet = make_micro_pet(2001);
  const Predictor raw = make_raw_predictor(pet);
  const EquivarianceReport rep =
      verify_equivariance(raw, ch4, 20, 3001, 1e-10, /*checked=*/false);
  std::size_t distinct = 0;
  for (const EquivarianceCase& c : rep.cases)
    if (c.discrepancy > 1e-6) ++distinct;
  const double fraction = double(distinct) / double(rep.cases.size());
  report(3, fraction >= 0.95, "non-vacuousness of the raw backbone",
         fmt("rotation discrepancy > 1e-6 on %.1f%% of %zu cases (>= 95%%)",
             100.0 * fraction, rep.cases.size()));
}

void criterion_4_smoothmax_bounds() {
  Rng rng(5001);
  bool pass = true;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(20);
    std::vector<double> xs(n);
    double mx = -1e18;
    for (double& x : xs) {
      x = rng.uniform(-10.0, 10.0);
      mx = std::max(mx, x);
    }
    const double beta = rng.uniform(0.1, 100.0);
    if (smooth_max(xs, beta) > mx + 1e-12) pass = false;

    const std::vector<double> pair{rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0)};
    const double pb = rng.uniform(0.1, 100.0);
    if (smooth_max(pair, pb) + t_of_beta(pb) < std::max(pair[0], pair[1]) - 1e-12)
      pass = false;
  }

  // independent Newton oracle for W(exp(-1))
  double w = 0.5;
  for (int i = 0; i < 200; ++i) {
    const double f = w * std::exp(w) - std::exp(-1.0);
    const double df = std::exp(w) * (1.0 + w);
    const double next = w - f / df;
    if (std::abs(next - w) < 1e-14) {
      w = next;
      break;
    }
    w = next;
  }
  const double gap = std::abs(t_of_beta(1.0) - w);
  pass = pass && gap <= 1e-5 && std::abs(t_of_beta(1.0) - 0.278465) <= 1e-5;
  report(4, pass, "SmoothMax bound suite (1e4 instances)",
         fmt("bounds hold; |T(1) - newton| = %.2e <= 1e-5", gap));
}

void criterion_5_collinear_fallback(const std::vector<Structure>& ch4) {
  const PetBackbone pet = make_micro_pet(2001);
  const PetBackbone aux_a = make_micro_pet(2004, /*two_body=*/true);
  const PetBackbone aux_b = make_micro_pet(2005, /*two_body=*/true);

  EcseConfig cfg = EcseConfig::preset("loose");
  cfg.mode = EcseMode::GlobalPool;

  // exactly-collinear family: the prediction falls to the auxiliary bitwise
  const auto chains = make_toy_dataset(ToyDatasetKind::CollinearFamily, 30, 6001);
  bool exact = true;
  for (const Structure& s : chains) {
    const NeighborList nl(s, cfg.outer.r_c);
    const double y = symmetrize_global_pool(s, nl, pet, cfg, &aux_a).scalar_value();
    const double want = aux_a.evaluate(s, nl).scalar_value();
    if (y != want) exact = false;
  }

  // generic structures: the aux weight is exactly zero, so swapping the aux
  // model cannot change a single bit
  EcseConfig gcfg = loose_ch4();
  gcfg.mode = EcseMode::GlobalPool;
  bool aux_free = true;
  for (std::size_t k = 0; k < 20; ++k) {
    const NeighborList nl(ch4[k], gcfg.outer.r_c);
    const double ya = symmetrize_global_pool(ch4[k], nl, pet, gcfg, &aux_a).scalar_value();
    const double yb = symmetrize_global_pool(ch4[k], nl, pet, gcfg, &aux_b).scalar_value();
    if (ya != yb) aux_free = false;
  }
  report(5, exact && aux_free, "collinear fallback",
         fmt("collinear: bitwise aux on 30 chains %s; generic: aux-independent on 20 "
             "structures %s",
             exact ? "yes" : "NO", aux_free ? "yes" : "NO"));
}

void criterion_6_adaptive_enclosure() {
  Rng rng(7001);
  EcseConfig cfg;  // loose defaults, R_out = 4.0
  bool enclosure = true;
  bool bound = true;
  bool insensitive = true;
  for (int trial = 0; trial < 1000; ++trial) {
    AtomicEnvironment env;
    env.center_species = kC;
    const std::size_t n = 2 + rng.uniform_index(7);
    const bool squash = trial % 5 == 0;  // a fifth of the draws near-collinear
    for (std::size_t k = 0; k < n; ++k) {
      Vec3 dir{rng.gaussian(), rng.gaussian(), rng.gaussian()};
      while (norm(dir) == 0.0) dir = {rng.gaussian(), rng.gaussian(), rng.gaussian()};
      dir = normalized(dir);
      if (squash) {
        dir.y *= 1e-3;
        dir.z *= 1e-3;
        dir = normalized(dir);
      }
      env.displacements.push_back(dir * rng.uniform(0.7, 3.9));
      env.distances.push_back(norm(env.displacements.back()));
      env.neighbor_species.push_back(kH);
    }

    const double r_in = adaptive_inner_cutoff(env, cfg);
    if (r_in > cfg.outer.r_c + cfg.outer.delta_rc) bound = false;

    // importances as the protocol defines them
    bool any_p = false;
    const double omega_p = cfg.angular.omega + cfg.angular.delta_omega;
    for (std::size_t a = 0; a + 1 < env.size(); ++a)
      for (std::size_t b = a + 1; b < env.size(); ++b) {
        const Vec3 ua = normalized(env.displacements[a]);
        const Vec3 ub = normalized(env.displacements[b]);
        const double p = fc(env.distances[a], cfg.outer) *
                         fc(env.distances[b], cfg.outer) *
                         qc1(norm2(cross(ua, ub)), omega_p, cfg.angular.delta_omega);
        if (p > 0.0) any_p = true;
      }
    if (any_p && frame_ensemble(env, cfg).empty()) enclosure = false;

    AtomicEnvironment padded = env;
    const Frame rot = random_rotation(rng);
    padded.displacements.push_back(rot.to_global({cfg.outer.r_c, 0, 0}));
    padded.distances.push_back(cfg.outer.r_c);
    padded.neighbor_species.push_back(kH);
    if (std::abs(adaptive_inner_cutoff(padded, cfg) - r_in) >= 1e-12)
      insensitive = false;
  }
  report(6, enclosure && bound && insensitive, "adaptive cutoff enclosure (1e3 envs)",
         fmt("enclosure %s; R_in <= R_out + delta %s; boundary atom moves R_in < 1e-12 "
             "%s",
             enclosure ? "yes" : "NO", bound ? "yes" : "NO",
             insensitive ? "yes" : "NO"));
}

void criterion_7_fd_forces(const std::vector<Structure>& ch4) {
  // analytic oracle on the synthetic pair potential
  Predictor toy;
  toy.name = "toy";
  toy.eval = [](const Structure& s) { return Prediction::scalar(toy_energy(s)); };
  double worst_force_gap = 0.0;
  for (std::size_t k = 0; k < 10; ++k) {
    const FdForcesResult r = fd_forces(toy, ch4[k], 1e-5);
    const auto analytic = toy_forces(ch4[k]);
    for (std::size_t a = 0; a < analytic.size(); ++a)
      worst_force_gap =
          std::max(worst_force_gap, norm(r.forces[a] - analytic[a]));
  }

  // symmetrized model: O(h^2) convergence and translation invariance.
  // The ratio estimator degenerates on structures where the leading error
  // coefficient happens to vanish, so the verdict uses the median over the
  // probe set. Force sums use a small step where the O(h^2) bias (which does
  // not cancel across atoms) is negligible.
  const MlpBackbone mlp = make_mlp(OutputKind::Scalar, 2002);
  const LocalInvariantAux local_aux;
  EcseConfig cfg = loose_ch4();
  const Predictor sym = make_symmetrized_predictor(mlp, cfg, &local_aux);
  std::vector<double> ratios;
  double worst_sum = 0.0;
  for (std::size_t k = 0; k < 8; ++k) {
    ratios.push_back(fd_forces(sym, ch4[k], 5e-3).richardson_ratio);
    worst_sum = std::max(worst_sum, norm(fd_forces(sym, ch4[k], 1e-5).force_sum));
  }
  std::sort(ratios.begin(), ratios.end());
  const double median_ratio =
      0.5 * (ratios[ratios.size() / 2 - 1] + ratios[ratios.size() / 2]);
  const bool richardson_ok = median_ratio >= 3.5 && median_ratio <= 4.5;
  const bool pass = worst_force_gap <= 1e-6 && richardson_ok && worst_sum <= 1e-6;
  report(7, pass, "finite-difference force consistency",
         fmt("analytic gap %.2e <= 1e-6; median richardson %.2f in [3.5, 4.5]; "
             "|force sum| %.2e <= 1e-6",
             worst_force_gap, median_ratio, worst_sum));
}

void criterion_8_self_contributions() {
  Rng rng(8001);
  std::vector<Structure> linear;
  for (int k = 0; k < 25; ++k) {
    Structure s;
    const std::size_t n = 2 + rng.uniform_index(6);
    double e = 0.7;
    for (std::size_t i = 0; i < n; ++i) {
      const int sp = rng.uniform_index(2) == 0 ? kH : kC;
      s.species.push_back(sp);
      s.positions.push_back(
          {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)});
      e += sp == kH ? -0.55 : -2.1;
    }
    s.targets.energy = e;
    linear.push_back(std::move(s));
  }
  const SelfContributionModel model = fit_self_contributions(linear, {kH, kC});
  double worst = 0.0;
  for (const Structure& s : linear)
    worst = std::max(worst, std::abs(model.predict(s) - *s.targets.energy));

  Structure h2o;
  h2o.species = {kH, kH, 7};  // H, H, O
  h2o.positions = {{0.76, 0.59, 0}, {-0.76, 0.59, 0}, {0, 0, 0}};
  const auto counts = species_counts(h2o, {kH, kC, 7});
  const bool bag_ok = counts.size() == 3 && counts[0] == 2.0 && counts[1] == 0.0 &&
                      counts[2] == 1.0;
  report(8, worst <= 1e-8 && bag_ok, "self-contribution fit",
         fmt("linear-dataset residual %.2e <= 1e-8; H2O bag over {H,C,O} = [%g, %g, %g]",
             worst, counts[0], counts[1], counts[2]));
}

void criterion_9_bsplines() {
  // partition of unity
  double worst_pu = 0.0;
  for (int p = 1; p <= 3; ++p) {
    for (double x = -2.0; x <= 2.0; x += 0.001) {
      double acc = 0.0;
      for (int i = -8; i <= 8; ++i) acc += bspline_eval(p, x - i);
      worst_pu = std::max(worst_pu, std::abs(acc - 1.0));
    }
  }

  // integral projection vs order-(p+1) direct projection
  GridSpec spec;
  spec.extents = {11, 11, 11};
  spec.spacing = 0.6;
  spec.origin = {-3.0, -3.0, -3.0};
  const CutoffParams cut(2.5, 0.5);
  Rng rng(9001);
  AtomicEnvironment env;
  env.center_species = kC;
  for (int k = 0; k < 5; ++k) {
    env.displacements.push_back(
        {rng.uniform(-1.8, 1.8), rng.uniform(-1.8, 1.8), rng.uniform(-1.8, 1.8)});
    env.distances.push_back(norm(env.displacements.back()));
    env.neighbor_species.push_back(kH);
  }
  double worst_int = 0.0;
  for (int p = 0; p <= 2; ++p) {
    const VoxelGrid integral = integral_projection(env, spec, p, cut);
    const VoxelGrid direct = project_environment(env, spec, p + 1, cut);
    const double vol = spec.spacing * spec.spacing * spec.spacing;
    for (std::size_t k = 0; k < integral.coefficients.size(); ++k)
      worst_int = std::max(
          worst_int, std::abs(integral.coefficients[k] - vol * direct.coefficients[k]));
  }

  // boundary atom: projection delta must be exactly zero
  AtomicEnvironment padded = env;
  padded.displacements.push_back({cut.r_c, 0, 0});
  padded.distances.push_back(cut.r_c);
  padded.neighbor_species.push_back(kH);
  const VoxelGrid a = project_environment(env, spec, 2, cut);
  const VoxelGrid b = project_environment(padded, spec, 2, cut);
  double boundary_delta = 0.0;
  for (std::size_t k = 0; k < a.coefficients.size(); ++k)
    boundary_delta =
        std::max(boundary_delta, std::abs(a.coefficients[k] - b.coefficients[k]));

  const bool pass = worst_pu <= 1e-12 && worst_int <= 1e-10 && boundary_delta == 0.0;
  report(9, pass, "B-spline suite",
         fmt("partition of unity %.2e <= 1e-12; integral-vs-direct %.2e <= 1e-10; "
             "boundary delta %.1g == 0",
             worst_pu, worst_int, boundary_delta));
}

void criterion_10_tradeoff(const std::vector<Structure>& ch4) {
  const auto t0 = std::chrono::steady_clock::now();
  const PetBackbone pet = make_micro_pet(2001);
  const PetBackbone aux = make_micro_pet(2004, /*two_body=*/true);

  // frame economy on the ch4 set
  EcseConfig loose = loose_ch4();
  EcseConfig tight = tight_ch4();
  double frames_loose = 0.0, frames_tight = 0.0;
  std::size_t envs = 0;
  for (std::size_t k = 0; k < 25; ++k) {
    const NeighborList nl(ch4[k], loose.outer.r_c);
    for (std::size_t i = 0; i < ch4[k].size(); ++i) {
      const AtomicEnvironment env = environment(ch4[k], nl, i);
      frames_loose += double(final_ensemble(env, loose).size());
      frames_tight += double(final_ensemble(env, tight).size());
      ++envs;
    }
  }
  frames_loose /= double(envs);
  frames_tight /= double(envs);

  // the tight preset must also clear criteria 1 and 2
  EcseConfig tight_pool = tight;
  tight_pool.mode = EcseMode::GlobalPool;
  const Predictor p = make_symmetrized_predictor(pet, tight_pool, &aux);
  const EquivarianceReport eq = verify_equivariance(p, ch4, 20, 3007, 1e-10);
  const SmoothnessReport sm =
      verify_smoothness(p, ch4, default_amplitudes(), 50, 4003);
  const bool tight_ok = eq.max_discrepancy <= 1e-10 && sm.slope >= 0.8 &&
                        sm.slope <= 1.2 && sm.spike_events == 0;

  const bool pass = frames_tight < frames_loose && tight_ok;
  report(10, pass, "loose/tight tradeoff",
         fmt("mean frames per env: tight %.2f < loose %.2f; tight equivariance %.2e, "
             "slope %.3f, spikes %zu; %.0f s",
             frames_tight, frames_loose, eq.max_discrepancy, sm.slope,
             sm.spike_events, seconds_since(t0)));
}

void criterion_11_training_smoke() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto train = make_toy_dataset(ToyDatasetKind::Ch4Like, 200, 11001);
  const auto val = make_toy_dataset(ToyDatasetKind::Ch4Like, 50, 11002);

  TrainOptions opts;
  opts.epochs = 150;
  opts.batch_size = 16;
  opts.learning_rate = 2e-3;
  opts.seed = 11003;

  auto run = [&](TrainResult* out) {
    PetBackbone pet = make_micro_pet(11004);
    *out = train_toy(pet, train, val, opts);
    // validation RMSE of the restored best parameters
    const SelfContributionModel& self = out->self_contributions;
    double se = 0.0;
    for (const Structure& s : val) {
      const NeighborList nl(s, pet.cutoff());
      const double e = pet.evaluate(s, nl).scalar_value() + self.predict(s);
      const double de = e - *s.targets.energy;
      se += de * de;
    }
    return std::sqrt(se / double(val.size()));
  };

  TrainResult a, b;
  const double best_rmse = run(&a);
  run(&b);

  bool identical = a.history.size() == b.history.size();
  if (identical) {
    for (std::size_t k = 0; k < a.history.size(); ++k) {
      if (a.history[k].train_loss != b.history[k].train_loss ||
          a.history[k].val_e_rmse != b.history[k].val_e_rmse)
        identical = false;
    }
  }

  const double initial = a.history.front().val_e_rmse;
  const double elapsed = seconds_since(t0);
  const bool pass = best_rmse <= 0.5 * initial && identical && elapsed <= 300.0;
  report(11, pass, "training smoke test",
         fmt("best val RMSE %.4f <= 0.5 x initial %.4f; same-seed histories "
             "identical: %s; %.0f s <= 300 s",
             best_rmse, initial, identical ? "yes" : "NO", elapsed));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  std::puts("acceptance suite");

  const auto ch4 = make_toy_dataset(ToyDatasetKind::Ch4Like, 100, 1001);
  const auto periodic = random_periodic_structures(20, 1002);

  criterion_4_smoothmax_bounds();
  criterion_8_self_contributions();
  criterion_9_bsplines();
  criterion_6_adaptive_enclosure();
  criterion_5_collinear_fallback(ch4);
  criterion_7_fd_forces(ch4);
  criterion_3_non_vacuousness(ch4);
  criterion_1_exact_equivariance(ch4, periodic);
  criterion_11_training_smoke();
  criterion_10_tradeoff(ch4);
  criterion_2_smoothness(ch4);

  std::printf("total wall time: %.0f s\n", seconds_since(t0));
  std::puts(g_all_pass ? "ALL CRITERIA PASS" : "SOME CRITERIA FAILED");
  return g_all_pass ? 0 : 1;
}
