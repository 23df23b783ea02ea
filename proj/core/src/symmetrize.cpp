#include "ecse/symmetrize.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "ecse/rotations.hpp"

namespace ecse {

namespace {

double qc(double z, const AngularParams& ang, QcKind kind) {
  return kind == QcKind::Qc1 ? qc1(z, ang.omega, ang.delta_omega)
                             : qc2(z, ang.omega, ang.delta_omega);
}

double cross2_of_pair(const AtomicEnvironment& env, std::size_t a, std::size_t b) {
  const Vec3 va = env.displacements[a] * (1.0 / env.distances[a]);
  const Vec3 vb = env.displacements[b] * (1.0 / env.distances[b]);
  return norm2(cross(va, vb));
}

}  // namespace

double pair_weight(const AtomicEnvironment& env, std::size_t j, std::size_t j_prime,
                   const EcseConfig& cfg) {
  if (j == j_prime || j >= env.size() || j_prime >= env.size())
    throw std::invalid_argument("pair_weight: invalid neighbor pair");
  const double f1 = fc(env.distances[j], cfg.outer);
  const double f2 = fc(env.distances[j_prime], cfg.outer);
  if (f1 == 0.0 || f2 == 0.0) return 0.0;
  return f1 * f2 * qc(cross2_of_pair(env, j, j_prime), cfg.angular, cfg.qc_kind);
}

double adaptive_inner_cutoff(const AtomicEnvironment& env, const EcseConfig& cfg) {
  const double t_beta = t_of_beta(cfg.beta);
  std::vector<double> values;
  std::vector<double> weights;
  // Importances use qc1 with thresholds shifted by one width: any pair that
  // survives here has its angular gate on the plateau of the weight formula.
  const double omega_p = cfg.angular.omega + cfg.angular.delta_omega;
  for (std::size_t a = 0; a + 1 < env.size(); ++a) {
    const double fa = fc(env.distances[a], cfg.outer);
    if (fa == 0.0) continue;
    for (std::size_t b = a + 1; b < env.size(); ++b) {
      const double fb = fc(env.distances[b], cfg.outer);
      if (fb == 0.0) continue;
      const double p =
          fa * fb * qc1(cross2_of_pair(env, a, b), omega_p, cfg.angular.delta_omega);
      if (p == 0.0) continue;  // skipped outright: boundary atoms change nothing
      const double pair_far[2] = {env.distances[a], env.distances[b]};
      values.push_back(smooth_max(pair_far, cfg.beta) + t_beta);
      weights.push_back(p);
    }
  }
  values.push_back(cfg.outer.r_c);
  weights.push_back(1.0);
  const double smin = smooth_min_weighted(values, weights, cfg.beta);
  // The T(beta) margin can push the surrogate slightly past the anchor when
  // the only usable pairs hug the boundary; cap it so the fallback bound
  // R_in <= R_out + delta_rc is exact.
  return std::min(smin, cfg.outer.r_c) + cfg.outer.delta_rc;
}

namespace {

// Angular parameters actually used by the weights: fixed from the config in
// aux mode, adapted to the environment's own collinearity in adaptive mode.
AngularParams effective_angular(const AtomicEnvironment& env, const EcseConfig& cfg,
                                const CutoffParams& inner) {
  if (cfg.collinear_mode == CollinearMode::AuxModel) return cfg.angular;
  std::vector<double> values;
  std::vector<double> weights;
  for (std::size_t a = 0; a + 1 < env.size(); ++a) {
    const double ga = fc(env.distances[a], cfg.outer) * fc(env.distances[a], inner);
    if (ga == 0.0) continue;
    for (std::size_t b = a + 1; b < env.size(); ++b) {
      const double gb = fc(env.distances[b], cfg.outer) * fc(env.distances[b], inner);
      if (gb == 0.0) continue;
      values.push_back(cross2_of_pair(env, a, b));
      weights.push_back(ga * gb);
    }
  }
  if (values.empty())
    throw std::runtime_error(
        "adaptive omega: no usable neighbor pair inside the cutoff");
  const double half_max = 0.5 * smooth_max_weighted(values, weights, cfg.beta);
  if (half_max == 0.0)
    throw std::runtime_error(
        "adaptive omega: exact fully-collinear singularity (all cross products zero)");
  return AngularParams(half_max, half_max);
}

}  // namespace

std::vector<WeightedFrame> frame_ensemble(const AtomicEnvironment& env,
                                          const EcseConfig& cfg) {
  std::vector<WeightedFrame> frames;
  if (env.size() < 2) return frames;

  const double r_in = adaptive_inner_cutoff(env, cfg);
  const CutoffParams inner(r_in, cfg.outer.delta_rc);

  AngularParams ang = cfg.angular;
  if (cfg.collinear_mode == CollinearMode::AdaptiveOmega) {
    ang = effective_angular(env, cfg, inner);
  }

  // Per-neighbor radial gate: the product of the outer and the adaptive inner
  // window, so weights vanish smoothly at both boundaries. When no good pair
  // exists, r_in = r_out + delta_rc and the inner factor is identically 1.
  std::vector<double> radial(env.size());
  for (std::size_t a = 0; a < env.size(); ++a)
    radial[a] = fc(env.distances[a], cfg.outer) * fc(env.distances[a], inner);

  for (std::size_t a = 0; a < env.size(); ++a) {
    if (radial[a] == 0.0) continue;
    for (std::size_t b = 0; b < env.size(); ++b) {
      if (b == a || radial[b] == 0.0) continue;
      const double q = qc(cross2_of_pair(env, a, b), ang, cfg.qc_kind);
      if (q == 0.0) continue;
      const double w = radial[a] * radial[b] * q;
      if (w == 0.0) continue;
      frames.push_back({frame_from_pair(env.displacements[a], env.displacements[b]), w,
                        static_cast<int>(a), static_cast<int>(b)});
      if (cfg.collinear_mode == CollinearMode::AdaptiveOmega) {
        // Orientation disambiguation near collinearity: the same pair with the
        // first axis flipped, at the same weight.
        frames.push_back(
            {frame_from_pair(-env.displacements[a], env.displacements[b]), w,
             static_cast<int>(a), static_cast<int>(b)});
      }
    }
  }
  return frames;
}

std::vector<WeightedFrame> prune(std::vector<WeightedFrame> frames,
                                 const EcseConfig& cfg) {
  if (frames.empty()) return frames;
  std::vector<double> ws(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) ws[i] = frames[i].weight;
  const double w_max = smooth_max_weighted(ws, ws, cfg.beta_w);
  const double e = fc(w_max, CutoffParams(cfg.prune.t_e, cfg.prune.dt_e));
  if (e == 1.0) return frames;  // below the activation threshold: untouched

  std::vector<WeightedFrame> kept;
  kept.reserve(frames.size());
  for (WeightedFrame& f : frames) {
    const double fade = qc1(f.weight, w_max * cfg.prune.t_f, w_max * cfg.prune.dt_f);
    if (fade != 1.0) {
      f.weight = e * f.weight + (1.0 - e) * (f.weight * fade);
    }
    if (f.weight != 0.0) kept.push_back(f);
  }
  return kept;
}

std::vector<WeightedFrame> stitch_unordered_pairs(std::vector<WeightedFrame> frames,
                                                  const AtomicEnvironment& env,
                                                  double delta_r) {
  if (!(delta_r > 0.0))
    throw std::invalid_argument("stitch_unordered_pairs: delta_r must be > 0");
  // Blend gate for the ordered frame (a, b): 1 when a is farther by at least
  // delta_r, 0 when closer by at least delta_r, smooth in between.
  auto gate = [&](int a, int b) {
    const double diff = env.distances[static_cast<std::size_t>(a)] -
                        env.distances[static_cast<std::size_t>(b)];
    return qc1(diff + delta_r, 0.0, 2.0 * delta_r);
  };
  std::vector<WeightedFrame> kept;
  kept.reserve(frames.size());
  for (WeightedFrame& f : frames) {
    const double ga = gate(f.j, f.j_prime);
    const double gb = gate(f.j_prime, f.j);
    f.weight = f.weight * (ga / (ga + gb));
    if (f.weight != 0.0) kept.push_back(f);
  }
  return kept;
}

Structure rotate_structure(const Structure& s, const Mat3& rotation) {
  Structure out = s;
  for (Vec3& p : out.positions) p = rotation * p;
  if (out.cell) {
    const Mat3& c = *s.cell;
    *out.cell = Mat3::from_rows(rotation * c.row(0), rotation * c.row(1),
                                rotation * c.row(2));
  }
  for (Vec3& f : out.targets.forces) f = rotation * f;
  return out;
}

namespace {

// Applies pruning / stitching / extra augmentations to a raw ensemble, in that
// order, and reports the smooth maximum of the base weights (the aux-weight
// input; 0 for an empty ensemble).
std::vector<WeightedFrame> finalize_ensemble(std::vector<WeightedFrame> frames,
                                             const AtomicEnvironment* env,
                                             const EcseConfig& cfg,
                                             double* smooth_max_weight) {
  if (smooth_max_weight) {
    if (frames.empty()) {
      *smooth_max_weight = 0.0;
    } else {
      std::vector<double> ws(frames.size());
      for (std::size_t i = 0; i < frames.size(); ++i) ws[i] = frames[i].weight;
      *smooth_max_weight = smooth_max_weighted(ws, ws, cfg.beta_omega);
    }
  }
  if (cfg.prune_enabled) frames = prune(std::move(frames), cfg);
  if (cfg.stitch_delta_r && env)
    frames = stitch_unordered_pairs(std::move(frames), *env, *cfg.stitch_delta_r);
  if (cfg.n_extra_aug >= 1 && !frames.empty()) {
    // Replicating every frame across S_aug with unchanged weights makes the
    // plain weighted average equal the N_aug-normalized double sum.
    const std::vector<Mat3> s_aug = augmentation_rotations(cfg.n_extra_aug, cfg.aug_seed);
    frames = augment_frames(frames, s_aug);
  }
  return frames;
}

}  // namespace

std::vector<WeightedFrame> final_ensemble(const AtomicEnvironment& env,
                                          const EcseConfig& cfg) {
  std::vector<WeightedFrame> frames = frame_ensemble(env, cfg);
  if (cfg.prune_enabled) frames = prune(std::move(frames), cfg);
  if (cfg.stitch_delta_r)
    frames = stitch_unordered_pairs(std::move(frames), env, *cfg.stitch_delta_r);
  return frames;
}

std::vector<Mat3> augmentation_rotations(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Mat3> s_aug;
  s_aug.reserve(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) s_aug.push_back(random_rotation(rng).rotation);
  return s_aug;
}

std::vector<WeightedFrame> augment_frames(const std::vector<WeightedFrame>& frames,
                                          std::span<const Mat3> s_aug) {
  std::vector<WeightedFrame> expanded;
  expanded.reserve(frames.size() * s_aug.size());
  for (const WeightedFrame& f : frames) {
    for (const Mat3& g : s_aug) {
      // Combined operator: inputs see g^T applied after the frame rotation.
      expanded.push_back(
          {Frame{transpose(g) * f.frame.rotation}, f.weight, f.j, f.j_prime});
    }
  }
  return expanded;
}

namespace {

[[noreturn]] void throw_collinear() {
  throw std::runtime_error(
      "exact fully-collinear singularity: empty frame ensemble and no auxiliary model "
      "configured");
}

double aux_weight_from(double smooth_max_weight, const EcseConfig& cfg) {
  return fc(smooth_max_weight, CutoffParams(cfg.t_aux, cfg.delta_aux));
}

}  // namespace

Prediction symmetrize_local(const AtomicEnvironment& env, const Backbone& backbone,
                            const EcseConfig& cfg, const Backbone* aux) {
  cfg.validate();
  if (backbone.locality() != Locality::LocalEnvironment)
    throw std::invalid_argument(
        "symmetrize_local: backbone must be a local-environment model");
  if (cfg.collinear_mode == CollinearMode::AdaptiveOmega && backbone.output_rank() != 0)
    throw std::invalid_argument(
        "adaptive-omega mode does not support covariant outputs");

  double smw = 0.0;
  std::vector<WeightedFrame> frames =
      finalize_ensemble(frame_ensemble(env, cfg), &env, cfg, &smw);

  double w_aux = 0.0;
  if (cfg.collinear_mode == CollinearMode::AuxModel) w_aux = aux_weight_from(smw, cfg);

  if (frames.empty() && w_aux == 0.0) throw_collinear();
  if (w_aux > 0.0 && aux == nullptr)
    throw std::runtime_error(
        "auxiliary weight is active but no auxiliary model is configured");

  const std::size_t width = values_size_for_rank(backbone.output_rank());
  std::vector<double> num(width, 0.0);
  double den = 0.0;

  if (w_aux > 0.0) {
    const Prediction pa = aux->evaluate_env(env);
    if (pa.width() != width)
      throw std::runtime_error("auxiliary model output width does not match backbone");
    for (std::size_t c = 0; c < width; ++c) num[c] += w_aux * pa.values[c];
    den += w_aux;
  }

  const int rank = backbone.output_rank();
  for (const WeightedFrame& f : frames) {
    const Prediction p0 = backbone.evaluate_env(rotated(env, f.frame.rotation));
    const std::vector<double> back =
        rank == 0 ? p0.values : transform_values(p0.values, rank, transpose(f.frame.rotation));
    for (std::size_t c = 0; c < width; ++c) num[c] += f.weight * back[c];
    den += f.weight;
  }

  Prediction out;
  out.kind = backbone.output_kind();
  out.rank = rank;
  out.values.resize(width);
  for (std::size_t c = 0; c < width; ++c) out.values[c] = num[c] / den;
  return out;
}

Prediction symmetrize_covariant_tensor(const AtomicEnvironment& env,
                                       const Backbone& backbone, const EcseConfig& cfg,
                                       const Backbone* aux) {
  if (cfg.collinear_mode != CollinearMode::AuxModel)
    throw std::invalid_argument(
        "symmetrize_covariant_tensor: covariant outputs need the aux-model mode");
  return symmetrize_local(env, backbone, cfg, aux);
}

Prediction symmetrize_global_pool(const Structure& s, const NeighborList& nl,
                                  const Backbone& backbone, const EcseConfig& cfg,
                                  const Backbone* aux) {
  cfg.validate();
  if (cfg.collinear_mode == CollinearMode::AdaptiveOmega && backbone.output_rank() != 0)
    throw std::invalid_argument(
        "adaptive-omega mode does not support covariant outputs");
  if (nl.cutoff() < cfg.outer.r_c)
    throw std::invalid_argument("symmetrize_global_pool: neighbor list cutoff below R_out");

  // Union of the per-atom pruned ensembles.
  std::vector<WeightedFrame> pool;
  std::vector<double> base_weights;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const AtomicEnvironment env = environment(s, nl, i);
    std::vector<WeightedFrame> frames = frame_ensemble(env, cfg);
    for (const WeightedFrame& f : frames) base_weights.push_back(f.weight);
    frames = finalize_ensemble(std::move(frames), &env, cfg, nullptr);
    pool.insert(pool.end(), frames.begin(), frames.end());
  }

  double w_aux = 0.0;
  if (cfg.collinear_mode == CollinearMode::AuxModel) {
    const double smw = base_weights.empty()
                           ? 0.0
                           : smooth_max_weighted(base_weights, base_weights,
                                                 cfg.beta_omega);
    w_aux = aux_weight_from(smw, cfg);
  }

  if (pool.empty() && w_aux == 0.0) throw_collinear();
  if (w_aux > 0.0 && aux == nullptr)
    throw std::runtime_error(
        "auxiliary weight is active but no auxiliary model is configured");

  const int rank = backbone.output_rank();
  const std::size_t width = values_size_for_rank(rank);
  std::vector<double> num(width, 0.0);
  std::vector<double> num_atoms(s.size() * width, 0.0);
  double den = 0.0;
  bool have_per_atom = true;

  if (w_aux > 0.0) {
    const Prediction pa = aux->evaluate(s, nl);
    if (pa.width() != width)
      throw std::runtime_error("auxiliary model output width does not match backbone");
    for (std::size_t c = 0; c < width; ++c) num[c] += w_aux * pa.values[c];
    if (pa.per_atom.size() == num_atoms.size()) {
      for (std::size_t k = 0; k < num_atoms.size(); ++k)
        num_atoms[k] += w_aux * pa.per_atom[k];
    } else {
      have_per_atom = false;
    }
    den += w_aux;
  }

  for (const WeightedFrame& f : pool) {
    const Structure rs = rotate_structure(s, f.frame.rotation);
    const NeighborList rnl(rs, nl.cutoff());
    const Prediction p0 = backbone.evaluate(rs, rnl);
    const std::vector<double> back =
        rank == 0 ? p0.values : transform_values(p0.values, rank, transpose(f.frame.rotation));
    for (std::size_t c = 0; c < width; ++c) num[c] += f.weight * back[c];
    if (p0.per_atom.size() == num_atoms.size() && rank == 0) {
      for (std::size_t k = 0; k < num_atoms.size(); ++k)
        num_atoms[k] += f.weight * p0.per_atom[k];
    } else {
      have_per_atom = false;
    }
    den += f.weight;
  }

  Prediction out;
  out.kind = backbone.output_kind();
  out.rank = rank;
  out.values.resize(width);
  for (std::size_t c = 0; c < width; ++c) out.values[c] = num[c] / den;
  if (have_per_atom) {
    out.per_atom.resize(num_atoms.size());
    for (std::size_t k = 0; k < num_atoms.size(); ++k) out.per_atom[k] = num_atoms[k] / den;
  }
  return out;
}

Prediction symmetrize_structure(const Structure& s, const NeighborList& nl,
                                const Backbone& backbone, const EcseConfig& cfg,
                                const Backbone* aux) {
  if (cfg.mode == EcseMode::GlobalPool)
    return symmetrize_global_pool(s, nl, backbone, cfg, aux);

  if (backbone.locality() != Locality::LocalEnvironment)
    throw std::invalid_argument(
        "per-atom mode requires a local-environment backbone; use global_pool");
  const std::size_t width = values_size_for_rank(backbone.output_rank());
  Prediction total;
  total.kind = backbone.output_kind();
  total.rank = backbone.output_rank();
  total.values.assign(width, 0.0);
  total.per_atom.assign(s.size() * width, 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Prediction p = symmetrize_local(environment(s, nl, i), backbone, cfg, aux);
    for (std::size_t c = 0; c < width; ++c) {
      total.values[c] += p.values[c];
      total.per_atom[i * width + c] = p.values[c];
    }
  }
  return total;
}

}  // namespace ecse
