#pragma once

#include <vector>

#include "ecse/backbone.hpp"
#include "ecse/ecse_config.hpp"

namespace ecse {

// One coordinate system of the ensemble: a proper rotation built from the
// ordered neighbor pair (j, j_prime) together with its nonnegative weight.
struct WeightedFrame {
  Frame frame;
  double weight;
  int j;
  int j_prime;
};

// Base pair weight of the protocol: fc(r_j) * fc(r_j') * qc(|rhat_j x rhat_j'|^2),
// all with the configured outer cutoff and angular gate.
double pair_weight(const AtomicEnvironment& env, std::size_t j, std::size_t j_prime,
                   const EcseConfig& cfg);

// Per-environment inner cutoff: a smooth surrogate of the distance enclosing
// the best non-collinear pair, capped so it never exceeds the outer radius,
// plus the transition width. Always <= outer.r_c + outer.delta_rc.
double adaptive_inner_cutoff(const AtomicEnvironment& env, const EcseConfig& cfg);

// Ordered-pair frame ensemble restricted to the adaptive inner cutoff: weights
// carry fc gates at both the outer and the inner radius, so frames fade out
// smoothly at either boundary. Entries with weight exactly zero are omitted.
// In adaptive-omega mode each pair also contributes the frame with the first
// axis flipped, at the same weight.
std::vector<WeightedFrame> frame_ensemble(const AtomicEnvironment& env,
                                          const EcseConfig& cfg);

// Smooth weight pruning: fades out frames far below the (smooth) maximum
// weight; active only once that maximum clears a threshold. Frames whose
// weight becomes exactly zero are dropped.
std::vector<WeightedFrame> prune(std::vector<WeightedFrame> frames,
                                 const EcseConfig& cfg);

// Optional optimization: of the two ordered frames of an unordered pair, keep
// only the farther-first one outside a |r_j - r_j'| < delta_r transition band,
// and blend the two smoothly inside it.
std::vector<WeightedFrame> stitch_unordered_pairs(std::vector<WeightedFrame> frames,
                                                  const AtomicEnvironment& env,
                                                  double delta_r);

// The ensemble as the averages consume it: built, pruned (when enabled) and
// stitched (when configured), before any extra-augmentation expansion.
std::vector<WeightedFrame> final_ensemble(const AtomicEnvironment& env,
                                          const EcseConfig& cfg);

// Fixed set S_aug of uniform random rotations used by the extra-augmentation
// variant; generated once from the seed.
std::vector<Mat3> augmentation_rotations(int n, std::uint64_t seed);

// Composes every frame with every augmentation rotation, keeping weights
// unchanged. With s_aug = {identity} the frame list comes back bit-identical,
// so the augmented average collapses to the plain one.
std::vector<WeightedFrame> augment_frames(const std::vector<WeightedFrame>& frames,
                                          std::span<const Mat3> s_aug);

// Weighted frame-ensemble average of the backbone over one environment,
// including the collinear fallback machinery. `aux` may be null when the
// configuration never activates it.
Prediction symmetrize_local(const AtomicEnvironment& env, const Backbone& backbone,
                            const EcseConfig& cfg, const Backbone* aux = nullptr);

// Rank-k Cartesian tensor outputs: each frame's 3^k values are
// back-transformed index by index with the frame rotation before the weighted
// average. Requires the aux-model collinear mode (the adaptive-omega mode has
// no covariant support); the rank-0 and rank-1 paths coincide with
// symmetrize_local.
Prediction symmetrize_covariant_tensor(const AtomicEnvironment& env,
                                       const Backbone& backbone, const EcseConfig& cfg,
                                       const Backbone* aux = nullptr);

// Whole-structure symmetrization with a single pooled frame ensemble (the
// union of all atoms' pruned ensembles); the backbone is evaluated once per
// pooled frame on the rotated structure.
Prediction symmetrize_global_pool(const Structure& s, const NeighborList& nl,
                                  const Backbone& backbone, const EcseConfig& cfg,
                                  const Backbone* aux = nullptr);

// Dispatches on cfg.mode: per-atom local symmetrization summed over atoms, or
// the global pool.
Prediction symmetrize_structure(const Structure& s, const NeighborList& nl,
                                const Backbone& backbone, const EcseConfig& cfg,
                                const Backbone* aux = nullptr);

// Structure rotated into a frame: positions (and cell rows) premultiplied by
// the frame rotation.
Structure rotate_structure(const Structure& s, const Mat3& rotation);

}  // namespace ecse
