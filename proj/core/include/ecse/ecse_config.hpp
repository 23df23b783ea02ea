#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "ecse/smoothmath.hpp"

namespace ecse {

enum class QcKind { Qc1, Qc2 };
enum class CollinearMode { AuxModel, AdaptiveOmega };
enum class EcseMode { PerAtom, GlobalPool };

// Smooth weight-pruning thresholds: frames below t_f times the (smooth)
// maximum weight are faded out, but only once the maximum weight itself
// exceeds t_e.
struct PruneParams {
  double t_f = 0.4;
  double dt_f = 0.2;
  double t_e = 0.05;
  double dt_e = 0.02;
};

// Every knob of the symmetrization protocol. Ships with two presets:
// "loose" (smooth, many frames) and "tight" (cheap, few frames).
struct EcseConfig {
  CutoffParams outer{4.0, 0.5};
  AngularParams angular{0.1, 0.2};
  QcKind qc_kind = QcKind::Qc1;
  double beta = 5.0;        // sharpness of the smooth min/max surrogates
  double beta_w = 5.0;      // sharpness of the pruning maximum
  double beta_omega = 5.0;  // sharpness of the aux-weight maximum
  bool prune_enabled = true;
  PruneParams prune;
  double t_aux = 1e-3;
  double delta_aux = 1e-3;
  CollinearMode collinear_mode = CollinearMode::AuxModel;
  std::optional<double> stitch_delta_r;
  int n_extra_aug = 0;
  std::uint64_t aug_seed = 0;
  EcseMode mode = EcseMode::PerAtom;

  void validate() const;

  static EcseConfig preset(const std::string& name);

  // Flat key = value text format; keys match the field names.
  static EcseConfig parse(const std::string& text);
  static EcseConfig load(const std::string& path);
  std::string serialize() const;
  void save(const std::string& path) const;
};

}  // namespace ecse
