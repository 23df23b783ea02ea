#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ecse/backbone.hpp"
#include "ecse/structure.hpp"

namespace ecse {

// Per-species linear energy baseline fitted on species counts ("bag of
// atoms"), with an intercept. Removed from targets before training and added
// back at inference.
struct SelfContributionModel {
  std::vector<double> coefficients;  // indexed by species
  double intercept = 0.0;

  double predict(const Structure& s) const;
};

// Species-count feature vector over a fixed species index set.
std::vector<double> species_counts(const Structure& s, const std::vector<int>& species_set);

// Ordinary least squares of energy on species counts (+ intercept), solved in
// the least-squares sense through the pseudo-inverse so rank-deficient count
// matrices (single-composition datasets) are handled.
SelfContributionModel fit_self_contributions(const std::vector<Structure>& train,
                                             const std::vector<int>& species_set);

// Energy/force loss normalizers: exponential moving averages of the
// validation MSEs, refreshed once per epoch.
struct LossState {
  double mse_e = 1.0;
  double mse_f = 1.0;
  double w_e = 0.1;
  double ema_decay = 0.9;
  bool per_atom_energy = false;  // divide energy residuals by the atom count
};

double loss(double pred_e, double true_e, std::span<const double> pred_f,
            std::span<const double> true_f, std::size_t n_atoms, const LossState& state);

void update_normalizers(LossState& state, double validation_mse_e,
                        double validation_mse_f);

enum class ToyDatasetKind { Ch4Like, DimerSweep, CollinearFamily };

// Synthetic desk-scale datasets: geometry recipes plus labels from a
// documented closed-form pair potential with analytic forces.
std::vector<Structure> make_toy_dataset(ToyDatasetKind kind, std::size_t n,
                                        std::uint64_t seed);

// The smooth pair potential behind the toy labels (Morse form with
// species-dependent constants). Exposed so tests can use its analytic forces
// as an oracle.
double toy_pair_energy(double r, int species_a, int species_b);
double toy_pair_energy_derivative(double r, int species_a, int species_b);
double toy_energy(const Structure& s);
std::vector<Vec3> toy_forces(const Structure& s);

struct TrainOptions {
  std::size_t epochs = 400;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  std::size_t lr_step_epochs = 50;   // stepwise decay cadence
  double lr_decay = 0.5;             // multiplier at each step
  std::size_t patience = 20;         // early stopping on validation loss
  double w_e = 0.1;
  double ema_decay = 0.9;
  bool per_atom_energy = false;
  bool train_forces = false;         // E+F training (forces by finite differences)
  double force_fd_step = 1e-4;
  std::uint64_t seed = 0;
  bool remove_self_contributions = true;

  // Same flat key = value format as EcseConfig; keys match the field names.
  static TrainOptions parse(const std::string& text);
  static TrainOptions load(const std::string& path);
  std::string serialize() const;
};

struct EpochRecord {
  std::size_t epoch;
  double lr;
  double train_loss;
  double val_e_rmse;
  double val_f_rmse;  // NaN when force training is off
};

struct TrainResult {
  std::vector<EpochRecord> history;
  SelfContributionModel self_contributions;
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;
};

// Desk-scale fitting loop: per-epoch rotational augmentation (a fresh uniform
// rotation per sample per epoch), Adam minibatch updates, stepwise learning
// rate decay, EMA normalizer refresh once per epoch and early stopping on the
// best validation loss. Deterministic given opts.seed. The backbone ends up
// holding the best parameters seen.
TrainResult train_toy(Backbone& backbone, const std::vector<Structure>& train,
                      const std::vector<Structure>& val, const TrainOptions& opts);

std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace ecse
