#pragma once

#include <span>

#include "ecse/neighborlist.hpp"
#include "ecse/prediction.hpp"
#include "ecse/structure.hpp"

namespace ecse {

enum class Locality {
  LocalEnvironment,   // prediction is a function of one atomic environment
  WholeStructure,     // message passing: prediction needs the full structure
};

// Contract shared by every model ECSE can symmetrize. Evaluation is a pure
// function of (parameters, input); parameters are mutated only through the
// accessors, which training uses.
class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual OutputKind output_kind() const = 0;
  virtual int output_rank() const = 0;
  virtual Locality locality() const = 0;
  virtual double cutoff() const = 0;

  // Local-environment models only.
  virtual Prediction evaluate_env(const AtomicEnvironment& env) const;

  // Whole-structure prediction. Local models default to the sum of their
  // per-environment contributions.
  virtual Prediction evaluate(const Structure& s, const NeighborList& nl) const;

  virtual std::span<double> parameters() = 0;
  virtual std::span<const double> parameters() const = 0;

  // Accumulates coeff * d(scalar prediction)/d(parameters) into grad.
  // Only required from trainable scalar backbones.
  virtual void accumulate_energy_gradient(const Structure& s, const NeighborList& nl,
                                          double coeff, std::span<double> grad) const;
};

}  // namespace ecse
