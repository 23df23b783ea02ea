#include "ecse/backbone.hpp"

#include <stdexcept>

namespace ecse {

Prediction Backbone::evaluate_env(const AtomicEnvironment&) const {
  throw std::logic_error("this backbone cannot evaluate a single environment");
}

Prediction Backbone::evaluate(const Structure& s, const NeighborList& nl) const {
  if (locality() != Locality::LocalEnvironment)
    throw std::logic_error("whole-structure backbone must override evaluate()");
  Prediction total;
  const std::size_t w = values_size_for_rank(output_rank());
  total.kind = output_kind();
  total.rank = output_rank();
  total.values.assign(w, 0.0);
  total.per_atom.assign(s.size() * w, 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Prediction p = evaluate_env(environment(s, nl, i));
    for (std::size_t k = 0; k < w; ++k) {
      total.values[k] += p.values[k];
      total.per_atom[i * w + k] = p.values[k];
    }
  }
  return total;
}

void Backbone::accumulate_energy_gradient(const Structure&, const NeighborList&, double,
                                          std::span<double>) const {
  throw std::logic_error("this backbone does not provide parameter gradients");
}

}  // namespace ecse
