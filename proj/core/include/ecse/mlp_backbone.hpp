#pragma once

#include <cstdint>

#include "ecse/backbone.hpp"
#include "ecse/nn.hpp"
#include "ecse/smoothmath.hpp"

namespace ecse {

// A deliberately non-equivariant smooth model on raw Cartesian displacements:
// each neighbor is encoded by one hidden layer from (displacement, fc gate,
// species embedding), scaled by its fc gate so neighbors enter and leave the
// cutoff sphere smoothly, and summed. The pooled code is combined with the
// center-species embedding and mapped to a scalar or 3-vector output.
struct MlpConfig {
  int n_species = 4;
  int d_emb = 4;
  int d_hidden = 32;
  int max_neighbors = 16;
  double r_c = 4.0;
  double delta_rc = 0.5;
  OutputKind output = OutputKind::Scalar;
};

class MlpBackbone final : public Backbone {
 public:
  explicit MlpBackbone(const MlpConfig& cfg);

  OutputKind output_kind() const override { return cfg_.output; }
  int output_rank() const override { return cfg_.output == OutputKind::Scalar ? 0 : 1; }
  Locality locality() const override { return Locality::LocalEnvironment; }
  double cutoff() const override { return cfg_.r_c; }

  Prediction evaluate_env(const AtomicEnvironment& env) const override;

  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }

  void accumulate_energy_gradient(const Structure& s, const NeighborList& nl,
                                  double coeff, std::span<double> grad) const override;

  void random_init(std::uint64_t seed);
  const MlpConfig& config() const { return cfg_; }
  const nn::ParamLayout& layout() const { return layout_; }

 private:
  void accumulate_env_gradient(const AtomicEnvironment& env, double coeff,
                               std::span<double> grad) const;

  MlpConfig cfg_;
  CutoffParams cut_;
  nn::ParamLayout layout_;
  std::vector<double> params_;

  // segment offsets
  std::size_t emb_n_ = 0, emb_c_ = 0;
  std::size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0, w3_ = 0, b3_ = 0;
  std::size_t enc_in_ = 0, comb_in_ = 0, n_out_ = 0;
};

}  // namespace ecse
