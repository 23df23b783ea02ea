#pragma once

#include <cstdint>

#include "ecse/backbone.hpp"
#include "ecse/nn.hpp"
#include "ecse/smoothmath.hpp"

namespace ecse {

enum class BondMode { Sum, Average };

// Point Edge Transformer: a message-passing architecture whose per-environment
// unit is a standard transformer encoder over one token per neighbor edge plus
// a central token. Raw attention coefficients are multiplied by the fc gate of
// the key token's distance and renormalized, and bond-head contributions carry
// the same gate, so atoms enter and leave the cutoff sphere smoothly. Output
// tokens double as outgoing messages through residual updates.
//
// `two_body` switches the position encoder from the full displacement vector
// to its length alone, which makes the model rotation invariant by
// construction (the collinear-fallback auxiliary variant).
struct PetConfig {
  int n_species = 4;
  int d_pet = 32;
  int n_gnn = 2;
  int n_tl = 2;
  int n_heads = 2;
  int d_ffn = 64;
  double r_c = 4.0;
  double delta_rc = 0.5;
  bool two_body = false;
  bool use_attribute_channel = false;
  bool species_first_messages = false;
  BondMode bond_mode = BondMode::Sum;
};

class PetBackbone final : public Backbone {
 public:
  explicit PetBackbone(const PetConfig& cfg);

  OutputKind output_kind() const override { return OutputKind::Scalar; }
  int output_rank() const override { return 0; }
  Locality locality() const override { return Locality::WholeStructure; }
  double cutoff() const override { return cfg_.r_c; }

  Prediction evaluate(const Structure& s, const NeighborList& nl) const override;

  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }

  void accumulate_energy_gradient(const Structure& s, const NeighborList& nl,
                                  double coeff, std::span<double> grad) const override;

  void random_init(std::uint64_t seed);
  const PetConfig& config() const { return cfg_; }
  const nn::ParamLayout& layout() const { return layout_; }

 private:
  struct Graph;
  struct Tape;

  Graph build_graph(const Structure& s, const NeighborList& nl) const;
  Prediction forward(const Structure& s, const Graph& g, Tape* tape) const;
  void backward(const Structure& s, const Graph& g, const Tape& tape, double coeff,
                std::span<double> grad) const;

  PetConfig cfg_;
  CutoffParams cut_;
  nn::ParamLayout layout_;
  std::vector<double> params_;

  // Per-block segment offsets (index [k]); kNone marks an absent segment.
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  struct BlockOffsets {
    std::size_t e_c, e_n;
    std::size_t l_w, l_b;
    std::size_t lc_w, lc_b, mc_w1, mc_b1, mc_w2, mc_b2;  // attribute channel
    std::size_t m_w1, m_b1, m_w2, m_b2;
    std::size_t m_in;  // input width of the compressor
    std::vector<std::size_t> ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    std::vector<std::size_t> ln2_g, ln2_b, wf1, bf1, wf2, bf2;
    std::size_t hc_w, hc_b, hn_w, hn_b;
  };
  std::vector<BlockOffsets> blocks_;
  std::size_t d_in_r_ = 3;
};

}  // namespace ecse
