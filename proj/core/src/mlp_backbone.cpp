#include "ecse/mlp_backbone.hpp"

#include <cmath>
#include <stdexcept>

#include "ecse/rng.hpp"

namespace ecse {

MlpBackbone::MlpBackbone(const MlpConfig& cfg)
    : cfg_(cfg), cut_(cfg.r_c, cfg.delta_rc) {
  if (cfg.n_species < 1 || cfg.d_emb < 1 || cfg.d_hidden < 1 || cfg.max_neighbors < 1)
    throw std::invalid_argument("MlpConfig: sizes must be positive");
  if (cfg.output == OutputKind::Tensor)
    throw std::invalid_argument("MlpBackbone: tensor outputs not supported");

  const auto sp = static_cast<std::size_t>(cfg.n_species);
  const auto de = static_cast<std::size_t>(cfg.d_emb);
  const auto dh = static_cast<std::size_t>(cfg.d_hidden);
  enc_in_ = 3 + 1 + de;
  comb_in_ = dh + de;
  n_out_ = cfg.output == OutputKind::Scalar ? 1 : 3;

  emb_n_ = layout_.add("emb_n", sp, de, 1.0);
  emb_c_ = layout_.add("emb_c", sp, de, 1.0);
  w1_ = layout_.add("w1", dh, enc_in_, 1.0 / std::sqrt(double(enc_in_)));
  b1_ = layout_.add("b1", dh, 1, 1.0 / std::sqrt(double(enc_in_)));
  w2_ = layout_.add("w2", dh, comb_in_, 1.0 / std::sqrt(double(comb_in_)));
  b2_ = layout_.add("b2", dh, 1, 1.0 / std::sqrt(double(comb_in_)));
  w3_ = layout_.add("w3", n_out_, dh, 1.0 / std::sqrt(double(dh)));
  b3_ = layout_.add("b3", n_out_, 1, 1.0 / std::sqrt(double(dh)));
  params_.assign(layout_.total(), 0.0);
}

void MlpBackbone::random_init(std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& seg : layout_.segments()) {
    for (std::size_t k = 0; k < seg.size(); ++k) {
      params_[seg.offset + k] = seg.constant_init
                                    ? seg.init_constant
                                    : rng.uniform(-seg.init_bound, seg.init_bound);
    }
  }
}

Prediction MlpBackbone::evaluate_env(const AtomicEnvironment& env) const {
  if (env.size() > static_cast<std::size_t>(cfg_.max_neighbors))
    throw std::runtime_error("MlpBackbone: environment exceeds neighbor capacity");
  const auto de = static_cast<std::size_t>(cfg_.d_emb);
  const auto dh = static_cast<std::size_t>(cfg_.d_hidden);
  const std::span<const double> p = params_;

  std::vector<double> u(enc_in_);
  std::vector<double> pre(dh);
  std::vector<double> pooled(dh, 0.0);
  for (std::size_t j = 0; j < env.size(); ++j) {
    const double gate = fc(env.distances[j], cut_);
    if (gate == 0.0) continue;  // boundary atoms contribute exactly nothing
    u[0] = env.displacements[j].x;
    u[1] = env.displacements[j].y;
    u[2] = env.displacements[j].z;
    u[3] = gate;
    const std::size_t s = static_cast<std::size_t>(env.neighbor_species[j]);
    if (s >= static_cast<std::size_t>(cfg_.n_species))
      throw std::runtime_error("MlpBackbone: species index beyond configured table");
    for (std::size_t k = 0; k < de; ++k) u[4 + k] = p[emb_n_ + s * de + k];
    nn::linear(p.subspan(w1_, dh * enc_in_), p.subspan(b1_, dh), u, pre);
    for (std::size_t k = 0; k < dh; ++k) pooled[k] += gate * nn::silu(pre[k]);
  }

  std::vector<double> comb(comb_in_);
  for (std::size_t k = 0; k < dh; ++k) comb[k] = pooled[k];
  const std::size_t sc = static_cast<std::size_t>(env.center_species);
  for (std::size_t k = 0; k < de; ++k) comb[dh + k] = p[emb_c_ + sc * de + k];

  std::vector<double> g(dh);
  nn::linear(p.subspan(w2_, dh * comb_in_), p.subspan(b2_, dh), comb, g);
  for (double& v : g) v = nn::silu(v);

  std::vector<double> out(n_out_);
  nn::linear(p.subspan(w3_, n_out_ * dh), p.subspan(b3_, n_out_), g, out);

  Prediction pred;
  pred.kind = cfg_.output;
  pred.rank = output_rank();
  pred.values = out;
  return pred;
}

void MlpBackbone::accumulate_energy_gradient(const Structure& s, const NeighborList& nl,
                                             double coeff, std::span<double> grad) const {
  if (cfg_.output != OutputKind::Scalar)
    throw std::logic_error("MlpBackbone: energy gradient needs scalar output");
  if (grad.size() != params_.size())
    throw std::invalid_argument("MlpBackbone: gradient size mismatch");
  for (std::size_t i = 0; i < s.size(); ++i)
    accumulate_env_gradient(environment(s, nl, i), coeff, grad);
}

void MlpBackbone::accumulate_env_gradient(const AtomicEnvironment& env, double coeff,
                                          std::span<double> grad) const {
  const auto de = static_cast<std::size_t>(cfg_.d_emb);
  const auto dh = static_cast<std::size_t>(cfg_.d_hidden);
  const std::span<const double> p = params_;

  // Forward pass, caching per-neighbor pre-activations.
  std::vector<std::vector<double>> us, pres;
  std::vector<double> gates;
  std::vector<std::size_t> kept_species;
  std::vector<double> pooled(dh, 0.0);
  std::vector<double> u(enc_in_);
  for (std::size_t j = 0; j < env.size(); ++j) {
    const double gate = fc(env.distances[j], cut_);
    if (gate == 0.0) continue;
    u[0] = env.displacements[j].x;
    u[1] = env.displacements[j].y;
    u[2] = env.displacements[j].z;
    u[3] = gate;
    const std::size_t sj = static_cast<std::size_t>(env.neighbor_species[j]);
    for (std::size_t k = 0; k < de; ++k) u[4 + k] = p[emb_n_ + sj * de + k];
    std::vector<double> pre(dh);
    nn::linear(p.subspan(w1_, dh * enc_in_), p.subspan(b1_, dh), u, pre);
    for (std::size_t k = 0; k < dh; ++k) pooled[k] += gate * nn::silu(pre[k]);
    us.push_back(u);
    pres.push_back(std::move(pre));
    gates.push_back(gate);
    kept_species.push_back(sj);
  }

  std::vector<double> comb(comb_in_);
  for (std::size_t k = 0; k < dh; ++k) comb[k] = pooled[k];
  const std::size_t sc = static_cast<std::size_t>(env.center_species);
  for (std::size_t k = 0; k < de; ++k) comb[dh + k] = p[emb_c_ + sc * de + k];
  std::vector<double> g_pre(dh);
  nn::linear(p.subspan(w2_, dh * comb_in_), p.subspan(b2_, dh), comb, g_pre);
  std::vector<double> g(dh);
  for (std::size_t k = 0; k < dh; ++k) g[k] = nn::silu(g_pre[k]);

  // Backward from dE = coeff.
  std::vector<double> dg(dh, 0.0);
  {
    std::vector<double> dout{coeff};
    nn::linear_backward(p.subspan(w3_, n_out_ * dh), g, dout,
                        grad.subspan(w3_, n_out_ * dh), grad.subspan(b3_, n_out_), dg);
  }
  std::vector<double> dcomb(comb_in_, 0.0);
  {
    std::vector<double> dg_pre(dh);
    for (std::size_t k = 0; k < dh; ++k) dg_pre[k] = dg[k] * nn::silu_prime(g_pre[k]);
    nn::linear_backward(p.subspan(w2_, dh * comb_in_), comb, dg_pre,
                        grad.subspan(w2_, dh * comb_in_), grad.subspan(b2_, dh), dcomb);
  }
  for (std::size_t k = 0; k < de; ++k) grad[emb_c_ + sc * de + k] += dcomb[dh + k];

  for (std::size_t jj = 0; jj < us.size(); ++jj) {
    const double gate = gates[jj];
    std::vector<double> dpre(dh);
    for (std::size_t k = 0; k < dh; ++k)
      dpre[k] = dcomb[k] * gate * nn::silu_prime(pres[jj][k]);
    std::vector<double> du(enc_in_, 0.0);
    nn::linear_backward(p.subspan(w1_, dh * enc_in_), us[jj], dpre,
                        grad.subspan(w1_, dh * enc_in_), grad.subspan(b1_, dh), du);
    // u[0..3] are geometric inputs; u[4..] came from the species embedding.
    const std::size_t sj = kept_species[jj];
    for (std::size_t k = 0; k < de; ++k) grad[emb_n_ + sj * de + k] += du[4 + k];
  }
}

}  // namespace ecse
