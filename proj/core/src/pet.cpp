#include "ecse/pet.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "ecse/rng.hpp"

namespace ecse {

namespace {
constexpr double kLnEps = 1e-5;
}

// ---------------------------------------------------------------------------
// Layout

PetBackbone::PetBackbone(const PetConfig& cfg)
    : cfg_(cfg), cut_(cfg.r_c, cfg.delta_rc) {
  if (cfg.n_species < 1 || cfg.d_pet < 1 || cfg.n_gnn < 1 || cfg.n_tl < 1 ||
      cfg.n_heads < 1 || cfg.d_ffn < 1)
    throw std::invalid_argument("PetConfig: sizes must be positive");
  if (cfg.d_pet % cfg.n_heads != 0)
    throw std::invalid_argument("PetConfig: d_pet must be divisible by n_heads");

  const auto sp = static_cast<std::size_t>(cfg.n_species);
  const auto d = static_cast<std::size_t>(cfg.d_pet);
  const auto dffn = static_cast<std::size_t>(cfg.d_ffn);
  d_in_r_ = cfg.two_body ? 1 : (cfg.use_attribute_channel ? 4 : 3);

  const double wb = 1.0 / std::sqrt(double(d));
  blocks_.resize(static_cast<std::size_t>(cfg.n_gnn));
  for (int k = 0; k < cfg.n_gnn; ++k) {
    auto& B = blocks_[static_cast<std::size_t>(k)];
    const std::string kb = "b" + std::to_string(k) + ".";
    B.e_c = layout_.add(kb + "e_c", sp, d, 1.0);
    if (!cfg.species_first_messages || k == 0)
      B.e_n = layout_.add(kb + "e_n", sp, d, 1.0);
    else
      B.e_n = kNone;
    const double lb = 1.0 / std::sqrt(double(d_in_r_));
    B.l_w = layout_.add(kb + "l_w", d, d_in_r_, lb);
    B.l_b = layout_.add(kb + "l_b", d, 1, lb);
    if (cfg.use_attribute_channel) {
      B.lc_w = layout_.add(kb + "lc_w", d, 1, 1.0);
      B.lc_b = layout_.add(kb + "lc_b", d, 1, 1.0);
      const double cb = 1.0 / std::sqrt(double(2 * d));
      B.mc_w1 = layout_.add(kb + "mc_w1", d, 2 * d, cb);
      B.mc_b1 = layout_.add(kb + "mc_b1", d, 1, cb);
      B.mc_w2 = layout_.add(kb + "mc_w2", d, d, wb);
      B.mc_b2 = layout_.add(kb + "mc_b2", d, 1, wb);
    } else {
      B.lc_w = B.lc_b = B.mc_w1 = B.mc_b1 = B.mc_w2 = B.mc_b2 = kNone;
    }
    B.m_in = cfg.species_first_messages ? 2 * d : (k == 0 ? 2 * d : 3 * d);
    const double mb = 1.0 / std::sqrt(double(B.m_in));
    B.m_w1 = layout_.add(kb + "m_w1", d, B.m_in, mb);
    B.m_b1 = layout_.add(kb + "m_b1", d, 1, mb);
    B.m_w2 = layout_.add(kb + "m_w2", d, d, wb);
    B.m_b2 = layout_.add(kb + "m_b2", d, 1, wb);
    for (int t = 0; t < cfg.n_tl; ++t) {
      const std::string tb = kb + "t" + std::to_string(t) + ".";
      B.ln1_g.push_back(layout_.add_constant(tb + "ln1_g", d, 1, 1.0));
      B.ln1_b.push_back(layout_.add_constant(tb + "ln1_b", d, 1, 0.0));
      B.wq.push_back(layout_.add(tb + "wq", d, d, wb));
      B.bq.push_back(layout_.add(tb + "bq", d, 1, wb));
      B.wk.push_back(layout_.add(tb + "wk", d, d, wb));
      B.bk.push_back(layout_.add(tb + "bk", d, 1, wb));
      B.wv.push_back(layout_.add(tb + "wv", d, d, wb));
      B.bv.push_back(layout_.add(tb + "bv", d, 1, wb));
      B.wo.push_back(layout_.add(tb + "wo", d, d, wb));
      B.bo.push_back(layout_.add(tb + "bo", d, 1, wb));
      B.ln2_g.push_back(layout_.add_constant(tb + "ln2_g", d, 1, 1.0));
      B.ln2_b.push_back(layout_.add_constant(tb + "ln2_b", d, 1, 0.0));
      B.wf1.push_back(layout_.add(tb + "wf1", dffn, d, wb));
      B.bf1.push_back(layout_.add(tb + "bf1", dffn, 1, wb));
      const double fb = 1.0 / std::sqrt(double(dffn));
      B.wf2.push_back(layout_.add(tb + "wf2", d, dffn, fb));
      B.bf2.push_back(layout_.add(tb + "bf2", d, 1, fb));
    }
    B.hc_w = layout_.add(kb + "hc_w", 1, d, wb);
    B.hc_b = layout_.add(kb + "hc_b", 1, 1, wb);
    B.hn_w = layout_.add(kb + "hn_w", 1, d, wb);
    B.hn_b = layout_.add(kb + "hn_b", 1, 1, wb);
  }
  params_.assign(layout_.total(), 0.0);
}

void PetBackbone::random_init(std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& seg : layout_.segments()) {
    for (std::size_t k = 0; k < seg.size(); ++k) {
      params_[seg.offset + k] = seg.constant_init
                                    ? seg.init_constant
                                    : rng.uniform(-seg.init_bound, seg.init_bound);
    }
  }
}

// ---------------------------------------------------------------------------
// Edge graph

struct PetBackbone::Graph {
  struct Edge {
    int center;
    int neighbor;
    Vec3 disp;
    double dist;
    double gate;
    int rev;
  };
  std::vector<Edge> edges;
  std::vector<std::vector<int>> env_edges;
};

PetBackbone::Graph PetBackbone::build_graph(const Structure& s,
                                            const NeighborList& nl) const {
  if (nl.cutoff() < cfg_.r_c)
    throw std::invalid_argument("PetBackbone: neighbor list cutoff below model cutoff");
  Graph g;
  g.env_edges.resize(s.size());
  std::map<std::array<int, 5>, int> ids;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (const Neighbor& nb : nl.neighbors_of(i)) {
      if (nb.distance > cfg_.r_c) continue;
      const int e = static_cast<int>(g.edges.size());
      g.edges.push_back({static_cast<int>(i), nb.index, nb.displacement, nb.distance,
                         fc(nb.distance, cut_), -1});
      g.env_edges[i].push_back(e);
      ids[{static_cast<int>(i), nb.index, nb.shift[0], nb.shift[1], nb.shift[2]}] = e;
    }
  }
  for (auto& [key, e] : ids) {
    const std::array<int, 5> rk = {key[1], key[0], -key[2], -key[3], -key[4]};
    const auto it = ids.find(rk);
    if (it == ids.end())
      throw std::logic_error("PetBackbone: neighbor list is not symmetric");
    g.edges[static_cast<std::size_t>(e)].rev = it->second;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Tape

struct PetBackbone::Tape {
  struct LayerTape {
    std::vector<double> x_in, ln1_mean, ln1_rstd, h1, q, k, v, att, attout;
    std::vector<double> x_mid, ln2_mean, ln2_rstd, h2, f1_pre, f1;
  };
  struct EnvTape {
    std::vector<double> m_input, m_hidden_pre, l_pre;
    std::vector<double> lc_pre, mc_input, mc_hidden_pre;
    std::vector<double> token_in;
    std::vector<LayerTape> layers;
    std::vector<double> x_out;
  };
  std::vector<std::vector<EnvTape>> blocks;  // [block][atom]
};

// ---------------------------------------------------------------------------
// Forward

namespace {

void layer_norm(const double* x, const double* g, const double* b, std::size_t d,
                double* y, double* mean_out, double* rstd_out) {
  double mean = 0.0;
  for (std::size_t i = 0; i < d; ++i) mean += x[i];
  mean /= double(d);
  double var = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double c = x[i] - mean;
    var += c * c;
  }
  var /= double(d);
  const double rstd = 1.0 / std::sqrt(var + kLnEps);
  for (std::size_t i = 0; i < d; ++i) y[i] = g[i] * ((x[i] - mean) * rstd) + b[i];
  *mean_out = mean;
  *rstd_out = rstd;
}

void layer_norm_backward(const double* x, const double* g, double mean, double rstd,
                         const double* dy, std::size_t d, double* dx_accum, double* dg,
                         double* db) {
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double xhat = (x[i] - mean) * rstd;
    const double dxhat = dy[i] * g[i];
    m1 += dxhat;
    m2 += dxhat * xhat;
    dg[i] += dy[i] * xhat;
    db[i] += dy[i];
  }
  m1 /= double(d);
  m2 /= double(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double xhat = (x[i] - mean) * rstd;
    const double dxhat = dy[i] * g[i];
    dx_accum[i] += rstd * (dxhat - m1 - xhat * m2);
  }
}

}  // namespace

Prediction PetBackbone::forward(const Structure& s, const Graph& g, Tape* tape) const {
  const auto d = static_cast<std::size_t>(cfg_.d_pet);
  const auto dffn = static_cast<std::size_t>(cfg_.d_ffn);
  const auto n_heads = static_cast<std::size_t>(cfg_.n_heads);
  const std::size_t d_head = d / n_heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(double(d_head));
  const std::span<const double> p = params_;
  const std::size_t n_atoms = s.size();
  const std::size_t n_edges = g.edges.size();

  if (tape) tape->blocks.assign(blocks_.size(), {});

  std::vector<double> msg(n_edges * d, 0.0);
  std::vector<double> per_atom(n_atoms, 0.0);
  double energy = 0.0;

  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const auto& B = blocks_[k];
    std::vector<double> new_msg = msg;
    if (tape) tape->blocks[k].resize(n_atoms);

    for (std::size_t i = 0; i < n_atoms; ++i) {
      const auto& slots = g.env_edges[i];
      const std::size_t n_tok = 1 + slots.size();

      Tape::EnvTape local_tape;
      Tape::EnvTape& et = tape ? tape->blocks[k][i] : local_tape;

      // --- token construction -------------------------------------------
      std::vector<double> x(n_tok * d);
      et.l_pre.assign(slots.size() * d, 0.0);
      et.m_input.assign(slots.size() * B.m_in, 0.0);
      et.m_hidden_pre.assign(slots.size() * d, 0.0);

      // central token
      {
        const std::size_t sc = static_cast<std::size_t>(s.species[i]);
        if (sc >= static_cast<std::size_t>(cfg_.n_species))
          throw std::runtime_error("PetBackbone: species index beyond configured table");
        const double* ec = &p[B.e_c + sc * d];
        if (!cfg_.use_attribute_channel) {
          for (std::size_t c = 0; c < d; ++c) x[c] = ec[c];
        } else {
          const double attr = s.attribute ? (*s.attribute)[i] : 0.0;
          et.lc_pre.assign(d, 0.0);
          for (std::size_t c = 0; c < d; ++c)
            et.lc_pre[c] = p[B.lc_w + c] * attr + p[B.lc_b + c];
          et.mc_input.assign(2 * d, 0.0);
          for (std::size_t c = 0; c < d; ++c) {
            et.mc_input[c] = ec[c];
            et.mc_input[d + c] = nn::silu(et.lc_pre[c]);
          }
          et.mc_hidden_pre.assign(d, 0.0);
          nn::linear(p.subspan(B.mc_w1, d * 2 * d), p.subspan(B.mc_b1, d), et.mc_input,
                     et.mc_hidden_pre);
          std::vector<double> hid(d);
          for (std::size_t c = 0; c < d; ++c) hid[c] = nn::silu(et.mc_hidden_pre[c]);
          nn::linear(p.subspan(B.mc_w2, d * d), p.subspan(B.mc_b2, d), hid,
                     std::span<double>(x.data(), d));
        }
      }

      // neighbor tokens
      for (std::size_t t = 0; t < slots.size(); ++t) {
        const auto& edge = g.edges[static_cast<std::size_t>(slots[t])];
        const std::size_t sj = static_cast<std::size_t>(s.species[edge.neighbor]);
        if (sj >= static_cast<std::size_t>(cfg_.n_species))
          throw std::runtime_error("PetBackbone: species index beyond configured table");

        // position encoder
        double rin[4];
        if (cfg_.two_body) {
          rin[0] = edge.dist;
        } else {
          rin[0] = edge.disp.x;
          rin[1] = edge.disp.y;
          rin[2] = edge.disp.z;
          if (cfg_.use_attribute_channel)
            rin[3] = s.attribute ? (*s.attribute)[static_cast<std::size_t>(edge.neighbor)]
                                 : 0.0;
        }
        double* lp = &et.l_pre[t * d];
        for (std::size_t c = 0; c < d; ++c) {
          double acc = p[B.l_b + c];
          const double* row = &p[B.l_w + c * d_in_r_];
          for (std::size_t u = 0; u < d_in_r_; ++u) acc += row[u] * rin[u];
          lp[c] = acc;
        }

        // compressor input
        double* mi = &et.m_input[t * B.m_in];
        std::size_t at = 0;
        if (cfg_.species_first_messages) {
          if (k == 0) {
            const double* en = &p[B.e_n + sj * d];
            for (std::size_t c = 0; c < d; ++c) mi[at + c] = en[c];
          } else {
            const double* m_in_vec =
                &msg[static_cast<std::size_t>(edge.rev) * d];
            for (std::size_t c = 0; c < d; ++c) mi[at + c] = m_in_vec[c];
          }
          at += d;
        } else {
          if (k > 0) {
            const double* m_in_vec =
                &msg[static_cast<std::size_t>(edge.rev) * d];
            for (std::size_t c = 0; c < d; ++c) mi[at + c] = m_in_vec[c];
            at += d;
          }
          const double* en = &p[B.e_n + sj * d];
          for (std::size_t c = 0; c < d; ++c) mi[at + c] = en[c];
          at += d;
        }
        for (std::size_t c = 0; c < d; ++c) mi[at + c] = nn::silu(lp[c]);

        // compressor MLP
        double* hp = &et.m_hidden_pre[t * d];
        nn::linear(p.subspan(B.m_w1, d * B.m_in), p.subspan(B.m_b1, d),
                   std::span<const double>(mi, B.m_in), std::span<double>(hp, d));
        std::vector<double> hid(d);
        for (std::size_t c = 0; c < d; ++c) hid[c] = nn::silu(hp[c]);
        nn::linear(p.subspan(B.m_w2, d * d), p.subspan(B.m_b2, d), hid,
                   std::span<double>(&x[(t + 1) * d], d));
      }

      et.token_in = x;

      // --- transformer ---------------------------------------------------
      et.layers.resize(static_cast<std::size_t>(cfg_.n_tl));
      for (int tl = 0; tl < cfg_.n_tl; ++tl) {
        auto& lt = et.layers[static_cast<std::size_t>(tl)];
        const std::size_t li = static_cast<std::size_t>(tl);
        lt.x_in = x;
        lt.ln1_mean.assign(n_tok, 0.0);
        lt.ln1_rstd.assign(n_tok, 0.0);
        lt.h1.assign(n_tok * d, 0.0);
        for (std::size_t a = 0; a < n_tok; ++a)
          layer_norm(&x[a * d], &p[B.ln1_g[li]], &p[B.ln1_b[li]], d, &lt.h1[a * d],
                     &lt.ln1_mean[a], &lt.ln1_rstd[a]);

        lt.q.assign(n_tok * d, 0.0);
        lt.k.assign(n_tok * d, 0.0);
        lt.v.assign(n_tok * d, 0.0);
        for (std::size_t a = 0; a < n_tok; ++a) {
          nn::linear(p.subspan(B.wq[li], d * d), p.subspan(B.bq[li], d),
                     std::span<const double>(&lt.h1[a * d], d),
                     std::span<double>(&lt.q[a * d], d));
          nn::linear(p.subspan(B.wk[li], d * d), p.subspan(B.bk[li], d),
                     std::span<const double>(&lt.h1[a * d], d),
                     std::span<double>(&lt.k[a * d], d));
          nn::linear(p.subspan(B.wv[li], d * d), p.subspan(B.bv[li], d),
                     std::span<const double>(&lt.h1[a * d], d),
                     std::span<double>(&lt.v[a * d], d));
        }

        // gated attention; keys with a zero gate are skipped outright so
        // cutoff-boundary tokens leave everything bit-identical
        lt.att.assign(n_heads * n_tok * n_tok, 0.0);
        lt.attout.assign(n_tok * d, 0.0);
        for (std::size_t h = 0; h < n_heads; ++h) {
          const std::size_t ho = h * d_head;
          for (std::size_t a = 0; a < n_tok; ++a) {
            double shift = -1e300;
            for (std::size_t b = 0; b < n_tok; ++b) {
              const double gate =
                  b == 0 ? 1.0 : g.edges[static_cast<std::size_t>(slots[b - 1])].gate;
              if (gate == 0.0) continue;
              double sc = 0.0;
              for (std::size_t c = 0; c < d_head; ++c)
                sc += lt.q[a * d + ho + c] * lt.k[b * d + ho + c];
              sc *= inv_sqrt_dh;
              if (sc > shift) shift = sc;
            }
            double den = 0.0;
            double* att_row = &lt.att[(h * n_tok + a) * n_tok];
            for (std::size_t b = 0; b < n_tok; ++b) {
              const double gate =
                  b == 0 ? 1.0 : g.edges[static_cast<std::size_t>(slots[b - 1])].gate;
              if (gate == 0.0) continue;
              double sc = 0.0;
              for (std::size_t c = 0; c < d_head; ++c)
                sc += lt.q[a * d + ho + c] * lt.k[b * d + ho + c];
              sc *= inv_sqrt_dh;
              const double e = std::exp(sc - shift) * gate;
              att_row[b] = e;
              den += e;
            }
            const double inv_den = 1.0 / den;
            for (std::size_t b = 0; b < n_tok; ++b) att_row[b] *= inv_den;
            double* out = &lt.attout[a * d + ho];
            for (std::size_t b = 0; b < n_tok; ++b) {
              const double w = att_row[b];
              if (w == 0.0) continue;
              const double* vb = &lt.v[b * d + ho];
              for (std::size_t c = 0; c < d_head; ++c) out[c] += w * vb[c];
            }
          }
        }

        for (std::size_t a = 0; a < n_tok; ++a) {
          std::vector<double> mha(d);
          nn::linear(p.subspan(B.wo[li], d * d), p.subspan(B.bo[li], d),
                     std::span<const double>(&lt.attout[a * d], d), mha);
          for (std::size_t c = 0; c < d; ++c) x[a * d + c] += mha[c];
        }

        lt.x_mid = x;
        lt.ln2_mean.assign(n_tok, 0.0);
        lt.ln2_rstd.assign(n_tok, 0.0);
        lt.h2.assign(n_tok * d, 0.0);
        for (std::size_t a = 0; a < n_tok; ++a)
          layer_norm(&x[a * d], &p[B.ln2_g[li]], &p[B.ln2_b[li]], d, &lt.h2[a * d],
                     &lt.ln2_mean[a], &lt.ln2_rstd[a]);

        lt.f1_pre.assign(n_tok * dffn, 0.0);
        lt.f1.assign(n_tok * dffn, 0.0);
        for (std::size_t a = 0; a < n_tok; ++a) {
          nn::linear(p.subspan(B.wf1[li], dffn * d), p.subspan(B.bf1[li], dffn),
                     std::span<const double>(&lt.h2[a * d], d),
                     std::span<double>(&lt.f1_pre[a * dffn], dffn));
          for (std::size_t c = 0; c < dffn; ++c)
            lt.f1[a * dffn + c] = nn::silu(lt.f1_pre[a * dffn + c]);
          std::vector<double> ffn(d);
          nn::linear(p.subspan(B.wf2[li], d * dffn), p.subspan(B.bf2[li], d),
                     std::span<const double>(&lt.f1[a * dffn], dffn), ffn);
          for (std::size_t c = 0; c < d; ++c) x[a * d + c] += ffn[c];
        }
      }

      et.x_out = x;

      // --- heads and messages ---------------------------------------------
      double contrib = p[B.hc_b];
      for (std::size_t c = 0; c < d; ++c) contrib += p[B.hc_w + c] * x[c];

      double bond = 0.0;
      double gate_sum = 0.0;
      for (std::size_t t = 0; t < slots.size(); ++t) {
        const double gate = g.edges[static_cast<std::size_t>(slots[t])].gate;
        if (gate == 0.0) continue;
        gate_sum += gate;
        double pre = p[B.hn_b];
        for (std::size_t c = 0; c < d; ++c) pre += p[B.hn_w + c] * x[(t + 1) * d + c];
        bond += pre * gate;
      }
      if (cfg_.bond_mode == BondMode::Average)
        bond = gate_sum > 0.0 ? bond / gate_sum : 0.0;
      contrib += bond;

      energy += contrib;
      per_atom[i] += contrib;

      for (std::size_t t = 0; t < slots.size(); ++t) {
        double* nm = &new_msg[static_cast<std::size_t>(slots[t]) * d];
        for (std::size_t c = 0; c < d; ++c) nm[c] += x[(t + 1) * d + c];
      }
    }

    msg = std::move(new_msg);
  }

  Prediction pred = Prediction::scalar(energy);
  pred.per_atom = std::move(per_atom);
  return pred;
}

Prediction PetBackbone::evaluate(const Structure& s, const NeighborList& nl) const {
  const Graph g = build_graph(s, nl);
  return forward(s, g, nullptr);
}

// ---------------------------------------------------------------------------
// Backward

void PetBackbone::backward(const Structure& s, const Graph& g, const Tape& tape,
                           double coeff, std::span<double> grad) const {
  const auto d = static_cast<std::size_t>(cfg_.d_pet);
  const auto dffn = static_cast<std::size_t>(cfg_.d_ffn);
  const auto n_heads = static_cast<std::size_t>(cfg_.n_heads);
  const std::size_t d_head = d / n_heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(double(d_head));
  const std::span<const double> p = params_;
  const std::size_t n_atoms = s.size();
  const std::size_t n_edges = g.edges.size();

  std::vector<double> grad_msg(n_edges * d, 0.0);

  for (std::size_t kk = blocks_.size(); kk-- > 0;) {
    const auto& B = blocks_[kk];
    std::vector<double> grad_msg_prev(n_edges * d, 0.0);

    for (std::size_t i = 0; i < n_atoms; ++i) {
      const auto& slots = g.env_edges[i];
      const std::size_t n_tok = 1 + slots.size();
      const auto& et = tape.blocks[kk][i];

      // dE/d x_out
      std::vector<double> dx(n_tok * d, 0.0);
      {
        // central head
        grad[B.hc_b] += coeff;
        for (std::size_t c = 0; c < d; ++c) {
          grad[B.hc_w + c] += coeff * et.x_out[c];
          dx[c] += coeff * p[B.hc_w + c];
        }
        // bond head
        double gate_sum = 0.0;
        if (cfg_.bond_mode == BondMode::Average) {
          for (std::size_t t = 0; t < slots.size(); ++t)
            gate_sum += g.edges[static_cast<std::size_t>(slots[t])].gate;
        }
        for (std::size_t t = 0; t < slots.size(); ++t) {
          const double gate = g.edges[static_cast<std::size_t>(slots[t])].gate;
          if (gate == 0.0) continue;
          const double c0 = cfg_.bond_mode == BondMode::Average
                                ? coeff * gate / gate_sum
                                : coeff * gate;
          grad[B.hn_b] += c0;
          for (std::size_t c = 0; c < d; ++c) {
            grad[B.hn_w + c] += c0 * et.x_out[(t + 1) * d + c];
            dx[(t + 1) * d + c] += c0 * p[B.hn_w + c];
          }
        }
        // messages built from output tokens
        for (std::size_t t = 0; t < slots.size(); ++t) {
          const double* gm = &grad_msg[static_cast<std::size_t>(slots[t]) * d];
          for (std::size_t c = 0; c < d; ++c) dx[(t + 1) * d + c] += gm[c];
        }
      }

      // transformer backward
      for (std::size_t li = et.layers.size(); li-- > 0;) {
        const auto& lt = et.layers[li];

        // FFN sublayer: x_out = x_mid + Wf2 silu(Wf1 LN2(x_mid) + bf1) + bf2
        std::vector<double> dh2(n_tok * d, 0.0);
        for (std::size_t a = 0; a < n_tok; ++a) {
          std::vector<double> df1(dffn, 0.0);
          nn::linear_backward(p.subspan(B.wf2[li], d * dffn),
                              std::span<const double>(&lt.f1[a * dffn], dffn),
                              std::span<const double>(&dx[a * d], d),
                              grad.subspan(B.wf2[li], d * dffn),
                              grad.subspan(B.bf2[li], d), df1);
          for (std::size_t c = 0; c < dffn; ++c)
            df1[c] *= nn::silu_prime(lt.f1_pre[a * dffn + c]);
          nn::linear_backward(p.subspan(B.wf1[li], dffn * d),
                              std::span<const double>(&lt.h2[a * d], d), df1,
                              grad.subspan(B.wf1[li], dffn * d),
                              grad.subspan(B.bf1[li], dffn),
                              std::span<double>(&dh2[a * d], d));
        }
        for (std::size_t a = 0; a < n_tok; ++a)
          layer_norm_backward(&lt.x_mid[a * d], &p[B.ln2_g[li]], lt.ln2_mean[a],
                              lt.ln2_rstd[a], &dh2[a * d], d, &dx[a * d],
                              &grad[B.ln2_g[li]], &grad[B.ln2_b[li]]);

        // attention sublayer: x_mid = x_in + Wo attout + bo
        std::vector<double> dattout(n_tok * d, 0.0);
        for (std::size_t a = 0; a < n_tok; ++a) {
          nn::linear_backward(p.subspan(B.wo[li], d * d),
                              std::span<const double>(&lt.attout[a * d], d),
                              std::span<const double>(&dx[a * d], d),
                              grad.subspan(B.wo[li], d * d), grad.subspan(B.bo[li], d),
                              std::span<double>(&dattout[a * d], d));
        }

        std::vector<double> dq(n_tok * d, 0.0), dk(n_tok * d, 0.0), dv(n_tok * d, 0.0);
        for (std::size_t h = 0; h < n_heads; ++h) {
          const std::size_t ho = h * d_head;
          for (std::size_t a = 0; a < n_tok; ++a) {
            const double* att_row = &lt.att[(h * n_tok + a) * n_tok];
            // datt and the softmax jacobian
            double rowdot = 0.0;
            std::vector<double> datt(n_tok, 0.0);
            for (std::size_t b = 0; b < n_tok; ++b) {
              if (att_row[b] == 0.0) continue;
              double acc = 0.0;
              const double* vb = &lt.v[b * d + ho];
              const double* dao = &dattout[a * d + ho];
              for (std::size_t c = 0; c < d_head; ++c) acc += dao[c] * vb[c];
              datt[b] = acc;
              rowdot += att_row[b] * acc;
              for (std::size_t c = 0; c < d_head; ++c)
                dv[b * d + ho + c] += att_row[b] * dattout[a * d + ho + c];
            }
            for (std::size_t b = 0; b < n_tok; ++b) {
              if (att_row[b] == 0.0) continue;
              const double ds = att_row[b] * (datt[b] - rowdot) * inv_sqrt_dh;
              for (std::size_t c = 0; c < d_head; ++c) {
                dq[a * d + ho + c] += ds * lt.k[b * d + ho + c];
                dk[b * d + ho + c] += ds * lt.q[a * d + ho + c];
              }
            }
          }
        }

        std::vector<double> dh1(n_tok * d, 0.0);
        for (std::size_t a = 0; a < n_tok; ++a) {
          nn::linear_backward(p.subspan(B.wq[li], d * d),
                              std::span<const double>(&lt.h1[a * d], d),
                              std::span<const double>(&dq[a * d], d),
                              grad.subspan(B.wq[li], d * d), grad.subspan(B.bq[li], d),
                              std::span<double>(&dh1[a * d], d));
          nn::linear_backward(p.subspan(B.wk[li], d * d),
                              std::span<const double>(&lt.h1[a * d], d),
                              std::span<const double>(&dk[a * d], d),
                              grad.subspan(B.wk[li], d * d), grad.subspan(B.bk[li], d),
                              std::span<double>(&dh1[a * d], d));
          nn::linear_backward(p.subspan(B.wv[li], d * d),
                              std::span<const double>(&lt.h1[a * d], d),
                              std::span<const double>(&dv[a * d], d),
                              grad.subspan(B.wv[li], d * d), grad.subspan(B.bv[li], d),
                              std::span<double>(&dh1[a * d], d));
        }
        for (std::size_t a = 0; a < n_tok; ++a)
          layer_norm_backward(&lt.x_in[a * d], &p[B.ln1_g[li]], lt.ln1_mean[a],
                              lt.ln1_rstd[a], &dh1[a * d], d, &dx[a * d],
                              &grad[B.ln1_g[li]], &grad[B.ln1_b[li]]);
      }

      // token-construction backward
      // central token
      {
        const std::size_t sc = static_cast<std::size_t>(s.species[i]);
        if (!cfg_.use_attribute_channel) {
          for (std::size_t c = 0; c < d; ++c) grad[B.e_c + sc * d + c] += dx[c];
        } else {
          std::vector<double> hid(d);
          for (std::size_t c = 0; c < d; ++c) hid[c] = nn::silu(et.mc_hidden_pre[c]);
          std::vector<double> dhid(d, 0.0);
          nn::linear_backward(p.subspan(B.mc_w2, d * d), hid,
                              std::span<const double>(dx.data(), d),
                              grad.subspan(B.mc_w2, d * d), grad.subspan(B.mc_b2, d),
                              dhid);
          for (std::size_t c = 0; c < d; ++c)
            dhid[c] *= nn::silu_prime(et.mc_hidden_pre[c]);
          std::vector<double> dmin(2 * d, 0.0);
          nn::linear_backward(p.subspan(B.mc_w1, d * 2 * d), et.mc_input, dhid,
                              grad.subspan(B.mc_w1, d * 2 * d),
                              grad.subspan(B.mc_b1, d), dmin);
          for (std::size_t c = 0; c < d; ++c) grad[B.e_c + sc * d + c] += dmin[c];
          const double attr = s.attribute ? (*s.attribute)[i] : 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            const double dpre = dmin[d + c] * nn::silu_prime(et.lc_pre[c]);
            grad[B.lc_w + c] += dpre * attr;
            grad[B.lc_b + c] += dpre;
          }
        }
      }

      // neighbor tokens
      for (std::size_t t = 0; t < slots.size(); ++t) {
        const auto& edge = g.edges[static_cast<std::size_t>(slots[t])];
        const std::size_t sj = static_cast<std::size_t>(s.species[edge.neighbor]);

        std::vector<double> hid(d);
        for (std::size_t c = 0; c < d; ++c) hid[c] = nn::silu(et.m_hidden_pre[t * d + c]);
        std::vector<double> dhid(d, 0.0);
        nn::linear_backward(p.subspan(B.m_w2, d * d), hid,
                            std::span<const double>(&dx[(t + 1) * d], d),
                            grad.subspan(B.m_w2, d * d), grad.subspan(B.m_b2, d), dhid);
        for (std::size_t c = 0; c < d; ++c)
          dhid[c] *= nn::silu_prime(et.m_hidden_pre[t * d + c]);
        std::vector<double> dmin(B.m_in, 0.0);
        nn::linear_backward(p.subspan(B.m_w1, d * B.m_in),
                            std::span<const double>(&et.m_input[t * B.m_in], B.m_in),
                            dhid, grad.subspan(B.m_w1, d * B.m_in),
                            grad.subspan(B.m_b1, d), dmin);

        std::size_t at = 0;
        if (cfg_.species_first_messages) {
          if (kk == 0) {
            for (std::size_t c = 0; c < d; ++c) grad[B.e_n + sj * d + c] += dmin[c];
          } else {
            double* gm = &grad_msg_prev[static_cast<std::size_t>(edge.rev) * d];
            for (std::size_t c = 0; c < d; ++c) gm[c] += dmin[c];
          }
          at += d;
        } else {
          if (kk > 0) {
            double* gm = &grad_msg_prev[static_cast<std::size_t>(edge.rev) * d];
            for (std::size_t c = 0; c < d; ++c) gm[c] += dmin[c];
            at += d;
          }
          for (std::size_t c = 0; c < d; ++c) grad[B.e_n + sj * d + c] += dmin[at + c];
          at += d;
        }

        // position encoder
        double rin[4] = {0, 0, 0, 0};
        if (cfg_.two_body) {
          rin[0] = edge.dist;
        } else {
          rin[0] = edge.disp.x;
          rin[1] = edge.disp.y;
          rin[2] = edge.disp.z;
          if (cfg_.use_attribute_channel)
            rin[3] = s.attribute ? (*s.attribute)[static_cast<std::size_t>(edge.neighbor)]
                                 : 0.0;
        }
        for (std::size_t c = 0; c < d; ++c) {
          const double dpre = dmin[at + c] * nn::silu_prime(et.l_pre[t * d + c]);
          grad[B.l_b + c] += dpre;
          for (std::size_t u = 0; u < d_in_r_; ++u)
            grad[B.l_w + c * d_in_r_ + u] += dpre * rin[u];
        }
      }

      // residual: m^k = m^{k-1} + out  (each edge belongs to exactly one env)
      for (std::size_t t = 0; t < slots.size(); ++t) {
        const std::size_t e = static_cast<std::size_t>(slots[t]);
        double* gp = &grad_msg_prev[e * d];
        const double* gm = &grad_msg[e * d];
        for (std::size_t c = 0; c < d; ++c) gp[c] += gm[c];
      }
    }

    grad_msg = std::move(grad_msg_prev);
  }
}

void PetBackbone::accumulate_energy_gradient(const Structure& s, const NeighborList& nl,
                                             double coeff, std::span<double> grad) const {
  if (grad.size() != params_.size())
    throw std::invalid_argument("PetBackbone: gradient size mismatch");
  const Graph g = build_graph(s, nl);
  Tape tape;
  forward(s, g, &tape);
  backward(s, g, tape, coeff, grad);
}

}  // namespace ecse
