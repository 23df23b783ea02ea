#include "ecse/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ecse/neighborlist.hpp"
#include "ecse/rng.hpp"
#include "ecse/rotations.hpp"
#include "ecse/symmetrize.hpp"

namespace ecse {

// ---------------------------------------------------------------------------
// Self contributions

double SelfContributionModel::predict(const Structure& s) const {
  double e = intercept;
  for (int sp : s.species) {
    if (sp >= 0 && static_cast<std::size_t>(sp) < coefficients.size())
      e += coefficients[static_cast<std::size_t>(sp)];
  }
  return e;
}

std::vector<double> species_counts(const Structure& s,
                                   const std::vector<int>& species_set) {
  std::vector<double> counts(species_set.size(), 0.0);
  for (int sp : s.species) {
    for (std::size_t k = 0; k < species_set.size(); ++k) {
      if (species_set[k] == sp) {
        counts[k] += 1.0;
        break;
      }
    }
  }
  return counts;
}

namespace {

// Jacobi eigendecomposition of a small symmetric matrix (row-major n x n).
void jacobi_eigen(std::vector<double>& a, std::size_t n, std::vector<double>& eigvals,
                  std::vector<double>& eigvecs) {
  eigvecs.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) eigvecs[i * n + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double app = a[p * n + p];
        const double aqq = a[q * n + q];
        const double theta = 0.5 * (aqq - app) / apq;
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p];
          const double akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k];
          const double aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = eigvecs[k * n + p];
          const double vkq = eigvecs[k * n + q];
          eigvecs[k * n + p] = c * vkp - s * vkq;
          eigvecs[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  eigvals.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) eigvals[i] = a[i * n + i];
}

}  // namespace

SelfContributionModel fit_self_contributions(const std::vector<Structure>& train,
                                             const std::vector<int>& species_set) {
  std::vector<const Structure*> labeled;
  for (const Structure& s : train)
    if (s.targets.energy) labeled.push_back(&s);
  if (labeled.empty())
    throw std::invalid_argument("fit_self_contributions: no energy targets present");

  const std::size_t m = species_set.size() + 1;  // counts + intercept
  std::vector<double> ata(m * m, 0.0);
  std::vector<double> atb(m, 0.0);
  for (const Structure* s : labeled) {
    std::vector<double> row = species_counts(*s, species_set);
    row.push_back(1.0);
    const double y = *s->targets.energy;
    for (std::size_t i = 0; i < m; ++i) {
      atb[i] += row[i] * y;
      for (std::size_t j = 0; j < m; ++j) ata[i * m + j] += row[i] * row[j];
    }
  }

  // Pseudo-inverse through the eigendecomposition; rank-deficient count
  // matrices (every structure sharing one composition) take the minimum-norm
  // solution.
  std::vector<double> eigvals, eigvecs;
  jacobi_eigen(ata, m, eigvals, eigvecs);
  double lam_max = 0.0;
  for (double l : eigvals) lam_max = std::max(lam_max, std::abs(l));
  const double tol = lam_max * 1e-12;
  std::vector<double> beta(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    if (std::abs(eigvals[k]) <= tol) continue;
    double proj = 0.0;
    for (std::size_t i = 0; i < m; ++i) proj += eigvecs[i * m + k] * atb[i];
    proj /= eigvals[k];
    for (std::size_t i = 0; i < m; ++i) beta[i] += eigvecs[i * m + k] * proj;
  }

  int max_species = 0;
  for (int sp : species_set) max_species = std::max(max_species, sp);
  SelfContributionModel model;
  model.coefficients.assign(static_cast<std::size_t>(max_species) + 1, 0.0);
  for (std::size_t k = 0; k < species_set.size(); ++k)
    model.coefficients[static_cast<std::size_t>(species_set[k])] = beta[k];
  model.intercept = beta[m - 1];
  return model;
}

// ---------------------------------------------------------------------------
// Loss

double loss(double pred_e, double true_e, std::span<const double> pred_f,
            std::span<const double> true_f, std::size_t n_atoms, const LossState& state) {
  if (!(state.mse_e > 0.0) || !(state.mse_f > 0.0))
    throw std::invalid_argument("loss: normalizers must be positive");
  if (pred_f.size() != true_f.size())
    throw std::invalid_argument("loss: force array size mismatch");
  if (!pred_f.empty() && pred_f.size() != 3 * n_atoms)
    throw std::invalid_argument("loss: force arrays must have length 3 * n_atoms");

  double de = pred_e - true_e;
  if (state.per_atom_energy) de /= static_cast<double>(n_atoms);
  double l = state.w_e * de * de / state.mse_e;
  if (!pred_f.empty()) {
    double acc = 0.0;
    for (std::size_t k = 0; k < pred_f.size(); ++k) {
      const double df = pred_f[k] - true_f[k];
      acc += df * df;
    }
    l += acc / (3.0 * static_cast<double>(n_atoms) * state.mse_f);
  }
  return l;
}

void update_normalizers(LossState& state, double validation_mse_e,
                        double validation_mse_f) {
  if (!(validation_mse_e > 0.0) || !(validation_mse_f > 0.0))
    throw std::invalid_argument("update_normalizers: inputs must be positive");
  state.mse_e = state.ema_decay * state.mse_e + (1.0 - state.ema_decay) * validation_mse_e;
  state.mse_f = state.ema_decay * state.mse_f + (1.0 - state.ema_decay) * validation_mse_f;
}

// ---------------------------------------------------------------------------
// Toy datasets

namespace {

// Morse constants per unordered species pair, derived from a tiny table so
// different bonds get distinct wells.
struct MorseParams {
  double depth, steepness, r0;
};

MorseParams morse_params(int a, int b) {
  const int key_depth = (a + b) % 3;
  const int key_steep = (a * b + a + b) % 3;
  const int key_r0 = (a + 2 * b + (a > b ? b - a : a - b) + 4) % 3;
  return {0.30 + 0.10 * key_depth, 1.10 + 0.25 * key_steep, 1.10 + 0.25 * key_r0};
}

}  // namespace

double toy_pair_energy(double r, int species_a, int species_b) {
  const MorseParams p = morse_params(std::min(species_a, species_b),
                                     std::max(species_a, species_b));
  const double e = 1.0 - std::exp(-p.steepness * (r - p.r0));
  return p.depth * (e * e - 1.0);
}

double toy_pair_energy_derivative(double r, int species_a, int species_b) {
  const MorseParams p = morse_params(std::min(species_a, species_b),
                                     std::max(species_a, species_b));
  const double x = std::exp(-p.steepness * (r - p.r0));
  return 2.0 * p.depth * p.steepness * x * (1.0 - x);
}

double toy_energy(const Structure& s) {
  if (s.cell) throw std::invalid_argument("toy_energy: finite point clouds only");
  double e = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = i + 1; j < s.size(); ++j)
      e += toy_pair_energy(norm(s.positions[j] - s.positions[i]), s.species[i],
                           s.species[j]);
  return e;
}

std::vector<Vec3> toy_forces(const Structure& s) {
  std::vector<Vec3> f(s.size(), Vec3{});
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (i == j) continue;
      const Vec3 d = s.positions[i] - s.positions[j];
      const double r = norm(d);
      const double dv = toy_pair_energy_derivative(r, s.species[i], s.species[j]);
      f[i] -= d * (dv / r);
    }
  }
  return f;
}

namespace {

Vec3 uniform_in_sphere(Rng& rng, double radius) {
  Vec3 dir{rng.gaussian(), rng.gaussian(), rng.gaussian()};
  double n = norm(dir);
  while (n == 0.0) {
    dir = {rng.gaussian(), rng.gaussian(), rng.gaussian()};
    n = norm(dir);
  }
  const double r = radius * std::cbrt(rng.uniform());
  return dir * (r / n);
}

void attach_toy_targets(Structure& s) {
  s.targets.energy = toy_energy(s);
  s.targets.forces = toy_forces(s);
}

constexpr int kSpeciesH = 0;
constexpr int kSpeciesC = 5;

Structure make_ch4_like(Rng& rng) {
  constexpr double kSphere = 3.5;
  constexpr double kMinDist = 0.5;
  while (true) {
    Structure s;
    s.species = {kSpeciesC, kSpeciesH, kSpeciesH, kSpeciesH, kSpeciesH};
    s.positions.resize(5);
    for (Vec3& p : s.positions) p = uniform_in_sphere(rng, kSphere);
    bool ok = true;
    for (std::size_t i = 0; i < 5 && ok; ++i)
      for (std::size_t j = i + 1; j < 5; ++j)
        if (norm(s.positions[j] - s.positions[i]) < kMinDist) {
          ok = false;
          break;
        }
    if (!ok) continue;  // discard the whole configuration and redraw
    attach_toy_targets(s);
    return s;
  }
}

}  // namespace

std::vector<Structure> make_toy_dataset(ToyDatasetKind kind, std::size_t n,
                                        std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("make_toy_dataset: n must be >= 1");
  Rng rng(seed);
  std::vector<Structure> out;
  out.reserve(n);

  switch (kind) {
    case ToyDatasetKind::Ch4Like: {
      for (std::size_t k = 0; k < n; ++k) out.push_back(make_ch4_like(rng));
      break;
    }
    case ToyDatasetKind::DimerSweep: {
      // Distances spanning the default cutoff seam [r_c - delta, r_c], with a
      // margin on both sides; random bond orientation per sample.
      const double lo = 3.0, hi = 4.3;
      for (std::size_t k = 0; k < n; ++k) {
        const double r =
            n == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / double(n - 1);
        const Frame rot = random_rotation(rng);
        Structure s;
        s.species = {kSpeciesC, kSpeciesH};
        s.positions = {Vec3{}, rot.to_global(Vec3{r, 0.0, 0.0})};
        attach_toy_targets(s);
        out.push_back(std::move(s));
      }
      break;
    }
    case ToyDatasetKind::CollinearFamily: {
      // Near-collinear chains: atoms along one random axis with transverse
      // jitter small enough that every pair cross product stays below 1e-6.
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t n_atoms = 3 + rng.uniform_index(3);
        const Frame rot = random_rotation(rng);
        Structure s;
        double t = 0.0;
        for (std::size_t a = 0; a < n_atoms; ++a) {
          const double jitter = 1e-4;
          const Vec3 local{t, jitter * (rng.uniform() - 0.5),
                           jitter * (rng.uniform() - 0.5)};
          s.positions.push_back(rot.to_global(local));
          s.species.push_back(a % 2 == 0 ? kSpeciesC : kSpeciesH);
          t += rng.uniform(1.0, 1.6);
        }
        attach_toy_targets(s);
        out.push_back(std::move(s));
      }
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training options I/O

namespace {

std::string trim_ws(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

TrainOptions TrainOptions::parse(const std::string& text) {
  TrainOptions opts;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim_ws(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("TrainOptions: expected 'key = value', got '" + line +
                                  "'");
    const std::string key = trim_ws(line.substr(0, eq));
    const std::string value = trim_ws(line.substr(eq + 1));
    auto as_double = [&]() {
      try {
        return std::stod(value);
      } catch (...) {
        throw std::invalid_argument("TrainOptions: bad number for " + key);
      }
    };
    auto as_bool = [&]() { return value == "true" || value == "1"; };
    if (key == "epochs") opts.epochs = static_cast<std::size_t>(as_double());
    else if (key == "batch_size") opts.batch_size = static_cast<std::size_t>(as_double());
    else if (key == "learning_rate") opts.learning_rate = as_double();
    else if (key == "lr_step_epochs")
      opts.lr_step_epochs = static_cast<std::size_t>(as_double());
    else if (key == "lr_decay") opts.lr_decay = as_double();
    else if (key == "patience") opts.patience = static_cast<std::size_t>(as_double());
    else if (key == "w_e") opts.w_e = as_double();
    else if (key == "ema_decay") opts.ema_decay = as_double();
    else if (key == "per_atom_energy") opts.per_atom_energy = as_bool();
    else if (key == "train_forces") opts.train_forces = as_bool();
    else if (key == "force_fd_step") opts.force_fd_step = as_double();
    else if (key == "seed") opts.seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "remove_self_contributions")
      opts.remove_self_contributions = as_bool();
    else
      throw std::invalid_argument("TrainOptions: unknown key '" + key + "'");
  }
  return opts;
}

TrainOptions TrainOptions::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string TrainOptions::serialize() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "epochs = %zu\nbatch_size = %zu\nlearning_rate = %.17g\n"
                "lr_step_epochs = %zu\nlr_decay = %.17g\npatience = %zu\n"
                "w_e = %.17g\nema_decay = %.17g\nper_atom_energy = %s\n"
                "train_forces = %s\nforce_fd_step = %.17g\nseed = %llu\n"
                "remove_self_contributions = %s\n",
                epochs, batch_size, learning_rate, lr_step_epochs, lr_decay, patience,
                w_e, ema_decay, per_atom_energy ? "true" : "false",
                train_forces ? "true" : "false", force_fd_step,
                static_cast<unsigned long long>(seed),
                remove_self_contributions ? "true" : "false");
  return buf;
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

struct Adam {
  std::vector<double> m, v;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t t = 0;

  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

struct Sample {
  Structure structure;
  double target_energy;  // self-contribution-removed
};

double evaluate_energy(const Backbone& backbone, const Structure& s) {
  const NeighborList nl(s, backbone.cutoff());
  return backbone.evaluate(s, nl).scalar_value();
}

// Model forces through central finite differences (used only for optional
// E+F training; the harness has its own independent fd machinery).
std::vector<double> model_forces_fd(const Backbone& backbone, const Structure& s,
                                    double h) {
  std::vector<double> f(3 * s.size(), 0.0);
  Structure probe = s;
  for (std::size_t a = 0; a < s.size(); ++a) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double orig = s.positions[a][c];
      probe.positions[a][c] = orig + h;
      const double ep = evaluate_energy(backbone, probe);
      probe.positions[a][c] = orig - h;
      const double em = evaluate_energy(backbone, probe);
      probe.positions[a][c] = orig;
      f[3 * a + c] = -(ep - em) / (2.0 * h);
    }
  }
  return f;
}

}  // namespace

TrainResult train_toy(Backbone& backbone, const std::vector<Structure>& train,
                      const std::vector<Structure>& val, const TrainOptions& opts) {
  if (train.empty() || val.empty())
    throw std::invalid_argument("train_toy: empty train or validation set");
  for (const Structure& s : train)
    if (!s.targets.energy)
      throw std::invalid_argument("train_toy: every training structure needs an energy");
  for (const Structure& s : val)
    if (!s.targets.energy)
      throw std::invalid_argument("train_toy: every validation structure needs an energy");

  // Species set over both splits.
  std::vector<int> species_set;
  for (const auto* splitp : {&train, &val})
    for (const Structure& s : *splitp)
      for (int sp : s.species)
        if (std::find(species_set.begin(), species_set.end(), sp) == species_set.end())
          species_set.push_back(sp);
  std::sort(species_set.begin(), species_set.end());

  TrainResult result;
  if (opts.remove_self_contributions) {
    result.self_contributions = fit_self_contributions(train, species_set);
  }
  auto adjusted_target = [&](const Structure& s) {
    double e = *s.targets.energy;
    if (opts.remove_self_contributions) e -= result.self_contributions.predict(s);
    return e;
  };

  std::vector<Sample> train_samples, val_samples;
  for (const Structure& s : train) train_samples.push_back({s, adjusted_target(s)});
  for (const Structure& s : val) val_samples.push_back({s, adjusted_target(s)});

  Rng rng(opts.seed);
  const std::size_t n_params = backbone.parameters().size();
  Adam adam(n_params);

  LossState state;
  state.w_e = opts.w_e;
  state.ema_decay = opts.ema_decay;
  state.per_atom_energy = opts.per_atom_energy;

  auto validation_rmse = [&]() -> std::pair<double, double> {
    double se = 0.0, sf = 0.0;
    std::size_t nf = 0;
    for (const Sample& smp : val_samples) {
      const double e = evaluate_energy(backbone, smp.structure);
      const double de = e - smp.target_energy;
      se += de * de;
      if (opts.train_forces && !smp.structure.targets.forces.empty()) {
        const auto mf = model_forces_fd(backbone, smp.structure, opts.force_fd_step);
        for (std::size_t k = 0; k < mf.size(); ++k) {
          const double df =
              mf[k] - smp.structure.targets.forces[k / 3][k % 3];
          sf += df * df;
          ++nf;
        }
      }
    }
    const double mse_e = se / static_cast<double>(val_samples.size());
    const double mse_f = nf ? sf / static_cast<double>(nf)
                            : std::numeric_limits<double>::quiet_NaN();
    return {mse_e, mse_f};
  };

  // Normalizers start from the untrained model's validation errors. The
  // early-stopping monitor keeps these initial values fixed; the EMA-updated
  // ones would chase the improving model and stall the comparison.
  double init_mse_e = 1.0, init_mse_f = 1.0;
  {
    const auto [mse_e, mse_f] = validation_rmse();
    state.mse_e = std::max(mse_e, 1e-12);
    state.mse_f = opts.train_forces ? std::max(mse_f, 1e-12) : 1.0;
    init_mse_e = state.mse_e;
    init_mse_f = state.mse_f;
  }

  double lr = opts.learning_rate;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> best_params(backbone.parameters().begin(),
                                  backbone.parameters().end());
  std::size_t best_epoch = 0;

  std::vector<std::size_t> order(train_samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<double> grad(n_params, 0.0);
  for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    // Fresh uniform rotation per sample per epoch.
    std::vector<Structure> rotated_train(train_samples.size());
    for (std::size_t i = 0; i < train_samples.size(); ++i) {
      const Frame r = random_rotation(rng);
      rotated_train[i] = rotate_structure(train_samples[i].structure, r.rotation);
    }
    rng.shuffle(order);

    double train_loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t stop = std::min(order.size(), start + opts.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t bi = start; bi < stop; ++bi) {
        const std::size_t idx = order[bi];
        const Structure& s = rotated_train[idx];
        const NeighborList nl(s, backbone.cutoff());
        const double e = backbone.evaluate(s, nl).scalar_value();
        const double target = train_samples[idx].target_energy;
        double de = e - target;
        double scale = 1.0;
        if (opts.per_atom_energy) {
          scale = 1.0 / static_cast<double>(s.size());
          de *= scale;
        }
        batch_loss += state.w_e * de * de / state.mse_e;
        const double dl_de = 2.0 * state.w_e * de * scale / state.mse_e * inv_batch;
        backbone.accumulate_energy_gradient(s, nl, dl_de, grad);

        if (opts.train_forces && !s.targets.forces.empty()) {
          // d(force residual)/d(params) by finite differences of the energy
          // gradient along each coordinate.
          const auto mf = model_forces_fd(backbone, s, opts.force_fd_step);
          const std::size_t n3 = 3 * s.size();
          Structure probe = s;
          for (std::size_t k = 0; k < n3; ++k) {
            const double df = mf[k] - s.targets.forces[k / 3][k % 3];
            const double coeff_f = 2.0 * df /
                                   (3.0 * static_cast<double>(s.size()) * state.mse_f) *
                                   inv_batch;
            if (coeff_f == 0.0) continue;
            const std::size_t a = k / 3, c = k % 3;
            const double orig = s.positions[a][c];
            probe.positions[a][c] = orig + opts.force_fd_step;
            {
              const NeighborList nlp(probe, backbone.cutoff());
              backbone.accumulate_energy_gradient(
                  probe, nlp, -coeff_f / (2.0 * opts.force_fd_step), grad);
            }
            probe.positions[a][c] = orig - opts.force_fd_step;
            {
              const NeighborList nlm(probe, backbone.cutoff());
              backbone.accumulate_energy_gradient(
                  probe, nlm, coeff_f / (2.0 * opts.force_fd_step), grad);
            }
            probe.positions[a][c] = orig;
          }
          double acc = 0.0;
          for (std::size_t k = 0; k < n3; ++k) {
            const double df = mf[k] - s.targets.forces[k / 3][k % 3];
            acc += df * df;
          }
          batch_loss += acc / (3.0 * static_cast<double>(s.size()) * state.mse_f);
        }
      }
      batch_loss *= inv_batch;
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train_toy: loss diverged (non-finite) at epoch " +
                                 std::to_string(epoch));
      train_loss_sum += batch_loss;
      ++n_batches;
      adam.step(backbone.parameters(), grad, lr);
    }

    // Validation + normalizer refresh, once per epoch.
    const auto [val_mse_e, val_mse_f] = validation_rmse();
    update_normalizers(state, std::max(val_mse_e, 1e-12),
                       opts.train_forces ? std::max(val_mse_f, 1e-12) : 1.0);

    double val_loss = state.w_e * val_mse_e / init_mse_e;
    if (opts.train_forces) val_loss += val_mse_f / init_mse_f;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = train_loss_sum / static_cast<double>(n_batches);
    rec.val_e_rmse = std::sqrt(val_mse_e);
    rec.val_f_rmse = opts.train_forces ? std::sqrt(val_mse_f)
                                       : std::numeric_limits<double>::quiet_NaN();
    result.history.push_back(rec);

    if (val_loss < best_val) {
      best_val = val_loss;
      best_epoch = epoch;
      best_params.assign(backbone.parameters().begin(), backbone.parameters().end());
    } else if (epoch - best_epoch >= opts.patience) {
      break;
    }

    if (opts.lr_step_epochs > 0 && epoch % opts.lr_step_epochs == 0) lr *= opts.lr_decay;
  }

  std::copy(best_params.begin(), best_params.end(), backbone.parameters().begin());
  result.best_val_loss = best_val;
  result.best_epoch = best_epoch;
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,lr,train_loss,val_E_rmse,val_F_rmse\n";
  char buf[160];
  for (const EpochRecord& r : history) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g,%.10g\n", r.epoch, r.lr,
                  r.train_loss, r.val_e_rmse, r.val_f_rmse);
    out += buf;
  }
  return out;
}

}  // namespace ecse
