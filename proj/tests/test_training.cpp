#include <cmath>

#include "doctest.h"
#include "ecse/mlp_backbone.hpp"
#include "ecse/pet.hpp"
#include "ecse/rng.hpp"
#include "ecse/rotations.hpp"
#include "ecse/symmetrize.hpp"
#include "ecse/training.hpp"

using namespace ecse;

namespace {
constexpr int kH = 0, kC = 5, kO = 7;
}

TEST_CASE("bag-of-atoms features: H2O over {H, C, O} is [2, 0, 1]") {
  Structure h2o;
  h2o.species = {kH, kH, kO};
  h2o.positions = {{0.76, 0.59, 0}, {-0.76, 0.59, 0}, {0, 0, 0}};
  const std::vector<int> species_set = {kH, kC, kO};
  const std::vector<double> counts = species_counts(h2o, species_set);
  REQUIRE(counts.size() == 3);
  CHECK(counts[0] == 2.0);
  CHECK(counts[1] == 0.0);
  CHECK(counts[2] == 1.0);
}

TEST_CASE("self contributions: exact linear datasets fit to numerical zero") {
  Rng rng(201);
  std::vector<Structure> train;
  const double e_h = -0.6, e_c = -3.2, intercept = 0.4;
  for (int k = 0; k < 20; ++k) {
    Structure s;
    const std::size_t n = 2 + rng.uniform_index(6);
    double e = intercept;
    for (std::size_t i = 0; i < n; ++i) {
      const int sp = rng.uniform_index(2) == 0 ? kH : kC;
      s.species.push_back(sp);
      s.positions.push_back(
          {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)});
      e += sp == kH ? e_h : e_c;
    }
    s.targets.energy = e;
    train.push_back(std::move(s));
  }
  const SelfContributionModel model = fit_self_contributions(train, {kH, kC});
  double worst = 0.0;
  for (const Structure& s : train)
    worst = std::max(worst, std::abs(model.predict(s) - *s.targets.energy));
  CHECK(worst <= 1e-8);

  // residuals orthogonal to the count features
  std::vector<double> dots = {0.0, 0.0};
  for (const Structure& s : train) {
    const double resid = *s.targets.energy - model.predict(s);
    const auto counts = species_counts(s, {kH, kC});
    dots[0] += resid * counts[0];
    dots[1] += resid * counts[1];
  }
  CHECK(std::abs(dots[0]) <= 1e-8);
  CHECK(std::abs(dots[1]) <= 1e-8);

  // remove-then-add-back round trip
  for (const Structure& s : train) {
    const double removed = *s.targets.energy - model.predict(s);
    CHECK(removed + model.predict(s) ==
          doctest::Approx(*s.targets.energy).epsilon(1e-12));
  }
}

TEST_CASE("self contributions handle single-composition (rank-deficient) data") {
  std::vector<Structure> train = make_toy_dataset(ToyDatasetKind::Ch4Like, 10, 7);
  const SelfContributionModel model = fit_self_contributions(train, {kH, kC});
  // all compositions identical: the fit reproduces the mean energy
  double mean = 0.0;
  for (const Structure& s : train) mean += *s.targets.energy;
  mean /= double(train.size());
  for (const Structure& s : train)
    CHECK(model.predict(s) == doctest::Approx(mean).epsilon(1e-10));
}

TEST_CASE("fit_self_contributions requires energy targets") {
  std::vector<Structure> train(1);
  train[0].species = {kH};
  train[0].positions = {{0, 0, 0}};
  CHECK_THROWS_AS(fit_self_contributions(train, {kH}), std::invalid_argument);
}

TEST_CASE("loss formula") {
  LossState state;
  state.w_e = 0.1;
  state.mse_e = 1.0;
  state.mse_f = 1.0;

  CHECK(loss(1.5, 1.5, {}, {}, 3, state) == 0.0);

  // energy residual 2 with w_E = 0.1 and MSE_E = 1
  CHECK(loss(3.0, 1.0, {}, {}, 5, state) == doctest::Approx(0.4).epsilon(1e-15));

  // force term: halves when MSE_F doubles
  const std::vector<double> pf = {1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
  const std::vector<double> tf(6, 0.0);
  const double l1 = loss(0.0, 0.0, pf, tf, 2, state);
  state.mse_f = 2.0;
  const double l2 = loss(0.0, 0.0, pf, tf, 2, state);
  CHECK(l2 == doctest::Approx(0.5 * l1).epsilon(1e-15));

  // per-atom energy variant divides the residual by the atom count
  state.mse_f = 1.0;
  state.per_atom_energy = true;
  CHECK(loss(3.0, 1.0, {}, {}, 2, state) ==
        doctest::Approx(0.1 * 1.0).epsilon(1e-15));

  state.per_atom_energy = false;
  state.mse_e = -1.0;
  CHECK_THROWS_AS(loss(0, 0, {}, {}, 1, state), std::invalid_argument);
  state.mse_e = 1.0;
  const std::vector<double> short_f = {1.0, 2.0};
  CHECK_THROWS_AS(loss(0, 0, pf, short_f, 2, state), std::invalid_argument);
  CHECK_THROWS_AS(loss(0, 0, short_f, short_f, 2, state), std::invalid_argument);
}

TEST_CASE("loss is invariant under simultaneous rotation") {
  Rng rng(203);
  LossState state;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(4);
    std::vector<double> pf(3 * n), tf(3 * n);
    for (double& v : pf) v = rng.uniform(-1.0, 1.0);
    for (double& v : tf) v = rng.uniform(-1.0, 1.0);
    const double base = loss(0.7, 0.4, pf, tf, n, state);

    const Frame rot = random_rotation(rng);
    std::vector<double> pfr(3 * n), tfr(3 * n);
    for (std::size_t a = 0; a < n; ++a) {
      const Vec3 p = rot.rotation * Vec3{pf[3 * a], pf[3 * a + 1], pf[3 * a + 2]};
      const Vec3 t = rot.rotation * Vec3{tf[3 * a], tf[3 * a + 1], tf[3 * a + 2]};
      for (std::size_t c = 0; c < 3; ++c) {
        pfr[3 * a + c] = p[c];
        tfr[3 * a + c] = t[c];
      }
    }
    const double turned = loss(0.7, 0.4, pfr, tfr, n, state);
    CHECK(turned == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("normalizer EMA updates") {
  LossState state;
  state.ema_decay = 0.9;
  state.mse_e = 1.0;
  state.mse_f = 1.0;
  update_normalizers(state, 1e-12, 1.0);  // "new = 0" up to the positivity guard
  CHECK(state.mse_e == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(state.mse_f == 1.0);

  LossState fixed;
  fixed.mse_e = 0.37;
  fixed.mse_f = 0.81;
  update_normalizers(fixed, 0.37, 0.81);
  CHECK(fixed.mse_e == doctest::Approx(0.37).epsilon(1e-15));
  CHECK(fixed.mse_f == doctest::Approx(0.81).epsilon(1e-15));

  LossState conv;
  conv.mse_e = 5.0;
  conv.mse_f = 5.0;
  for (int k = 0; k < 400; ++k) update_normalizers(conv, 2.0, 3.0);
  CHECK(conv.mse_e == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(conv.mse_f == doctest::Approx(3.0).epsilon(1e-9));

  CHECK_THROWS_AS(update_normalizers(conv, -1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(update_normalizers(conv, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("random rotations are proper, reproducible and Haar-uniform in trace") {
  Rng rng(205);
  for (int trial = 0; trial < 200; ++trial) {
    const Frame f = random_rotation(rng);
    CHECK(orthonormality_defect(f.rotation) < 1e-12);
    CHECK(std::abs(det(f.rotation) - 1.0) < 1e-12);
  }

  Rng a(42), b(42);
  for (int k = 0; k < 10; ++k) {
    const Frame fa = random_rotation(a);
    const Frame fb = random_rotation(b);
    CHECK(fa.rotation.m == fb.rotation.m);
  }

  // Haar measure: the rotation (l = 1) representation carries no trivial
  // component, so the mean trace vanishes.
  Rng mc(207);
  double mean_trace = 0.0;
  const int n_draws = 1000000;
  for (int k = 0; k < n_draws; ++k) {
    const Frame f = random_rotation(mc);
    mean_trace += f.rotation(0, 0) + f.rotation(1, 1) + f.rotation(2, 2);
  }
  mean_trace /= double(n_draws);
  CHECK(std::abs(mean_trace) < 0.01);
}

TEST_CASE("toy datasets honor their geometric contracts") {
  const auto ch4 = make_toy_dataset(ToyDatasetKind::Ch4Like, 50, 11);
  REQUIRE(ch4.size() == 50);
  for (const Structure& s : ch4) {
    REQUIRE(s.size() == 5);
    CHECK(s.species[0] == kC);
    double min_dist = 1e9;
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(norm(s.positions[i]) <= 3.5 + 1e-12);
      for (std::size_t j = i + 1; j < 5; ++j)
        min_dist = std::min(min_dist, norm(s.positions[j] - s.positions[i]));
    }
    CHECK(min_dist >= 0.5);
    REQUIRE(s.targets.energy.has_value());
    REQUIRE(s.targets.forces.size() == 5);
  }

  const auto chain = make_toy_dataset(ToyDatasetKind::CollinearFamily, 20, 13);
  for (const Structure& s : chain) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t a = 0; a < s.size(); ++a) {
        for (std::size_t b = 0; b < s.size(); ++b) {
          if (a == i || b == i || a == b) continue;
          const Vec3 da = normalized(s.positions[a] - s.positions[i]);
          const Vec3 db = normalized(s.positions[b] - s.positions[i]);
          CHECK(norm2(cross(da, db)) < 1e-6);
        }
      }
    }
  }

  const auto dimers = make_toy_dataset(ToyDatasetKind::DimerSweep, 12, 17);
  for (const Structure& s : dimers) REQUIRE(s.size() == 2);
  CHECK(norm(dimers.front().positions[1] - dimers.front().positions[0]) <
        norm(dimers.back().positions[1] - dimers.back().positions[0]));

  // determinism
  const auto again = make_toy_dataset(ToyDatasetKind::Ch4Like, 5, 11);
  CHECK(again[0].positions[0].x == ch4[0].positions[0].x);
}

TEST_CASE("toy potential forces match finite differences") {
  const auto ch4 = make_toy_dataset(ToyDatasetKind::Ch4Like, 5, 19);
  const double h = 1e-6;
  for (const Structure& s : ch4) {
    const auto forces = toy_forces(s);
    Structure probe = s;
    for (std::size_t a = 0; a < s.size(); ++a) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double orig = s.positions[a][c];
        probe.positions[a][c] = orig + h;
        const double ep = toy_energy(probe);
        probe.positions[a][c] = orig - h;
        const double em = toy_energy(probe);
        probe.positions[a][c] = orig;
        CHECK(forces[a][c] == doctest::Approx(-(ep - em) / (2 * h)).epsilon(1e-7));
      }
    }
    // stored targets match the analytic potential
    CHECK(*s.targets.energy == toy_energy(s));
  }
}

TEST_CASE("training options round-trip through the key-value format") {
  TrainOptions opts;
  opts.epochs = 123;
  opts.batch_size = 7;
  opts.learning_rate = 3.5e-4;
  opts.patience = 9;
  opts.train_forces = true;
  opts.per_atom_energy = true;
  const TrainOptions back = TrainOptions::parse(opts.serialize());
  CHECK(back.epochs == opts.epochs);
  CHECK(back.batch_size == opts.batch_size);
  CHECK(back.learning_rate == opts.learning_rate);
  CHECK(back.patience == opts.patience);
  CHECK(back.train_forces == opts.train_forces);
  CHECK(back.per_atom_energy == opts.per_atom_energy);
  CHECK_THROWS_AS(TrainOptions::parse("wat = 1\n"), std::invalid_argument);
  CHECK_THROWS_AS(TrainOptions::parse("epochs 12\n"), std::invalid_argument);
}

TEST_CASE("train_toy: zero learning rate leaves parameters unchanged") {
  PetConfig cfg;
  cfg.n_species = 8;
  cfg.d_pet = 8;
  cfg.n_gnn = 1;
  cfg.n_tl = 1;
  cfg.n_heads = 2;
  cfg.d_ffn = 16;
  PetBackbone pet(cfg);
  pet.random_init(21);
  const std::vector<double> before(pet.parameters().begin(), pet.parameters().end());

  const auto train = make_toy_dataset(ToyDatasetKind::Ch4Like, 8, 23);
  const auto val = make_toy_dataset(ToyDatasetKind::Ch4Like, 4, 29);
  TrainOptions opts;
  opts.epochs = 3;
  opts.learning_rate = 0.0;
  opts.seed = 5;
  train_toy(pet, train, val, opts);
  CHECK(std::equal(before.begin(), before.end(), pet.parameters().begin()));
}

TEST_CASE("train_toy: same seed gives bitwise-identical histories") {
  const auto train = make_toy_dataset(ToyDatasetKind::Ch4Like, 12, 31);
  const auto val = make_toy_dataset(ToyDatasetKind::Ch4Like, 6, 37);

  auto run = [&]() {
    PetConfig cfg;
    cfg.n_species = 8;
    cfg.d_pet = 8;
    cfg.n_gnn = 1;
    cfg.n_tl = 1;
    cfg.n_heads = 2;
    cfg.d_ffn = 16;
    PetBackbone pet(cfg);
    pet.random_init(41);
    TrainOptions opts;
    opts.epochs = 5;
    opts.batch_size = 4;
    opts.learning_rate = 1e-3;
    opts.seed = 43;
    return train_toy(pet, train, val, opts);
  };
  const TrainResult a = run();
  const TrainResult b = run();
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t k = 0; k < a.history.size(); ++k) {
    CHECK(a.history[k].train_loss == b.history[k].train_loss);
    CHECK(a.history[k].val_e_rmse == b.history[k].val_e_rmse);
    CHECK(a.history[k].lr == b.history[k].lr);
  }
  CHECK(history_csv(a.history) == history_csv(b.history));
}

TEST_CASE("train_toy: short run reduces the validation error") {
  PetConfig cfg;
  cfg.n_species = 8;
  cfg.d_pet = 16;
  cfg.n_gnn = 2;
  cfg.n_tl = 1;
  cfg.n_heads = 2;
  cfg.d_ffn = 32;
  PetBackbone pet(cfg);
  pet.random_init(47);

  const auto train = make_toy_dataset(ToyDatasetKind::Ch4Like, 40, 51);
  const auto val = make_toy_dataset(ToyDatasetKind::Ch4Like, 12, 53);
  TrainOptions opts;
  opts.epochs = 30;
  opts.batch_size = 8;
  opts.learning_rate = 2e-3;
  opts.seed = 55;
  const TrainResult result = train_toy(pet, train, val, opts);
  REQUIRE(!result.history.empty());
  CHECK(result.history.back().val_e_rmse < result.history.front().val_e_rmse);
}

TEST_CASE("bookkeeping: removal plus add-back equals raw training plus linear part") {
  // With frozen parameters the two pipelines are pure bookkeeping and must
  // produce identical totals on an exactly linear dataset.
  Rng rng(209);
  std::vector<Structure> data;
  for (int k = 0; k < 10; ++k) {
    Structure s;
    const std::size_t n = 2 + rng.uniform_index(4);
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int sp = rng.uniform_index(2) == 0 ? kH : kC;
      s.species.push_back(sp);
      s.positions.push_back(
          {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)});
      e += sp == kH ? -0.5 : -2.0;
    }
    s.targets.energy = e;
    data.push_back(std::move(s));
  }

  MlpConfig mcfg;
  mcfg.n_species = 8;
  MlpBackbone mlp(mcfg);
  mlp.random_init(57);

  const SelfContributionModel self = fit_self_contributions(data, {kH, kC});
  for (const Structure& s : data) {
    const NeighborList nl(s, mlp.cutoff());
    const double m = mlp.evaluate(s, nl).scalar_value();
    const double via_removal = self.predict(s) + m;
    const double via_raw_plus_linear = m + self.predict(s);
    CHECK(via_removal == doctest::Approx(via_raw_plus_linear).epsilon(1e-8));
    CHECK(self.predict(s) == doctest::Approx(*s.targets.energy).epsilon(1e-8));
  }
}

TEST_CASE("augmented training improves raw rotational robustness (sanity)") {
  PetConfig cfg;
  cfg.n_species = 8;
  cfg.d_pet = 8;
  cfg.n_gnn = 1;
  cfg.n_tl = 1;
  cfg.n_heads = 2;
  cfg.d_ffn = 16;
  PetBackbone pet(cfg);
  pet.random_init(61);

  const auto probe = make_toy_dataset(ToyDatasetKind::Ch4Like, 10, 63);
  auto rotation_gap = [&]() {
    Rng rng(65);
    double acc = 0.0;
    for (const Structure& s : probe) {
      const NeighborList nl(s, cfg.r_c);
      const double base = pet.evaluate(s, nl).scalar_value();
      const Frame rot = random_rotation(rng);
      const Structure rs = rotate_structure(s, rot.rotation);
      const NeighborList rnl(rs, cfg.r_c);
      acc += std::abs(pet.evaluate(rs, rnl).scalar_value() - base);
    }
    return acc / double(probe.size());
  };

  const double before = rotation_gap();
  const auto train = make_toy_dataset(ToyDatasetKind::Ch4Like, 60, 67);
  const auto val = make_toy_dataset(ToyDatasetKind::Ch4Like, 15, 69);
  TrainOptions opts;
  opts.epochs = 40;
  opts.batch_size = 10;
  opts.learning_rate = 3e-3;
  opts.seed = 71;
  train_toy(pet, train, val, opts);
  const double after = rotation_gap();
  CHECK(after < before);
}
