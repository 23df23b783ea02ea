#include <benchmark/benchmark.h>

#include "ecse/harness.hpp"
#include "ecse/mlp_backbone.hpp"
#include "ecse/pet.hpp"
#include "ecse/rng.hpp"
#include "ecse/symmetrize.hpp"
#include "ecse/training.hpp"

using namespace ecse;

namespace {

Structure ch4_fixture() {
  return make_toy_dataset(ToyDatasetKind::Ch4Like, 1, 42).front();
}

PetBackbone pet_fixture() {
  PetConfig cfg;
  cfg.n_species = 8;
  cfg.d_pet = 32;
  cfg.n_gnn = 2;
  cfg.n_tl = 2;
  cfg.n_heads = 2;
  cfg.d_ffn = 64;
  PetBackbone pet(cfg);
  pet.random_init(7);
  return pet;
}

EcseConfig cfg_fixture(const char* preset) {
  EcseConfig cfg = EcseConfig::preset(preset);
  cfg.outer = CutoffParams(7.5, cfg.outer.delta_rc);
  cfg.mode = EcseMode::GlobalPool;
  return cfg;
}

void bm_smooth_max_weighted(benchmark::State& state) {
  Rng rng(1);
  std::vector<double> xs(32), ws(32);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = rng.uniform(-5.0, 5.0);
    ws[i] = rng.uniform(0.0, 1.0);
  }
  for (auto _ : state)
    benchmark::DoNotOptimize(smooth_max_weighted(xs, ws, 5.0));
}
BENCHMARK(bm_smooth_max_weighted);

void bm_frame_ensemble(benchmark::State& state) {
  const Structure s = ch4_fixture();
  const EcseConfig cfg = cfg_fixture("loose");
  const NeighborList nl(s, cfg.outer.r_c);
  const AtomicEnvironment env = environment(s, nl, 0);
  for (auto _ : state) benchmark::DoNotOptimize(final_ensemble(env, cfg));
}
BENCHMARK(bm_frame_ensemble);

void bm_pet_forward(benchmark::State& state) {
  const Structure s = ch4_fixture();
  const PetBackbone pet = pet_fixture();
  const NeighborList nl(s, pet.cutoff());
  for (auto _ : state) benchmark::DoNotOptimize(pet.evaluate(s, nl));
}
BENCHMARK(bm_pet_forward);

void bm_pet_gradient(benchmark::State& state) {
  const Structure s = ch4_fixture();
  const PetBackbone pet = pet_fixture();
  const NeighborList nl(s, pet.cutoff());
  std::vector<double> grad(pet.parameters().size(), 0.0);
  for (auto _ : state) {
    std::fill(grad.begin(), grad.end(), 0.0);
    pet.accumulate_energy_gradient(s, nl, 1.0, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}
BENCHMARK(bm_pet_gradient);

void bm_symmetrized_energy(benchmark::State& state) {
  const Structure s = ch4_fixture();
  const PetBackbone pet = pet_fixture();
  const EcseConfig cfg =
      cfg_fixture(state.range(0) == 0 ? "loose" : "tight");
  const NeighborList nl(s, cfg.outer.r_c);
  for (auto _ : state)
    benchmark::DoNotOptimize(symmetrize_global_pool(s, nl, pet, cfg));
}
BENCHMARK(bm_symmetrized_energy)->Arg(0)->Arg(1);

}  // namespace

BENCHMARK_MAIN();
