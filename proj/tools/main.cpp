// Command-line harness: dataset generation, desk-scale training, one-shot
// symmetrized predictions and the verification experiments.
//
// Exit codes: 0 on pass, 1 on an invariant failure, 2 on input errors.

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "ecse/checkpoint.hpp"
#include "ecse/harness.hpp"
#include "ecse/mlp_backbone.hpp"
#include "ecse/pet.hpp"
#include "ecse/training.hpp"
#include "ecse/xyz.hpp"

namespace {

using namespace ecse;

constexpr int kExitPass = 0;
constexpr int kExitInvariantFailure = 1;
constexpr int kExitInputError = 2;

const SpeciesTable kSpecies;

struct CommonOptions {
  std::string config_path;
  std::string preset = "loose";
  std::uint64_t seed = 0;
  std::string out_path;
  std::string backbone = "pet";
  std::string checkpoint;
  std::string aux_checkpoint;
  std::string in_path;
  double r_out = 0.0;  // 0: keep the preset value
  std::string mode;    // "", "per_atom", "global_pool"
  bool no_prune = false;
  std::size_t n_structures = 20;
};

void add_common_flags(CLI::App* cmd, CommonOptions& opt, bool with_model = true) {
  cmd->add_option("--config", opt.config_path, "ECSE config file (key = value lines)");
  cmd->add_option("--preset", opt.preset, "ECSE preset: loose|tight")
      ->check(CLI::IsMember({"loose", "tight"}));
  cmd->add_option("--seed", opt.seed, "random seed");
  cmd->add_option("--out", opt.out_path, "output CSV path");
  if (with_model) {
    cmd->add_option("--backbone", opt.backbone, "backbone kind: mlp|pet|pet2body")
        ->check(CLI::IsMember({"mlp", "pet", "pet2body"}));
    cmd->add_option("--checkpoint", opt.checkpoint, "parameter checkpoint to load");
    cmd->add_option("--aux-checkpoint", opt.aux_checkpoint,
                    "checkpoint of the invariant fallback model");
  }
  cmd->add_option("--in", opt.in_path, "input extended-XYZ file");
  cmd->add_option("--r-out", opt.r_out, "override the ECSE outer cutoff radius");
  cmd->add_option("--mode", opt.mode, "symmetrization mode: per_atom|global_pool")
      ->check(CLI::IsMember({"per_atom", "global_pool"}));
  cmd->add_flag("--no-prune", opt.no_prune, "disable smooth weight pruning");
  cmd->add_option("--n-structures", opt.n_structures,
                  "generated structure count when --in is absent");
}

EcseConfig make_config(const CommonOptions& opt) {
  EcseConfig cfg = opt.config_path.empty() ? EcseConfig::preset(opt.preset)
                                           : EcseConfig::load(opt.config_path);
  if (opt.r_out > 0.0) cfg.outer = CutoffParams(opt.r_out, cfg.outer.delta_rc);
  if (opt.mode == "per_atom") cfg.mode = EcseMode::PerAtom;
  if (opt.mode == "global_pool") cfg.mode = EcseMode::GlobalPool;
  if (opt.no_prune) cfg.prune_enabled = false;
  cfg.validate();
  return cfg;
}

std::unique_ptr<Backbone> make_backbone(const CommonOptions& opt) {
  if (!opt.checkpoint.empty()) return load_checkpoint(opt.checkpoint).model;
  if (opt.backbone == "mlp") {
    MlpConfig cfg;
    cfg.n_species = 8;
    auto model = std::make_unique<MlpBackbone>(cfg);
    model->random_init(opt.seed);
    return model;
  }
  PetConfig cfg;
  cfg.n_species = 8;
  cfg.d_pet = 32;
  cfg.n_gnn = 2;
  cfg.n_tl = 2;
  cfg.n_heads = 2;
  cfg.d_ffn = 64;
  cfg.two_body = opt.backbone == "pet2body";
  auto model = std::make_unique<PetBackbone>(cfg);
  model->random_init(opt.seed);
  return model;
}

std::unique_ptr<Backbone> make_aux(const CommonOptions& opt) {
  if (opt.aux_checkpoint.empty()) return nullptr;
  return load_checkpoint(opt.aux_checkpoint).model;
}

std::vector<Structure> load_or_generate(const CommonOptions& opt,
                                        std::size_t default_n = 20) {
  if (!opt.in_path.empty()) return read_xyz_file(opt.in_path, kSpecies);
  const std::size_t n = opt.n_structures ? opt.n_structures : default_n;
  return make_toy_dataset(ToyDatasetKind::Ch4Like, n, opt.seed);
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
}

EcseMode pick_mode(const Backbone& model, const EcseConfig& cfg) {
  if (model.locality() == Locality::WholeStructure) return EcseMode::GlobalPool;
  return cfg.mode;
}

ToyDatasetKind parse_kind(const std::string& kind) {
  if (kind == "ch4_like") return ToyDatasetKind::Ch4Like;
  if (kind == "dimer_sweep") return ToyDatasetKind::DimerSweep;
  if (kind == "collinear_family") return ToyDatasetKind::CollinearFamily;
  throw std::runtime_error("unknown dataset kind '" + kind + "'");
}

// ---------------------------------------------------------------------------

int run_gen_dataset(const CommonOptions& opt, const std::string& kind, std::size_t n) {
  const auto data = make_toy_dataset(parse_kind(kind), n, opt.seed);
  if (opt.out_path.empty()) throw std::runtime_error("gen-dataset needs --out");
  write_xyz_file(opt.out_path, data, kSpecies);
  std::printf("wrote %zu %s structures to %s\n", data.size(), kind.c_str(),
              opt.out_path.c_str());
  return kExitPass;
}

int run_train_toy(const CommonOptions& opt, const std::string& train_path,
                  const std::string& val_path, const std::string& checkpoint_out,
                  TrainOptions train_opts) {
  std::vector<Structure> train, val;
  if (!train_path.empty()) {
    train = read_xyz_file(train_path, kSpecies);
    if (val_path.empty())
      throw std::runtime_error("train-toy with --train also needs --val");
    val = read_xyz_file(val_path, kSpecies);
  } else {
    train = make_toy_dataset(ToyDatasetKind::Ch4Like, 200, opt.seed);
    val = make_toy_dataset(ToyDatasetKind::Ch4Like, 50, opt.seed + 1);
  }

  auto model = make_backbone(opt);
  train_opts.seed = opt.seed;
  const TrainResult result = train_toy(*model, train, val, train_opts);

  write_text(opt.out_path, history_csv(result.history));
  if (!checkpoint_out.empty()) {
    if (auto* pet = dynamic_cast<PetBackbone*>(model.get()))
      save_checkpoint(checkpoint_out, *pet, opt.seed);
    else if (auto* mlp = dynamic_cast<MlpBackbone*>(model.get()))
      save_checkpoint(checkpoint_out, *mlp, opt.seed);
  }
  std::printf("epochs run: %zu\n", result.history.size());
  std::printf("initial val E RMSE: %.8g\n", result.history.front().val_e_rmse);
  std::printf("final   val E RMSE: %.8g (best epoch %zu)\n",
              result.history.back().val_e_rmse, result.best_epoch);
  return kExitPass;
}

int run_symmetrize(const CommonOptions& opt) {
  const EcseConfig cfg = make_config(opt);
  const auto model = make_backbone(opt);
  const auto aux = make_aux(opt);
  const auto structures = load_or_generate(opt, 5);

  EcseConfig run_cfg = cfg;
  run_cfg.mode = pick_mode(*model, cfg);
  const Predictor predictor = make_symmetrized_predictor(*model, run_cfg, aux.get());

  std::string csv = "structure_id,energy\n";
  char buf[64];
  for (std::size_t i = 0; i < structures.size(); ++i) {
    const Prediction p = predictor.eval(structures[i]);
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, p.scalar_value());
    csv += buf;
    std::printf("structure %zu: energy = %.10g\n", i, p.scalar_value());
  }
  write_text(opt.out_path, csv);
  return kExitPass;
}

int run_verify_equivariance(const CommonOptions& opt, std::size_t n_rotations,
                            double tol, bool raw) {
  const EcseConfig cfg = make_config(opt);
  const auto model = make_backbone(opt);
  const auto aux = make_aux(opt);
  const auto structures = load_or_generate(opt);

  Predictor predictor;
  bool checked = true;
  if (raw) {
    predictor = make_raw_predictor(*model);
    checked = false;  // raw models are reported, not judged
  } else {
    EcseConfig run_cfg = cfg;
    run_cfg.mode = pick_mode(*model, cfg);
    predictor = make_symmetrized_predictor(*model, run_cfg, aux.get());
  }

  const EquivarianceReport report =
      verify_equivariance(predictor, structures, n_rotations, opt.seed, tol, checked);
  write_text(opt.out_path, report.to_csv());
  std::printf("%s: %zu cases, max discrepancy %.3e (tol %.1e)\n",
              predictor.name.c_str(), report.cases.size(), report.max_discrepancy,
              tol);
  if (!checked) {
    std::puts("raw model: reported without pass/fail");
    return kExitPass;
  }
  std::puts(report.pass ? "PASS" : "FAIL");
  return report.pass ? kExitPass : kExitInvariantFailure;
}

int run_verify_smoothness(const CommonOptions& opt, std::size_t n_perturbations,
                          const std::vector<double>& amplitudes, bool raw) {
  const EcseConfig cfg = make_config(opt);
  const auto model = make_backbone(opt);
  const auto aux = make_aux(opt);
  const auto structures = load_or_generate(opt);

  Predictor predictor;
  if (raw) {
    predictor = make_raw_predictor(*model);
  } else {
    EcseConfig run_cfg = cfg;
    run_cfg.mode = pick_mode(*model, cfg);
    predictor = make_symmetrized_predictor(*model, run_cfg, aux.get());
  }

  const std::vector<double> ladder =
      amplitudes.empty() ? default_amplitudes() : amplitudes;
  const SmoothnessReport report =
      verify_smoothness(predictor, structures, ladder, n_perturbations, opt.seed);
  write_text(opt.out_path, report.to_csv());
  std::printf("slope %.4f, scale %.4g, spike events %zu, max ratio %.3g\n",
              report.slope, report.scale, report.spike_events, report.max_ratio);
  const bool pass =
      report.slope >= 0.8 && report.slope <= 1.2 && report.spike_events == 0;
  std::puts(pass ? "PASS" : "FAIL");
  return pass ? kExitPass : kExitInvariantFailure;
}

int run_fd_forces(const CommonOptions& opt, double h) {
  const EcseConfig cfg = make_config(opt);
  const auto model = make_backbone(opt);
  const auto aux = make_aux(opt);
  const auto structures = load_or_generate(opt, 1);
  if (structures.empty()) throw std::runtime_error("no input structures");

  EcseConfig run_cfg = cfg;
  run_cfg.mode = pick_mode(*model, cfg);
  const Predictor predictor = make_symmetrized_predictor(*model, run_cfg, aux.get());
  const FdForcesResult result = fd_forces(predictor, structures.front(), h);
  write_text(opt.out_path, result.to_csv());
  std::printf("richardson ratio %.3f, |force sum| %.3e\n", result.richardson_ratio,
              norm(result.force_sum));
  for (std::size_t a = 0; a < result.forces.size(); ++a)
    std::printf("atom %zu: % .10g % .10g % .10g\n", a, result.forces[a].x,
                result.forces[a].y, result.forces[a].z);
  return kExitPass;
}

int run_sweep_tradeoff(const CommonOptions& opt, const std::string& preset_list,
                       std::size_t n_rotations, std::size_t n_perturbations) {
  const auto model = make_backbone(opt);
  const auto aux = make_aux(opt);
  const auto structures = load_or_generate(opt, 5);

  std::vector<std::pair<std::string, EcseConfig>> presets;
  std::istringstream iss(preset_list);
  std::string name;
  while (std::getline(iss, name, ',')) {
    EcseConfig cfg = EcseConfig::preset(name);
    if (opt.r_out > 0.0) cfg.outer = CutoffParams(opt.r_out, cfg.outer.delta_rc);
    if (opt.no_prune) cfg.prune_enabled = false;
    cfg.mode = pick_mode(*model, cfg);
    presets.emplace_back(name, cfg);
  }

  TradeoffOptions topts;
  topts.n_rotations = n_rotations;
  topts.n_perturbations = n_perturbations;
  topts.seed = opt.seed;
  const auto rows = sweep_tradeoff(*model, aux.get(), structures, presets, topts);
  const std::string csv = tradeoff_csv(rows);
  write_text(opt.out_path, csv);
  std::fputs(csv.c_str(), stdout);

  bool pass = true;
  for (const TradeoffRow& row : rows)
    if (row.equivariance_max > 1e-10 || row.spike_events != 0) pass = false;
  for (std::size_t k = 1; k < rows.size(); ++k)
    if (rows[k].mean_frames_per_env > rows[k - 1].mean_frames_per_env) pass = false;
  std::puts(pass ? "PASS" : "FAIL");
  return pass ? kExitPass : kExitInvariantFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ECSE rotational symmetrization harness"};
  app.require_subcommand(1);

  CommonOptions opt;

  auto* gen = app.add_subcommand("gen-dataset", "generate a synthetic toy dataset");
  std::string gen_kind = "ch4_like";
  std::size_t gen_n = 100;
  add_common_flags(gen, opt, /*with_model=*/false);
  gen->add_option("--kind", gen_kind, "ch4_like|dimer_sweep|collinear_family");
  gen->add_option("--n", gen_n, "number of structures");

  auto* train = app.add_subcommand("train-toy", "fit a backbone on toy data");
  std::string train_path, val_path, checkpoint_out, train_config;
  TrainOptions train_opts;
  add_common_flags(train, opt);
  train->add_option("--train-config", train_config,
                    "training options file (key = value lines)");
  train->add_option("--train", train_path, "training set (extended XYZ)");
  train->add_option("--val", val_path, "validation set (extended XYZ)");
  train->add_option("--checkpoint-out", checkpoint_out, "where to save parameters");
  train->add_option("--epochs", train_opts.epochs, "training epochs");
  train->add_option("--batch-size", train_opts.batch_size, "minibatch size");
  train->add_option("--lr", train_opts.learning_rate, "initial learning rate");
  train->add_option("--lr-step", train_opts.lr_step_epochs, "stepwise decay cadence");
  train->add_option("--lr-decay", train_opts.lr_decay, "stepwise decay factor");
  train->add_option("--patience", train_opts.patience, "early-stopping patience");
  train->add_flag("--train-forces", train_opts.train_forces,
                  "include the force term (finite-difference model forces)");
  train->add_flag("--per-atom-energy", train_opts.per_atom_energy,
                  "normalize energy residuals by the atom count");

  auto* sym = app.add_subcommand("symmetrize", "one-shot symmetrized predictions");
  add_common_flags(sym, opt);

  auto* veq = app.add_subcommand("verify-equivariance",
                                 "compare y(R s) against R y(s) over random rotations");
  std::size_t n_rotations = 20;
  double tol = 1e-10;
  bool raw = false;
  add_common_flags(veq, opt);
  veq->add_option("--n-rotations", n_rotations, "rotations per structure");
  veq->add_option("--tol", tol, "pass tolerance");
  veq->add_flag("--raw", raw, "evaluate the unsymmetrized backbone");

  auto* vsm = app.add_subcommand("verify-smoothness",
                                 "Gaussian-perturbation smoothness experiment");
  std::size_t n_perturbations = 50;
  std::vector<double> amplitudes;
  add_common_flags(vsm, opt);
  vsm->add_option("--n-perturbations", n_perturbations, "perturbations per amplitude");
  vsm->add_option("--amplitudes", amplitudes, "amplitude ladder (ascending)");
  vsm->add_flag("--raw", raw, "evaluate the unsymmetrized backbone");

  auto* fd = app.add_subcommand("fd-forces", "central-difference forces");
  double fd_h = 1e-5;
  add_common_flags(fd, opt);
  fd->add_option("--step", fd_h, "finite-difference step");

  auto* sweep =
      app.add_subcommand("sweep-tradeoff", "smoothness vs cost across ECSE presets");
  std::string preset_list = "loose,tight";
  std::size_t sweep_rot = 5, sweep_pert = 10;
  add_common_flags(sweep, opt);
  sweep->add_option("--presets", preset_list, "comma-separated preset names");
  sweep->add_option("--n-rotations", sweep_rot, "rotations per structure");
  sweep->add_option("--n-perturbations", sweep_pert, "perturbations per amplitude");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInputError;
  }

  try {
    if (gen->parsed()) return run_gen_dataset(opt, gen_kind, gen_n);
    if (train->parsed()) {
      if (!train_config.empty()) {
        // flags stack on top of the file: reparse the command line after load
        TrainOptions from_file = TrainOptions::load(train_config);
        from_file.seed = train_opts.seed;
        if (train->count("--epochs") == 0) train_opts.epochs = from_file.epochs;
        if (train->count("--batch-size") == 0)
          train_opts.batch_size = from_file.batch_size;
        if (train->count("--lr") == 0) train_opts.learning_rate = from_file.learning_rate;
        if (train->count("--lr-step") == 0)
          train_opts.lr_step_epochs = from_file.lr_step_epochs;
        if (train->count("--lr-decay") == 0) train_opts.lr_decay = from_file.lr_decay;
        if (train->count("--patience") == 0) train_opts.patience = from_file.patience;
        if (train->count("--train-forces") == 0)
          train_opts.train_forces = from_file.train_forces;
        if (train->count("--per-atom-energy") == 0)
          train_opts.per_atom_energy = from_file.per_atom_energy;
        train_opts.w_e = from_file.w_e;
        train_opts.ema_decay = from_file.ema_decay;
        train_opts.force_fd_step = from_file.force_fd_step;
        train_opts.remove_self_contributions = from_file.remove_self_contributions;
      }
      return run_train_toy(opt, train_path, val_path, checkpoint_out, train_opts);
    }
    if (sym->parsed()) return run_symmetrize(opt);
    if (veq->parsed()) return run_verify_equivariance(opt, n_rotations, tol, raw);
    if (vsm->parsed())
      return run_verify_smoothness(opt, n_perturbations, amplitudes, raw);
    if (fd->parsed()) return run_fd_forces(opt, fd_h);
    if (sweep->parsed())
      return run_sweep_tradeoff(opt, preset_list, sweep_rot, sweep_pert);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInputError;
  }
  return kExitInputError;
}
