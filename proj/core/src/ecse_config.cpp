#include "ecse/ecse_config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ecse {

void EcseConfig::validate() const {
  // CutoffParams / AngularParams check themselves at construction.
  if (!(beta > 0.0) || !(beta_w > 0.0) || !(beta_omega > 0.0))
    throw std::invalid_argument("EcseConfig: sharpness parameters must be > 0");
  if (!(prune.t_f > 0.0) || !(prune.t_f < 1.0))
    throw std::invalid_argument("EcseConfig: need 0 < prune.t_f < 1");
  if (!(prune.dt_f > 0.0))
    throw std::invalid_argument("EcseConfig: need prune.dt_f > 0");
  if (!(prune.dt_e > 0.0) || !(prune.dt_e < prune.t_e))
    throw std::invalid_argument("EcseConfig: need 0 < prune.dt_e < prune.t_e");
  if (!(t_aux > 0.0) || !(delta_aux > 0.0) || delta_aux > t_aux)
    throw std::invalid_argument("EcseConfig: need 0 < delta_aux <= t_aux");
  if (collinear_mode == CollinearMode::AuxModel && !(angular.omega > 0.0))
    throw std::invalid_argument(
        "EcseConfig: angular.omega must be > 0 so zero-weight pairs stay clear of the "
        "frame-construction epsilon");
  if (stitch_delta_r && !(*stitch_delta_r > 0.0))
    throw std::invalid_argument("EcseConfig: stitch.delta_r must be > 0");
  if (n_extra_aug < 0)
    throw std::invalid_argument("EcseConfig: n_extra_aug must be >= 0");
}

EcseConfig EcseConfig::preset(const std::string& name) {
  EcseConfig cfg;
  if (name == "loose") {
    // Defaults above are the loose preset.
  } else if (name == "tight") {
    cfg.outer = CutoffParams(cfg.outer.r_c, 0.2);
    cfg.angular = AngularParams(0.1, 0.1);
    cfg.beta = 50.0;
    cfg.beta_w = 50.0;
    cfg.beta_omega = 50.0;
    cfg.prune.t_f = 0.5;
    cfg.prune.dt_f = 0.15;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "' (loose|tight)");
  }
  cfg.validate();
  return cfg;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& v, const std::string& key) {
  try {
    return std::stod(v);
  } catch (...) {
    throw std::invalid_argument("EcseConfig: bad number for " + key + ": '" + v + "'");
  }
}

void fmt(std::string& out, const char* key, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s = %.17g\n", key, v);
  out += buf;
}

}  // namespace

EcseConfig EcseConfig::parse(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("EcseConfig: expected 'key = value', got '" + line + "'");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }

  EcseConfig cfg;
  auto take = [&](const char* key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  double r_c = cfg.outer.r_c, delta_rc = cfg.outer.delta_rc;
  if (auto v = take("outer.r_c")) r_c = to_double(*v, "outer.r_c");
  if (auto v = take("outer.delta_rc")) delta_rc = to_double(*v, "outer.delta_rc");
  cfg.outer = CutoffParams(r_c, delta_rc);

  double omega = cfg.angular.omega, delta_omega = cfg.angular.delta_omega;
  if (auto v = take("angular.omega")) omega = to_double(*v, "angular.omega");
  if (auto v = take("angular.delta_omega"))
    delta_omega = to_double(*v, "angular.delta_omega");
  cfg.angular = AngularParams(omega, delta_omega);

  if (auto v = take("qc_kind")) {
    if (*v == "qc1") cfg.qc_kind = QcKind::Qc1;
    else if (*v == "qc2") cfg.qc_kind = QcKind::Qc2;
    else throw std::invalid_argument("EcseConfig: qc_kind must be qc1 or qc2");
  }
  if (auto v = take("beta")) cfg.beta = to_double(*v, "beta");
  if (auto v = take("beta_w")) cfg.beta_w = to_double(*v, "beta_w");
  if (auto v = take("beta_omega")) cfg.beta_omega = to_double(*v, "beta_omega");
  if (auto v = take("prune.enabled")) cfg.prune_enabled = (*v == "true" || *v == "1");
  if (auto v = take("prune.t_f")) cfg.prune.t_f = to_double(*v, "prune.t_f");
  if (auto v = take("prune.dt_f")) cfg.prune.dt_f = to_double(*v, "prune.dt_f");
  if (auto v = take("prune.t_e")) cfg.prune.t_e = to_double(*v, "prune.t_e");
  if (auto v = take("prune.dt_e")) cfg.prune.dt_e = to_double(*v, "prune.dt_e");
  if (auto v = take("aux.t_aux")) cfg.t_aux = to_double(*v, "aux.t_aux");
  if (auto v = take("aux.delta_aux")) cfg.delta_aux = to_double(*v, "aux.delta_aux");
  if (auto v = take("collinear_mode")) {
    if (*v == "aux_model") cfg.collinear_mode = CollinearMode::AuxModel;
    else if (*v == "adaptive_omega") cfg.collinear_mode = CollinearMode::AdaptiveOmega;
    else
      throw std::invalid_argument(
          "EcseConfig: collinear_mode must be aux_model or adaptive_omega");
  }
  if (auto v = take("stitch.delta_r")) cfg.stitch_delta_r = to_double(*v, "stitch.delta_r");
  if (auto v = take("n_extra_aug")) cfg.n_extra_aug = static_cast<int>(to_double(*v, "n_extra_aug"));
  if (auto v = take("aug_seed"))
    cfg.aug_seed = static_cast<std::uint64_t>(std::stoull(*v));
  if (auto v = take("mode")) {
    if (*v == "per_atom") cfg.mode = EcseMode::PerAtom;
    else if (*v == "global_pool") cfg.mode = EcseMode::GlobalPool;
    else throw std::invalid_argument("EcseConfig: mode must be per_atom or global_pool");
  }

  if (!kv.empty())
    throw std::invalid_argument("EcseConfig: unknown key '" + kv.begin()->first + "'");
  cfg.validate();
  return cfg;
}

EcseConfig EcseConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string EcseConfig::serialize() const {
  std::string out;
  fmt(out, "outer.r_c", outer.r_c);
  fmt(out, "outer.delta_rc", outer.delta_rc);
  fmt(out, "angular.omega", angular.omega);
  fmt(out, "angular.delta_omega", angular.delta_omega);
  out += std::string("qc_kind = ") + (qc_kind == QcKind::Qc1 ? "qc1" : "qc2") + "\n";
  fmt(out, "beta", beta);
  fmt(out, "beta_w", beta_w);
  fmt(out, "beta_omega", beta_omega);
  out += std::string("prune.enabled = ") + (prune_enabled ? "true" : "false") + "\n";
  fmt(out, "prune.t_f", prune.t_f);
  fmt(out, "prune.dt_f", prune.dt_f);
  fmt(out, "prune.t_e", prune.t_e);
  fmt(out, "prune.dt_e", prune.dt_e);
  fmt(out, "aux.t_aux", t_aux);
  fmt(out, "aux.delta_aux", delta_aux);
  out += std::string("collinear_mode = ") +
         (collinear_mode == CollinearMode::AuxModel ? "aux_model" : "adaptive_omega") +
         "\n";
  if (stitch_delta_r) fmt(out, "stitch.delta_r", *stitch_delta_r);
  out += "n_extra_aug = " + std::to_string(n_extra_aug) + "\n";
  out += "aug_seed = " + std::to_string(aug_seed) + "\n";
  out += std::string("mode = ") + (mode == EcseMode::PerAtom ? "per_atom" : "global_pool") +
         "\n";
  return out;
}

void EcseConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << serialize();
}

}  // namespace ecse
