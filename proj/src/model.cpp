#include "carreg/model.hpp"

#include <cmath>
#include <numbers>
#include <set>

namespace carreg {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::ridge: return "ridge";
    case Variant::lasso: return "lasso";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "baseline") return Variant::baseline;
  if (name == "ridge") return Variant::ridge;
  if (name == "lasso") return Variant::lasso;
  throw ModelError("unknown variant '" + std::string(name) + "' (expected baseline, ridge or lasso)");
}

namespace {

void require_positive(double x, const std::string& name) {
  if (!(x > 0.0) || !std::isfinite(x)) throw ModelError("hyperparameter " + name + " must be positive, got " + std::to_string(x));
}

void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ModelError(where + ": expected a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) throw ModelError(where + ": unknown key '" + it.key() + "'");
  }
}

double number_at(const nlohmann::json& obj, const std::string& key, const std::string& where) {
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ModelError(where + "." + key + ": expected a number");
  return v.get<double>();
}

void read_if(const nlohmann::json& obj, const std::string& key, double& target, const std::string& where) {
  if (obj.contains(key)) target = number_at(obj, key, where);
}

}  // namespace

void Hyperparameters::validate(const HierarchicalDataset& ds) {
  require_positive(intercept_nu, "intercept.nu");
  require_positive(intercept_gamma2, "intercept.gamma2");
  for (Level l : kLevels) {
    auto& lp = level(l);
    const std::string name(to_string(l));
    require_positive(lp.nu, name + ".nu");
    require_positive(lp.gamma2, name + ".gamma2");
    require_positive(lp.a_lambda, name + ".a_lambda");
    require_positive(lp.b_lambda, name + ".b_lambda");
    const auto p = static_cast<Eigen::Index>(ds.num_covariates(l));
    if (lp.mean.size() == 0) lp.mean = Eigen::VectorXd::Zero(p);
    if (lp.mean.size() != p) throw ModelError(name + ".mean has length " + std::to_string(lp.mean.size()) +
                                              ", expected " + std::to_string(p));
    if (!lp.mean.allFinite()) throw ModelError(name + ".mean must be finite");
  }
  if (!std::isfinite(intercept_mean)) throw ModelError("intercept.mean must be finite");
  require_positive(nu_kappa, "nu_kappa");
  require_positive(nu_phi, "nu_phi");
  require_positive(gamma2_phi, "gamma2_phi");
  require_positive(a_alpha_kappa, "a_alpha_kappa");
  require_positive(b_alpha_kappa, "b_alpha_kappa");
  require_positive(a_beta_kappa, "a_beta_kappa");
  require_positive(b_beta_kappa, "b_beta_kappa");
}

ModelConfig make_model_config(const HierarchicalDataset& ds, const nlohmann::json& json) {
  ModelConfig cfg;
  const nlohmann::json empty = nlohmann::json::object();
  const nlohmann::json& root = json.is_null() ? empty : json;
  if (!root.is_object()) throw ModelError("model config: expected a JSON object");
  if (root.contains("variant")) {
    if (!root["variant"].is_string()) throw ModelError("variant: expected a string");
    cfg.variant = parse_variant(root["variant"].get<std::string>());
  }
  auto& hp = cfg.hyper;
  for (Level l : kLevels) hp.level(l).mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ds.num_covariates(l)));

  if (cfg.variant == Variant::baseline) {
    try {
      const Eigen::VectorXd b = ols_fit(stacked_design(ds), ds.scores());
      Eigen::Index off = 0;
      hp.intercept_mean = b[off++];
      for (Level l : kLevels) {
        const auto p = static_cast<Eigen::Index>(ds.num_covariates(l));
        hp.level(l).mean = b.segment(off, p);
        off += p;
      }
      cfg.ols_centered = true;
    } catch (const DataError& e) {
      if (e.kind() != DataErrorKind::rank_deficient) throw;
      cfg.ols_centered = false;
    }
  }

  if (root.contains("hyperparameters")) {
    const auto& h = root["hyperparameters"];
    const std::string where = "hyperparameters";
    check_keys(h, {"intercept", "student", "municipal", "departmental", "nu_kappa", "nu_phi", "gamma2_phi",
                   "a_alpha_kappa", "b_alpha_kappa", "a_beta_kappa", "b_beta_kappa"},
               where);
    if (h.contains("intercept")) {
      const auto& ic = h["intercept"];
      check_keys(ic, {"mean", "nu", "gamma2"}, where + ".intercept");
      read_if(ic, "mean", hp.intercept_mean, where + ".intercept");
      read_if(ic, "nu", hp.intercept_nu, where + ".intercept");
      read_if(ic, "gamma2", hp.intercept_gamma2, where + ".intercept");
    }
    for (Level l : kLevels) {
      const std::string key(to_string(l));
      if (!h.contains(key)) continue;
      const auto& lj = h[key];
      const std::string lw = where + "." + key;
      check_keys(lj, {"mean", "nu", "gamma2", "a_lambda", "b_lambda"}, lw);
      auto& lp = hp.level(l);
      read_if(lj, "nu", lp.nu, lw);
      read_if(lj, "gamma2", lp.gamma2, lw);
      read_if(lj, "a_lambda", lp.a_lambda, lw);
      read_if(lj, "b_lambda", lp.b_lambda, lw);
      if (lj.contains("mean")) {
        const auto& mj = lj["mean"];
        if (!mj.is_array()) throw ModelError(lw + ".mean: expected an array");
        lp.mean.resize(static_cast<Eigen::Index>(mj.size()));
        for (std::size_t i = 0; i < mj.size(); ++i) {
          if (!mj[i].is_number()) throw ModelError(lw + ".mean: expected numbers");
          lp.mean[static_cast<Eigen::Index>(i)] = mj[i].get<double>();
        }
      }
    }
    read_if(h, "nu_kappa", hp.nu_kappa, where);
    read_if(h, "nu_phi", hp.nu_phi, where);
    read_if(h, "gamma2_phi", hp.gamma2_phi, where);
    read_if(h, "a_alpha_kappa", hp.a_alpha_kappa, where);
    read_if(h, "b_alpha_kappa", hp.b_alpha_kappa, where);
    read_if(h, "a_beta_kappa", hp.a_beta_kappa, where);
    read_if(h, "b_beta_kappa", hp.b_beta_kappa, where);
  }
  hp.validate(ds);
  return cfg;
}

nlohmann::json to_json(const ModelConfig& cfg) {
  const auto& hp = cfg.hyper;
  nlohmann::json h;
  h["intercept"] = {{"mean", hp.intercept_mean}, {"nu", hp.intercept_nu}, {"gamma2", hp.intercept_gamma2}};
  for (Level l : kLevels) {
    const auto& lp = hp.level(l);
    std::vector<double> mean(lp.mean.data(), lp.mean.data() + lp.mean.size());
    h[std::string(to_string(l))] = {{"mean", mean}, {"nu", lp.nu}, {"gamma2", lp.gamma2},
                                    {"a_lambda", lp.a_lambda}, {"b_lambda", lp.b_lambda}};
  }
  h["nu_kappa"] = hp.nu_kappa;
  h["nu_phi"] = hp.nu_phi;
  h["gamma2_phi"] = hp.gamma2_phi;
  h["a_alpha_kappa"] = hp.a_alpha_kappa;
  h["b_alpha_kappa"] = hp.b_alpha_kappa;
  h["a_beta_kappa"] = hp.a_beta_kappa;
  h["b_beta_kappa"] = hp.b_beta_kappa;
  return {{"variant", std::string(to_string(cfg.variant))}, {"hyperparameters", h}, {"ols_centered", cfg.ols_centered}};
}

ModelState initial_state(const HierarchicalDataset& ds, const ModelConfig& cfg) {
  ModelState s;
  s.variant = cfg.variant;
  const bool baseline = cfg.variant == Variant::baseline;
  s.intercept = baseline ? cfg.hyper.intercept_mean : 0.0;
  s.sigma2_intercept = 1.0;
  for (Level l : kLevels) {
    auto& b = s.block(l);
    const auto p = static_cast<Eigen::Index>(ds.num_covariates(l));
    b.beta = baseline ? cfg.hyper.level(l).mean : Eigen::VectorXd::Zero(p);
    if (baseline) {
      b.sigma2 = 1.0;
    } else {
      b.lambda2 = 1.0;
    }
    if (cfg.variant == Variant::lasso) b.tau2 = Eigen::VectorXd::Ones(p);
  }
  const auto m = static_cast<Eigen::Index>(ds.num_municipalities());
  s.phi = Eigen::VectorXd::Zero(m);
  s.kappa2_municipal = Eigen::VectorXd::Ones(m);
  s.kappa2_department = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(ds.num_departments()));
  s.alpha_kappa = 1.0;
  s.beta_kappa = 1.0;
  s.tau2_phi = 1.0;
  return s;
}

namespace {

void positive_field(double x, const std::string& name) {
  if (!(x > 0.0) || !std::isfinite(x)) throw ModelError("state: " + name + " must be positive and finite");
}

void finite_vector(const Eigen::VectorXd& v, const std::string& name) {
  if (!v.allFinite()) throw ModelError("state: " + name + " contains non-finite values");
}

}  // namespace

void validate_state(const ModelState& s, const HierarchicalDataset& ds, const AdjacencyGraph* g) {
  if (!std::isfinite(s.intercept)) throw ModelError("state: intercept is not finite");
  positive_field(s.sigma2_intercept, "sigma2_intercept");
  for (Level l : kLevels) {
    const auto& b = s.block(l);
    const std::string name(to_string(l));
    if (static_cast<std::size_t>(b.beta.size()) != ds.num_covariates(l)) {
      throw ModelError("state: beta_" + name + " has the wrong length");
    }
    finite_vector(b.beta, "beta_" + name);
    const bool baseline = s.variant == Variant::baseline;
    if (baseline != b.sigma2.has_value()) throw ModelError("state: sigma2_" + name + " does not match the variant");
    if (baseline == b.lambda2.has_value()) throw ModelError("state: lambda2_" + name + " does not match the variant");
    if (b.sigma2) positive_field(*b.sigma2, "sigma2_" + name);
    if (b.lambda2) positive_field(*b.lambda2, "lambda2_" + name);
    if (s.variant == Variant::lasso) {
      if (b.tau2.size() != b.beta.size()) throw ModelError("state: tau2_" + name + " has the wrong length");
      for (Eigen::Index i = 0; i < b.tau2.size(); ++i) positive_field(b.tau2[i], "tau2_" + name);
    } else if (b.tau2.size() != 0) {
      throw ModelError("state: tau2_" + name + " is only defined for the lasso variant");
    }
  }
  const auto m = static_cast<Eigen::Index>(ds.num_municipalities());
  if (s.phi.size() != m || s.kappa2_municipal.size() != m) throw ModelError("state: municipal blocks have the wrong length");
  if (s.kappa2_department.size() != static_cast<Eigen::Index>(ds.num_departments())) {
    throw ModelError("state: kappa2_department has the wrong length");
  }
  finite_vector(s.phi, "phi");
  for (Eigen::Index j = 0; j < m; ++j) positive_field(s.kappa2_municipal[j], "kappa2_municipal");
  for (Eigen::Index k = 0; k < s.kappa2_department.size(); ++k) positive_field(s.kappa2_department[k], "kappa2_department");
  positive_field(s.alpha_kappa, "alpha_kappa");
  positive_field(s.beta_kappa, "beta_kappa");
  positive_field(s.tau2_phi, "tau2_phi");
  if (g) {
    for (const auto& comp : g->components()) {
      double sum = 0.0;
      double scale = 0.0;
      for (int j : comp) {
        sum += s.phi[j];
        scale = std::max(scale, std::abs(s.phi[j]));
      }
      if (std::abs(sum) > 1e-10 * static_cast<double>(comp.size()) * std::max(1.0, scale)) {
        throw ModelError("state: phi does not sum to zero on a connected component");
      }
    }
  }
}

Eigen::VectorXd linear_predictor(const ModelState& s, const HierarchicalDataset& ds) {
  for (Level l : kLevels) {
    if (static_cast<std::size_t>(s.block(l).beta.size()) != ds.num_covariates(l)) {
      throw ModelError("linear_predictor: coefficient length does not match the dataset");
    }
  }
  if (s.phi.size() != static_cast<Eigen::Index>(ds.num_municipalities())) {
    throw ModelError("linear_predictor: phi length does not match the dataset");
  }
  // Municipality-level part z_j' beta_M + w_k' beta_D + phi_j once per municipality.
  const Eigen::VectorXd zm = ds.covariates(Level::municipal) * s.block(Level::municipal).beta;
  const Eigen::VectorXd wd = ds.covariates(Level::departmental) * s.block(Level::departmental).beta;
  Eigen::VectorXd zeta = ds.covariates(Level::student) * s.block(Level::student).beta;
  for (Eigen::Index i = 0; i < zeta.size(); ++i) {
    const int j = ds.municipality_of(static_cast<std::size_t>(i));
    zeta[i] += s.intercept + zm[j] + wd[ds.department_of(static_cast<std::size_t>(j))] + s.phi[j];
  }
  return zeta;
}

Eigen::VectorXd pointwise_log_likelihood(const ModelState& s, const HierarchicalDataset& ds) {
  const Eigen::VectorXd zeta = linear_predictor(s, ds);
  Eigen::VectorXd out(zeta.size());
  const double log2pi = std::log(2.0 * std::numbers::pi);
  for (Eigen::Index i = 0; i < zeta.size(); ++i) {
    const double k2 = s.kappa2_municipal[ds.municipality_of(static_cast<std::size_t>(i))];
    const double r = ds.scores()[i] - zeta[i];
    out[i] = -0.5 * (log2pi + std::log(k2) + r * r / k2);
  }
  return out;
}

double log_likelihood(const ModelState& s, const HierarchicalDataset& ds) {
  return pointwise_log_likelihood(s, ds).sum();
}

}  // namespace carreg
