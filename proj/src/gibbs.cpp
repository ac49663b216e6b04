#include "carreg/gibbs.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "carreg/io.hpp"

namespace carreg {

std::size_t McmcSettings::burn_in() const {
  return static_cast<std::size_t>(std::floor(burn_in_fraction * static_cast<double>(iterations)));
}

void McmcSettings::validate() const {
  if (iterations == 0) throw ModelError("mcmc: iterations must be positive");
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0)) throw ModelError("mcmc: burn-in fraction must be in [0, 1)");
  if (thin == 0) throw ModelError("mcmc: thinning stride must be at least 1");
  if (!(mh_initial_step >= 0.0) || !std::isfinite(mh_initial_step)) throw ModelError("mcmc: MH step must be >= 0");
  if (adaptation_window == 0) throw ModelError("mcmc: adaptation window must be at least 1");
  if (!(mh_target_acceptance > 0.0 && mh_target_acceptance < 1.0)) throw ModelError("mcmc: target acceptance must be in (0, 1)");
  if (stored_draws() == 0) {
    throw ModelError("mcmc: configuration retains no draws (iterations " + std::to_string(iterations) +
                     ", burn-in " + std::to_string(burn_in()) + ", stride " + std::to_string(thin) + ")");
  }
}

Eigen::VectorXd MvnConditional::mean() const { return precision.llt().solve(linear); }

Eigen::MatrixXd MvnConditional::covariance() const {
  return precision.llt().solve(Eigen::MatrixXd::Identity(precision.rows(), precision.cols()));
}

namespace {

double sq(double x) { return x * x; }

}  // namespace

GibbsSampler::GibbsSampler(const HierarchicalDataset& ds, const AdjacencyGraph& g, ModelConfig cfg, ModelState init)
    : ds_(&ds), g_(&g), cfg_(std::move(cfg)) {
  if (g.num_municipalities() != ds.num_municipalities()) throw ModelError("sampler: graph and dataset sizes differ");
  cfg_.hyper.validate(ds);
  const auto& X = ds.covariates(Level::student);
  const auto p = X.cols();
  gram_by_municipality_.assign(ds.num_municipalities(), Eigen::MatrixXd::Zero(p, p));
  for (std::size_t j = 0; j < ds.num_municipalities(); ++j) {
    for (int i : ds.students_in_municipality()[j]) {
      gram_by_municipality_[j].selfadjointView<Eigen::Lower>().rankUpdate(X.row(i).transpose());
    }
    gram_by_municipality_[j] = gram_by_municipality_[j].selfadjointView<Eigen::Lower>();
  }
  set_state(std::move(init));
}

void GibbsSampler::set_state(ModelState s) {
  validate_state(s, *ds_, nullptr);
  if (s.variant != cfg_.variant) throw ModelError("sampler: state variant does not match the configuration");
  state_ = std::move(s);
  refresh_residuals();
}

void GibbsSampler::refresh_residuals() { resid_ = ds_->scores() - linear_predictor(state_, *ds_); }

double GibbsSampler::residual_drift() const {
  const Eigen::VectorXd fresh = ds_->scores() - linear_predictor(state_, *ds_);
  return (fresh - resid_).cwiseAbs().maxCoeff();
}

Eigen::VectorXd GibbsSampler::municipality_residual_sums() const {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ds_->num_municipalities()));
  for (Eigen::Index i = 0; i < resid_.size(); ++i) s[ds_->municipality_of(static_cast<std::size_t>(i))] += resid_[i];
  return s;
}

void GibbsSampler::apply_municipality_shift(const Eigen::VectorXd& delta) {
  for (Eigen::Index i = 0; i < resid_.size(); ++i) resid_[i] -= delta[ds_->municipality_of(static_cast<std::size_t>(i))];
}

// ---------------------------------------------------------------------------
// Conditionals

NormalConditional GibbsSampler::intercept_conditional() const {
  const auto& sizes = ds_->municipality_sizes();
  const Eigen::VectorXd s = municipality_residual_sums();
  double precision = 1.0 / state_.sigma2_intercept;
  double linear = cfg_.hyper.intercept_mean / state_.sigma2_intercept;
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    const double n = static_cast<double>(sizes[j]);
    const double k2 = state_.kappa2_municipal[static_cast<Eigen::Index>(j)];
    precision += n / k2;
    linear += (s[static_cast<Eigen::Index>(j)] + n * state_.intercept) / k2;
  }
  return {linear / precision, 1.0 / precision};
}

MvnConditional GibbsSampler::coefficient_conditional(Level level) const {
  const CoefficientBlock& blk = state_.block(level);
  const Eigen::Index p = blk.beta.size();
  MvnConditional c;
  c.precision = Eigen::MatrixXd::Zero(p, p);
  c.linear = Eigen::VectorXd::Zero(p);
  switch (cfg_.variant) {
    case Variant::baseline:
      c.precision.diagonal().setConstant(1.0 / *blk.sigma2);
      c.linear = cfg_.hyper.level(level).mean / *blk.sigma2;
      break;
    case Variant::ridge:
      c.precision.diagonal().setConstant(*blk.lambda2);
      break;
    case Variant::lasso:
      c.precision.diagonal() = blk.tau2.cwiseInverse();
      break;
  }
  if (p == 0) return c;

  const auto& sizes = ds_->municipality_sizes();
  const std::size_t m = sizes.size();
  const Eigen::VectorXd& k2 = state_.kappa2_municipal;
  if (level == Level::student) {
    const auto& X = ds_->covariates(Level::student);
    Eigen::MatrixXd data = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t j = 0; j < m; ++j) data += gram_by_municipality_[j] / k2[static_cast<Eigen::Index>(j)];
    Eigen::VectorXd weighted(resid_.size());
    for (Eigen::Index i = 0; i < resid_.size(); ++i) {
      weighted[i] = resid_[i] / k2[ds_->municipality_of(static_cast<std::size_t>(i))];
    }
    c.precision += data;
    c.linear += X.transpose() * weighted + data * blk.beta;
    return c;
  }

  const Eigen::VectorXd s = municipality_residual_sums();
  if (level == Level::municipal) {
    const auto& Z = ds_->covariates(Level::municipal);
    const Eigen::VectorXd fitted = Z * blk.beta;
    for (std::size_t j = 0; j < m; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double n = static_cast<double>(sizes[j]);
      const double total = s[jj] + n * fitted[jj];
      c.precision.selfadjointView<Eigen::Lower>().rankUpdate(Z.row(jj).transpose(), n / k2[jj]);
      c.linear += Z.row(jj).transpose() * (total / k2[jj]);
    }
  } else {
    const auto& Wd = ds_->covariates(Level::departmental);
    const Eigen::VectorXd fitted = Wd * blk.beta;
    const std::size_t d = ds_->num_departments();
    std::vector<double> weight(d, 0.0), total(d, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const int k = ds_->department_of(j);
      const double n = static_cast<double>(sizes[j]);
      weight[static_cast<std::size_t>(k)] += n / k2[jj];
      total[static_cast<std::size_t>(k)] += (s[jj] + n * fitted[k]) / k2[jj];
    }
    for (std::size_t k = 0; k < d; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      c.precision.selfadjointView<Eigen::Lower>().rankUpdate(Wd.row(kk).transpose(), weight[k]);
      c.linear += Wd.row(kk).transpose() * total[k];
    }
  }
  c.precision = c.precision.selfadjointView<Eigen::Lower>();
  return c;
}

NormalConditional GibbsSampler::phi_conditional(int municipality) const {
  const auto j = static_cast<std::size_t>(municipality);
  const auto& nbrs = g_->neighbors(municipality);
  double neighbor_sum = 0.0;
  for (int l : nbrs) neighbor_sum += state_.phi[l];
  // Isolated municipality: prior N(0, tau2) in place of the undefined CAR term.
  const double degree = nbrs.empty() ? 1.0 : static_cast<double>(nbrs.size());
  double total = 0.0;
  for (int i : ds_->students_in_municipality()[j]) total += resid_[i];
  const double n = static_cast<double>(ds_->municipality_sizes()[j]);
  total += n * state_.phi[municipality];
  const double k2 = state_.kappa2_municipal[municipality];
  const double precision = degree / state_.tau2_phi + n / k2;
  return {(neighbor_sum / state_.tau2_phi + total / k2) / precision, 1.0 / precision};
}

GammaParams GibbsSampler::municipal_variance_conditional(int municipality) const {
  const auto j = static_cast<std::size_t>(municipality);
  double sse = 0.0;
  for (int i : ds_->students_in_municipality()[j]) sse += sq(resid_[i]);
  const double nu = cfg_.hyper.nu_kappa;
  const double k2k = state_.kappa2_department[ds_->department_of(j)];
  return {(nu + static_cast<double>(ds_->municipality_sizes()[j])) / 2.0, (nu * k2k + sse) / 2.0};
}

GammaParams GibbsSampler::department_scale_conditional(int department) const {
  const auto k = static_cast<std::size_t>(department);
  const double nu = cfg_.hyper.nu_kappa;
  double inv_sum = 0.0;
  for (int j : ds_->municipalities_in_department()[k]) inv_sum += nu / state_.kappa2_municipal[j];
  const double mk = static_cast<double>(ds_->department_sizes()[k]);
  return {(state_.alpha_kappa + mk * nu) / 2.0, (state_.beta_kappa + inv_sum) / 2.0};
}

GammaParams GibbsSampler::sigma2_intercept_conditional() const {
  const auto& h = cfg_.hyper;
  return {(h.intercept_nu + 1.0) / 2.0,
          (h.intercept_nu * h.intercept_gamma2 + sq(state_.intercept - h.intercept_mean)) / 2.0};
}

GammaParams GibbsSampler::sigma2_conditional(Level level) const {
  if (cfg_.variant != Variant::baseline) throw ModelError("sigma2 conditional exists only for the baseline variant");
  const LevelPrior& pr = cfg_.hyper.level(level);
  const Eigen::VectorXd& beta = state_.block(level).beta;
  const double p = static_cast<double>(beta.size());
  return {(pr.nu + p) / 2.0, (pr.nu * pr.gamma2 + (beta - pr.mean).squaredNorm()) / 2.0};
}

GammaParams GibbsSampler::tau2_phi_conditional() const {
  const auto& h = cfg_.hyper;
  const double form = car_quadratic_form_global(std::span<const double>(state_.phi.data(), state_.phi.size()), *g_);
  const double m = static_cast<double>(ds_->num_municipalities());
  return {(m + h.nu_phi) / 2.0, (h.nu_phi * h.gamma2_phi + form) / 2.0};
}

GammaParams GibbsSampler::beta_kappa_conditional() const {
  const auto& h = cfg_.hyper;
  const double d = static_cast<double>(ds_->num_departments());
  return {d * state_.alpha_kappa / 2.0 + h.a_beta_kappa, state_.kappa2_department.sum() / 2.0 + h.b_beta_kappa};
}

GammaParams GibbsSampler::lambda2_conditional(Level level) const {
  const LevelPrior& pr = cfg_.hyper.level(level);
  const CoefficientBlock& blk = state_.block(level);
  const double p = static_cast<double>(blk.beta.size());
  switch (cfg_.variant) {
    case Variant::ridge:
      return {(pr.nu + p) / 2.0, (pr.nu * pr.gamma2 + blk.beta.squaredNorm()) / 2.0};
    case Variant::lasso:
      return {pr.a_lambda + p, pr.b_lambda + blk.tau2.sum() / 2.0};
    case Variant::baseline:
      break;
  }
  throw ModelError("lambda2 conditional does not exist for the baseline variant");
}

GigParams GibbsSampler::local_scale_conditional(Level level, int index) const {
  if (cfg_.variant != Variant::lasso) throw ModelError("local scales exist only for the lasso variant");
  const CoefficientBlock& blk = state_.block(level);
  return {*blk.lambda2, sq(blk.beta[index])};
}

double GibbsSampler::alpha_kappa_log_target(double alpha) const {
  if (!(alpha > 0.0)) return -std::numeric_limits<double>::infinity();
  const auto& h = cfg_.hyper;
  const double d = static_cast<double>(ds_->num_departments());
  const double log_sum = state_.kappa2_department.array().log().sum();
  const double half = alpha / 2.0;
  return d * half * std::log(state_.beta_kappa / 2.0) - d * std::lgamma(half) + (half - 1.0) * log_sum +
         (h.a_alpha_kappa - 1.0) * std::log(alpha) - h.b_alpha_kappa * alpha;
}

// ---------------------------------------------------------------------------
// Updates

void GibbsSampler::update_intercept(SeededRng& rng) {
  const NormalConditional c = intercept_conditional();
  const double next = draw_normal(rng, c.mean, c.variance);
  resid_.array() -= next - state_.intercept;
  state_.intercept = next;
}

void GibbsSampler::update_coefficients(Level level, SeededRng& rng) {
  CoefficientBlock& blk = state_.block(level);
  if (blk.beta.size() == 0) return;
  const MvnConditional c = coefficient_conditional(level);
  const PrecisionFactor f = factor_precision(c.precision);
  max_jitter_ = std::max(max_jitter_, f.jitter);
  Eigen::VectorXd z(blk.beta.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.standard_normal();
  const Eigen::VectorXd next = f.llt.solve(c.linear) + f.llt.matrixU().solve(z);
  const Eigen::VectorXd delta = next - blk.beta;
  blk.beta = next;
  switch (level) {
    case Level::student:
      resid_ -= ds_->covariates(Level::student) * delta;
      break;
    case Level::municipal:
      apply_municipality_shift(ds_->covariates(Level::municipal) * delta);
      break;
    case Level::departmental: {
      const Eigen::VectorXd by_dept = ds_->covariates(Level::departmental) * delta;
      Eigen::VectorXd shift(static_cast<Eigen::Index>(ds_->num_municipalities()));
      for (Eigen::Index j = 0; j < shift.size(); ++j) shift[j] = by_dept[ds_->department_of(static_cast<std::size_t>(j))];
      apply_municipality_shift(shift);
      break;
    }
  }
}

void GibbsSampler::update_phi_site(int municipality, SeededRng& rng) {
  const NormalConditional c = phi_conditional(municipality);
  const double next = draw_normal(rng, c.mean, c.variance);
  const double delta = next - state_.phi[municipality];
  for (int i : ds_->students_in_municipality()[static_cast<std::size_t>(municipality)]) resid_[i] -= delta;
  state_.phi[municipality] = next;
}

void GibbsSampler::update_phi(SeededRng& rng) {
  const int m = static_cast<int>(ds_->num_municipalities());
  for (int j = 0; j < m; ++j) update_phi_site(j, rng);
  for (const auto& comp : g_->components()) {
    double mean = 0.0;
    for (int j : comp) mean += state_.phi[j];
    mean /= static_cast<double>(comp.size());
    for (int j : comp) {
      state_.phi[j] -= mean;
      for (int i : ds_->students_in_municipality()[static_cast<std::size_t>(j)]) resid_[i] += mean;
    }
  }
}

void GibbsSampler::update_municipal_variances(SeededRng& rng) {
  const int m = static_cast<int>(ds_->num_municipalities());
  for (int j = 0; j < m; ++j) {
    const GammaParams c = municipal_variance_conditional(j);
    state_.kappa2_municipal[j] = draw_inverse_gamma(rng, c.shape, c.rate);
  }
}

void GibbsSampler::update_department_scales(SeededRng& rng) {
  const int d = static_cast<int>(ds_->num_departments());
  for (int k = 0; k < d; ++k) {
    const GammaParams c = department_scale_conditional(k);
    state_.kappa2_department[k] = draw_gamma(rng, c.shape, c.rate);
  }
}

void GibbsSampler::update_variance_hyperpriors(SeededRng& rng) {
  {
    const GammaParams c = sigma2_intercept_conditional();
    state_.sigma2_intercept = draw_inverse_gamma(rng, c.shape, c.rate);
  }
  if (cfg_.variant == Variant::baseline) {
    for (Level l : kLevels) {
      const GammaParams c = sigma2_conditional(l);
      state_.block(l).sigma2 = draw_inverse_gamma(rng, c.shape, c.rate);
    }
  }
  const GammaParams c = tau2_phi_conditional();
  state_.tau2_phi = draw_inverse_gamma(rng, c.shape, c.rate);
}

void GibbsSampler::update_beta_kappa(SeededRng& rng) {
  const GammaParams c = beta_kappa_conditional();
  state_.beta_kappa = draw_gamma(rng, c.shape, c.rate);
}

bool GibbsSampler::update_alpha_kappa(SeededRng& rng, double step) {
  const double current = state_.alpha_kappa;
  const double log_proposal = std::log(current) + step * rng.standard_normal();
  const double proposal = std::exp(log_proposal);
  const double u = rng.uniform();
  if (step == 0.0) return true;
  // Symmetric walk on log alpha: the Jacobian contributes log(alpha'/alpha).
  const double log_ratio = alpha_kappa_log_target(proposal) - alpha_kappa_log_target(current) + log_proposal -
                           std::log(current);
  if (std::isfinite(proposal) && proposal > 0.0 && std::log(u) < log_ratio) {
    state_.alpha_kappa = proposal;
    return true;
  }
  return false;
}

void GibbsSampler::update_shrinkage(SeededRng& rng) {
  if (cfg_.variant == Variant::baseline) return;
  for (Level l : kLevels) {
    const GammaParams c = lambda2_conditional(l);
    CoefficientBlock& blk = state_.block(l);
    blk.lambda2 = draw_gamma(rng, c.shape, c.rate);
    if (cfg_.variant == Variant::lasso) {
      for (Eigen::Index i = 0; i < blk.tau2.size(); ++i) {
        const GigParams gp = local_scale_conditional(l, static_cast<int>(i));
        blk.tau2[i] = draw_gig_half(rng, gp.a, gp.b);
      }
    }
  }
}

bool GibbsSampler::sweep(SeededRng& rng, double mh_step) {
  update_intercept(rng);
  for (Level l : kLevels) update_coefficients(l, rng);
  update_phi(rng);
  update_municipal_variances(rng);
  update_department_scales(rng);
  update_variance_hyperpriors(rng);
  update_beta_kappa(rng);
  const bool accepted = update_alpha_kappa(rng, mh_step);
  update_shrinkage(rng);
  return accepted;
}

void GibbsSampler::pointwise_log_likelihood(Eigen::VectorXd& out) const {
  out.resize(resid_.size());
  const double log2pi = std::log(2.0 * std::numbers::pi);
  std::vector<double> log_k2(ds_->num_municipalities());
  for (std::size_t j = 0; j < log_k2.size(); ++j) log_k2[j] = std::log(state_.kappa2_municipal[static_cast<Eigen::Index>(j)]);
  for (Eigen::Index i = 0; i < resid_.size(); ++i) {
    const int j = ds_->municipality_of(static_cast<std::size_t>(i));
    out[i] = -0.5 * (log2pi + log_k2[static_cast<std::size_t>(j)] + sq(resid_[i]) / state_.kappa2_municipal[j]);
  }
}

// ---------------------------------------------------------------------------
// Output

std::span<const double> DrawMatrix::row(std::size_t r) const {
  if (streamed) throw ModelError("draw block '" + name + "' was streamed to disk");
  return std::span<const double>(values).subspan(r * cols(), cols());
}

std::vector<double> DrawMatrix::column(std::size_t c) const {
  if (streamed) throw ModelError("draw block '" + name + "' was streamed to disk");
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = values[r * cols() + c];
  return out;
}

void DrawMatrix::append(std::span<const double> row_values) {
  if (row_values.size() != cols()) throw ModelError("draw block '" + name + "': row width mismatch");
  values.insert(values.end(), row_values.begin(), row_values.end());
  ++rows;
}

const DrawMatrix* ChainOutput::find_block(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

const DrawMatrix& ChainOutput::block(const std::string& name) const {
  const DrawMatrix* b = find_block(name);
  if (!b) throw ModelError("no draw block named '" + name + "'");
  return *b;
}

std::vector<std::string> block_names(Variant v) {
  std::vector<std::string> names{"intercept",        "beta_student",      "beta_municipal", "beta_departmental",
                                 "phi",              "kappa2_municipal",  "kappa2_department", "alpha_kappa",
                                 "beta_kappa",       "tau2_phi",          "sigma2_intercept"};
  for (Level l : kLevels) {
    const std::string lv(to_string(l));
    if (v == Variant::baseline) names.push_back("sigma2_" + lv);
    else names.push_back("lambda2_" + lv);
  }
  if (v == Variant::lasso) {
    for (Level l : kLevels) names.push_back("tau2_" + std::string(to_string(l)));
  }
  return names;
}

std::string format_draw_row(std::span<const double> values) {
  std::string line;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) line += ',';
    line += format_double(values[i]);
  }
  return line;
}

namespace {

std::vector<std::string> block_columns(const std::string& name, const HierarchicalDataset& ds) {
  if (name == "beta_student" || name == "tau2_student") return ds.covariate_names(Level::student);
  if (name == "beta_municipal" || name == "tau2_municipal") return ds.covariate_names(Level::municipal);
  if (name == "beta_departmental" || name == "tau2_departmental") return ds.covariate_names(Level::departmental);
  if (name == "phi" || name == "kappa2_municipal") return ds.municipality_ids();
  if (name == "kappa2_department") return ds.department_ids();
  return {name};
}

void block_values(const std::string& name, const ModelState& s, std::vector<double>& out) {
  out.clear();
  auto push_vec = [&](const Eigen::VectorXd& v) { out.insert(out.end(), v.data(), v.data() + v.size()); };
  auto level_of = [](const std::string& suffix) { return parse_level(suffix); };
  if (name == "intercept") out.push_back(s.intercept);
  else if (name == "phi") push_vec(s.phi);
  else if (name == "kappa2_municipal") push_vec(s.kappa2_municipal);
  else if (name == "kappa2_department") push_vec(s.kappa2_department);
  else if (name == "alpha_kappa") out.push_back(s.alpha_kappa);
  else if (name == "beta_kappa") out.push_back(s.beta_kappa);
  else if (name == "tau2_phi") out.push_back(s.tau2_phi);
  else if (name == "sigma2_intercept") out.push_back(s.sigma2_intercept);
  else if (name.rfind("beta_", 0) == 0) push_vec(s.block(level_of(name.substr(5))).beta);
  else if (name.rfind("sigma2_", 0) == 0) out.push_back(*s.block(level_of(name.substr(7))).sigma2);
  else if (name.rfind("lambda2_", 0) == 0) out.push_back(*s.block(level_of(name.substr(8))).lambda2);
  else if (name.rfind("tau2_", 0) == 0) push_vec(s.block(level_of(name.substr(5))).tau2);
  else throw ModelError("unknown draw block '" + name + "'");
}

void add_state(ModelState& sum, const ModelState& s) {
  sum.intercept += s.intercept;
  sum.sigma2_intercept += s.sigma2_intercept;
  for (std::size_t l = 0; l < 3; ++l) {
    auto& a = sum.coefficients[l];
    const auto& b = s.coefficients[l];
    a.beta += b.beta;
    if (b.sigma2) a.sigma2 = a.sigma2.value_or(0.0) + *b.sigma2;
    if (b.lambda2) a.lambda2 = a.lambda2.value_or(0.0) + *b.lambda2;
    a.tau2 += b.tau2;
  }
  sum.phi += s.phi;
  sum.kappa2_municipal += s.kappa2_municipal;
  sum.kappa2_department += s.kappa2_department;
  sum.alpha_kappa += s.alpha_kappa;
  sum.beta_kappa += s.beta_kappa;
  sum.tau2_phi += s.tau2_phi;
}

ModelState zero_like(const ModelState& s) {
  ModelState z = s;
  z.intercept = 0.0;
  z.sigma2_intercept = 0.0;
  for (auto& b : z.coefficients) {
    b.beta.setZero();
    if (b.sigma2) b.sigma2 = 0.0;
    if (b.lambda2) b.lambda2 = 0.0;
    b.tau2.setZero();
  }
  z.phi.setZero();
  z.kappa2_municipal.setZero();
  z.kappa2_department.setZero();
  z.alpha_kappa = z.beta_kappa = z.tau2_phi = 0.0;
  return z;
}

void scale_state(ModelState& s, double f) {
  s.intercept *= f;
  s.sigma2_intercept *= f;
  for (auto& b : s.coefficients) {
    b.beta *= f;
    if (b.sigma2) *b.sigma2 *= f;
    if (b.lambda2) *b.lambda2 *= f;
    b.tau2 *= f;
  }
  s.phi *= f;
  s.kappa2_municipal *= f;
  s.kappa2_department *= f;
  s.alpha_kappa *= f;
  s.beta_kappa *= f;
  s.tau2_phi *= f;
}

constexpr std::size_t kRefreshInterval = 500;

}  // namespace

ChainOutput run_chain(const HierarchicalDataset& ds, const AdjacencyGraph& g, const ModelConfig& cfg,
                      const McmcSettings& settings, SeededRng& rng, const ModelState* init) {
  settings.validate();
  const auto started = std::chrono::steady_clock::now();
  GibbsSampler sampler(ds, g, cfg, init ? *init : initial_state(ds, cfg));

  ChainOutput out;
  out.variant = cfg.variant;
  out.settings = settings;
  out.waic = WaicAccumulator(ds.num_students());
  out.loglik_trace.reserve(settings.iterations);

  const std::size_t burn = settings.burn_in();
  const std::size_t stored = settings.stored_draws();
  const bool stream = !settings.stream_dir.empty() &&
                      ds.num_municipalities() * stored > settings.draw_memory_budget;
  std::vector<std::unique_ptr<std::ofstream>> sinks;
  for (const auto& name : block_names(cfg.variant)) {
    DrawMatrix b;
    b.name = name;
    b.columns = block_columns(name, ds);
    std::unique_ptr<std::ofstream> sink;
    if (stream && (name == "phi" || name == "kappa2_municipal")) {
      std::filesystem::create_directories(settings.stream_dir);
      const auto path = settings.stream_dir / (name + ".csv");
      sink = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*sink) throw DataError(DataErrorKind::io, "cannot open " + path.string() + " for writing");
      *sink << join_csv(b.columns) << '\n';
      b.streamed = true;
    } else {
      b.values.reserve(stored * b.columns.size());
    }
    out.blocks.push_back(std::move(b));
    sinks.push_back(std::move(sink));
  }

  ModelState mean_sum = zero_like(sampler.state());
  double loglik_sum = 0.0;
  std::size_t loglik_count = 0;
  double log_step = settings.mh_initial_step > 0.0 ? std::log(settings.mh_initial_step) : 0.0;
  const bool frozen_zero = settings.mh_initial_step == 0.0;
  std::size_t window_accepts = 0, window_count = 0, windows_done = 0;
  Eigen::VectorXd pointwise;
  std::vector<double> row;

  for (std::size_t t = 0; t < settings.iterations; ++t) {
    const double step = frozen_zero ? 0.0 : std::exp(log_step);
    bool accepted = false;
    try {
      accepted = sampler.sweep(rng, step);
    } catch (const std::exception& e) {
      throw ModelError("sweep " + std::to_string(t) + ": " + e.what());
    }

    if (t < burn) {
      out.mh_accepted_burn_in += accepted ? 1 : 0;
      window_accepts += accepted ? 1 : 0;
      if (++window_count == settings.adaptation_window) {
        ++windows_done;
        const double rate = static_cast<double>(window_accepts) / static_cast<double>(window_count);
        if (!frozen_zero) log_step += (rate - settings.mh_target_acceptance) / std::sqrt(static_cast<double>(windows_done));
        window_accepts = window_count = 0;
      }
    } else {
      ++out.mh_proposed;
      out.mh_accepted += accepted ? 1 : 0;
    }

    sampler.pointwise_log_likelihood(pointwise);
    const double ll = pointwise.sum();
    out.loglik_trace.push_back(ll);

    const bool keep = t >= burn && (t - burn + 1) % settings.thin == 0;
    if (t >= burn && (settings.waic_all_iterations || keep)) {
      out.waic.add(std::span<const double>(pointwise.data(), static_cast<std::size_t>(pointwise.size())));
      loglik_sum += ll;
      ++loglik_count;
    }
    if (keep) {
      for (std::size_t b = 0; b < out.blocks.size(); ++b) {
        block_values(out.blocks[b].name, sampler.state(), row);
        if (sinks[b]) {
          *sinks[b] << format_draw_row(row) << '\n';
          ++out.blocks[b].rows;
        } else {
          out.blocks[b].append(row);
        }
      }
      add_state(mean_sum, sampler.state());
    }

    if (settings.coherence_check_interval > 0 && (t + 1) % settings.coherence_check_interval == 0) {
      const double drift = sampler.residual_drift();
      const double scale = std::max(1.0, ds.scores().cwiseAbs().maxCoeff());
      if (!(drift <= 1e-8 * scale)) {
        throw ModelError("sweep " + std::to_string(t) + ": residual cache drifted by " + std::to_string(drift));
      }
    }
    if ((t + 1) % kRefreshInterval == 0) sampler.refresh_residuals();
  }

  for (auto& s : sinks) {
    if (s) {
      s->flush();
      if (!*s) throw DataError(DataErrorKind::io, "failed writing streamed draws");
    }
  }
  scale_state(mean_sum, 1.0 / static_cast<double>(stored));
  out.posterior_mean = std::move(mean_sum);
  out.mean_loglik = loglik_sum / static_cast<double>(loglik_count);
  out.loglik_at_posterior_mean = log_likelihood(out.posterior_mean, ds);
  out.mh_final_step = frozen_zero ? 0.0 : std::exp(log_step);
  out.max_jitter = sampler.max_jitter();
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

}  // namespace carreg
