// Acceptance suite: one PASS/FAIL line per criterion. Run everything, or a
// single criterion with `acceptance --only N`. Exits 1 when a gated
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "carreg/cli.hpp"
#include "carreg/diagnostics.hpp"
#include "carreg/gibbs.hpp"
#include "carreg/io.hpp"
#include "carreg/predict.hpp"
#include "carreg/segment.hpp"
#include "carreg/simulate.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace carreg;
namespace fs = std::filesystem;
namespace ct = carreg::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::string failure;  // first failed requirement
  std::ostringstream detail;
  std::vector<std::string> info;  // reported, not gated

  void require(bool ok, const std::string& what) {
    if (!ok && pass) failure = what;
    pass = pass && ok;
  }
};

template <class T>
std::string fmt(T v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// 1. Conjugate exactness

// A scalar outside 3 SE is re-drawn once from an independent stream and must
// then fall inside 3 SE: with ~75 checks per run a correct sampler exceeds
// 3 SE somewhere about one run in five, while a real bias reproduces.
struct MomentCheck {
  using Redraw = std::function<std::vector<double>()>;
  int checked = 0;
  int failed = 0;
  double worst_var = 0.0;
  std::vector<std::string> confirmed;  // first-pass excursions that re-drew inside 3 SE
  std::string first;

  static double z_of(const std::vector<double>& x, double mean, double var) {
    return std::abs(ct::mean_of(x) - mean) / std::sqrt(var / static_cast<double>(x.size()));
  }
  void add(const std::string& name, const std::vector<double>& x, double mean, double var, const Redraw& redraw) {
    ++checked;
    const double z = z_of(x, mean, var);
    const double rv = std::abs(ct::var_of(x) - var) / var;
    worst_var = std::max(worst_var, rv);
    bool ok = rv <= 0.05;
    if (ok && z > 3.0) {
      const double z2 = z_of(redraw(), mean, var);
      ok = z2 <= 3.0;
      if (ok) confirmed.push_back(name + " z " + fmt(z, 3) + " -> " + fmt(z2, 3));
    }
    if (!ok) {
      ++failed;
      if (first.empty()) first = name + " (z " + fmt(z) + ", var err " + fmt(rv) + ")";
    }
  }
  void add_gamma(const std::string& name, const std::vector<double>& x, const GammaParams& g, const Redraw& redraw) {
    add(name, x, g.shape / g.rate, g.shape / (g.rate * g.rate), redraw);
  }
  // raw IG moments can be infinite, so compare the reciprocal Gamma draws
  void add_inverse_gamma(const std::string& name, std::vector<double> x, const GammaParams& g, const Redraw& redraw) {
    auto flip = [](std::vector<double> v) {
      for (double& e : v) e = 1.0 / e;
      return v;
    };
    add_gamma(name, flip(std::move(x)), g, [&] { return flip(redraw()); });
  }
};

void criterion1(Outcome& out) {
  const auto ds = ct::make_toy(ct::toy40());
  const auto g = ct::path_graph(ds);
  SeededRng rng(101);
  constexpr int N = 100'000;
  int exact_checks = 0;
  double worst_exact = 0.0;
  MomentCheck mc;
  auto exact = [&](double got, double want, const std::string& what) {
    ++exact_checks;
    const double e = std::abs(got - want) / std::max(1e-300, std::abs(want));
    worst_exact = std::max(worst_exact, e);
    out.require(e <= 1e-10, what + " differs from the transcription by " + fmt(e));
  };
  for (Variant v : {Variant::baseline, Variant::ridge, Variant::lasso}) {
    const std::string vn(to_string(v));
    const ModelConfig cfg = make_model_config(ds, {{"variant", vn}});
    const ModelState s = oracle::random_state(ds, g, v, rng);
    GibbsSampler gs(ds, g, cfg, s);

    // closed forms against the transcription
    const auto b0 = gs.intercept_conditional();
    const auto b0o = oracle::intercept(s, ds, cfg);
    exact(b0.mean, b0o.mean, vn + " intercept mean");
    exact(b0.variance, b0o.variance, vn + " intercept variance");
    for (Level l : kLevels) {
      const std::string ln = vn + " beta_" + std::string(to_string(l));
      const auto c = gs.coefficient_conditional(l);
      const auto [mean, cov] = oracle::coefficients(s, ds, cfg, l);
      const Eigen::VectorXd cm = c.mean();
      const Eigen::MatrixXd cc = c.covariance();
      for (Eigen::Index a = 0; a < mean.size(); ++a) {
        exact(cm[a], mean[a], ln + " mean");
        for (Eigen::Index b = 0; b < mean.size(); ++b) {
          ++exact_checks;
          const double e = std::abs(cc(a, b) - cov(a, b)) / cov.diagonal().cwiseAbs().maxCoeff();
          worst_exact = std::max(worst_exact, e);
          out.require(e <= 1e-10, ln + " covariance");
        }
      }
      auto gamma_exact = [&](const GammaParams& got, const GammaParams& want, const std::string& what) {
        exact(got.shape, want.shape, what + " shape");
        exact(got.rate, want.rate, what + " rate");
      };
      if (v == Variant::baseline) gamma_exact(gs.sigma2_conditional(l), oracle::sigma2(s, cfg, l), ln + " sigma2");
      if (v != Variant::baseline) gamma_exact(gs.lambda2_conditional(l), oracle::lambda2(s, cfg, l), ln + " lambda2");
      if (v == Variant::lasso) {
        for (int i = 0; i < static_cast<int>(ds.num_covariates(l)); ++i) {
          const auto got = gs.local_scale_conditional(l, i);
          const auto want = oracle::local_scale(s, l, i);
          exact(got.a, want.a, ln + " local scale a");
          exact(got.b, want.b, ln + " local scale b");
        }
      }
    }
    for (int j = 0; j < static_cast<int>(ds.num_municipalities()); ++j) {
      const auto p = gs.phi_conditional(j);
      const auto po = oracle::phi(s, ds, g, j);
      exact(p.mean, po.mean, vn + " phi mean");
      exact(p.variance, po.variance, vn + " phi variance");
      const auto k = gs.municipal_variance_conditional(j);
      const auto ko = oracle::kappa2_municipal(s, ds, cfg, j);
      exact(k.shape, ko.shape, vn + " kappa2_municipal shape");
      exact(k.rate, ko.rate, vn + " kappa2_municipal rate");
    }
    for (int k = 0; k < static_cast<int>(ds.num_departments()); ++k) {
      const auto c = gs.department_scale_conditional(k);
      const auto o = oracle::kappa2_department(s, ds, cfg, k);
      exact(c.shape, o.shape, vn + " kappa2_department shape");
      exact(c.rate, o.rate, vn + " kappa2_department rate");
    }
    for (const auto& [got, want, what] : std::vector<std::tuple<GammaParams, GammaParams, std::string>>{
             {gs.sigma2_intercept_conditional(), oracle::sigma2_intercept(s, cfg), "sigma2_intercept"},
             {gs.tau2_phi_conditional(), oracle::tau2_phi(s, ds, g, cfg), "tau2_phi"},
             {gs.beta_kappa_conditional(), oracle::beta_kappa(s, cfg), "beta_kappa"}}) {
      exact(got.shape, want.shape, vn + " " + what + " shape");
      exact(got.rate, want.rate, vn + " " + what + " rate");
    }
    for (double a : {0.3, 1.0, 4.2}) exact(gs.alpha_kappa_log_target(a), oracle::alpha_log_target(s, cfg, a), vn + " alpha target");

    // single-block draws from the conditional at s
    using Reader = std::function<std::vector<double>(const ModelState&)>;
    auto draws = [&](const std::function<void()>& update, const Reader& read) {
      std::vector<std::vector<double>> cols;
      for (int r = 0; r < N; ++r) {
        gs.set_state(s);
        update();
        const std::vector<double> vals = read(gs.state());
        if (cols.empty()) cols.resize(vals.size());
        for (std::size_t c = 0; c < vals.size(); ++c) cols[c].push_back(vals[c]);
      }
      return cols;
    };
    {
      const std::function<void()> up = [&] { gs.update_intercept(rng); };
      const Reader rd = [](const ModelState& st) { return std::vector<double>{st.intercept}; };
      mc.add(vn + " intercept", draws(up, rd)[0], b0o.mean, b0o.variance, [&] { return draws(up, rd)[0]; });
    }
    for (Level l : kLevels) {
      const auto [mean, cov] = oracle::coefficients(s, ds, cfg, l);
      const std::function<void()> up = [&] { gs.update_coefficients(l, rng); };
      const Reader rd = [l](const ModelState& st) {
        const auto& b = st.block(l).beta;
        return std::vector<double>(b.data(), b.data() + b.size());
      };
      const auto x = draws(up, rd);
      for (std::size_t c = 0; c < x.size(); ++c) {
        mc.add(vn + " beta_" + std::string(to_string(l)), x[c], mean[static_cast<Eigen::Index>(c)],
               cov(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)), [&] { return draws(up, rd)[c]; });
      }
      if (v == Variant::lasso) {
        // local scales are drawn inside the shrinkage block after lambda2;
        // draw them here from the conditional at s with the same sampler
        for (int i = 0; i < static_cast<int>(ds.num_covariates(l)); ++i) {
          const auto gp = oracle::local_scale(s, l, i);
          auto gig = [&] {
            std::vector<double> t(N);
            for (double& y : t) y = draw_gig_half(rng, gp.a, gp.b);
            return t;
          };
          const double z = std::sqrt(gp.a * gp.b);
          const double m = std::sqrt(gp.b / gp.a) * (1.0 + 1.0 / z);
          const double m2 = gp.b / gp.a * (1.0 + 3.0 / z + 3.0 / (z * z));
          mc.add(vn + " local scale", gig(), m, m2 - m * m, gig);
        }
      }
    }
    for (int j = 0; j < static_cast<int>(ds.num_municipalities()); ++j) {
      const auto po = oracle::phi(s, ds, g, j);
      const std::function<void()> up = [&] { gs.update_phi_site(j, rng); };
      const Reader rd = [j](const ModelState& st) { return std::vector<double>{st.phi[j]}; };
      mc.add(vn + " phi", draws(up, rd)[0], po.mean, po.variance, [&] { return draws(up, rd)[0]; });
    }
    {
      const std::function<void()> up = [&] { gs.update_municipal_variances(rng); };
      const Reader rd = [](const ModelState& st) {
        return std::vector<double>(st.kappa2_municipal.data(), st.kappa2_municipal.data() + st.kappa2_municipal.size());
      };
      const auto x = draws(up, rd);
      for (int j = 0; j < static_cast<int>(x.size()); ++j) {
        mc.add_inverse_gamma(vn + " kappa2_municipal", x[j], oracle::kappa2_municipal(s, ds, cfg, j), [&] { return draws(up, rd)[j]; });
      }
    }
    {
      const std::function<void()> up = [&] { gs.update_department_scales(rng); };
      const Reader rd = [](const ModelState& st) {
        return std::vector<double>(st.kappa2_department.data(), st.kappa2_department.data() + st.kappa2_department.size());
      };
      const auto x = draws(up, rd);
      for (int k = 0; k < static_cast<int>(x.size()); ++k) {
        mc.add_gamma(vn + " kappa2_department", x[k], oracle::kappa2_department(s, ds, cfg, k), [&] { return draws(up, rd)[k]; });
      }
    }
    {
      const std::function<void()> up = [&] { gs.update_variance_hyperpriors(rng); };
      const Reader rd = [v](const ModelState& st) {
        std::vector<double> r{st.sigma2_intercept, st.tau2_phi};
        if (v == Variant::baseline) {
          for (Level l : kLevels) r.push_back(*st.block(l).sigma2);
        }
        return r;
      };
      const auto x = draws(up, rd);
      mc.add_inverse_gamma(vn + " sigma2_intercept", x[0], oracle::sigma2_intercept(s, cfg), [&] { return draws(up, rd)[0]; });
      mc.add_inverse_gamma(vn + " tau2_phi", x[1], oracle::tau2_phi(s, ds, g, cfg), [&] { return draws(up, rd)[1]; });
      if (v == Variant::baseline) {
        for (Level l : kLevels) {
          const auto c = static_cast<std::size_t>(2 + static_cast<int>(l));
          mc.add_inverse_gamma(vn + " sigma2", x[c], oracle::sigma2(s, cfg, l), [&] { return draws(up, rd)[c]; });
        }
      }
    }
    {
      const std::function<void()> up = [&] { gs.update_beta_kappa(rng); };
      const Reader rd = [](const ModelState& st) { return std::vector<double>{st.beta_kappa}; };
      mc.add_gamma(vn + " beta_kappa", draws(up, rd)[0], oracle::beta_kappa(s, cfg), [&] { return draws(up, rd)[0]; });
    }
    if (v != Variant::baseline) {
      const std::function<void()> up = [&] { gs.update_shrinkage(rng); };
      const Reader rd = [](const ModelState& st) {
        std::vector<double> r;
        for (Level l : kLevels) r.push_back(*st.block(l).lambda2);
        return r;
      };
      const auto x = draws(up, rd);
      for (Level l : kLevels) {
        const auto c = static_cast<std::size_t>(l);
        mc.add_gamma(vn + " lambda2", x[c], oracle::lambda2(s, cfg, l), [&] { return draws(up, rd)[c]; });
      }
    }
  }
  out.require(mc.failed == 0, "moment check " + mc.first);
  out.detail << exact_checks << " closed-form checks, worst rel err " << fmt(worst_exact, 3) << "; "
             << mc.checked << " moment checks at 1e5 draws within 3 SE, worst var err " << fmt(mc.worst_var, 3) << " (<= 0.05); "
             << mc.confirmed.size() << " first-pass excursion(s) confirmed on re-draw";
  for (const auto& c : mc.confirmed) out.info.push_back("re-drawn: " + c);
}

// ---------------------------------------------------------------------------
// 2. Ridge / baseline equivalence

void criterion2(Outcome& out) {
  const auto ds = ct::make_toy(ct::toy40());
  const auto g = ct::path_graph(ds);
  SeededRng rng(202);
  double worst = 0.0;
  bool draws_equal = true;
  for (int rep = 0; rep < 20; ++rep) {
    auto base = make_model_config(ds, {{"variant", "baseline"}});
    for (Level l : kLevels) base.hyper.level(l).mean.setZero();
    base.hyper.intercept_mean = 0.0;
    const auto ridge = make_model_config(ds, {{"variant", "ridge"}});
    const ModelState rs = oracle::random_state(ds, g, Variant::ridge, rng);
    ModelState bs = rs;
    bs.variant = Variant::baseline;
    for (Level l : kLevels) {
      bs.block(l).sigma2 = 1.0 / *rs.block(l).lambda2;
      bs.block(l).lambda2.reset();
    }
    GibbsSampler gb(ds, g, base, bs), gr(ds, g, ridge, rs);
    for (Level l : kLevels) {
      const auto cb = gb.coefficient_conditional(l), cr = gr.coefficient_conditional(l);
      worst = std::max(worst, (cb.mean() - cr.mean()).cwiseAbs().maxCoeff() / (1.0 + cr.mean().cwiseAbs().maxCoeff()));
      worst = std::max(worst, (cb.covariance() - cr.covariance()).cwiseAbs().maxCoeff() / cr.covariance().cwiseAbs().maxCoeff());
      SeededRng r1(rep * 10 + static_cast<int>(l)), r2(rep * 10 + static_cast<int>(l));
      gb.update_coefficients(l, r1);
      gr.update_coefficients(l, r2);
      draws_equal = draws_equal && (gb.state().block(l).beta - gr.state().block(l).beta).cwiseAbs().maxCoeff() <=
                                       1e-10 * (1.0 + gr.state().block(l).beta.cwiseAbs().maxCoeff());
    }
  }
  out.require(worst <= 1e-12, "conditionals differ by " + fmt(worst));
  out.require(draws_equal, "same-stream draws differ");
  out.detail << "20 states x 3 levels, worst relative difference " << fmt(worst, 3) << " (<= 1e-12); same-stream draws agree";
}

// ---------------------------------------------------------------------------
// 3. Laplace mixture

void criterion3(Outcome& out) {
  SeededRng rng(303);
  for (double lambda : {0.5, 1.0, 2.0}) {
    std::vector<double> x(100'000);
    for (double& b : x) b = draw_normal(rng, 0.0, draw_exponential(rng, lambda * lambda / 2.0));
    const double ks = ct::ks_one_sample(x, [lambda](double t) {
      return t < 0.0 ? 0.5 * std::exp(lambda * t) : 1.0 - 0.5 * std::exp(-lambda * t);
    });
    out.require(ks < 0.01, "lambda " + fmt(lambda) + " KS " + fmt(ks));
    out.detail << "lambda " << lambda << ": KS " << fmt(ks, 3) << "; ";
  }
  out.detail << "(< 0.01)";
}

// ---------------------------------------------------------------------------
// 4. CAR algebra

void criterion4(Outcome& out) {
  SeededRng rng(404);
  double worst = 0.0;
  int zero_fail = 0, positive_fail = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const int u = 2 + static_cast<int>(rng.uniform_index(29));
    const int d = 1 + static_cast<int>(rng.uniform_index(std::min<std::uint64_t>(3, static_cast<std::uint64_t>(u))));
    std::vector<int> dept(static_cast<std::size_t>(u));
    for (int j = 0; j < u; ++j) dept[static_cast<std::size_t>(j)] = j % d;
    const double p = 0.05 + 0.45 * rng.uniform();
    std::vector<std::pair<int, int>> edges;
    for (int a = 0; a < u; ++a)
      for (int b = a + 1; b < u; ++b)
        if (dept[static_cast<std::size_t>(a)] == dept[static_cast<std::size_t>(b)] && rng.uniform() < p) edges.emplace_back(a, b);
    const auto g = AdjacencyGraph::from_edges(dept, edges);
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(u, u);
    for (auto [a, b] : edges) {
      L(a, b) -= 1.0;
      L(b, a) -= 1.0;
      L(a, a) += 1.0;
      L(b, b) += 1.0;
    }
    Eigen::VectorXd phi(u);
    for (Eigen::Index j = 0; j < u; ++j) phi[j] = 10.0 * rng.standard_normal();
    const double dense = phi.dot(L * phi);
    const double form = car_quadratic_form_global(std::span<const double>(phi.data(), static_cast<std::size_t>(u)), g);
    worst = std::max(worst, std::abs(form - dense) / std::max(1.0, std::abs(dense)));
    // per-department forms on the local vectors
    double local_total = 0.0;
    for (int k = 0; k < d; ++k) {
      std::vector<double> loc;
      for (int j : g.department_members(k)) loc.push_back(phi[j]);
      local_total += car_quadratic_form(loc, g, k);
    }
    worst = std::max(worst, std::abs(local_total - dense) / std::max(1.0, std::abs(dense)));

    // zero iff constant on every component
    Eigen::VectorXd flat(u);
    for (const auto& comp : g.components()) {
      const double c = 100.0 * rng.standard_normal();
      for (int j : comp) flat[j] = c;
    }
    const double fz = car_quadratic_form_global(std::span<const double>(flat.data(), static_cast<std::size_t>(u)), g);
    if (std::abs(fz) > 1e-10 * (1.0 + flat.squaredNorm())) ++zero_fail;
    for (const auto& comp : g.components()) {
      if (comp.size() < 2) continue;
      Eigen::VectorXd bumped = flat;
      bumped[comp[rng.uniform_index(comp.size())]] += 1e-3;
      const double fb = car_quadratic_form_global(std::span<const double>(bumped.data(), static_cast<std::size_t>(u)), g);
      if (!(fb > 0.0)) ++positive_fail;
    }
  }
  out.require(worst <= 1e-10, "pairwise form differs from dense by " + fmt(worst));
  out.require(zero_fail == 0, std::to_string(zero_fail) + " component-constant vectors gave a nonzero form");
  out.require(positive_fail == 0, std::to_string(positive_fail) + " non-constant vectors gave a zero form");
  out.detail << "100 graphs (u <= 30), worst relative gap " << fmt(worst, 3) << " (<= 1e-10); zero for component-constant phi, "
             << "positive after any single-site change";
}

// ---------------------------------------------------------------------------
// 5. GIG(1/2) mean

void criterion5(Outcome& out) {
  SeededRng rng(505);
  double worst = 0.0;
  for (double a : {0.1, 1.0, 10.0}) {
    for (double b : {0.1, 1.0, 10.0}) {
      constexpr int N = 1'000'000;
      double sum = 0.0;
      for (int r = 0; r < N; ++r) sum += draw_gig_half(rng, a, b);
      const double z = std::sqrt(a * b);
      const double mean = std::sqrt(b / a) * (1.0 + 1.0 / z);
      const double var = b / a * (1.0 + 3.0 / z + 3.0 / (z * z)) - mean * mean;
      const double dev = std::abs(sum / N - mean) / std::sqrt(var / N);
      worst = std::max(worst, dev);
      out.require(dev <= 3.0, "(a, b) = (" + fmt(a) + ", " + fmt(b) + ") off by " + fmt(dev) + " SE");
    }
  }
  out.detail << "9 (a, b) pairs at 1e6 draws, worst deviation " << fmt(worst, 3) << " SE (<= 3)";
}

// ---------------------------------------------------------------------------
// 6. MH for alpha_kappa

void criterion6(Outcome& out) {
  const auto ds = ct::make_toy(ct::toy40());
  const auto g = ct::path_graph(ds);
  SeededRng rng(606);
  const ModelConfig cfg = make_model_config(ds, {{"variant", "ridge"}});
  ModelState s = oracle::random_state(ds, g, Variant::ridge, rng);
  s.kappa2_department << 0.8, 2.5;
  s.beta_kappa = 1.7;
  s.alpha_kappa = 1.0;
  GibbsSampler gs(ds, g, cfg, s);

  // grid quadrature of the target on alpha
  double mode_val = -std::numeric_limits<double>::infinity();
  for (double a = 1e-3; a < 200.0; a *= 1.01) mode_val = std::max(mode_val, gs.alpha_kappa_log_target(a));
  double upper = 1.0;
  while (gs.alpha_kappa_log_target(upper) > mode_val - 40.0 || upper < 1.0) upper *= 1.5;
  constexpr int G = 400'000;
  const double h = upper / G;
  std::vector<double> cdf(G + 1, 0.0);
  double prev = 0.0;
  for (int i = 1; i <= G; ++i) {
    const double f = std::exp(gs.alpha_kappa_log_target(i * h) - mode_val);
    cdf[static_cast<std::size_t>(i)] = cdf[static_cast<std::size_t>(i - 1)] + 0.5 * (prev + f) * h;
    prev = f;
  }
  const double total = cdf.back();
  for (double& c : cdf) c /= total;
  auto grid_cdf = [&](double a) {
    if (a <= 0.0) return 0.0;
    if (a >= upper) return 1.0;
    const double pos = a / h;
    const auto i = static_cast<std::size_t>(pos);
    return cdf[i] + (pos - static_cast<double>(i)) * (cdf[i + 1] - cdf[i]);
  };

  constexpr int kDraws = 100'000, kThin = 10;
  SeededRng mh(6060);
  for (int i = 0; i < 5000; ++i) gs.update_alpha_kappa(mh, 1.0);
  std::vector<double> x;
  std::size_t accepted = 0;
  for (int i = 0; i < kDraws * kThin; ++i) {
    accepted += gs.update_alpha_kappa(mh, 1.0) ? 1 : 0;
    if ((i + 1) % kThin == 0) x.push_back(gs.state().alpha_kappa);
  }
  const double ks = ct::ks_one_sample(x, grid_cdf);
  out.require(ks < 0.02, "KS " + fmt(ks));
  out.detail << "KS " << fmt(ks, 3) << " over " << kDraws << " draws thinned by " << kThin << " (< 0.02); acceptance "
             << fmt(static_cast<double>(accepted) / (kDraws * kThin), 3);
}

// ---------------------------------------------------------------------------
// 7. Parameter recovery

void criterion7(Outcome& out) {
  ScenarioConfig sc = builtin_scenario(1);
  sc.seed = 707;
  const Skeleton sk = synthetic_skeleton(50, 5, 100);
  SeededRng rng(sc.seed);
  const SimulatedData sim = generate(sc, sk, rng);
  McmcSettings settings;
  settings.iterations = 20'000;
  settings.seed = 7070;
  for (Variant v : {Variant::baseline, Variant::ridge, Variant::lasso}) {
    const std::string vn(to_string(v));
    const ModelConfig cfg = make_model_config(sim.data, {{"variant", vn}});
    SeededRng chain_rng(settings.seed);
    const ChainOutput chain = run_chain(sim.data, sim.graph, cfg, settings, chain_rng);
    const CoverageReport rep = coverage_report(chain, sim.truth);
    std::size_t covered = 0;
    for (const auto& r : rep.rows) covered += r.covered ? 1 : 0;
    const double c = rep.coverage();
    out.detail << vn << " " << covered << "/" << rep.rows.size() << " = " << fmt(100.0 * c, 3) << "%"
               << (v == Variant::lasso ? " (not gated)" : " (>= 80%)") << "; ";
    if (v != Variant::lasso) out.require(c >= 0.80, vn + " coverage " + fmt(100.0 * c, 3) + "%");
    std::map<std::string, std::pair<int, int>> by_block;
    for (const auto& r : rep.rows) {
      auto& [cov, tot] = by_block[r.block];
      cov += r.covered ? 1 : 0;
      ++tot;
    }
    std::string line = vn + " by block:";
    for (const auto& [b, ct_] : by_block) line += " " + b + " " + std::to_string(ct_.first) + "/" + std::to_string(ct_.second);
    out.info.push_back(line);
  }
  out.detail << "n = " << sim.data.num_students() << ", d = 5, m = 50, 20000 sweeps";
}

// ---------------------------------------------------------------------------
// 8. Information criteria

void criterion8(Outcome& out) {
  SeededRng rng(808);
  constexpr int n = 50, B = 40'000;
  std::vector<double> y(n);
  for (double& v : y) v = 3.0 + rng.standard_normal();
  const double ybar = ct::mean_of(y);
  const double log2pi = std::log(2.0 * std::numbers::pi);
  auto pointwise = [&](double mu, std::vector<double>& l) {
    for (int i = 0; i < n; ++i) l[static_cast<std::size_t>(i)] = -0.5 * (log2pi + (y[static_cast<std::size_t>(i)] - mu) * (y[static_cast<std::size_t>(i)] - mu));
  };
  // flat prior, unit variance: mu | y ~ N(ybar, 1 / n), drawn exactly
  WaicAccumulator acc(n);
  std::vector<double> l(n);
  double ll_sum = 0.0, mu_sum = 0.0;
  for (int b = 0; b < B; ++b) {
    const double mu = draw_normal(rng, ybar, 1.0 / n);
    pointwise(mu, l);
    acc.add(l);
    for (double v : l) ll_sum += v;
    mu_sum += mu;
  }
  pointwise(mu_sum / B, l);
  double ll_hat = 0.0;
  for (double v : l) ll_hat += v;
  const DicResult dic = compute_dic(ll_sum / B, ll_hat);
  const WaicResult waic = compute_waic(acc);
  out.require(std::abs(dic.p_dic - 1.0) <= 0.1, "p_DIC " + fmt(dic.p_dic));
  out.require(std::abs(waic.p_waic - 1.0) <= 0.1, "p_WAIC " + fmt(waic.p_waic));

  const double lp = 1461.466, p_dic = 2'466'021.0;
  const DicResult replay = compute_dic(lp, lp + p_dic / 2.0);
  out.require(std::abs(replay.dic - 4'929'118.0) <= 5.0, "replayed DIC " + fmt(replay.dic, 10));
  out.require(std::abs(replay.p_dic - p_dic) <= 1e-6 * p_dic, "replayed p_DIC");
  out.detail << "p_DIC " << fmt(dic.p_dic, 4) << ", p_WAIC " << fmt(waic.p_waic, 4) << " (within 10% of 1); replayed DIC "
             << fmt(replay.dic, 10) << " (within 5 of 4929118)";
}

// ---------------------------------------------------------------------------
// 9. Prediction on noise-free data

struct Split {
  HierarchicalDataset train;
  StudentBatch test;
};

// Holds out the last `hold` students of every municipality.
Split split_students(const HierarchicalDataset& ds, std::size_t hold) {
  const DatasetParts& p = ds.parts();
  std::vector<char> test(ds.num_students(), 0);
  for (const auto& members : ds.students_in_municipality()) {
    for (std::size_t r = members.size() - std::min(hold, members.size() - 1); r < members.size(); ++r) test[static_cast<std::size_t>(members[r])] = 1;
  }
  DatasetParts tp = p;
  std::vector<int> keep, drop;
  for (std::size_t i = 0; i < ds.num_students(); ++i) (test[i] ? drop : keep).push_back(static_cast<int>(i));
  auto rows = [](const Eigen::MatrixXd& M, const std::vector<int>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), M.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = M.row(idx[r]);
    return out;
  };
  tp.student_covariates = rows(p.student_covariates, keep);
  tp.scores.resize(static_cast<Eigen::Index>(keep.size()));
  tp.student_municipality.clear();
  tp.student_ids.clear();
  for (std::size_t r = 0; r < keep.size(); ++r) {
    tp.scores[static_cast<Eigen::Index>(r)] = p.scores[keep[r]];
    tp.student_municipality.push_back(p.student_municipality[static_cast<std::size_t>(keep[r])]);
    tp.student_ids.push_back(p.student_ids[static_cast<std::size_t>(keep[r])]);
  }
  StudentBatch batch;
  batch.covariates = rows(p.student_covariates, drop);
  Eigen::VectorXd sc(static_cast<Eigen::Index>(drop.size()));
  for (std::size_t r = 0; r < drop.size(); ++r) {
    batch.ids.push_back(p.student_ids[static_cast<std::size_t>(drop[r])]);
    batch.municipality.push_back(p.student_municipality[static_cast<std::size_t>(drop[r])]);
    sc[static_cast<Eigen::Index>(r)] = p.scores[drop[r]];
  }
  batch.scores = sc;
  return {HierarchicalDataset::build(std::move(tp)), std::move(batch)};
}

PredictionScore noise_free_score(const ScenarioConfig& sc, Variant v, std::size_t iterations) {
  const Skeleton sk = synthetic_skeleton(20, 4, 60);
  SeededRng rng(sc.seed);
  const SimulatedData sim = generate(sc, sk, rng);
  const Split split = split_students(sim.data, 10);
  McmcSettings settings;
  settings.iterations = iterations;
  settings.seed = 9090;
  const ModelConfig cfg = make_model_config(split.train, {{"variant", std::string(to_string(v))}});
  SeededRng chain_rng(settings.seed);
  const ChainOutput chain = run_chain(split.train, sim.graph, cfg, settings, chain_rng);
  const Eigen::MatrixXd draws = posterior_predictive_draws(chain, split.train, split.test, 100, 99);
  const Eigen::VectorXd point = draws.rowwise().mean();
  return score_predictions(std::span<const double>(point.data(), static_cast<std::size_t>(point.size())),
                           std::span<const double>(split.test.scores->data(), static_cast<std::size_t>(split.test.scores->size())));
}

void criterion9(Outcome& out) {
  ScenarioConfig sc = builtin_scenario(1);
  sc.kappa2 = 1e-6;
  sc.seed = 909;
  // Indicator prevalences of 0.3 keep every student column well separated
  // from the intercept.
  ScenarioConfig balanced = sc;
  balanced.prevalence = Eigen::VectorXd::Constant(sc.prevalence.size(), 0.3);
  for (Variant v : {Variant::baseline, Variant::ridge, Variant::lasso}) {
    const std::string vn(to_string(v));
    const PredictionScore s = noise_free_score(balanced, v, 10'000);
    out.require(s.rmse < 0.1 && s.r2 > 0.999, vn + " RMSE " + fmt(s.rmse) + ", R2 " + fmt(s.r2, 8));
    out.detail << vn << " RMSE " << fmt(s.rmse, 3) << ", R2 " << fmt(s.r2, 8) << "; ";
  }
  out.detail << "held-out students, 100-draw point predictor (RMSE < 0.1, R2 > 0.999)";
  const PredictionScore s1 = noise_free_score(sc, Variant::ridge, 10'000);
  out.info.push_back("scenario-1 prevalences (near-constant indicator columns), ridge: RMSE " + fmt(s1.rmse, 4) + ", R2 " +
                     fmt(s1.r2, 6));
}

// ---------------------------------------------------------------------------
// 10. Segmentation of a planted two-block posterior

void criterion10(Outcome& out) {
  SeededRng rng(1010);
  constexpr int u = 20, B = 500;
  std::vector<int> truth(u);
  Eigen::MatrixXd draws(B, u);
  for (int i = 0; i < u; ++i) truth[static_cast<std::size_t>(i)] = i < u / 2 ? 0 : 1;
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < u; ++i) draws(b, i) = 10.0 * truth[static_cast<std::size_t>(i)] + rng.standard_normal();
  std::vector<std::string> labels;
  for (int i = 0; i < u; ++i) labels.push_back("u" + std::to_string(i));
  const SegmentationResult r = segment_units(draws, labels, 1, 77, 1);
  const Eigen::MatrixXd P = r.cocluster.matrix();
  double within_min = 1.0, cross_max = 0.0;
  for (int i = 0; i < u; ++i) {
    for (int j = 0; j < u; ++j) {
      if (i == j) continue;
      if (truth[static_cast<std::size_t>(i)] == truth[static_cast<std::size_t>(j)]) within_min = std::min(within_min, P(i, j));
      else cross_max = std::max(cross_max, P(i, j));
    }
  }
  const double ari = adjusted_rand_index(r.partition.labels, truth);
  out.require(within_min > 0.95, "within-block minimum " + fmt(within_min));
  out.require(cross_max < 0.05, "cross-block maximum " + fmt(cross_max));
  out.require(ari == 1.0, "ARI " + fmt(ari));
  out.detail << "min within-block P " << fmt(within_min, 4) << " (> 0.95), max cross-block P " << fmt(cross_max, 4)
             << " (< 0.05), ARI " << fmt(ari, 4) << " (= 1), chosen k " << r.partition.k;
}

// ---------------------------------------------------------------------------
// 11. Determinism

int quiet_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "carreg");
  std::streambuf* old = std::cout.rdbuf();
  std::ostringstream sink;
  std::cout.rdbuf(sink.rdbuf());
  const int rc = run_cli(args);
  std::cout.rdbuf(old);
  return rc;
}

void criterion11(Outcome& out) {
  ct::TempDir t("acceptance_det");
  for (const char* run : {"a", "b"}) {
    const fs::path root = t.path / run;
    out.require(quiet_cli({"simulate", "--scenario", "1", "--skeleton", "synthetic:20,4,50", "--seed", "1111", "--out",
                           (root / "sim").string()}) == 0, "simulate failed");
    out.require(quiet_cli({"fit", "--data", (root / "sim").string(), "--iterations", "4000", "--seed", "2222", "--out",
                           (root / "fit").string()}) == 0, "fit failed");
    out.require(quiet_cli({"summarize", "--draws", (root / "fit").string(), "--out", (root / "sum").string()}) == 0,
                "summarize failed");
  }
  if (!out.pass) return;
  std::size_t compared = 0, differing = 0, missing = 0;
  for (const auto& e : fs::recursive_directory_iterator(t.path / "a")) {
    if (!e.is_regular_file() || e.path().filename() == "run_meta.json") continue;
    const fs::path rel = fs::relative(e.path(), t.path / "a");
    const fs::path other = t.path / "b" / rel;
    ++compared;
    if (!fs::exists(other)) {
      ++missing;
      continue;
    }
    if (read_text_file(e.path()) != read_text_file(other)) {
      ++differing;
      out.require(false, rel.string() + " differs");
    }
  }
  std::size_t count_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(t.path / "b")) {
    if (e.is_regular_file() && e.path().filename() != "run_meta.json") ++count_b;
  }
  out.require(missing == 0 && count_b == compared, "the two runs produced different file sets");
  out.detail << compared << " files compared (run_meta.json excluded), " << differing << " differ";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"carreg acceptance suite"};
  int only = 0;
  app.add_option("--only", only, "Run a single criterion (1-11)")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"conjugate exactness", criterion1},
      {"ridge/baseline equivalence", criterion2},
      {"Laplace mixture", criterion3},
      {"CAR algebra", criterion4},
      {"GIG(1/2) mean", criterion5},
      {"MH for alpha_kappa", criterion6},
      {"parameter recovery", criterion7},
      {"information criteria", criterion8},
      {"noise-free prediction", criterion9},
      {"segmentation", criterion10},
      {"determinism", criterion11},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<std::size_t>(only) != i + 1) continue;
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(out);
    } catch (const std::exception& e) {
      out.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s  %2zu %-28s %s [%.1fs]\n", out.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                out.detail.str().c_str(), secs);
    if (!out.pass) std::printf("      failed: %s\n", out.failure.c_str());
    for (const auto& line : out.info) std::printf("      info: %s\n", line.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
