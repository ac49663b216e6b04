#include "carreg/rng.hpp"

#include <cmath>
#include <string>

namespace carreg {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

SeededRng SeededRng::substream(std::uint64_t seed, std::uint64_t index) {
  return SeededRng(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL)));
}

double SeededRng::uniform() {
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t SeededRng::uniform_index(std::uint64_t n) {
  if (n == 0) throw DistributionError("uniform_index: empty range");
  // Rejection keeps the result exactly uniform.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

double SeededRng::standard_normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

namespace {

void require_positive(double x, const char* what) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DistributionError(std::string(what) + " must be positive and finite, got " + std::to_string(x));
  }
}

}  // namespace

double draw_normal(SeededRng& rng, double mean, double variance) {
  require_positive(variance, "draw_normal: variance");
  return mean + std::sqrt(variance) * rng.standard_normal();
}

double draw_gamma(SeededRng& rng, double shape, double rate) {
  require_positive(shape, "draw_gamma: shape");
  require_positive(rate, "draw_gamma: rate");
  if (shape < 1.0) {
    const double g = draw_gamma(rng, shape + 1.0, 1.0);
    return g * std::pow(rng.uniform(), 1.0 / shape) / rate;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.standard_normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

double draw_inverse_gamma(SeededRng& rng, double shape, double rate) {
  require_positive(shape, "draw_inverse_gamma: shape");
  require_positive(rate, "draw_inverse_gamma: rate");
  return 1.0 / draw_gamma(rng, shape, rate);
}

double draw_exponential(SeededRng& rng, double rate) {
  require_positive(rate, "draw_exponential: rate");
  return -std::log(rng.uniform()) / rate;
}

double draw_inverse_gaussian(SeededRng& rng, double mu, double lambda) {
  require_positive(mu, "draw_inverse_gaussian: mu");
  require_positive(lambda, "draw_inverse_gaussian: lambda");
  const double z = rng.standard_normal();
  const double t = mu * z * z / (2.0 * lambda);
  // mu (1 + t - sqrt(t^2 + 2t)) written without cancellation.
  const double x = mu / (1.0 + t + std::sqrt(t * (t + 2.0)));
  if (rng.uniform() <= mu / (mu + x)) return x;
  return mu * mu / x;
}

double draw_gig_half(SeededRng& rng, double a, double b) {
  require_positive(a, "draw_gig_half: a");
  if (!(b >= 0.0) || !std::isfinite(b)) throw DistributionError("draw_gig_half: b must be >= 0");
  if (b == 0.0) return draw_gamma(rng, 0.5, a / 2.0);
  const double mu = std::sqrt(a / b);
  if (!std::isfinite(mu)) return draw_gamma(rng, 0.5, a / 2.0);
  return 1.0 / draw_inverse_gaussian(rng, mu, a);
}

PrecisionFactor factor_precision(const Eigen::MatrixXd& precision) {
  if (precision.rows() != precision.cols()) throw DistributionError("factor_precision: matrix is not square");
  PrecisionFactor f;
  f.llt.compute(precision);
  if (f.llt.info() == Eigen::Success) return f;
  const double scale = precision.diagonal().cwiseAbs().maxCoeff();
  for (double rel = 1e-10; rel <= 1e-6 * 1.0000001; rel *= 10.0) {
    Eigen::MatrixXd jittered = precision;
    jittered.diagonal().array() += rel * scale;
    f.llt.compute(jittered);
    if (f.llt.info() == Eigen::Success) {
      f.jitter = rel * scale;
      return f;
    }
  }
  throw DistributionError("factor_precision: matrix is not positive definite even after jitter 1e-6");
}

Eigen::VectorXd draw_mvn_from_precision(SeededRng& rng, const Eigen::VectorXd& mean, const Eigen::MatrixXd& precision) {
  if (mean.size() != precision.rows()) throw DistributionError("draw_mvn_from_precision: dimension mismatch");
  const PrecisionFactor f = factor_precision(precision);
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.standard_normal();
  // Q = L L^T, so L^{-T} z has covariance Q^{-1}.
  return mean + f.llt.matrixU().solve(z);
}

Eigen::VectorXd draw_mvn_canonical(SeededRng& rng, const Eigen::MatrixXd& precision, const Eigen::VectorXd& linear,
                                   Eigen::VectorXd* mean_out) {
  if (linear.size() != precision.rows()) throw DistributionError("draw_mvn_canonical: dimension mismatch");
  const PrecisionFactor f = factor_precision(precision);
  Eigen::VectorXd mean = f.llt.solve(linear);
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.standard_normal();
  Eigen::VectorXd draw = mean + f.llt.matrixU().solve(z);
  if (mean_out) *mean_out = std::move(mean);
  return draw;
}

}  // namespace carreg
