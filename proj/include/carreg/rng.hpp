#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

namespace carreg {

class DistributionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Reproducible generator. The engine is std::mt19937_64, whose output
/// sequence is fixed by the C++ standard; every transformation to uniforms,
/// normals and gammas is implemented here rather than taken from
/// <random> distributions (those are implementation-defined), so a seed
/// produces the same stream on every platform.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  /// Independent stream derived from (seed, index) through splitmix64. Used
  /// for per-chain, per-student and per-draw substreams.
  static SeededRng substream(std::uint64_t seed, std::uint64_t index);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);
  /// Marsaglia polar method; the second variate of each pair is cached.
  double standard_normal();

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

double draw_normal(SeededRng& rng, double mean, double variance);

/// Gamma with mean shape / rate (Marsaglia-Tsang; boosted for shape < 1).
double draw_gamma(SeededRng& rng, double shape, double rate);
/// 1 / Gamma(shape, rate).
double draw_inverse_gamma(SeededRng& rng, double shape, double rate);
double draw_exponential(SeededRng& rng, double rate);
/// Inverse Gaussian with mean mu and shape lambda (Michael-Schucany-Haas).
double draw_inverse_gaussian(SeededRng& rng, double mu, double lambda);
/// GIG(p = 1/2, a, b): density proportional to x^{-1/2} exp(-(a x + b / x) / 2).
/// Drawn as the reciprocal of an InverseGaussian(sqrt(a / b), a) variate;
/// b == 0 reduces to Gamma(1/2, a / 2).
double draw_gig_half(SeededRng& rng, double a, double b);

/// Cholesky factor of a symmetric positive-definite matrix. On failure the
/// diagonal is inflated by 1e-10 * max|diag|, growing tenfold up to 1e-6;
/// beyond that DistributionError is thrown.
struct PrecisionFactor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
};
PrecisionFactor factor_precision(const Eigen::MatrixXd& precision);

/// Draw from N(mean, precision^{-1}) without forming the inverse.
Eigen::VectorXd draw_mvn_from_precision(SeededRng& rng, const Eigen::VectorXd& mean, const Eigen::MatrixXd& precision);

/// Draw from the canonical form N(Q^{-1} b, Q^{-1}); returns the draw and
/// writes the mean Q^{-1} b into `mean_out` when given.
Eigen::VectorXd draw_mvn_canonical(SeededRng& rng, const Eigen::MatrixXd& precision, const Eigen::VectorXd& linear,
                                   Eigen::VectorXd* mean_out = nullptr);

}  // namespace carreg
