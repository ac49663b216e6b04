#include "carreg/predict.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "carreg/io.hpp"
#include "carreg/rng.hpp"

namespace carreg {

StudentBatch load_student_batch(const std::filesystem::path& path, const HierarchicalDataset& training) {
  const CsvTable t = read_csv(path);
  const std::size_t c_id = t.require_column("student_id");
  const std::size_t c_mun = t.require_column("municipality_id");
  const auto c_score = t.find_column("score");
  const auto& names = training.covariate_names(Level::student);
  std::vector<std::size_t> cols;
  for (const auto& name : names) cols.push_back(t.require_column(name));

  StudentBatch b;
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  b.covariates.resize(n, static_cast<Eigen::Index>(cols.size()));
  if (c_score) b.scores = Eigen::VectorXd(n);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    b.ids.push_back(t.rows[r][c_id]);
    const auto mun = training.find_municipality(t.rows[r][c_mun]);
    if (!mun) {
      throw DataError(DataErrorKind::dangling_key, t.location(r, c_mun) + ": municipality '" + t.rows[r][c_mun] +
                                                       "' is not part of the training data");
    }
    b.municipality.push_back(*mun);
    for (std::size_t c = 0; c < cols.size(); ++c) b.covariates(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.number(r, cols[c]);
    if (c_score) (*b.scores)[static_cast<Eigen::Index>(r)] = t.number(r, *c_score);
  }
  return b;
}

StudentBatch batch_from_dataset(const HierarchicalDataset& ds) {
  StudentBatch b;
  b.ids = ds.student_ids();
  b.municipality = ds.student_municipality();
  b.covariates = ds.covariates(Level::student);
  b.scores = ds.scores();
  return b;
}

Eigen::MatrixXd posterior_predictive_draws(const ChainOutput& chain, const HierarchicalDataset& training,
                                           const StudentBatch& batch, std::size_t count, std::uint64_t seed,
                                           unsigned threads) {
  if (count == 0) throw PredictionError("posterior_predictive_draws: count must be positive");
  const DrawMatrix& b0 = chain.block("intercept");
  const DrawMatrix& bE = chain.block("beta_student");
  const DrawMatrix& bM = chain.block("beta_municipal");
  const DrawMatrix& bD = chain.block("beta_departmental");
  const DrawMatrix& phi = chain.block("phi");
  const DrawMatrix& k2 = chain.block("kappa2_municipal");
  const std::size_t B = b0.rows;
  if (B == 0) throw PredictionError("posterior_predictive_draws: no stored draws");
  if (static_cast<std::size_t>(batch.covariates.cols()) != bE.cols()) {
    throw PredictionError("posterior_predictive_draws: student covariate count does not match the draws");
  }
  const auto& Z = training.covariates(Level::municipal);
  const auto& W = training.covariates(Level::departmental);
  const std::size_t m = training.num_municipalities();
  for (int j : batch.municipality) {
    if (j < 0 || static_cast<std::size_t>(j) >= m) throw PredictionError("posterior_predictive_draws: unknown municipality");
  }

  const std::size_t n = batch.size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(count));
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      SeededRng rng = SeededRng::substream(seed, s);
      const int j = batch.municipality[s];
      const int k = training.department_of(static_cast<std::size_t>(j));
      for (std::size_t c = 0; c < count; ++c) {
        const std::size_t d = rng.uniform_index(B);
        double zeta = b0.at(d, 0) + phi.at(d, static_cast<std::size_t>(j));
        for (std::size_t q = 0; q < bE.cols(); ++q) zeta += batch.covariates(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(q)) * bE.at(d, q);
        for (std::size_t q = 0; q < bM.cols(); ++q) zeta += Z(j, static_cast<Eigen::Index>(q)) * bM.at(d, q);
        for (std::size_t q = 0; q < bD.cols(); ++q) zeta += W(k, static_cast<Eigen::Index>(q)) * bD.at(d, q);
        out(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(c)) =
            zeta + std::sqrt(k2.at(d, static_cast<std::size_t>(j))) * rng.standard_normal();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
  if (workers == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk, end = std::min(n, begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

PredictionScore score_predictions(std::span<const double> predicted, std::span<const double> observed) {
  if (predicted.size() != observed.size()) throw PredictionError("score_predictions: length mismatch");
  if (observed.size() < 2) throw PredictionError("score_predictions: need at least two observations");
  const double n = static_cast<double>(observed.size());
  const double mean = std::accumulate(observed.begin(), observed.end(), 0.0) / n;
  double sse = 0.0, sae = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double e = observed[i] - predicted[i];
    sse += e * e;
    sae += std::abs(e);
    sst += (observed[i] - mean) * (observed[i] - mean);
  }
  if (!(sst > 0.0)) throw PredictionError("score_predictions: observed values are constant, R^2 is undefined");
  return {std::sqrt(sse / n), sae / n, 1.0 - sse / sst};
}

}  // namespace carreg
