#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "carreg/data_model.hpp"
#include "carreg/gibbs.hpp"

namespace carreg {

/// Students to score, attached to the municipalities of a training dataset.
struct StudentBatch {
  std::vector<std::string> ids;
  std::vector<int> municipality;          // training municipality index
  Eigen::MatrixXd covariates;             // rows x_i, training column order
  std::optional<Eigen::VectorXd> scores;  // present when the file has `score`

  std::size_t size() const { return ids.size(); }
};

/// Reads `student_id, municipality_id, [score,] <student covariates>`. The
/// covariate columns are matched to the training names; an unknown
/// municipality is a dangling-key error (no out-of-graph prediction).
StudentBatch load_student_batch(const std::filesystem::path& path, const HierarchicalDataset& training);

/// Every student of a dataset as a batch (used for in-sample checks).
StudentBatch batch_from_dataset(const HierarchicalDataset& ds);

/// students x count matrix. Each entry picks a stored draw uniformly with
/// replacement, evaluates zeta for the student under it and adds
/// N(0, kappa2_{j}) noise. Student s uses rng substream (seed, s), so the
/// result does not depend on `threads`.
Eigen::MatrixXd posterior_predictive_draws(const ChainOutput& chain, const HierarchicalDataset& training,
                                           const StudentBatch& batch, std::size_t count, std::uint64_t seed,
                                           unsigned threads = 1);

struct PredictionScore {
  double rmse = 0.0;
  double mae = 0.0;
  double r2 = 0.0;
};

PredictionScore score_predictions(std::span<const double> predicted, std::span<const double> observed);

class PredictionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace carreg
