#pragma once

#include <cstddef>
#include <filesystem>

#include <json.hpp>

#include "carreg/data_model.hpp"
#include "carreg/gibbs.hpp"
#include "carreg/graph.hpp"
#include "carreg/model.hpp"

namespace carreg {

/// Everything a fit directory holds: the chain output and the (standardized)
/// data it was fitted to, so downstream commands need nothing else.
///
/// Layout:
///   draws/<block>.csv      one row per stored draw, header = unit labels
///   loglik_trace.csv       iteration, loglik (every sweep)
///   waic_state.csv         per-student streaming moments
///   chain_stats.json       counts, lp, loglik at the posterior mean, MH stats
///   model_config.json      effective model configuration
///   data/*.csv             students / municipalities / departments / adjacency
///   data/standardization.json
struct FittedRun {
  ChainOutput chain;
  HierarchicalDataset data;
  AdjacencyGraph graph;
  StandardizationRecord standardization;
  ModelConfig config;
};

nlohmann::json to_json(const StandardizationRecord& rec);
StandardizationRecord standardization_from_json(const nlohmann::json& j);

void write_fit(const std::filesystem::path& dir, const ChainOutput& chain, const HierarchicalDataset& data,
               const AdjacencyGraph& graph, const StandardizationRecord& standardization, const ModelConfig& config);

/// Reads a fit directory, including draw blocks that were streamed to disk.
FittedRun read_fit(const std::filesystem::path& dir);

/// Reconstructs the full state of stored draw `draw`.
ModelState state_at(const ChainOutput& chain, std::size_t draw, const HierarchicalDataset& ds);

/// Number of stored draws (rows of the intercept block).
std::size_t num_draws(const ChainOutput& chain);

}  // namespace carreg
