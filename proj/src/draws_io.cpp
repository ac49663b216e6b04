#include "carreg/draws_io.hpp"

#include <fstream>
#include <sstream>

#include "carreg/io.hpp"

namespace carreg {

namespace fs = std::filesystem;
using nlohmann::json;

json to_json(const StandardizationRecord& rec) {
  auto cols = [](const std::vector<ColumnTransform>& v) {
    json arr = json::array();
    for (const auto& c : v) arr.push_back({{"name", c.name}, {"mean", c.mean}, {"sd", c.sd}});
    return arr;
  };
  return {{"municipal", cols(rec.municipal)}, {"departmental", cols(rec.departmental)}};
}

StandardizationRecord standardization_from_json(const json& j) {
  auto cols = [](const json& arr) {
    std::vector<ColumnTransform> v;
    for (const auto& c : arr) v.push_back({c.at("name").get<std::string>(), c.at("mean").get<double>(), c.at("sd").get<double>()});
    return v;
  };
  StandardizationRecord rec;
  rec.municipal = cols(j.at("municipal"));
  rec.departmental = cols(j.at("departmental"));
  return rec;
}

namespace {

std::string draw_csv(const DrawMatrix& b) {
  std::ostringstream os;
  os << join_csv(b.columns) << '\n';
  for (std::size_t r = 0; r < b.rows; ++r) os << format_draw_row(b.row(r)) << '\n';
  return os.str();
}

DrawMatrix read_draw_csv(const fs::path& path, const std::string& name) {
  const CsvTable t = read_csv(path);
  DrawMatrix b;
  b.name = name;
  b.columns = t.header;
  b.values.reserve(t.rows.size() * t.header.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 0; c < t.header.size(); ++c) b.values.push_back(t.number(r, c));
  }
  b.rows = t.rows.size();
  return b;
}

std::string vector_csv(const std::string& header, const std::vector<std::vector<double>>& cols) {
  std::ostringstream os;
  os << header << '\n';
  const std::size_t n = cols.empty() ? 0 : cols[0].size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (c) os << ',';
      os << format_double(cols[c][i]);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace

void write_fit(const fs::path& dir, const ChainOutput& chain, const HierarchicalDataset& data,
               const AdjacencyGraph& graph, const StandardizationRecord& standardization, const ModelConfig& config) {
  fs::create_directories(dir / "draws");
  for (const auto& b : chain.blocks) {
    const fs::path path = dir / "draws" / (b.name + ".csv");
    if (b.streamed) {
      const fs::path src = chain.settings.stream_dir / (b.name + ".csv");
      if (fs::weakly_canonical(src) != fs::weakly_canonical(path)) fs::copy_file(src, path, fs::copy_options::overwrite_existing);
      continue;
    }
    write_text_file(path, draw_csv(b));
  }

  {
    std::ostringstream os;
    os << "iteration,loglik\n";
    for (std::size_t t = 0; t < chain.loglik_trace.size(); ++t) os << t << ',' << format_double(chain.loglik_trace[t]) << '\n';
    write_text_file(dir / "loglik_trace.csv", os.str());
  }
  write_text_file(dir / "waic_state.csv",
                  vector_csv("running_max,scaled_sum,mean,m2", {chain.waic.running_max(), chain.waic.scaled_sums(),
                                                                chain.waic.means(), chain.waic.m2()}));

  const McmcSettings& s = chain.settings;
  json stats = {
      {"variant", std::string(to_string(chain.variant))},
      {"iterations", s.iterations},
      {"burn_in", s.burn_in()},
      {"thin", s.thin},
      {"seed", s.seed},
      {"stored_draws", num_draws(chain)},
      {"waic_draws", chain.waic.num_draws()},
      {"waic_source", s.waic_all_iterations ? "all_post_burn_in" : "thinned"},
      {"mean_loglik", chain.mean_loglik},
      {"loglik_at_posterior_mean", chain.loglik_at_posterior_mean},
      {"mh_accepted", chain.mh_accepted},
      {"mh_proposed", chain.mh_proposed},
      {"mh_accepted_burn_in", chain.mh_accepted_burn_in},
      {"mh_initial_step", s.mh_initial_step},
      {"mh_final_step", chain.mh_final_step},
      {"max_jitter", chain.max_jitter},
  };
  write_text_file(dir / "chain_stats.json", stats.dump(2) + "\n");
  write_text_file(dir / "model_config.json", to_json(config).dump(2) + "\n");

  save_dataset(data, dir / "data");
  save_adjacency(graph, data, dir / "data" / "adjacency.csv");
  write_text_file(dir / "data" / "standardization.json", to_json(standardization).dump(2) + "\n");
}

FittedRun read_fit(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError(DataErrorKind::io, "fit directory " + dir.string() + " does not exist");
  FittedRun run;
  const fs::path data_dir = dir / "data";
  run.data = load_dataset(data_dir / "students.csv", data_dir / "municipalities.csv", data_dir / "departments.csv");
  run.graph = load_adjacency(data_dir / "adjacency.csv", run.data);
  run.standardization = standardization_from_json(json::parse(read_text_file(data_dir / "standardization.json")));
  run.config = make_model_config(run.data, json::parse(read_text_file(dir / "model_config.json")));

  const json stats = json::parse(read_text_file(dir / "chain_stats.json"));
  ChainOutput& c = run.chain;
  c.variant = parse_variant(stats.at("variant").get<std::string>());
  c.settings.iterations = stats.at("iterations").get<std::size_t>();
  c.settings.thin = stats.at("thin").get<std::size_t>();
  c.settings.seed = stats.at("seed").get<std::uint64_t>();
  c.settings.burn_in_fraction =
      static_cast<double>(stats.at("burn_in").get<std::size_t>()) / static_cast<double>(c.settings.iterations);
  c.settings.waic_all_iterations = stats.at("waic_source").get<std::string>() == "all_post_burn_in";
  c.settings.mh_initial_step = stats.at("mh_initial_step").get<double>();
  c.mean_loglik = stats.at("mean_loglik").get<double>();
  c.loglik_at_posterior_mean = stats.at("loglik_at_posterior_mean").get<double>();
  c.mh_accepted = stats.at("mh_accepted").get<std::size_t>();
  c.mh_proposed = stats.at("mh_proposed").get<std::size_t>();
  c.mh_accepted_burn_in = stats.at("mh_accepted_burn_in").get<std::size_t>();
  c.mh_final_step = stats.at("mh_final_step").get<double>();
  c.max_jitter = stats.at("max_jitter").get<double>();

  for (const auto& name : block_names(c.variant)) {
    c.blocks.push_back(read_draw_csv(dir / "draws" / (name + ".csv"), name));
  }
  const std::size_t rows = c.blocks.front().rows;
  for (const auto& b : c.blocks) {
    if (b.rows != rows) throw DataError(DataErrorKind::dimension_mismatch, "draw block " + b.name + " has " +
                                                                               std::to_string(b.rows) + " rows, expected " +
                                                                               std::to_string(rows));
  }

  const CsvTable trace = read_csv(dir / "loglik_trace.csv");
  for (std::size_t r = 0; r < trace.rows.size(); ++r) c.loglik_trace.push_back(trace.number(r, 1));

  const CsvTable ws = read_csv(dir / "waic_state.csv");
  std::vector<std::vector<double>> cols(4);
  for (std::size_t r = 0; r < ws.rows.size(); ++r) {
    for (std::size_t k = 0; k < 4; ++k) cols[k].push_back(ws.number(r, k));
  }
  c.waic = WaicAccumulator::restore(stats.at("waic_draws").get<std::size_t>(), std::move(cols[0]), std::move(cols[1]),
                                    std::move(cols[2]), std::move(cols[3]));

  // Posterior mean state from the stored draws.
  ModelState mean = state_at(c, 0, run.data);
  for (std::size_t r = 1; r < rows; ++r) {
    const ModelState s = state_at(c, r, run.data);
    mean.intercept += s.intercept;
    for (std::size_t l = 0; l < 3; ++l) mean.coefficients[l].beta += s.coefficients[l].beta;
    mean.phi += s.phi;
    mean.kappa2_municipal += s.kappa2_municipal;
  }
  const double inv = 1.0 / static_cast<double>(rows);
  mean.intercept *= inv;
  for (auto& b : mean.coefficients) b.beta *= inv;
  mean.phi *= inv;
  mean.kappa2_municipal *= inv;
  c.posterior_mean = std::move(mean);
  return run;
}

std::size_t num_draws(const ChainOutput& chain) { return chain.block("intercept").rows; }

ModelState state_at(const ChainOutput& chain, std::size_t draw, const HierarchicalDataset& ds) {
  auto vec = [&](const std::string& name) {
    const DrawMatrix& b = chain.block(name);
    const auto row = b.row(draw);
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(row.data(), static_cast<Eigen::Index>(row.size())));
  };
  auto scalar = [&](const std::string& name) { return chain.block(name).row(draw)[0]; };
  ModelState s;
  s.variant = chain.variant;
  s.intercept = scalar("intercept");
  s.sigma2_intercept = scalar("sigma2_intercept");
  for (Level l : kLevels) {
    const std::string lv(to_string(l));
    auto& b = s.block(l);
    b.beta = vec("beta_" + lv);
    if (static_cast<std::size_t>(b.beta.size()) != ds.num_covariates(l)) {
      throw DataError(DataErrorKind::dimension_mismatch, "draw block beta_" + lv + " does not match the dataset");
    }
    if (chain.variant == Variant::baseline) b.sigma2 = scalar("sigma2_" + lv);
    else b.lambda2 = scalar("lambda2_" + lv);
    if (chain.variant == Variant::lasso) b.tau2 = vec("tau2_" + lv);
  }
  s.phi = vec("phi");
  s.kappa2_municipal = vec("kappa2_municipal");
  s.kappa2_department = vec("kappa2_department");
  s.alpha_kappa = scalar("alpha_kappa");
  s.beta_kappa = scalar("beta_kappa");
  s.tau2_phi = scalar("tau2_phi");
  if (static_cast<std::size_t>(s.phi.size()) != ds.num_municipalities()) {
    throw DataError(DataErrorKind::dimension_mismatch, "draw block phi does not match the dataset");
  }
  return s;
}

}  // namespace carreg
