#include "carreg/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "carreg/data_model.hpp"
#include "carreg/diagnostics.hpp"
#include "carreg/draws_io.hpp"
#include "carreg/gibbs.hpp"
#include "carreg/graph.hpp"
#include "carreg/io.hpp"
#include "carreg/model.hpp"
#include "carreg/predict.hpp"
#include "carreg/segment.hpp"
#include "carreg/simulate.hpp"
#include "carreg/summary.hpp"

namespace carreg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json read_json_file(const fs::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(DataErrorKind::unparseable_cell, path.string() + ": invalid JSON: " + e.what());
  }
}

/// run_meta.json: effective configuration, its hash, seed and timings.
void write_run_meta(const fs::path& path, const std::string& command, std::uint64_t seed, const json& effective,
                    const json& details, double seconds) {
  json meta;
  meta["tool"] = "carreg";
  meta["version"] = kVersion;
  meta["command"] = command;
  meta["seed"] = seed;
  meta["config_hash"] = fnv1a_hex(effective.dump());
  meta["effective_config"] = effective;
  meta["details"] = details;
  meta["timings"] = {{"total_seconds", seconds}};
  write_text_file(path, meta.dump(2) + "\n");
}

fs::path meta_path_for_file(const fs::path& out) {
  return out.parent_path() / (out.filename().string() + ".run_meta.json");
}

/// Accepts a fit directory or its draws/ subdirectory.
fs::path fit_dir_of(const fs::path& p) {
  if (fs::exists(p / "chain_stats.json")) return p;
  if (p.filename() == "draws" && fs::exists(p.parent_path() / "chain_stats.json")) return p.parent_path();
  if (p.filename().empty() && fs::exists(p.parent_path().parent_path() / "chain_stats.json")) return p.parent_path().parent_path();
  throw DataError(DataErrorKind::io, p.string() + " is not a fit output directory (chain_stats.json not found)");
}

std::string fmt(double x) { return format_double(x); }

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string data_dir, students, municipalities, departments, adjacency, config, out;
  std::optional<std::string> variant;
  std::optional<std::size_t> iterations, thin;
  std::optional<double> burn_in;
  std::optional<std::uint64_t> seed;
};

McmcSettings mcmc_from_json(const json& j) {
  McmcSettings s;
  if (j.is_null()) return s;
  if (!j.is_object()) throw ModelError("mcmc: expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const auto& v = it.value();
    if (k == "iterations") s.iterations = v.get<std::size_t>();
    else if (k == "burn_in_fraction") s.burn_in_fraction = v.get<double>();
    else if (k == "thin") s.thin = v.get<std::size_t>();
    else if (k == "seed") s.seed = v.get<std::uint64_t>();
    else if (k == "mh_initial_step") s.mh_initial_step = v.get<double>();
    else if (k == "adaptation_window") s.adaptation_window = v.get<std::size_t>();
    else if (k == "mh_target_acceptance") s.mh_target_acceptance = v.get<double>();
    else if (k == "waic_all_iterations") s.waic_all_iterations = v.get<bool>();
    else if (k == "draw_memory_budget") s.draw_memory_budget = v.get<std::size_t>();
    else if (k == "coherence_check_interval") s.coherence_check_interval = v.get<std::size_t>();
    else throw ModelError("mcmc: unknown key '" + k + "'");
  }
  return s;
}

json mcmc_to_json(const McmcSettings& s) {
  return {{"iterations", s.iterations},
          {"burn_in_fraction", s.burn_in_fraction},
          {"thin", s.thin},
          {"seed", s.seed},
          {"mh_initial_step", s.mh_initial_step},
          {"adaptation_window", s.adaptation_window},
          {"mh_target_acceptance", s.mh_target_acceptance},
          {"waic_all_iterations", s.waic_all_iterations},
          {"draw_memory_budget", s.draw_memory_budget},
          {"coherence_check_interval", s.coherence_check_interval}};
}

int cmd_fit(const FitArgs& a) {
  const auto t0 = Clock::now();
  json config = a.config.empty() ? json::object() : read_json_file(a.config);
  if (!config.is_object()) throw ModelError(a.config + ": expected a JSON object");
  for (auto it = config.begin(); it != config.end(); ++it) {
    if (it.key() != "variant" && it.key() != "hyperparameters" && it.key() != "mcmc" && it.key() != "seed") {
      throw ModelError(a.config + ": unknown key '" + it.key() + "'");
    }
  }
  if (a.variant) config["variant"] = *a.variant;

  auto pick = [&](const std::string& flag, const char* file) {
    if (!flag.empty()) return fs::path(flag);
    if (a.data_dir.empty()) throw DataError(DataErrorKind::io, std::string("fit: --") + file + " or --data is required");
    return fs::path(a.data_dir) / (std::string(file) + ".csv");
  };
  const fs::path students = pick(a.students, "students");
  const fs::path municipalities = pick(a.municipalities, "municipalities");
  const fs::path departments = pick(a.departments, "departments");
  const fs::path adjacency = pick(a.adjacency, "adjacency");

  const HierarchicalDataset raw = load_dataset(students, municipalities, departments);
  auto [ds, standardization] = standardize_covariates(raw);
  const AdjacencyGraph graph = load_adjacency(adjacency, ds);

  json model_json = json::object();
  if (config.contains("variant")) model_json["variant"] = config["variant"];
  if (config.contains("hyperparameters")) model_json["hyperparameters"] = config["hyperparameters"];
  const ModelConfig cfg = make_model_config(ds, model_json);

  McmcSettings settings = mcmc_from_json(config.contains("mcmc") ? config["mcmc"] : json());
  if (config.contains("seed")) settings.seed = config["seed"].get<std::uint64_t>();
  if (a.seed) settings.seed = *a.seed;
  if (a.iterations) settings.iterations = *a.iterations;
  if (a.thin) settings.thin = *a.thin;
  if (a.burn_in) settings.burn_in_fraction = *a.burn_in;
  const fs::path out(a.out);
  settings.stream_dir = out / "draws";

  SeededRng rng(settings.seed);
  const ChainOutput chain = run_chain(ds, graph, cfg, settings, rng);
  write_fit(out, chain, ds, graph, standardization, cfg);

  json effective = {{"model", to_json(cfg)}, {"mcmc", mcmc_to_json(settings)}};
  effective["mcmc"].erase("seed");
  std::vector<std::string> isolated;
  for (int j : graph.isolated_municipalities()) isolated.push_back(ds.municipality_ids()[static_cast<std::size_t>(j)]);
  std::vector<std::string> streamed;
  for (const auto& b : chain.blocks) {
    if (b.streamed) streamed.push_back(b.name);
  }
  const char* shrinkage = cfg.variant == Variant::baseline ? "none"
                          : cfg.variant == Variant::ridge  ? "gamma_lambda2"
                                                           : "gamma_lambda2+gig_local_scales";
  json details = {
      {"variant", std::string(to_string(cfg.variant))},
      {"shrinkage_updates", shrinkage},
      {"prior_means_from_ols", cfg.ols_centered},
      {"students", ds.num_students()},
      {"municipalities", ds.num_municipalities()},
      {"departments", ds.num_departments()},
      {"edges", graph.num_edges()},
      {"isolated_municipalities", isolated},
      {"stored_draws", num_draws(chain)},
      {"waic_source", settings.waic_all_iterations ? "all_post_burn_in" : "thinned"},
      {"acceptance_rate_alpha_kappa", chain.acceptance_rate()},
      {"mh_final_step", chain.mh_final_step},
      {"streamed_blocks", streamed},
      {"max_jitter", chain.max_jitter},
      {"inputs", {{"students", students.string()}, {"municipalities", municipalities.string()},
                  {"departments", departments.string()}, {"adjacency", adjacency.string()}}},
  };
  details["sampling_seconds"] = chain.seconds;
  write_run_meta(out / "run_meta.json", "fit", settings.seed, effective, details, seconds_since(t0));
  std::cout << "fit: " << num_draws(chain) << " draws (" << to_string(cfg.variant) << "), alpha_kappa acceptance "
            << chain.acceptance_rate() << ", written to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

double post_burn_ess(const std::vector<double>& trace, std::size_t burn) {
  if (trace.size() <= burn) return 0.0;
  return effective_sample_size(std::span<const double>(trace).subspan(burn));
}

int cmd_diagnose(const std::string& draws, const std::string& out_path) {
  const auto t0 = Clock::now();
  const FittedRun run = read_fit(fit_dir_of(draws));
  const ChainOutput& c = run.chain;
  json j;
  json scalars = json::object();
  auto add_trace = [&](const std::string& key, const std::vector<double>& trace) {
    if (trace.size() < 10) {
      scalars[key] = {{"ess", nullptr}, {"mcse", nullptr}, {"mean", nullptr}};
      return;
    }
    double mean = 0.0;
    for (double x : trace) mean += x;
    mean /= static_cast<double>(trace.size());
    scalars[key] = {{"ess", effective_sample_size(trace)}, {"mcse", mcse(trace)}, {"mean", mean}};
  };
  for (const auto& b : c.blocks) {
    const bool coefficient = b.name.rfind("beta_", 0) == 0 && b.name != "beta_kappa";
    if (b.cols() == 1 && !coefficient) add_trace(b.name, b.column(0));
    if (coefficient) {
      for (std::size_t k = 0; k < b.cols(); ++k) add_trace(b.name + ":" + b.columns[k], b.column(k));
    }
  }
  j["ess_mcse"] = scalars;
  const std::size_t burn = c.settings.burn_in();
  if (c.loglik_trace.size() > burn + 10) {
    const std::vector<double> tail(c.loglik_trace.begin() + static_cast<std::ptrdiff_t>(burn), c.loglik_trace.end());
    j["loglik_trace"] = {{"ess", post_burn_ess(c.loglik_trace, burn)}, {"mcse", mcse(tail)}};
  }
  const DicResult dic = compute_dic(c.mean_loglik, c.loglik_at_posterior_mean);
  const WaicResult waic = compute_waic(c.waic);
  j["acceptance_rate_alpha_kappa"] = c.acceptance_rate();
  j["lp"] = dic.lp;
  j["p_dic"] = dic.p_dic;
  j["dic"] = dic.dic;
  j["lppd"] = waic.lppd;
  j["p_waic"] = waic.p_waic;
  j["waic"] = waic.waic;
  j["waic_draws"] = c.waic.num_draws();
  j["waic_source"] = c.settings.waic_all_iterations ? "all_post_burn_in" : "thinned";
  j["stored_draws"] = num_draws(c);
  j["variant"] = std::string(to_string(c.variant));
  const fs::path out(out_path);
  write_text_file(out, j.dump(2) + "\n");
  write_run_meta(meta_path_for_file(out), "diagnose", c.settings.seed, json{{"draws", fit_dir_of(draws).string()}},
                 json{{"waic", waic.waic}, {"dic", dic.dic}}, seconds_since(t0));
  std::cout << "diagnose: DIC " << dic.dic << ", WAIC " << waic.waic << " -> " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_predict(const std::string& draws, const std::string& students, std::size_t count, std::uint64_t seed,
                unsigned threads, const std::string& out_path) {
  const auto t0 = Clock::now();
  const FittedRun run = read_fit(fit_dir_of(draws));
  const StudentBatch batch = load_student_batch(students, run.data);
  const Eigen::MatrixXd pred = posterior_predictive_draws(run.chain, run.data, batch, count, seed, threads);
  std::ostringstream os;
  os << "student_id,point_prediction,predictive_sd\n";
  std::vector<double> point(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto row = pred.row(static_cast<Eigen::Index>(i));
    const double mean = row.mean();
    const double sd = count > 1 ? std::sqrt((row.array() - mean).square().sum() / static_cast<double>(count - 1)) : 0.0;
    point[i] = mean;
    os << batch.ids[i] << ',' << fmt(mean) << ',' << fmt(sd) << '\n';
  }
  const fs::path out(out_path);
  write_text_file(out, os.str());
  json details = {{"students", batch.size()}, {"count", count}};
  if (batch.scores && batch.size() >= 2) {
    const Eigen::VectorXd& y = *batch.scores;
    const PredictionScore s = score_predictions(point, std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
    details["rmse"] = s.rmse;
    details["mae"] = s.mae;
    details["r2"] = s.r2;
    std::cout << "predict: RMSE " << s.rmse << ", MAE " << s.mae << ", R2 " << s.r2 << "\n";
  }
  write_run_meta(meta_path_for_file(out), "predict", seed,
                 json{{"draws", fit_dir_of(draws).string()}, {"students", students}, {"count", count}}, details,
                 seconds_since(t0));
  std::cout << "predict: " << batch.size() << " students -> " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_segment(const std::string& draws, const std::string& level_name, std::size_t stride, std::uint64_t seed,
                unsigned threads, const std::string& out_dir) {
  const auto t0 = Clock::now();
  const FittedRun run = read_fit(fit_dir_of(draws));
  const SegmentLevel level = parse_segment_level(level_name);
  const Eigen::MatrixXd units = unit_mean_draws(run.chain, run.data, level);
  const SegmentationResult r = segment_units(units, unit_labels(run.data, level), stride, seed, threads);
  const fs::path out(out_dir);

  std::ostringstream cc;
  const auto& labels = r.cocluster.labels();
  cc << "unit";
  for (const auto& l : labels) cc << ',' << l;
  cc << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    cc << labels[i];
    for (std::size_t j = 0; j < labels.size(); ++j) cc << ',' << fmt(i == j ? 1.0 : r.cocluster.probability(i, j));
    cc << '\n';
  }
  write_text_file(out / "cocluster.csv", cc.str());

  std::ostringstream pc;
  pc << "unit,cluster\n";
  for (std::size_t i = 0; i < labels.size(); ++i) pc << labels[i] << ',' << r.partition.labels[i] << '\n';
  write_text_file(out / "partition.csv", pc.str());

  std::map<int, std::size_t> kdist;
  for (int k : r.k_per_draw) ++kdist[k];
  json kd = json::object();
  for (const auto& [k, n] : kdist) kd[std::to_string(k)] = n;
  json bic = json::array();
  for (double b : r.partition.bic) bic.push_back(std::isfinite(b) ? json(b) : json(nullptr));
  json seg = {{"level", std::string(to_string(level))},
              {"stride", r.stride},
              {"draws_used", r.cocluster.draws()},
              {"k_distribution", kd},
              {"degenerate_draws", r.degenerate_draws},
              {"chosen_k", r.partition.k},
              {"bic_by_k", bic},
              {"gmm_variances", r.partition.shared_variance ? "shared" : "per_component"}};
  write_text_file(out / "segment_meta.json", seg.dump(2) + "\n");
  write_run_meta(out / "run_meta.json", "segment", seed,
                 json{{"draws", fit_dir_of(draws).string()}, {"level", std::string(to_string(level))}, {"stride", stride}},
                 json{{"chosen_k", r.partition.k}, {"threads", threads}}, seconds_since(t0));
  std::cout << "segment: " << labels.size() << " units, " << r.cocluster.draws() << " draws, k = " << r.partition.k
            << " -> " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_simulate(int scenario, const std::string& skeleton_spec, const std::string& adjacency,
                 const std::string& config, std::optional<std::uint64_t> seed, const std::string& out_dir) {
  const auto t0 = Clock::now();
  ScenarioConfig cfg = builtin_scenario(scenario);
  if (!config.empty()) apply_scenario_overrides(cfg, read_json_file(config));
  if (seed) cfg.seed = *seed;
  const Skeleton skeleton =
      parse_skeleton(skeleton_spec, adjacency.empty() ? std::nullopt : std::optional<fs::path>(adjacency));
  SeededRng rng(cfg.seed);
  const SimulatedData sim = generate(cfg, skeleton, rng);
  const fs::path out(out_dir);
  save_dataset(sim.data, out);
  save_adjacency(sim.graph, sim.data, out / "adjacency.csv");
  write_text_file(out / "truth.json", to_json(sim.truth).dump(2) + "\n");
  json effective = {{"scenario", cfg.id}, {"skeleton", skeleton_spec}, {"kappa2", cfg.kappa2}, {"tau2_phi", cfg.tau2_phi},
                    {"intercept", cfg.intercept}};
  for (Level l : kLevels) {
    const auto& b = cfg.beta(l);
    effective[std::string(to_string(l))] = std::vector<double>(b.data(), b.data() + b.size());
  }
  write_run_meta(out / "run_meta.json", "simulate", cfg.seed, effective,
                 json{{"students", sim.data.num_students()}, {"municipalities", sim.data.num_municipalities()},
                      {"departments", sim.data.num_departments()}, {"edges", sim.graph.num_edges()}},
                 seconds_since(t0));
  std::cout << "simulate: scenario " << cfg.id << ", " << sim.data.num_students() << " students -> " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_summarize(const std::string& draws, double reference, const std::string& out_dir) {
  const auto t0 = Clock::now();
  const FittedRun run = read_fit(fit_dir_of(draws));
  const fs::path out(out_dir);
  for (Level l : kLevels) {
    std::ostringstream os;
    os << "name,mean,lower95,upper95,sig\n";
    for (const auto& r : coefficient_table(run.chain, l)) {
      os << r.name << ',' << fmt(r.mean) << ',' << fmt(r.lower) << ',' << fmt(r.upper) << ',' << (r.significant ? 1 : 0) << '\n';
    }
    write_text_file(out / ("coef_" + std::string(to_string(l)) + ".csv"), os.str());
  }
  for (const auto& [name, level] : {std::pair{"department", RankingLevel::department},
                                    std::pair{"municipality", RankingLevel::municipality}}) {
    std::ostringstream os;
    os << "rank,unit,mean,lower95,upper95,band\n";
    std::size_t rank = 1;
    for (const auto& r : unit_ranking(run.chain, run.data, level, reference)) {
      os << rank++ << ',' << r.unit << ',' << fmt(r.mean) << ',' << fmt(r.lower) << ',' << fmt(r.upper) << ','
         << to_string(r.band) << '\n';
    }
    write_text_file(out / ("ranking_" + std::string(name) + ".csv"), os.str());
  }
  std::ostringstream os;
  os << "municipality_id,department_id,phi_mean\n";
  for (const auto& r : spatial_effect_summary(run.chain, run.data)) os << r.municipality << ',' << r.department << ',' << fmt(r.mean) << '\n';
  write_text_file(out / "phi_means.csv", os.str());
  write_run_meta(out / "run_meta.json", "summarize", run.chain.settings.seed,
                 json{{"draws", fit_dir_of(draws).string()}, {"reference", reference}}, json::object(), seconds_since(t0));
  std::cout << "summarize: tables written to " << out.string() << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Bayesian hierarchical regression with an intrinsic CAR spatial effect"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(0, 1);
  unsigned threads = 1;
  app.add_option("--threads", threads, "Maximum worker threads")->check(CLI::PositiveNumber);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Run the Gibbs sampler");
  fit_cmd->add_option("--data", fit.data_dir, "Directory with students/municipalities/departments/adjacency.csv");
  fit_cmd->add_option("--students", fit.students, "students.csv");
  fit_cmd->add_option("--municipalities", fit.municipalities, "municipalities.csv");
  fit_cmd->add_option("--departments", fit.departments, "departments.csv");
  fit_cmd->add_option("--adjacency", fit.adjacency, "adjacency.csv");
  fit_cmd->add_option("--config", fit.config, "JSON config (variant, hyperparameters, mcmc, seed)");
  fit_cmd->add_option("--variant", fit.variant, "baseline | ridge | lasso");
  fit_cmd->add_option("--iterations", fit.iterations, "Total sweeps");
  fit_cmd->add_option("--burn-in", fit.burn_in, "Burn-in fraction");
  fit_cmd->add_option("--thin", fit.thin, "Thinning stride");
  fit_cmd->add_option("--seed", fit.seed, "Random seed");
  fit_cmd->add_option("--out", fit.out, "Output directory")->required();
  fit_cmd->add_option("--threads", threads, "Maximum worker threads");

  std::string p_draws, p_students, p_out;
  std::size_t p_count = 100;
  std::uint64_t p_seed = 1;
  auto* pred_cmd = app.add_subcommand("predict", "Posterior-predictive scores for students");
  pred_cmd->add_option("--draws", p_draws, "Fit output directory")->required();
  pred_cmd->add_option("--students", p_students, "students CSV")->required();
  pred_cmd->add_option("--count", p_count, "Predictive draws per student")->check(CLI::PositiveNumber);
  pred_cmd->add_option("--seed", p_seed, "Random seed");
  pred_cmd->add_option("--out", p_out, "predictions.csv")->required();
  pred_cmd->add_option("--threads", threads, "Maximum worker threads");

  std::string d_draws, d_out;
  auto* diag_cmd = app.add_subcommand("diagnose", "ESS, MCSE, DIC and WAIC");
  diag_cmd->add_option("--draws", d_draws, "Fit output directory")->required();
  diag_cmd->add_option("--out", d_out, "diagnostics.json")->required();

  std::string s_draws, s_level = "department", s_out;
  std::size_t s_stride = 10;
  std::uint64_t s_seed = 1;
  auto* seg_cmd = app.add_subcommand("segment", "Co-clustering segmentation of units");
  seg_cmd->add_option("--draws", s_draws, "Fit output directory")->required();
  seg_cmd->add_option("--level", s_level, "department | municipality | spatial");
  seg_cmd->add_option("--stride", s_stride, "Use every n-th stored draw")->check(CLI::PositiveNumber);
  seg_cmd->add_option("--seed", s_seed, "Random seed");
  seg_cmd->add_option("--out", s_out, "Output directory")->required();
  seg_cmd->add_option("--threads", threads, "Maximum worker threads");

  int m_scenario = 1;
  std::string m_skeleton, m_adjacency, m_config, m_out;
  std::optional<std::uint64_t> m_seed;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic dataset");
  sim_cmd->add_option("--scenario", m_scenario, "1 | 2 | 3")->check(CLI::Range(1, 3));
  sim_cmd->add_option("--skeleton", m_skeleton, "Skeleton CSV or synthetic:m,d,npm")->required();
  sim_cmd->add_option("--adjacency", m_adjacency, "Adjacency CSV for a skeleton file");
  sim_cmd->add_option("--config", m_config, "JSON overrides of the scenario");
  sim_cmd->add_option("--seed", m_seed, "Random seed");
  sim_cmd->add_option("--out", m_out, "Output directory")->required();

  std::string u_draws, u_out;
  double u_reference = 250.0;
  auto* sum_cmd = app.add_subcommand("summarize", "Coefficient tables, rankings and spatial effects");
  sum_cmd->add_option("--draws", u_draws, "Fit output directory")->required();
  sum_cmd->add_option("--reference", u_reference, "Reference score for ranking bands");
  sum_cmd->add_option("--out", u_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 2;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(fit);
    if (pred_cmd->parsed()) return cmd_predict(p_draws, p_students, p_count, p_seed, threads, p_out);
    if (diag_cmd->parsed()) return cmd_diagnose(d_draws, d_out);
    if (seg_cmd->parsed()) return cmd_segment(s_draws, s_level, s_stride, s_seed, threads, s_out);
    if (sim_cmd->parsed()) return cmd_simulate(m_scenario, m_skeleton, m_adjacency, m_config, m_seed, m_out);
    if (sum_cmd->parsed()) return cmd_summarize(u_draws, u_reference, u_out);
  } catch (const DataError& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> storage = args;
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  argv.push_back(nullptr);
  return run_cli(static_cast<int>(storage.size()), argv.data());
}

}  // namespace carreg
