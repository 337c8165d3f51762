#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "npwnet/cli.hpp"

using nlohmann::json;
using namespace npwnet;

namespace {

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::istringstream ss(s);
  std::string field;
  while (std::getline(ss, field, ','))
    out.push_back(std::stod(field));
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream ss(s);
  std::string field;
  while (std::getline(ss, field, ','))
    out.push_back(std::stoi(field));
  return out;
}

std::vector<std::string> parse_string_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string field;
  while (std::getline(ss, field, ','))
    out.push_back(field);
  return out;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

//! Loads the flat key-value config file named by a --config argument, if
//! any, so its values become defaults that explicit flags then override.
json load_config(int argc, char** argv) {
  std::string path;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc)
      path = argv[i + 1];
    else if (arg.rfind("--config=", 0) == 0)
      path = arg.substr(9);
  }
  if (path.empty())
    return json::object();
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open config file " + path);
  json doc;
  in >> doc;
  if (!doc.is_object())
    throw InvalidConfig("config file must hold a JSON object");
  return doc;
}

std::string config_str(const json& cfg, const std::string& key,
                       const std::string& fallback) {
  if (!cfg.contains(key))
    return fallback;
  const json& v = cfg.at(key);
  if (v.is_string())
    return v.get<std::string>();
  if (v.is_array()) {
    std::string joined;
    for (const auto& item : v) {
      if (!joined.empty())
        joined += ",";
      joined += item.is_string() ? item.get<std::string>()
                                 : fmt17(item.get<double>());
    }
    return joined;
  }
  if (v.is_number_integer())
    return std::to_string(v.get<long long>());
  if (v.is_number())
    return fmt17(v.get<double>());
  if (v.is_boolean())
    return v.get<bool>() ? "true" : "false";
  return v.dump();
}

template <typename T>
T config_num(const json& cfg, const std::string& key, T fallback) {
  return cfg.contains(key) ? cfg.at(key).get<T>() : fallback;
}

//! Default Normal block means spread over [-1, 1]; matches the two-cluster
//! table (-1, 0, 1) with unit standard deviations.
BlockPairTable<std::pair<double, double>> default_normal_params(int K) {
  BlockPairTable<std::pair<double, double>> tab(K);
  for (int idx = 0; idx < tab.num_pairs(); ++idx) {
    const auto [k, l] = tab.pair_of(idx);
    const double mean = K == 1 ? 0.0
                               : (static_cast<double>(k + l) - (K - 1)) /
                                     static_cast<double>(K - 1);
    tab.flat(idx) = {mean, 1.0};
  }
  return tab;
}

BlockPairTable<std::pair<double, double>> default_gamma_params(int K) {
  if (K != 2)
    throw InvalidConfig(
        "no default Gamma block parameters for K != 2; pass --block-params");
  BlockPairTable<std::pair<double, double>> tab(2);
  tab.at(0, 0) = {2.0, 1.2};
  tab.at(0, 1) = {8.0, 2.9};
  tab.at(1, 1) = {20.0, 4.7};
  return tab;
}

GeneratorConfig build_generator(int n, int K, const std::string& pi_str,
                                const std::string& theta_str,
                                const std::string& kind_str,
                                const std::string& block_params_str,
                                std::uint64_t seed) {
  GeneratorConfig gen;
  gen.n = n;
  gen.K = K;
  gen.seed = seed;
  if (pi_str.empty()) {
    gen.pi = Eigen::VectorXd::Constant(K, 1.0 / K);
  } else {
    const auto pi = parse_double_list(pi_str);
    gen.pi = Eigen::Map<const Eigen::VectorXd>(pi.data(), pi.size());
  }
  const auto theta = parse_double_list(theta_str);
  gen.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), theta.size());

  gen.weight_model.kind = kind_str == "normal"  ? WeightKind::Normal
                          : kind_str == "gamma" ? WeightKind::Gamma
                          : kind_str == "none"
                              ? WeightKind::None
                              : throw InvalidConfig("unknown weight kind: " + kind_str);
  if (gen.weight_model.kind != WeightKind::None) {
    if (block_params_str.empty()) {
      gen.weight_model.block_params = gen.weight_model.kind == WeightKind::Normal
                                          ? default_normal_params(K)
                                          : default_gamma_params(K);
    } else {
      const json arr = json::parse(block_params_str);
      BlockPairTable<std::pair<double, double>> tab(K);
      if (static_cast<int>(arr.size()) != tab.num_pairs())
        throw InvalidConfig("block-params must list K(K+1)/2 [p1,p2] pairs");
      for (int idx = 0; idx < tab.num_pairs(); ++idx)
        tab.flat(idx) = {arr[idx][0].get<double>(), arr[idx][1].get<double>()};
      gen.weight_model.block_params = tab;
    }
  }
  return gen;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"nonparametric weighted network clustering"};
  app.require_subcommand(1);

  json cfg;
  try {
    cfg = load_config(argc, argv);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }

  std::string config_path; // consumed here; value already loaded above
  app.add_option("--config", config_path, "JSON config file (flags win)");

  // ---- simulate ----
  auto* sim = app.add_subcommand("simulate", "sample a planted network");
  int sim_n = config_num<int>(cfg, "n", 100);
  int sim_k = config_num<int>(cfg, "k", 2);
  std::string sim_pi = config_str(cfg, "pi", "");
  std::string sim_theta = config_str(cfg, "theta", "-1,1");
  std::string sim_kind = config_str(cfg, "weight_kind", "normal");
  std::string sim_block = config_str(cfg, "block_params", "");
  std::uint64_t sim_seed = config_num<std::uint64_t>(cfg, "seed", 0);
  std::string sim_out = config_str(cfg, "out_dir", "sim_out");
  sim->add_option("--n", sim_n, "node count");
  sim->add_option("--k", sim_k, "cluster count");
  sim->add_option("--pi", sim_pi, "mixture proportions, comma list (default uniform)");
  sim->add_option("--theta", sim_theta, "sparsity parameters, comma list");
  sim->add_option("--weight-kind", sim_kind, "normal | gamma | none");
  sim->add_option("--block-params", sim_block,
                  "JSON [[p1,p2],...] per unordered block pair");
  auto* sim_seed_opt = sim->add_option("--seed", sim_seed, "RNG seed");
  if (!cfg.contains("seed"))
    sim_seed_opt->required();
  sim->add_option("--out-dir", sim_out, "output directory");
  sim->add_option("--config", config_path, "JSON config file (flags win)");

  // ---- shared fit flags ----
  const auto add_fit_flags = [&cfg](CLI::App* cmd, FitConfig& fit_cfg,
                                    std::string& mode_str) {
    fit_cfg.K = config_num<int>(cfg, "k", fit_cfg.K);
    fit_cfg.max_iter = config_num<int>(cfg, "max_iter", fit_cfg.max_iter);
    fit_cfg.elbo_rel_tol = config_num<double>(cfg, "tol", fit_cfg.elbo_rel_tol);
    fit_cfg.restarts = config_num<int>(cfg, "restarts", fit_cfg.restarts);
    fit_cfg.mm_inner_iters = config_num<int>(cfg, "mm_iters", fit_cfg.mm_inner_iters);
    fit_cfg.seed = config_num<std::uint64_t>(cfg, "seed", fit_cfg.seed);
    fit_cfg.density_degree = config_num<int>(cfg, "degree", fit_cfg.density_degree);
    fit_cfg.density_grid_size =
        config_num<int>(cfg, "grid_size", fit_cfg.density_grid_size);
    mode_str = config_str(cfg, "weight_mode", mode_str);
    cmd->add_option("--k", fit_cfg.K, "cluster count");
    cmd->add_option("--max-iter", fit_cfg.max_iter, "outer EM iterations");
    cmd->add_option("--tol", fit_cfg.elbo_rel_tol, "relative ELBO tolerance");
    cmd->add_option("--restarts", fit_cfg.restarts, "random restarts");
    cmd->add_option("--mm-iters", fit_cfg.mm_inner_iters, "MM sweeps per E-step");
    cmd->add_option("--seed", fit_cfg.seed, "RNG seed");
    cmd->add_option("--degree", fit_cfg.density_degree, "local polynomial degree");
    cmd->add_option("--grid-size", fit_cfg.density_grid_size, "density grid size");
    cmd->add_option("--weight-mode", mode_str,
                    "nonparametric | normal | gamma | none");
  };

  // ---- fit ----
  auto* fitc = app.add_subcommand("fit", "fit the model to an edge list");
  cli::FitOptions fit_opts;
  fit_opts.edges_path = config_str(cfg, "edges", "");
  fit_opts.n_override = config_num<int>(cfg, "n", -1);
  fit_opts.out_dir = config_str(cfg, "out_dir", "fit_out");
  std::string fit_mode = "nonparametric";
  auto* fit_edges_opt = fitc->add_option("--edges", fit_opts.edges_path, "edge list CSV");
  if (!cfg.contains("edges"))
    fit_edges_opt->required();
  fitc->add_option("--n", fit_opts.n_override, "node count override");
  fitc->add_option("--out-dir", fit_opts.out_dir, "output directory");
  add_fit_flags(fitc, fit_opts.fit, fit_mode);
  fitc->add_option("--config", config_path, "JSON config file (flags win)");

  // ---- select ----
  auto* sel = app.add_subcommand("select", "choose K by the ICL criterion");
  cli::SelectOptions sel_opts;
  sel_opts.edges_path = config_str(cfg, "edges", "");
  sel_opts.n_override = config_num<int>(cfg, "n", -1);
  sel_opts.out_dir = config_str(cfg, "out_dir", "select_out");
  std::string sel_mode = "nonparametric";
  std::string sel_range = config_str(cfg, "k_range", "1,2,3,4");
  auto* sel_edges_opt = sel->add_option("--edges", sel_opts.edges_path, "edge list CSV");
  if (!cfg.contains("edges"))
    sel_edges_opt->required();
  sel->add_option("--n", sel_opts.n_override, "node count override");
  sel->add_option("--k-range", sel_range, "comma list of K values");
  sel->add_option("--out-dir", sel_opts.out_dir, "output directory");
  add_fit_flags(sel, sel_opts.fit, sel_mode);
  sel->add_option("--config", config_path, "JSON config file (flags win)");

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "compare a fit against the truth");
  cli::EvalOptions eval_opts;
  eval_opts.fit_path = config_str(cfg, "fit", "");
  eval_opts.edges_path = config_str(cfg, "edges", "");
  eval_opts.n_override = config_num<int>(cfg, "n", -1);
  eval_opts.truth_path = config_str(cfg, "truth", "");
  eval_opts.truth_labels_path = config_str(cfg, "truth_labels", "");
  eval_opts.out_dir = config_str(cfg, "out_dir", "eval_out");
  auto* ev_fit_opt = ev->add_option("--fit", eval_opts.fit_path, "fit.json path");
  if (!cfg.contains("fit"))
    ev_fit_opt->required();
  auto* ev_edges_opt = ev->add_option("--edges", eval_opts.edges_path, "edge list CSV");
  if (!cfg.contains("edges"))
    ev_edges_opt->required();
  ev->add_option("--n", eval_opts.n_override, "node count override");
  ev->add_option("--truth", eval_opts.truth_path, "truth.json path");
  ev->add_option("--truth-labels", eval_opts.truth_labels_path, "true labels CSV");
  ev->add_option("--out-dir", eval_opts.out_dir, "output directory");
  ev->add_option("--config", config_path, "JSON config file (flags win)");

  // ---- bench ----
  auto* bench = app.add_subcommand("bench", "replicated simulate/fit/eval sweep");
  cli::BenchOptions bench_opts;
  int bench_n = config_num<int>(cfg, "n", 100);
  int bench_k = config_num<int>(cfg, "k", 2);
  std::string bench_pi = config_str(cfg, "pi", "");
  std::string bench_theta = config_str(cfg, "theta", "-1,1");
  std::string bench_kind = config_str(cfg, "weight_kind", "normal");
  std::string bench_block = config_str(cfg, "block_params", "");
  std::string bench_modes = config_str(cfg, "modes", "nonparametric,binary,oracle");
  std::string bench_mode_unused;
  bench_opts.replicates = config_num<int>(cfg, "replicates", 20);
  bench_opts.base_seed = config_num<std::uint64_t>(cfg, "base_seed", 0);
  bench_opts.out_dir = config_str(cfg, "out_dir", "bench_out");
  bench->add_option("--n", bench_n, "node count");
  bench->add_option("--pi", bench_pi, "mixture proportions (default uniform)");
  bench->add_option("--theta", bench_theta, "sparsity parameters, comma list");
  bench->add_option("--weight-kind", bench_kind, "normal | gamma | none");
  bench->add_option("--block-params", bench_block, "JSON [[p1,p2],...]");
  bench->add_option("--replicates", bench_opts.replicates, "replicate count");
  auto* bench_seed_opt =
      bench->add_option("--base-seed", bench_opts.base_seed, "base RNG seed");
  if (!cfg.contains("base_seed"))
    bench_seed_opt->required();
  bench->add_option("--modes", bench_modes,
                    "comma list of nonparametric | binary | oracle");
  bench->add_option("--out-dir", bench_opts.out_dir, "output directory");
  add_fit_flags(bench, bench_opts.fit, bench_mode_unused);
  bench->add_option("--config", config_path, "JSON config file (flags win)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      cli::SimulateOptions opts;
      opts.gen = build_generator(sim_n, sim_k, sim_pi, sim_theta, sim_kind,
                                 sim_block, sim_seed);
      opts.out_dir = sim_out;
      return cli::cmd_simulate(opts);
    }
    if (fitc->parsed()) {
      fit_opts.fit.weight_mode = weight_mode_from_string(fit_mode);
      return cli::cmd_fit(fit_opts);
    }
    if (sel->parsed()) {
      sel_opts.fit.weight_mode = weight_mode_from_string(sel_mode);
      sel_opts.k_range = parse_int_list(sel_range);
      return cli::cmd_select(sel_opts);
    }
    if (ev->parsed()) {
      return cli::cmd_eval(eval_opts);
    }
    if (bench->parsed()) {
      bench_opts.gen = build_generator(bench_n, bench_k, bench_pi, bench_theta,
                                       bench_kind, bench_block, 0);
      bench_opts.modes = parse_string_list(bench_modes);
      return cli::cmd_bench(bench_opts);
    }
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 1;
}
