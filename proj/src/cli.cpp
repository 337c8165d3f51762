#include "npwnet/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "npwnet/metrics.hpp"

namespace npwnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open for reading: " + path);
  return in;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw IoError("cannot create directory " + dir + ": " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  return line;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ','))
    fields.push_back(field);
  if (!line.empty() && line.back() == ',')
    fields.emplace_back();
  return fields;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size())
      throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw MalformedEdgeList(where + ": cannot parse number '" + s + "'");
  }
}

long parse_long(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size())
      throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw MalformedEdgeList(where + ": cannot parse integer '" + s + "'");
  }
}

json block_params_to_json(const BlockPairTable<std::pair<double, double>>& tab) {
  json arr = json::array();
  for (int idx = 0; idx < tab.num_pairs(); ++idx) {
    const auto [p1, p2] = tab.flat(idx);
    arr.push_back(json::array({p1, p2}));
  }
  return arr;
}

BlockPairTable<std::pair<double, double>> block_params_from_json(const json& arr,
                                                                 int K) {
  BlockPairTable<std::pair<double, double>> tab(K);
  if (static_cast<int>(arr.size()) != tab.num_pairs())
    throw InvalidConfig("block_params must list K(K+1)/2 pairs");
  for (int idx = 0; idx < tab.num_pairs(); ++idx)
    tab.flat(idx) = {arr[idx][0].get<double>(), arr[idx][1].get<double>()};
  return tab;
}

json fit_config_to_json(const FitConfig& cfg) {
  return json{{"K", cfg.K},
              {"max_iter", cfg.max_iter},
              {"elbo_rel_tol", cfg.elbo_rel_tol},
              {"restarts", cfg.restarts},
              {"mm_inner_iters", cfg.mm_inner_iters},
              {"seed", cfg.seed},
              {"density_degree", cfg.density_degree},
              {"density_grid_size", cfg.density_grid_size},
              {"weight_mode", to_string(cfg.weight_mode)}};
}

std::string density_file_name(int k, int l) {
  return "density_" + std::to_string(k) + "_" + std::to_string(l) + ".csv";
}

//! Closed-form block density of a generator truth, for KS evaluation.
std::function<double(double)> truth_density(const GeneratorConfig& truth, int k,
                                            int l) {
  const auto [p1, p2] = truth.weight_model.block_params.at(k, l);
  if (truth.weight_model.kind == WeightKind::Normal) {
    return [p1, p2](double w) {
      const double z = (w - p1) / p2;
      return std::exp(-0.5 * z * z) / (p2 * std::sqrt(2.0 * M_PI));
    };
  }
  return [p1, p2](double w) {
    if (w <= 0.0)
      return 0.0;
    return std::exp(p1 * std::log(p2) + (p1 - 1.0) * std::log(w) - p2 * w -
                    std::lgamma(p1));
  };
}

} // namespace

void write_edges_csv(const std::string& path, const WeightedNetwork& net) {
  std::ofstream out = open_out(path);
  out << "i,j,w\n";
  for (const Edge& e : net.edges())
    out << e.i << "," << e.j << "," << fmt17(e.w) << "\n";
}

WeightedNetwork read_edges_csv(const std::string& path, int n_override) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != "i,j,w")
    throw MalformedEdgeList(path + ": line 1: expected header 'i,j,w'");
  std::vector<Edge> edges;
  int max_index = -1;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty())
      continue;
    const std::string where = path + ": line " + std::to_string(line_no);
    const auto fields = split_csv(line);
    if (fields.size() != 3)
      throw MalformedEdgeList(where + ": expected 3 fields, got " +
                              std::to_string(fields.size()));
    const long i = parse_long(fields[0], where);
    const long j = parse_long(fields[1], where);
    const double w = parse_double(fields[2], where);
    if (i < 0 || j < 0)
      throw MalformedEdgeList(where + ": negative node index");
    edges.push_back({static_cast<int>(i), static_cast<int>(j), w});
    max_index = std::max<long>(max_index, std::max(i, j));
  }
  int n = std::max(n_override, static_cast<int>(max_index) + 1);
  if (n < 2)
    throw MalformedEdgeList(path + ": cannot infer node count; pass --n");
  return build_network(n, edges);
}

void write_labels_csv(const std::string& path, const Labels& labels) {
  std::ofstream out = open_out(path);
  out << "node,cluster\n";
  for (int i = 0; i < labels.size(); ++i)
    out << i << "," << labels[i] << "\n";
}

Labels read_labels_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != "node,cluster")
    throw MalformedEdgeList(path + ": line 1: expected header 'node,cluster'");
  std::vector<std::pair<long, long>> rows;
  long max_node = -1;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty())
      continue;
    const std::string where = path + ": line " + std::to_string(line_no);
    const auto fields = split_csv(line);
    if (fields.size() != 2)
      throw MalformedEdgeList(where + ": expected 2 fields");
    rows.emplace_back(parse_long(fields[0], where), parse_long(fields[1], where));
    max_node = std::max(max_node, rows.back().first);
  }
  Labels labels = Labels::Constant(max_node + 1, -1);
  for (const auto& [node, cluster] : rows) {
    if (node < 0 || cluster < 0)
      throw MalformedEdgeList(path + ": negative node or cluster id");
    labels[node] = static_cast<int>(cluster);
  }
  if ((labels.array() < 0).any())
    throw MalformedEdgeList(path + ": missing rows for some nodes");
  return labels;
}

void write_density_csv(const std::string& path, const DensityEstimate& est) {
  std::ofstream out = open_out(path);
  out << "w,log_f,f\n";
  for (int g = 0; g < est.grid.size(); ++g)
    out << fmt17(est.grid[g]) << "," << fmt17(est.log_density[g]) << ","
        << fmt17(std::exp(est.log_density[g])) << "\n";
}

DensityEstimate read_density_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != "w,log_f,f")
    throw MalformedEdgeList(path + ": line 1: expected header 'w,log_f,f'");
  std::vector<double> grid, logf;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty())
      continue;
    const std::string where = path + ": line " + std::to_string(line_no);
    const auto fields = split_csv(line);
    if (fields.size() != 3)
      throw MalformedEdgeList(where + ": expected 3 fields");
    grid.push_back(parse_double(fields[0], where));
    logf.push_back(parse_double(fields[1], where));
  }
  DensityEstimate est;
  est.grid = Eigen::Map<Eigen::VectorXd>(grid.data(), grid.size());
  est.log_density = Eigen::Map<Eigen::VectorXd>(logf.data(), logf.size());
  if (est.grid.size() < 2)
    throw MalformedEdgeList(path + ": density grid too small");
  est.support_lo = est.grid[0];
  est.support_hi = est.grid[est.grid.size() - 1];
  est.integral = 1.0;
  return est;
}

void write_truth_json(const std::string& path, const GeneratorConfig& cfg) {
  json doc{{"n", cfg.n},
           {"K", cfg.K},
           {"pi", std::vector<double>(cfg.pi.data(), cfg.pi.data() + cfg.pi.size())},
           {"theta", std::vector<double>(cfg.theta.data(),
                                         cfg.theta.data() + cfg.theta.size())},
           {"weight_kind", cfg.weight_model.kind == WeightKind::Normal ? "normal"
                           : cfg.weight_model.kind == WeightKind::Gamma ? "gamma"
                                                                        : "none"},
           {"seed", cfg.seed}};
  if (cfg.weight_model.kind != WeightKind::None)
    doc["block_params"] = block_params_to_json(cfg.weight_model.block_params);
  std::ofstream out = open_out(path);
  out << doc.dump(2) << "\n";
}

GeneratorConfig read_truth_json(const std::string& path) {
  std::ifstream in = open_in(path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  GeneratorConfig cfg;
  cfg.n = doc.at("n").get<int>();
  cfg.K = doc.at("K").get<int>();
  const auto pi = doc.at("pi").get<std::vector<double>>();
  const auto theta = doc.at("theta").get<std::vector<double>>();
  cfg.pi = Eigen::Map<const Eigen::VectorXd>(pi.data(), pi.size());
  cfg.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), theta.size());
  cfg.seed = doc.at("seed").get<std::uint64_t>();
  const std::string kind = doc.at("weight_kind").get<std::string>();
  cfg.weight_model.kind = kind == "normal"  ? WeightKind::Normal
                          : kind == "gamma" ? WeightKind::Gamma
                                            : WeightKind::None;
  if (cfg.weight_model.kind != WeightKind::None)
    cfg.weight_model.block_params =
        block_params_from_json(doc.at("block_params"), cfg.K);
  return cfg;
}

void write_fit_json(const std::string& path, const FitResult& result,
                    const FitConfig& config) {
  const Responsibilities& g = result.gamma;
  std::vector<double> gamma_flat;
  gamma_flat.reserve(g.size());
  for (int i = 0; i < g.rows(); ++i)
    for (int k = 0; k < g.cols(); ++k)
      gamma_flat.push_back(g(i, k));

  json doc{{"theta", std::vector<double>(result.params.theta.data(),
                                         result.params.theta.data() +
                                             result.params.theta.size())},
           {"pi", std::vector<double>(result.params.pi.data(),
                                      result.params.pi.data() +
                                          result.params.pi.size())},
           {"labels", std::vector<int>(result.hard_labels.data(),
                                       result.hard_labels.data() +
                                           result.hard_labels.size())},
           {"gamma", gamma_flat},
           {"elbo_trace", result.elbo_trace},
           {"converged", result.converged},
           {"config", fit_config_to_json(config)},
           {"seed", config.seed},
           {"weight_mode", to_string(result.params.weight_mode)},
           {"warnings", result.warnings}};
  if (result.icl.has_value())
    doc["icl"] = *result.icl;
  else
    doc["icl"] = nullptr;
  if (result.params.weight_mode == WeightMode::Normal ||
      result.params.weight_mode == WeightMode::Gamma)
    doc["block_params"] = block_params_to_json(result.params.block_params);
  std::ofstream out = open_out(path);
  out << doc.dump(2) << "\n";
}

int cmd_simulate(const SimulateOptions& opts) {
  ensure_dir(opts.out_dir);
  const Labels z = sample_memberships(opts.gen);
  const WeightedNetwork net = sample_network(z, opts.gen);
  write_edges_csv(join(opts.out_dir, "edges.csv"), net);
  write_labels_csv(join(opts.out_dir, "labels.csv"), z);
  write_truth_json(join(opts.out_dir, "truth.json"), opts.gen);
  return 0;
}

int cmd_fit(const FitOptions& opts) {
  const WeightedNetwork net = read_edges_csv(opts.edges_path, opts.n_override);
  FitResult result = fit(net, opts.fit);
  ensure_dir(opts.out_dir);
  write_fit_json(join(opts.out_dir, "fit.json"), result, opts.fit);
  write_labels_csv(join(opts.out_dir, "assignments.csv"), result.hard_labels);
  if (result.params.weight_mode == WeightMode::Nonparametric &&
      !result.params.densities.empty()) {
    const int K = result.params.num_clusters();
    for (int k = 0; k < K; ++k)
      for (int l = k; l < K; ++l)
        write_density_csv(join(opts.out_dir, density_file_name(k, l)),
                          result.params.densities.at(k, l));
  }
  return result.converged ? 0 : 2;
}

int cmd_select(const SelectOptions& opts) {
  const WeightedNetwork net = read_edges_csv(opts.edges_path, opts.n_override);
  const IclReport report = select_k(net, opts.k_range, opts.fit);
  ensure_dir(opts.out_dir);

  {
    std::ofstream out = open_out(join(opts.out_dir, "icl.csv"));
    out << "K,icl,final_elbo,converged\n";
    for (const IclEntry& e : report.per_k)
      out << e.K << "," << fmt17(e.icl) << "," << fmt17(e.final_elbo) << ","
          << (e.converged ? "true" : "false") << "\n";
  }
  {
    json arr = json::array();
    for (const IclEntry& e : report.per_k)
      arr.push_back(json{{"K", e.K},
                         {"icl", e.icl},
                         {"final_elbo", e.final_elbo},
                         {"converged", e.converged},
                         {"failed", e.failed},
                         {"error", e.error}});
    json doc{{"per_k", arr}, {"best_k", report.best_k}};
    std::ofstream out = open_out(join(opts.out_dir, "icl.json"));
    out << doc.dump(2) << "\n";
  }
  std::cout << "best_k " << report.best_k << "\n";
  return 0;
}

namespace {

//! Metric rows shared by cmd_eval and cmd_bench.
std::vector<std::pair<std::string, double>> evaluate_fit(
    const WeightedNetwork& net, const Labels& fit_labels,
    const Eigen::VectorXd& fit_theta,
    const BlockPairTable<DensityEstimate>* fit_densities,
    const Labels* truth_labels, const GeneratorConfig* truth) {
  std::vector<std::pair<std::string, double>> rows;
  if (truth_labels != nullptr) {
    if (truth_labels->size() != fit_labels.size())
      throw MissingTruth("eval: truth labels length does not match fit");
    rows.emplace_back("log_ri", std::log(rand_index(*truth_labels, fit_labels)));
  }
  if (truth != nullptr) {
    rows.emplace_back("log_rase_theta", rase_theta(fit_theta, truth->theta));
    if (fit_densities != nullptr && !fit_densities->empty() &&
        truth->weight_model.kind != WeightKind::None &&
        truth->K == static_cast<int>(fit_theta.size())) {
      const std::vector<int> perm = best_theta_permutation(fit_theta, truth->theta);
      for (int k = 0; k < truth->K; ++k) {
        for (int l = k; l < truth->K; ++l) {
          const auto f_true = truth_density(*truth, k, l);
          const double ks = ks_statistic(fit_densities->at(perm[k], perm[l]), f_true);
          rows.emplace_back("ks_" + std::to_string(k) + "_" + std::to_string(l), ks);
        }
      }
    }
  }
  if (net.num_edges() >= 3) {
    try {
      const auto [skew, kurt] = descriptive_stats(net.weights());
      rows.emplace_back("skewness", skew);
      rows.emplace_back("kurtosis", kurt);
    } catch (const DegenerateSample&) {
      // constant weights: no descriptive rows
    }
  }
  return rows;
}

void write_metric_files(const std::string& out_dir,
                        const std::vector<std::pair<std::string, double>>& rows) {
  {
    std::ofstream out = open_out(join(out_dir, "metrics.csv"));
    out << "metric,value\n";
    for (const auto& [name, value] : rows)
      out << name << "," << fmt17(value) << "\n";
  }
  json doc = json::object();
  for (const auto& [name, value] : rows)
    doc[name] = value;
  std::ofstream out = open_out(join(out_dir, "metrics.json"));
  out << doc.dump(2) << "\n";
}

} // namespace

int cmd_eval(const EvalOptions& opts) {
  const WeightedNetwork net = read_edges_csv(opts.edges_path, opts.n_override);

  std::ifstream in = open_in(opts.fit_path);
  json fit_doc;
  try {
    in >> fit_doc;
  } catch (const json::exception& e) {
    throw IoError(opts.fit_path + ": " + e.what());
  }
  const auto labels_vec = fit_doc.at("labels").get<std::vector<int>>();
  Labels fit_labels = Eigen::Map<const Labels>(labels_vec.data(), labels_vec.size());
  const auto theta_vec = fit_doc.at("theta").get<std::vector<double>>();
  const Eigen::VectorXd fit_theta =
      Eigen::Map<const Eigen::VectorXd>(theta_vec.data(), theta_vec.size());
  const std::string mode = fit_doc.at("weight_mode").get<std::string>();

  // densities live next to fit.json
  BlockPairTable<DensityEstimate> densities;
  if (mode == "nonparametric") {
    const int K = static_cast<int>(fit_theta.size());
    const std::string dir = fs::path(opts.fit_path).parent_path().string();
    densities = BlockPairTable<DensityEstimate>(K);
    bool all_found = true;
    for (int k = 0; k < K && all_found; ++k)
      for (int l = k; l < K && all_found; ++l) {
        const std::string p = join(dir, density_file_name(k, l));
        if (fs::exists(p))
          densities.at(k, l) = read_density_csv(p);
        else
          all_found = false;
      }
    if (!all_found)
      densities = BlockPairTable<DensityEstimate>();
  }

  Labels truth_labels;
  const bool have_labels = !opts.truth_labels_path.empty();
  if (have_labels)
    truth_labels = read_labels_csv(opts.truth_labels_path);
  GeneratorConfig truth;
  const bool have_truth = !opts.truth_path.empty();
  if (have_truth)
    truth = read_truth_json(opts.truth_path);

  const auto rows = evaluate_fit(net, fit_labels, fit_theta,
                                 densities.empty() ? nullptr : &densities,
                                 have_labels ? &truth_labels : nullptr,
                                 have_truth ? &truth : nullptr);
  ensure_dir(opts.out_dir);
  write_metric_files(opts.out_dir, rows);
  return 0;
}

int cmd_bench(const BenchOptions& opts) {
  if (opts.replicates < 1)
    throw InvalidConfig("bench: need at least one replicate");
  ensure_dir(opts.out_dir);
  std::ofstream out = open_out(join(opts.out_dir, "bench.csv"));
  out << "replicate,mode,metric,value\n";

  for (int r = 0; r < opts.replicates; ++r) {
    GeneratorConfig gen = opts.gen;
    gen.seed = opts.base_seed + static_cast<std::uint64_t>(r);
    const Labels z = sample_memberships(gen);
    const WeightedNetwork net = sample_network(z, gen);

    for (const std::string& mode_name : opts.modes) {
      WeightMode mode;
      if (mode_name == "nonparametric")
        mode = WeightMode::Nonparametric;
      else if (mode_name == "binary")
        mode = WeightMode::None;
      else if (mode_name == "oracle")
        mode = gen.weight_model.kind == WeightKind::Normal ? WeightMode::Normal
               : gen.weight_model.kind == WeightKind::Gamma ? WeightMode::Gamma
                                                            : WeightMode::None;
      else
        throw InvalidConfig("bench: unknown mode " + mode_name);

      try {
        FitConfig cfg = opts.fit;
        cfg.weight_mode = mode;
        cfg.seed = gen.seed;
        const FitResult res = fit(net, cfg);
        const auto rows = evaluate_fit(
            net, res.hard_labels, res.params.theta,
            res.params.weight_mode == WeightMode::Nonparametric
                ? &res.params.densities
                : nullptr,
            &z, &gen);
        for (const auto& [name, value] : rows)
          out << r << "," << mode_name << "," << name << "," << fmt17(value)
              << "\n";
      } catch (const Error& err) {
        out << r << "," << mode_name << ",failed,1\n";
        std::cerr << "bench replicate " << r << " mode " << mode_name
                  << " failed: " << err.what() << "\n";
      }
    }
  }
  return 0;
}

} // namespace npwnet::cli
