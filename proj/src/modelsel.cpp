#include "npwnet/modelsel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace npwnet {

namespace {

constexpr double kPiFloor = 1e-12;

} // namespace

double icl(const WeightedNetwork& net, const FitResult& fit_result) {
  const ModelParams& params = fit_result.params;
  const int K = params.num_clusters();
  const int n = net.num_nodes();
  const Labels& z = fit_result.hard_labels;
  if (z.size() != n)
    throw ShapeMismatch("icl: hard labels missing or wrong length");
  if (params.weight_mode == WeightMode::Nonparametric &&
      net.num_edges() > 0 &&
      (params.densities.empty() || params.densities.num_clusters() != K))
    throw MissingDensities("icl: nonparametric fit without density estimates");

  // complete log-likelihood at the hard assignment
  double loglik = 0.0;
  for (int i = 0; i < n; ++i)
    loglik += std::log(std::max(params.pi[z[i]], kPiFloor));

  Eigen::MatrixXi has_edge = Eigen::MatrixXi::Zero(n, n);
  for (const Edge& e : net.edges())
    has_edge(e.i, e.j) = has_edge(e.j, e.i) = 1;

  Eigen::MatrixXd log_p(K, K), log_1mp(K, K);
  for (int k = 0; k < K; ++k) {
    for (int l = 0; l < K; ++l) {
      const double eta = params.theta[k] + params.theta[l];
      log_p(k, l) = eta >= 0.0 ? -std::log1p(std::exp(-eta))
                               : eta - std::log1p(std::exp(eta));
      log_1mp(k, l) = -eta >= 0.0 ? -std::log1p(std::exp(eta))
                                  : -eta - std::log1p(std::exp(-eta));
    }
  }

  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      loglik += has_edge(i, j) ? log_p(z[i], z[j]) : log_1mp(z[i], z[j]);

  if (params.has_weight_terms()) {
    for (const Edge& e : net.edges())
      loglik += params.log_density_at(z[e.i], z[e.j], e.w);
  }

  const double penalty =
      (K - 1) * std::log(static_cast<double>(n)) +
      K * std::log(static_cast<double>(n) * (n - 1) / 2.0);
  return loglik - penalty;
}

IclReport select_k(const WeightedNetwork& net, const std::vector<int>& k_range,
                   const FitConfig& config) {
  if (k_range.empty())
    throw InvalidConfig("select_k: empty K range");
  std::vector<int> ks = k_range;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  IclReport report;
  for (int k : ks) {
    IclEntry entry;
    entry.K = k;
    try {
      if (k < 1)
        throw InvalidConfig("select_k: K must be >= 1");
      FitConfig cfg = config;
      cfg.K = k;
      FitResult res = fit(net, cfg);
      entry.final_elbo = res.elbo_trace.empty()
                             ? -std::numeric_limits<double>::infinity()
                             : res.elbo_trace.back();
      entry.converged = res.converged;
      entry.icl = icl(net, res);
    } catch (const Error& err) {
      entry.failed = true;
      entry.error = err.what();
      entry.icl = -std::numeric_limits<double>::infinity();
    }
    report.per_k.push_back(std::move(entry));
  }

  // prefer converged entries; fall back to anything that produced a value
  double best = -std::numeric_limits<double>::infinity();
  int best_k = 0;
  for (const IclEntry& e : report.per_k) {
    if (e.failed || !e.converged)
      continue;
    if (e.icl > best) {
      best = e.icl;
      best_k = e.K;
    }
  }
  if (best_k == 0) {
    for (const IclEntry& e : report.per_k) {
      if (e.failed)
        continue;
      if (e.icl > best) {
        best = e.icl;
        best_k = e.K;
      }
    }
  }
  report.best_k = best_k;
  return report;
}

} // namespace npwnet
