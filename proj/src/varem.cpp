#include "npwnet/varem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "npwnet/parallel.hpp"
#include "npwnet/rng.hpp"

namespace npwnet {

namespace {

constexpr double kGammaFloor = 1e-10;
constexpr double kThetaCap = 15.0;
constexpr double kBlockMassEps = 1e-8;
constexpr double kPiFloor = 1e-300;
const double kLogDensityFloor = std::log(kDensityFloor);

double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_shapes(const WeightedNetwork& net, const Responsibilities& gamma,
                  const ModelParams& params) {
  const int K = params.num_clusters();
  if (gamma.rows() != net.num_nodes() || gamma.cols() != K ||
      params.pi.size() != K)
    throw ShapeMismatch("varem: gamma / theta / pi shapes disagree");
  if (params.weight_mode == WeightMode::Nonparametric &&
      !params.densities.empty() && params.densities.num_clusters() != K)
    throw ShapeMismatch("varem: density table has wrong K");
  if ((params.weight_mode == WeightMode::Normal ||
       params.weight_mode == WeightMode::Gamma) &&
      params.block_params.num_clusters() != K)
    throw ShapeMismatch("varem: block parameter table has wrong K");
}

struct BernoulliTables {
  Eigen::MatrixXd log_p;
  Eigen::MatrixXd log_1mp;
};

BernoulliTables bernoulli_tables(const Eigen::VectorXd& theta) {
  const int K = static_cast<int>(theta.size());
  BernoulliTables t;
  t.log_p.resize(K, K);
  t.log_1mp.resize(K, K);
  for (int k = 0; k < K; ++k) {
    for (int l = 0; l < K; ++l) {
      const double eta = theta[k] + theta[l];
      t.log_p(k, l) = log_sigmoid(eta);
      t.log_1mp(k, l) = log_sigmoid(-eta);
    }
  }
  return t;
}

//! Flat pair index per ordered (k, l), without bounds checks in hot loops.
Eigen::MatrixXi pair_index_table(int K) {
  BlockPairTable<char> probe(K);
  Eigen::MatrixXi idx(K, K);
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < K; ++l)
      idx(k, l) = probe.flat_index(k, l);
  return idx;
}

//! Per-edge, per-pair weight log-terms log f_kl(w) - (int f_kl - 1).
//! Empty when the mode carries no weight model.
Eigen::MatrixXd edge_log_weight_terms(const WeightedNetwork& net,
                                      const ModelParams& params) {
  if (!params.has_weight_terms() || net.num_edges() == 0)
    return {};
  if (params.weight_mode == WeightMode::Nonparametric && params.densities.empty())
    return {};
  const int K = params.num_clusters();
  const int npairs = K * (K + 1) / 2;
  BlockPairTable<double> probe(K);
  Eigen::MatrixXd lw(net.num_edges(), npairs);
  for (int k = 0; k < K; ++k) {
    for (int l = k; l < K; ++l) {
      const int idx = probe.flat_index(k, l);
      const double penalty = params.weight_penalty(k, l);
      for (int e = 0; e < net.num_edges(); ++e)
        lw(e, idx) = params.log_density_at(k, l, net.edges()[e].w) - penalty;
    }
  }
  return lw;
}

//! A = sum over edges of gamma_i gamma_j^T + gamma_j gamma_i^T,
//! M = sum over ordered pairs i != j of gamma_i gamma_j^T.
void gamma_aggregates(const WeightedNetwork& net, const Responsibilities& gamma,
                      Eigen::MatrixXd& edge_agg, Eigen::MatrixXd& dyad_agg) {
  const int K = static_cast<int>(gamma.cols());
  edge_agg = Eigen::MatrixXd::Zero(K, K);
  for (const Edge& e : net.edges()) {
    edge_agg.noalias() += gamma.row(e.i).transpose() * gamma.row(e.j);
    edge_agg.noalias() += gamma.row(e.j).transpose() * gamma.row(e.i);
  }
  const Eigen::VectorXd col_sums = gamma.colwise().sum();
  dyad_agg = col_sums * col_sums.transpose() - gamma.transpose() * gamma;
}

double bernoulli_value(const Eigen::MatrixXd& edge_agg,
                       const Eigen::MatrixXd& dyad_agg,
                       const BernoulliTables& tables) {
  return 0.5 * (edge_agg.cwiseProduct(tables.log_p).sum() +
                (dyad_agg - edge_agg).cwiseProduct(tables.log_1mp).sum());
}

//! Quadratic/linear coefficients of the minorizer, one (a, b) pair per node
//! and cluster, plus the gamma-free constant. Negative bilinear terms use
//! the AM-GM split; positive density terms use the square-completion bound
//! c uv >= c[(u^+v^)(u+v) - (u^+v^)^2/2 - u^2/2 - v^2/2].
struct SurrogateCoefficients {
  Eigen::MatrixXd a;
  Eigen::MatrixXd b;
  double constant{0.0};
};

SurrogateCoefficients build_surrogate(const WeightedNetwork& net,
                                      const Responsibilities& gamma_hat,
                                      const ModelParams& params,
                                      const Eigen::MatrixXd& lw) {
  const int n = net.num_nodes();
  const int K = params.num_clusters();
  const BernoulliTables tables = bernoulli_tables(params.theta);
  const Eigen::MatrixXi pidx = pair_index_table(K);

  const Eigen::MatrixXd& gh = gamma_hat;
  const Eigen::VectorXd col_sums = gh.colwise().sum();

  // Bernoulli part: S_ik = sum_{j != i} sum_l gh_jl lB(i,j,k,l) through the
  // all-dyads aggregate plus an edge correction.
  Eigen::MatrixXd nb = Eigen::MatrixXd::Zero(n, K);
  for (const Edge& e : net.edges()) {
    nb.row(e.i) += gh.row(e.j);
    nb.row(e.j) += gh.row(e.i);
  }
  const Eigen::MatrixXd others = (-gh).rowwise() + col_sums.transpose();
  Eigen::MatrixXd s = others * tables.log_1mp +
                      nb * (tables.log_p - tables.log_1mp).transpose();

  SurrogateCoefficients out;
  out.a = Eigen::MatrixXd::Zero(n, K);
  out.b = Eigen::MatrixXd::Zero(n, K);

  // Density terms, split by sign per (edge, k, l).
  Eigen::MatrixXd qa = Eigen::MatrixXd::Zero(n, K); // AM-GM numerators
  Eigen::MatrixXd pa = Eigen::MatrixXd::Zero(n, K); // positive quadratic sums
  Eigen::MatrixXd pb = Eigen::MatrixXd::Zero(n, K); // positive linear parts
  if (lw.size() > 0) {
    for (int e = 0; e < net.num_edges(); ++e) {
      const int i = net.edges()[e].i;
      const int j = net.edges()[e].j;
      for (int k = 0; k < K; ++k) {
        for (int l = 0; l < K; ++l) {
          const double c = lw(e, pidx(k, l));
          if (c <= 0.0) {
            qa(i, k) += gh(j, l) * c;
            qa(j, l) += gh(i, k) * c;
          } else {
            const double pair_mass = gh(i, k) + gh(j, l);
            pa(i, k) += c;
            pa(j, l) += c;
            pb(i, k) += c * pair_mass;
            pb(j, l) += c * pair_mass;
            out.constant -= 0.5 * c * pair_mass * pair_mass;
          }
        }
      }
    }
  }

  const double log_pi_floor = std::log(kPiFloor);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < K; ++k) {
      const double g = gh(i, k);
      out.a(i, k) = (s(i, k) + qa(i, k)) / (2.0 * g) - 1.0 / g - 0.5 * pa(i, k);
      const double log_pi =
          params.pi[k] > kPiFloor ? std::log(params.pi[k]) : log_pi_floor;
      out.b(i, k) = log_pi - std::log(g) + 1.0 + pb(i, k);
    }
  }
  return out;
}

double normal_log_pdf(double w, double mean, double sd) {
  const double z = (w - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.9189385332046727417803297;
}

double gamma_log_pdf(double w, double shape, double rate) {
  if (w <= 0.0)
    return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) + (shape - 1.0) * std::log(w) - rate * w -
         std::lgamma(shape);
}

} // namespace

std::string to_string(WeightMode mode) {
  switch (mode) {
  case WeightMode::Nonparametric:
    return "nonparametric";
  case WeightMode::Normal:
    return "normal";
  case WeightMode::Gamma:
    return "gamma";
  case WeightMode::None:
    return "none";
  }
  return "none";
}

WeightMode weight_mode_from_string(const std::string& name) {
  if (name == "nonparametric")
    return WeightMode::Nonparametric;
  if (name == "normal")
    return WeightMode::Normal;
  if (name == "gamma")
    return WeightMode::Gamma;
  if (name == "none")
    return WeightMode::None;
  throw InvalidConfig("unknown weight mode: " + name);
}

bool is_row_stochastic(const Responsibilities& gamma, double tol) {
  if (gamma.size() == 0)
    return false;
  if (gamma.minCoeff() < -tol)
    return false;
  for (int i = 0; i < gamma.rows(); ++i)
    if (std::abs(gamma.row(i).sum() - 1.0) > tol)
      return false;
  return true;
}

double ModelParams::log_density_at(int k, int l, double w) const {
  switch (weight_mode) {
  case WeightMode::Nonparametric:
    return std::log(evaluate_density(densities.at(k, l), w));
  case WeightMode::Normal: {
    const auto [mean, sd] = block_params.at(k, l);
    return std::max(normal_log_pdf(w, mean, sd), kLogDensityFloor);
  }
  case WeightMode::Gamma: {
    const auto [shape, rate] = block_params.at(k, l);
    return std::max(gamma_log_pdf(w, shape, rate), kLogDensityFloor);
  }
  case WeightMode::None:
    return 0.0;
  }
  return 0.0;
}

double ModelParams::weight_penalty(int k, int l) const {
  if (weight_mode != WeightMode::Nonparametric)
    return 0.0;
  return densities.at(k, l).integral - 1.0;
}

namespace {

double elbo_impl(const WeightedNetwork& net, const Responsibilities& gamma,
                 const ModelParams& params, const Eigen::MatrixXd& lw) {
  const int K = params.num_clusters();
  const BernoulliTables tables = bernoulli_tables(params.theta);

  Eigen::MatrixXd edge_agg, dyad_agg;
  gamma_aggregates(net, gamma, edge_agg, dyad_agg);
  double value = bernoulli_value(edge_agg, dyad_agg, tables);

  if (lw.size() > 0) {
    const Eigen::MatrixXi pidx = pair_index_table(K);
    for (int e = 0; e < net.num_edges(); ++e) {
      const int i = net.edges()[e].i;
      const int j = net.edges()[e].j;
      for (int k = 0; k < K; ++k)
        for (int l = 0; l < K; ++l)
          value += gamma(i, k) * gamma(j, l) * lw(e, pidx(k, l));
    }
  }

  for (int i = 0; i < gamma.rows(); ++i) {
    for (int k = 0; k < K; ++k) {
      const double g = gamma(i, k);
      if (g == 0.0)
        continue;
      const double log_pi =
          params.pi[k] > kPiFloor ? std::log(params.pi[k]) : std::log(kPiFloor);
      value += g * (log_pi - std::log(g));
    }
  }
  return value;
}

} // namespace

double elbo(const WeightedNetwork& net, const Responsibilities& gamma,
            const ModelParams& params) {
  check_shapes(net, gamma, params);
  return elbo_impl(net, gamma, params, edge_log_weight_terms(net, params));
}

double surrogate_q(const WeightedNetwork& net, const Responsibilities& gamma_hat,
                   const Responsibilities& gamma, const ModelParams& params) {
  check_shapes(net, gamma_hat, params);
  check_shapes(net, gamma, params);
  if (gamma_hat.minCoeff() <= 0.0)
    throw NonPositiveGammaHat("surrogate_q: gamma_hat must be strictly positive");
  const Eigen::MatrixXd lw = edge_log_weight_terms(net, params);
  const SurrogateCoefficients coefs = build_surrogate(net, gamma_hat, params, lw);
  return coefs.constant +
         (coefs.a.cwiseProduct(gamma.cwiseProduct(gamma)) +
          coefs.b.cwiseProduct(gamma))
             .sum();
}

Eigen::VectorXd solve_node_qp(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                              double floor) {
  const int K = static_cast<int>(a.size());
  if (b.size() != K || K < 1)
    throw ShapeMismatch("solve_node_qp: coefficient lengths disagree");
  if (floor < 0.0 || floor * K > 1.0 + 1e-12)
    throw Error("solve_node_qp: invalid floor");
  Eigen::VectorXd aa = a;
  for (int k = 0; k < K; ++k) {
    if (aa[k] > 1e-12)
      throw InfeasibleCoefficients(
          "solve_node_qp: positive quadratic coefficient a[" +
          std::to_string(k) + "]");
    aa[k] = std::min(aa[k], 0.0);
  }
  Eigen::VectorXd out(K);
  if (K == 1) {
    out[0] = 1.0;
    return out;
  }

  const auto gamma_of = [&](double lambda, Eigen::VectorXd& g) {
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
      double v;
      if (aa[k] < 0.0)
        v = std::clamp((lambda - b[k]) / (2.0 * aa[k]), floor, 1.0);
      else
        v = b[k] > lambda ? 1.0 : floor;
      g[k] = v;
      total += v;
    }
    return total;
  };

  double lo = (b + 2.0 * aa).minCoeff() - 1.0; // everything at 1
  double hi = b.maxCoeff() + 1.0;              // everything at the floor
  Eigen::VectorXd g(K);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double sum = gamma_of(mid, g);
    if (std::abs(sum - 1.0) <= 1e-13)
      break;
    if (sum > 1.0)
      lo = mid;
    else
      hi = mid;
  }
  const double lambda = 0.5 * (lo + hi);
  double total = gamma_of(lambda, g);

  if (std::abs(total - 1.0) > 1e-11) {
    // a step discontinuity from linear coordinates tied at b_k == lambda;
    // fill them by ascending index
    const double tie_tol = 1e-9 * (1.0 + std::abs(lambda));
    double fixed = 0.0;
    std::vector<int> tied;
    for (int k = 0; k < K; ++k) {
      if (aa[k] == 0.0 && std::abs(b[k] - lambda) <= tie_tol) {
        tied.push_back(k);
        g[k] = floor;
      }
      fixed += g[k];
    }
    double residual = 1.0 - fixed;
    for (int k : tied) {
      const double add = std::clamp(residual, 0.0, 1.0 - floor);
      g[k] += add;
      residual -= add;
    }
    total = g.sum();
  }
  if (total <= 0.0)
    throw Error("solve_node_qp: degenerate simplex solve");
  return g / total;
}

namespace {

Responsibilities e_step_impl(const WeightedNetwork& net,
                             const Responsibilities& gamma_prev,
                             const ModelParams& params, int inner_iters,
                             const Eigen::MatrixXd& lw) {
  const int n = net.num_nodes();
  const int K = params.num_clusters();
  if (K == 1)
    return Eigen::MatrixXd::Ones(n, 1);

  Responsibilities gamma = gamma_prev.cwiseMax(kGammaFloor);
  for (int i = 0; i < n; ++i)
    gamma.row(i) /= gamma.row(i).sum();

  for (int sweep = 0; sweep < inner_iters; ++sweep) {
    const SurrogateCoefficients coefs = build_surrogate(net, gamma, params, lw);
    Responsibilities next(n, K);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
      next.row(i) = solve_node_qp(coefs.a.row(i).transpose(),
                                  coefs.b.row(i).transpose(), kGammaFloor)
                        .transpose();
    });
    gamma = std::move(next);
  }
  return gamma;
}

} // namespace

Responsibilities e_step(const WeightedNetwork& net, const Responsibilities& gamma_prev,
                        const ModelParams& params, int inner_iters) {
  check_shapes(net, gamma_prev, params);
  return e_step_impl(net, gamma_prev, params, inner_iters,
                     edge_log_weight_terms(net, params));
}

Eigen::VectorXd m_step_pi(const Responsibilities& gamma) {
  if (gamma.rows() == 0)
    throw ShapeMismatch("m_step_pi: empty gamma");
  return gamma.colwise().mean().transpose();
}

Eigen::VectorXd m_step_theta(const WeightedNetwork& net, const Responsibilities& gamma,
                             const Eigen::VectorXd& theta_init, bool* saturated) {
  const int K = static_cast<int>(gamma.cols());
  if (gamma.rows() != net.num_nodes() || theta_init.size() != K)
    throw ShapeMismatch("m_step_theta: shapes disagree");

  Eigen::MatrixXd edge_agg, dyad_agg;
  gamma_aggregates(net, gamma, edge_agg, dyad_agg);

  const auto objective = [&](const Eigen::VectorXd& theta) {
    double v = 0.0;
    for (int k = 0; k < K; ++k) {
      for (int l = 0; l < K; ++l) {
        const double eta = theta[k] + theta[l];
        v += edge_agg(k, l) * log_sigmoid(eta) +
             (dyad_agg(k, l) - edge_agg(k, l)) * log_sigmoid(-eta);
      }
    }
    return 0.5 * v;
  };

  Eigen::VectorXd theta = theta_init.cwiseMax(-kThetaCap).cwiseMin(kThetaCap);
  bool hit_cap = false;
  // separation: a component whose dyads are all present (or all absent)
  // has an infinite MLE and is pinned to the cap
  for (int k = 0; k < K; ++k) {
    const double dyad_mass = dyad_agg.row(k).sum();
    if (dyad_mass <= 0.0)
      continue;
    const double edge_mass = edge_agg.row(k).sum();
    if (dyad_mass - edge_mass <= 1e-12 * dyad_mass) {
      theta[k] = kThetaCap;
      hit_cap = true;
    } else if (edge_mass <= 1e-12 * dyad_mass) {
      theta[k] = -kThetaCap;
      hit_cap = true;
    }
  }
  double value = objective(theta);
  if (!std::isfinite(value))
    throw NonFiniteTheta("m_step_theta: non-finite objective at start");

  for (int iter = 0; iter < 100; ++iter) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(K);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(K, K);
    for (int k = 0; k < K; ++k) {
      double diag_acc = 0.0;
      for (int l = 0; l < K; ++l) {
        const double eta = theta[k] + theta[l];
        const double p = sigmoid(eta);
        grad[k] += edge_agg(k, l) - dyad_agg(k, l) * p;
        const double curv = -dyad_agg(k, l) * p * (1.0 - p);
        hess(k, l) += curv;
        diag_acc += curv;
      }
      hess(k, k) += diag_acc;
    }
    if (!grad.allFinite())
      throw NonFiniteTheta("m_step_theta: non-finite gradient");
    if (grad.lpNorm<Eigen::Infinity>() <= 1e-8)
      break;

    double tau = 1e-6;
    Eigen::VectorXd dir;
    for (int d = 0; d < 60; ++d) {
      Eigen::MatrixXd damped = -hess;
      damped.diagonal().array() += tau;
      dir = damped.ldlt().solve(grad);
      if (dir.allFinite() && grad.dot(dir) > 0.0)
        break;
      tau *= 2.0;
    }
    if (!dir.allFinite() || grad.dot(dir) <= 0.0)
      break;

    const double slope = grad.dot(dir);
    double alpha = 1.0;
    bool stepped = false;
    for (int h = 0; h < 60; ++h) {
      Eigen::VectorXd cand =
          (theta + alpha * dir).cwiseMax(-kThetaCap).cwiseMin(kThetaCap);
      const double cand_value = objective(cand);
      const bool clamped = ((theta + alpha * dir) - cand).lpNorm<Eigen::Infinity>() > 0.0;
      if (std::isfinite(cand_value) &&
          (cand_value >= value + 1e-4 * alpha * slope ||
           (clamped && cand_value >= value))) {
        hit_cap |= clamped;
        if ((cand - theta).lpNorm<Eigen::Infinity>() == 0.0) {
          stepped = false;
          break;
        }
        theta = cand;
        value = cand_value;
        stepped = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!stepped)
      break;
  }
  hit_cap |= (theta.cwiseAbs().maxCoeff() >= kThetaCap - 1e-9);
  if (saturated != nullptr)
    *saturated = hit_cap;
  if (!theta.allFinite())
    throw NonFiniteTheta("m_step_theta: diverged");
  return theta;
}

WeightUpdate m_step_weights(const WeightedNetwork& net, const Responsibilities& gamma,
                            WeightMode mode, const Eigen::VectorXd& grid,
                            int degree, const WeightUpdate* previous) {
  const int K = static_cast<int>(gamma.cols());
  const int nedges = net.num_edges();
  WeightUpdate out;
  if (mode == WeightMode::None)
    return out;
  if (nedges == 0)
    throw Error("m_step_weights: network has no edges");

  BlockPairTable<WeightedSample> samples(K);
  for (int idx = 0; idx < samples.num_pairs(); ++idx) {
    const auto [k, l] = samples.pair_of(idx);
    WeightedSample& s = samples.flat(idx);
    s.values.resize(nedges);
    s.masses.resize(nedges);
    for (int e = 0; e < nedges; ++e) {
      const Edge& ed = net.edges()[e];
      s.values[e] = ed.w;
      s.masses[e] = k == l ? gamma(ed.i, k) * gamma(ed.j, k)
                           : gamma(ed.i, k) * gamma(ed.j, l) +
                                 gamma(ed.i, l) * gamma(ed.j, k);
    }
  }

  // pooled all-edges sample backs empty or degenerate blocks
  WeightedSample pooled;
  pooled.values = net.weights();
  pooled.masses = Eigen::VectorXd::Ones(nedges);
  double pooled_h;
  try {
    pooled_h = select_bandwidth(pooled);
  } catch (const DegenerateSample&) {
    const double mean = pooled.values.mean();
    pooled_h = std::max(std::abs(mean), 1.0) * 1e-2;
  }

  const auto weighted_moments = [](const WeightedSample& s, double& mean,
                                   double& var) {
    const double total = s.total_mass();
    mean = s.values.dot(s.masses) / total;
    var = (s.values.array() - mean).square().matrix().dot(s.masses) / total;
  };

  if (mode == WeightMode::Nonparametric) {
    out.densities = BlockPairTable<DensityEstimate>(K);
    out.density_coefficients.resize(samples.num_pairs());
    DensityEstimate pooled_est;
    std::vector<std::string> flags(samples.num_pairs());
    const bool have_warm =
        previous != nullptr &&
        static_cast<int>(previous->density_coefficients.size()) ==
            samples.num_pairs();

    // blocks with vanishing mass need the pooled estimate; build it first
    // so the parallel section only reads it
    bool need_pooled = false;
    for (int idx = 0; idx < samples.num_pairs(); ++idx)
      if (samples.flat(idx).total_mass() < kBlockMassEps)
        need_pooled = true;
    if (need_pooled)
      pooled_est = fit_local_density(pooled, grid, {pooled_h, 4.0}, degree);

    parallel_for(static_cast<std::size_t>(samples.num_pairs()), [&](std::size_t idx) {
      const auto [k, l] = samples.pair_of(static_cast<int>(idx));
      const WeightedSample& s = samples.flat(static_cast<int>(idx));
      if (s.total_mass() < kBlockMassEps) {
        out.densities.flat(static_cast<int>(idx)) = pooled_est;
        flags[idx] = "empty block (" + std::to_string(k) + "," +
                     std::to_string(l) + "): pooled density substituted";
        return;
      }
      double h;
      try {
        h = select_bandwidth(s);
      } catch (const DegenerateSample&) {
        h = pooled_h;
      }
      const Eigen::MatrixXd* warm =
          have_warm && previous->density_coefficients[idx].size() > 0
              ? &previous->density_coefficients[idx]
              : nullptr;
      LocalDensityFit fitted =
          fit_local_density_warm(s, grid, {h, 4.0}, degree, warm);
      out.densities.flat(static_cast<int>(idx)) = std::move(fitted.estimate);
      out.density_coefficients[idx] = std::move(fitted.coefficients);
    });
    for (const std::string& f : flags)
      if (!f.empty())
        out.warnings.push_back(f);
    return out;
  }

  // parametric modes
  out.block_params = BlockPairTable<std::pair<double, double>>(K);
  double pooled_mean, pooled_var;
  weighted_moments(pooled, pooled_mean, pooled_var);
  for (int idx = 0; idx < samples.num_pairs(); ++idx) {
    const auto [k, l] = samples.pair_of(idx);
    const WeightedSample& s = samples.flat(idx);
    double mean, var;
    if (s.total_mass() < kBlockMassEps) {
      mean = pooled_mean;
      var = pooled_var;
      out.warnings.push_back("empty block (" + std::to_string(k) + "," +
                             std::to_string(l) + "): pooled moments substituted");
    } else {
      weighted_moments(s, mean, var);
    }
    if (mode == WeightMode::Normal) {
      out.block_params.flat(idx) = {mean, std::sqrt(std::max(var, 1e-16))};
    } else {
      // method of moments for (shape, rate); requires positive moments
      if (mean <= 0.0 || var <= 0.0) {
        mean = std::max(pooled_mean, 1e-8);
        var = std::max(pooled_var, 1e-8);
      }
      if (mean <= 0.0 || var <= 0.0)
        out.block_params.flat(idx) = {1.0, 1.0};
      else
        out.block_params.flat(idx) = {mean * mean / var, mean / var};
    }
  }
  return out;
}

Labels hard_labels(const Responsibilities& gamma) {
  Labels z(gamma.rows());
  for (int i = 0; i < gamma.rows(); ++i) {
    int best = 0;
    for (int k = 1; k < gamma.cols(); ++k)
      if (gamma(i, k) > gamma(i, best))
        best = k;
    z[i] = best;
  }
  return z;
}

Eigen::VectorXd shared_density_grid(const WeightedNetwork& net, int grid_size) {
  const Eigen::VectorXd w = net.weights();
  WeightedSample all;
  all.values = w;
  all.masses = Eigen::VectorXd::Ones(w.size());
  double h0;
  try {
    h0 = select_bandwidth(all);
  } catch (const DegenerateSample&) {
    h0 = std::max(std::abs(w.size() ? w.mean() : 0.0), 1.0) * 1e-2;
  }
  return make_density_grid(w, h0, grid_size);
}

namespace {

Eigen::MatrixXd node_features(const WeightedNetwork& net) {
  const int n = net.num_nodes();
  Eigen::MatrixXd f(n, 2);
  for (int i = 0; i < n; ++i) {
    const auto& nb = net.neighbors(i);
    f(i, 0) = static_cast<double>(nb.size()) / std::max(1, n - 1);
    double mean_w = 0.0;
    for (const auto& [j, e] : nb)
      mean_w += net.edges()[e].w;
    f(i, 1) = nb.empty() ? 0.0 : mean_w / static_cast<double>(nb.size());
  }
  for (int c = 0; c < 2; ++c) {
    const double mean = f.col(c).mean();
    const double sd = std::sqrt((f.col(c).array() - mean).square().mean());
    f.col(c).array() -= mean;
    if (sd > 0.0)
      f.col(c) /= sd;
  }
  return f;
}

//! Seeded k-means on the node features followed by a soft one-hot encoding
//! perturbed with Dirichlet noise.
Responsibilities init_gamma(const Eigen::MatrixXd& features, int K, Rng& rng) {
  const int n = static_cast<int>(features.rows());
  if (K == 1)
    return Eigen::MatrixXd::Ones(n, 1);

  Eigen::MatrixXd centroids(K, features.cols());
  std::vector<int> chosen;
  while (static_cast<int>(chosen.size()) < K) {
    const int cand = static_cast<int>(rng.uniform_below(n));
    if (std::find(chosen.begin(), chosen.end(), cand) == chosen.end())
      chosen.push_back(cand);
  }
  for (int k = 0; k < K; ++k)
    centroids.row(k) = features.row(chosen[k]);

  std::vector<int> assign(n, 0);
  for (int it = 0; it < 20; ++it) {
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (features.row(i) - centroids.row(0)).squaredNorm();
      for (int k = 1; k < K; ++k) {
        const double d = (features.row(i) - centroids.row(k)).squaredNorm();
        if (d < best_d) {
          best = k;
          best_d = d;
        }
      }
      assign[i] = best;
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, features.cols());
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(K);
    for (int i = 0; i < n; ++i) {
      sums.row(assign[i]) += features.row(i);
      counts[assign[i]] += 1;
    }
    for (int k = 0; k < K; ++k) {
      if (counts[k] == 0) {
        // move the farthest point into the empty cluster
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d =
              (features.row(i) - centroids.row(assign[i])).squaredNorm();
          if (d > far_d) {
            far = i;
            far_d = d;
          }
        }
        centroids.row(k) = features.row(far);
        assign[far] = k;
      } else {
        centroids.row(k) = sums.row(k) / counts[k];
      }
    }
  }

  Responsibilities gamma(n, K);
  const double off = 0.1 / (K - 1);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd base = Eigen::VectorXd::Constant(K, off);
    base[assign[i]] = 0.9;
    gamma.row(i) = rng.dirichlet(50.0 * base).transpose();
  }
  gamma = gamma.cwiseMax(kGammaFloor);
  for (int i = 0; i < n; ++i)
    gamma.row(i) /= gamma.row(i).sum();
  return gamma;
}

void validate_fit_config(const WeightedNetwork& net, const FitConfig& config) {
  if (config.K < 1 || config.K > net.num_nodes())
    throw InvalidConfig("fit: need 1 <= K <= n");
  if (config.max_iter < 1 || config.restarts < 1 || config.mm_inner_iters < 1)
    throw InvalidConfig("fit: iteration counts must be positive");
  if (!(config.elbo_rel_tol > 0.0))
    throw InvalidConfig("fit: tolerance must be positive");
  if (config.density_degree < 0 || config.density_degree > 2)
    throw InvalidConfig("fit: density degree must be in {0,1,2}");
  if (config.density_grid_size < 2)
    throw InvalidConfig("fit: density grid size must be >= 2");
}

FitResult run_em(const WeightedNetwork& net, const Responsibilities& gamma0,
                 const FitConfig& config, const Eigen::VectorXd& grid) {
  const int K = config.K;
  const bool weights_active =
      config.weight_mode != WeightMode::None && net.num_edges() > 0;

  FitResult res;
  res.gamma = gamma0.cwiseMax(kGammaFloor);
  for (int i = 0; i < res.gamma.rows(); ++i)
    res.gamma.row(i) /= res.gamma.row(i).sum();

  ModelParams& params = res.params;
  params.weight_mode = weights_active ? config.weight_mode : WeightMode::None;
  params.pi = m_step_pi(res.gamma);
  bool saturated = false;
  params.theta =
      m_step_theta(net, res.gamma, Eigen::VectorXd::Zero(K), &saturated);
  WeightUpdate warm; // carries local-fit coefficients between iterations
  Eigen::MatrixXd lw;  // per-edge weight log-terms of the accepted params
  if (weights_active) {
    WeightUpdate wu = m_step_weights(net, res.gamma, params.weight_mode, grid,
                                     config.density_degree);
    warm.density_coefficients = std::move(wu.density_coefficients);
    params.densities = std::move(wu.densities);
    params.block_params = std::move(wu.block_params);
    for (auto& w : wu.warnings)
      res.warnings.push_back(std::move(w));
    lw = edge_log_weight_terms(net, params);
  }

  const int npairs = K * (K + 1) / 2;
  BlockPairTable<char> pair_probe(K);
  double prev = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < config.max_iter; ++t) {
    res.gamma = e_step_impl(net, res.gamma, params, config.mm_inner_iters, lw);
    params.pi = m_step_pi(res.gamma);
    bool sat_iter = false;
    params.theta = m_step_theta(net, res.gamma, params.theta, &sat_iter);
    saturated |= sat_iter;

    if (weights_active) {
      WeightUpdate wu = m_step_weights(net, res.gamma, params.weight_mode, grid,
                                       config.density_degree, &warm);
      warm.density_coefficients = std::move(wu.density_coefficients);
      ModelParams cand = params;
      cand.densities = std::move(wu.densities);
      cand.block_params = std::move(wu.block_params);
      const Eigen::MatrixXd lw_new = edge_log_weight_terms(net, cand);

      // accept per-pair only when the evaluated ELBO contribution does not
      // drop; keeps the trace monotone under bandwidth changes
      for (int idx = 0; idx < npairs; ++idx) {
        const auto [k, l] = pair_probe.pair_of(idx);
        double c_new = 0.0, c_old = 0.0;
        for (int e = 0; e < net.num_edges(); ++e) {
          const Edge& ed = net.edges()[e];
          const double mass =
              k == l ? res.gamma(ed.i, k) * res.gamma(ed.j, k)
                     : res.gamma(ed.i, k) * res.gamma(ed.j, l) +
                           res.gamma(ed.i, l) * res.gamma(ed.j, k);
          c_new += mass * lw_new(e, idx);
          c_old += mass * lw(e, idx);
        }
        if (c_new >= c_old - 1e-12 * (1.0 + std::abs(c_old))) {
          if (params.weight_mode == WeightMode::Nonparametric)
            params.densities.at(k, l) = cand.densities.at(k, l);
          else
            params.block_params.at(k, l) = cand.block_params.at(k, l);
          lw.col(idx) = lw_new.col(idx);
        }
      }
    }

    const double cur = elbo_impl(net, res.gamma, params, lw);
    res.elbo_trace.push_back(cur);
    if (t >= 1 &&
        std::abs(cur - prev) < config.elbo_rel_tol * std::max(1.0, std::abs(prev))) {
      res.converged = true;
      break;
    }
    prev = cur;
  }
  if (saturated)
    res.warnings.push_back("theta saturated at the +-15 cap");
  res.hard_labels = hard_labels(res.gamma);
  return res;
}

} // namespace

FitResult fit_from(const WeightedNetwork& net, const Responsibilities& gamma0,
                   const FitConfig& config) {
  validate_fit_config(net, config);
  if (gamma0.rows() != net.num_nodes() || gamma0.cols() != config.K)
    throw ShapeMismatch("fit_from: gamma0 has wrong shape");
  Eigen::VectorXd grid;
  if (config.weight_mode == WeightMode::Nonparametric && net.num_edges() > 0)
    grid = shared_density_grid(net, config.density_grid_size);
  return run_em(net, gamma0, config, grid);
}

FitResult fit(const WeightedNetwork& net, const FitConfig& config) {
  validate_fit_config(net, config);
  Eigen::VectorXd grid;
  if (config.weight_mode == WeightMode::Nonparametric && net.num_edges() > 0)
    grid = shared_density_grid(net, config.density_grid_size);
  const Eigen::MatrixXd features = node_features(net);

  bool have_best = false;
  FitResult best;
  std::vector<std::string> failures;
  for (int r = 0; r < config.restarts; ++r) {
    try {
      Rng rng = Rng(config.seed).stream(100 + static_cast<std::uint64_t>(r));
      const Responsibilities gamma0 = init_gamma(features, config.K, rng);
      FitResult res = run_em(net, gamma0, config, grid);
      const double final_elbo =
          res.elbo_trace.empty() ? -std::numeric_limits<double>::infinity()
                                 : res.elbo_trace.back();
      const double best_elbo =
          !have_best || best.elbo_trace.empty()
              ? -std::numeric_limits<double>::infinity()
              : best.elbo_trace.back();
      if (!have_best || final_elbo > best_elbo) {
        best = std::move(res);
        have_best = true;
      }
    } catch (const Error& err) {
      failures.push_back("restart " + std::to_string(r) + ": " + err.what());
    }
  }
  if (!have_best) {
    std::string msg = "fit: all restarts failed";
    for (const auto& f : failures)
      msg += "; " + f;
    throw AllRestartsFailed(msg);
  }
  for (const auto& f : failures)
    best.warnings.push_back(f);
  return best;
}

double exact_loglik_small(const WeightedNetwork& net, const ModelParams& params) {
  const int n = net.num_nodes();
  const int K = params.num_clusters();
  if (n * std::log(static_cast<double>(K) + 1e-12) > std::log(1e6) + 1e-9 &&
      K > 1)
    throw TooLargeToEnumerate("exact_loglik_small: K^n exceeds 1e6");

  // dense lookup tables keep the per-assignment cost at O(n^2)
  Eigen::MatrixXi has_edge = Eigen::MatrixXi::Zero(n, n);
  Eigen::MatrixXi edge_index = Eigen::MatrixXi::Constant(n, n, -1);
  for (int e = 0; e < net.num_edges(); ++e) {
    const Edge& ed = net.edges()[e];
    has_edge(ed.i, ed.j) = has_edge(ed.j, ed.i) = 1;
    edge_index(ed.i, ed.j) = edge_index(ed.j, ed.i) = e;
  }
  const BernoulliTables tables = bernoulli_tables(params.theta);
  const Eigen::MatrixXd lw = edge_log_weight_terms(net, params);
  BlockPairTable<double> probe(K);

  Eigen::VectorXd log_pi(K);
  for (int k = 0; k < K; ++k)
    log_pi[k] = params.pi[k] > 0.0 ? std::log(params.pi[k])
                                   : -std::numeric_limits<double>::infinity();

  std::vector<int> z(n, 0);
  double running_max = -std::numeric_limits<double>::infinity();
  double running_sum = 0.0;
  for (;;) {
    double ll = 0.0;
    for (int i = 0; i < n; ++i)
      ll += log_pi[z[i]];
    if (std::isfinite(ll)) {
      for (int i = 0; i < n && std::isfinite(ll); ++i) {
        for (int j = i + 1; j < n; ++j) {
          if (has_edge(i, j)) {
            ll += tables.log_p(z[i], z[j]);
            if (lw.size() > 0)
              ll += lw(edge_index(i, j), probe.flat_index(z[i], z[j]));
          } else {
            ll += tables.log_1mp(z[i], z[j]);
          }
        }
      }
    }
    if (std::isfinite(ll)) {
      if (ll <= running_max) {
        running_sum += std::exp(ll - running_max);
      } else {
        running_sum = running_sum * std::exp(running_max - ll) + 1.0;
        running_max = ll;
      }
    }
    int pos = 0;
    while (pos < n && ++z[pos] == K) {
      z[pos] = 0;
      ++pos;
    }
    if (pos == n)
      break;
  }
  if (!std::isfinite(running_max))
    return -std::numeric_limits<double>::infinity();
  return running_max + std::log(running_sum);
}

} // namespace npwnet
