#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "npwnet/block_table.hpp"
#include "npwnet/locdens.hpp"
#include "npwnet/netcore.hpp"

namespace npwnet {

enum class WeightMode { Nonparametric, Normal, Gamma, None };

std::string to_string(WeightMode mode);
WeightMode weight_mode_from_string(const std::string& name);

//! Variational responsibilities: n x K, each row on the simplex.
using Responsibilities = Eigen::MatrixXd;

bool is_row_stochastic(const Responsibilities& gamma, double tol = 1e-10);

//! Sparsity parameters, mixture proportions and block weight models.
//! Densities are present for the nonparametric mode, (param1, param2)
//! tables for the parametric modes, neither for the binary mode.
struct ModelParams {
  Eigen::VectorXd theta;
  Eigen::VectorXd pi;
  WeightMode weight_mode{WeightMode::Nonparametric};
  BlockPairTable<DensityEstimate> densities;
  BlockPairTable<std::pair<double, double>> block_params;

  int num_clusters() const { return static_cast<int>(theta.size()); }
  bool has_weight_terms() const { return weight_mode != WeightMode::None; }

  //! log f_kl(w), floored at log(kDensityFloor) in every mode.
  double log_density_at(int k, int l, double w) const;

  //! Integral penalty (int f_kl - 1); zero for parametric modes and for
  //! normalized nonparametric estimates.
  double weight_penalty(int k, int l) const;
};

struct FitConfig {
  int K{1};
  int max_iter{200};
  double elbo_rel_tol{1e-6};
  int restarts{5};
  int mm_inner_iters{5};
  std::uint64_t seed{0};
  int density_degree{2};
  int density_grid_size{101};
  WeightMode weight_mode{WeightMode::Nonparametric};
};

struct FitResult {
  ModelParams params;
  Responsibilities gamma;
  Labels hard_labels;
  std::vector<double> elbo_trace;
  bool converged{false};
  std::optional<double> icl;
  std::vector<std::string> warnings;
};

//! Evidence lower bound at the given responsibilities and parameters.
double elbo(const WeightedNetwork& net, const Responsibilities& gamma,
            const ModelParams& params);

//! MM surrogate built from the AM-GM and log-concavity bounds; touches the
//! ELBO at gamma = gamma_hat and lies below it elsewhere.
double surrogate_q(const WeightedNetwork& net, const Responsibilities& gamma_hat,
                   const Responsibilities& gamma, const ModelParams& params);

//! Maximizes sum_k a_k x_k^2 + b_k x_k over the simplex (entries bounded
//! below by `floor`), requiring a_k <= 0. Exact KKT solve by bisection on
//! the dual multiplier.
Eigen::VectorXd solve_node_qp(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                              double floor = 0.0);

//! inner_iters MM sweeps of simultaneous per-node QP updates; the ELBO is
//! non-decreasing across sweeps.
Responsibilities e_step(const WeightedNetwork& net, const Responsibilities& gamma_prev,
                        const ModelParams& params, int inner_iters);

//! Closed-form mixture update pi_k = mean_i gamma_ik.
Eigen::VectorXd m_step_pi(const Responsibilities& gamma);

//! Newton ascent with line search on the Bernoulli part of the ELBO.
//! Components are capped at +-15; `saturated` (when given) reports whether
//! the cap was hit.
Eigen::VectorXd m_step_theta(const WeightedNetwork& net, const Responsibilities& gamma,
                             const Eigen::VectorXd& theta_init,
                             bool* saturated = nullptr);

struct WeightUpdate {
  BlockPairTable<DensityEstimate> densities;
  BlockPairTable<std::pair<double, double>> block_params;
  //! Local-fit coefficients per pair, reusable as warm starts next iteration.
  std::vector<Eigen::MatrixXd> density_coefficients;
  std::vector<std::string> warnings;
};

//! Re-estimates block weight models from the current responsibilities:
//! local-likelihood densities on the shared grid (nonparametric), weighted
//! moments (Normal / Gamma), or nothing (None). Block pairs with vanishing
//! mass fall back to the pooled all-edges estimate.
WeightUpdate m_step_weights(const WeightedNetwork& net, const Responsibilities& gamma,
                            WeightMode mode, const Eigen::VectorXd& grid,
                            int degree, const WeightUpdate* previous = nullptr);

//! Full variational EM with restarts; returns the restart with the highest
//! final ELBO.
FitResult fit(const WeightedNetwork& net, const FitConfig& config);

//! Single EM run from a caller-supplied initialization.
FitResult fit_from(const WeightedNetwork& net, const Responsibilities& gamma0,
                   const FitConfig& config);

//! Exact marginal log-likelihood by enumeration over all K^n label vectors;
//! guarded to K^n <= 1e6.
double exact_loglik_small(const WeightedNetwork& net, const ModelParams& params);

//! Row-wise argmax with ties broken toward the lowest cluster index.
Labels hard_labels(const Responsibilities& gamma);

//! Density grid shared by all block pairs of a fit, spanning the observed
//! weights plus a 3-bandwidth margin.
Eigen::VectorXd shared_density_grid(const WeightedNetwork& net, int grid_size);

} // namespace npwnet
