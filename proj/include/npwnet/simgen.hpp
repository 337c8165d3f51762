#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "npwnet/block_table.hpp"
#include "npwnet/netcore.hpp"

namespace npwnet {

enum class WeightKind { Normal, Gamma, None };

//! Block-conditional weight distributions used by the generator.
//! Parameters are (mean, sd) for Normal and (shape, rate) for Gamma;
//! the rate convention means E[w] = shape / rate.
struct WeightModel {
  WeightKind kind{WeightKind::None};
  BlockPairTable<std::pair<double, double>> block_params;
};

//! Full configuration of the generative sampler.
struct GeneratorConfig {
  int n{0};
  int K{1};
  Eigen::VectorXd pi;
  Eigen::VectorXd theta;
  WeightModel weight_model;
  std::uint64_t seed{0};
};

//! Throws InvalidSimplex unless pi is a length-K simplex vector.
void validate_simplex(const Eigen::VectorXd& pi, double tol = 1e-8);

//! n i.i.d. multinomial membership draws; deterministic given cfg.seed.
Labels sample_memberships(const GeneratorConfig& cfg);

//! Additive logit edge probability logit^-1(theta_k + theta_l).
double edge_probability(const Eigen::VectorXd& theta, int k, int l);

//! Bernoulli edges and block-conditional weights for the given memberships;
//! deterministic given cfg.seed.
WeightedNetwork sample_network(const Labels& labels, const GeneratorConfig& cfg);

} // namespace npwnet
