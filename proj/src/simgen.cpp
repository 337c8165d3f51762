#include "npwnet/simgen.hpp"

#include <cmath>

#include "npwnet/rng.hpp"

namespace npwnet {

namespace {

// Distinct sub-stream ids so memberships and dyads draw from
// decorrelated sequences of the same seed.
constexpr std::uint64_t kMembershipStream = 1;
constexpr std::uint64_t kNetworkStream = 2;

void validate_config(const GeneratorConfig& cfg) {
  if (cfg.n < 2)
    throw InvalidConfig("generator: need n >= 2");
  if (cfg.K < 1)
    throw InvalidConfig("generator: need K >= 1");
  if (cfg.pi.size() != cfg.K || cfg.theta.size() != cfg.K)
    throw InvalidConfig("generator: pi and theta must have length K");
  validate_simplex(cfg.pi);
  if (cfg.weight_model.kind != WeightKind::None) {
    const auto& tab = cfg.weight_model.block_params;
    if (tab.num_clusters() != cfg.K)
      throw InvalidConfig("generator: block_params must be K x K");
    for (int idx = 0; idx < tab.num_pairs(); ++idx) {
      const auto [p1, p2] = tab.flat(idx);
      if (cfg.weight_model.kind == WeightKind::Normal && p2 <= 0.0)
        throw InvalidConfig("generator: Normal sd must be positive");
      if (cfg.weight_model.kind == WeightKind::Gamma && (p1 <= 0.0 || p2 <= 0.0))
        throw InvalidConfig("generator: Gamma shape and rate must be positive");
    }
  }
}

} // namespace

void validate_simplex(const Eigen::VectorXd& pi, double tol) {
  if (pi.size() < 1)
    throw InvalidSimplex("simplex: empty vector");
  if (pi.minCoeff() < 0.0)
    throw InvalidSimplex("simplex: negative entry");
  if (std::abs(pi.sum() - 1.0) > tol)
    throw InvalidSimplex("simplex: entries sum to " + std::to_string(pi.sum()));
}

Labels sample_memberships(const GeneratorConfig& cfg) {
  validate_config(cfg);
  Rng rng = Rng(cfg.seed).stream(kMembershipStream);
  Labels z(cfg.n);
  for (int i = 0; i < cfg.n; ++i)
    z[i] = rng.categorical(cfg.pi);
  return z;
}

double edge_probability(const Eigen::VectorXd& theta, int k, int l) {
  if (k < 0 || l < 0 || k >= theta.size() || l >= theta.size())
    throw IndexOutOfRange("edge_probability: cluster index out of range");
  return 1.0 / (1.0 + std::exp(-(theta[k] + theta[l])));
}

WeightedNetwork sample_network(const Labels& labels, const GeneratorConfig& cfg) {
  validate_config(cfg);
  if (labels.size() != cfg.n)
    throw InvalidConfig("sample_network: labels length must equal n");
  if (labels.size() && (labels.minCoeff() < 0 || labels.maxCoeff() >= cfg.K))
    throw InvalidConfig("sample_network: label out of range for K");

  // Edge probabilities per block pair, computed once.
  BlockPairTable<double> prob(cfg.K);
  for (int k = 0; k < cfg.K; ++k)
    for (int l = k; l < cfg.K; ++l)
      prob.at(k, l) = edge_probability(cfg.theta, k, l);

  Rng rng = Rng(cfg.seed).stream(kNetworkStream);
  std::vector<Edge> edges;
  for (int i = 0; i < cfg.n; ++i) {
    for (int j = i + 1; j < cfg.n; ++j) {
      if (rng.uniform01() >= prob.at(labels[i], labels[j]))
        continue;
      double w = 0.0;
      if (cfg.weight_model.kind != WeightKind::None) {
        const auto [p1, p2] = cfg.weight_model.block_params.at(labels[i], labels[j]);
        w = cfg.weight_model.kind == WeightKind::Normal ? rng.normal(p1, p2)
                                                        : rng.gamma(p1, p2);
      }
      edges.push_back({i, j, w});
    }
  }
  return WeightedNetwork(cfg.n, std::move(edges));
}

} // namespace npwnet
