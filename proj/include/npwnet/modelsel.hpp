#pragma once

#include <string>
#include <vector>

#include "npwnet/netcore.hpp"
#include "npwnet/varem.hpp"

namespace npwnet {

struct IclEntry {
  int K{0};
  double icl{0.0};
  double final_elbo{0.0};
  bool converged{false};
  bool failed{false};
  std::string error;
};

//! Per-K sweep results; best_k maximizes the criterion among converged
//! entries (falling back to all entries when none converged).
struct IclReport {
  std::vector<IclEntry> per_k;
  int best_k{0};
};

//! Modified integrated classification likelihood: complete log-likelihood
//! at the hard assignment minus (K-1) log n and K log(n(n-1)/2). Density
//! terms are dropped in binary mode.
double icl(const WeightedNetwork& net, const FitResult& fit_result);

//! Fits every K in k_range with shared seeds and ranks by the criterion.
//! Failed fits are recorded per entry rather than aborting the sweep.
IclReport select_k(const WeightedNetwork& net, const std::vector<int>& k_range,
                   const FitConfig& config);

} // namespace npwnet
