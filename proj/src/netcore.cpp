#include "npwnet/netcore.hpp"

#include <algorithm>
#include <sstream>

namespace npwnet {

namespace {

std::string triple_str(int i, int j, double w) {
  std::ostringstream os;
  os << "(" << i << ", " << j << ", " << w << ")";
  return os.str();
}

} // namespace

WeightedNetwork::WeightedNetwork(int n, std::vector<Edge> edges)
    : n_(n), edges_(std::move(edges)), adj_(static_cast<std::size_t>(n)) {
  for (int e = 0; e < static_cast<int>(edges_.size()); ++e) {
    adj_[edges_[e].i].emplace_back(edges_[e].j, e);
    adj_[edges_[e].j].emplace_back(edges_[e].i, e);
  }
}

const std::vector<std::pair<int, int>>& WeightedNetwork::neighbors(int i) const {
  if (i < 0 || i >= n_)
    throw IndexOutOfRange("neighbors: node " + std::to_string(i) +
                          " out of range for n=" + std::to_string(n_));
  return adj_[i];
}

Eigen::VectorXd WeightedNetwork::weights() const {
  Eigen::VectorXd w(edges_.size());
  for (int e = 0; e < static_cast<int>(edges_.size()); ++e)
    w[e] = edges_[e].w;
  return w;
}

WeightedNetwork build_network(int n, const std::vector<Edge>& edge_triples) {
  if (n < 2)
    throw Error("build_network: need n >= 2, got " + std::to_string(n));
  std::vector<Edge> canon;
  canon.reserve(edge_triples.size());
  for (const Edge& t : edge_triples) {
    if (t.i == t.j)
      throw SelfLoop("build_network: self-loop " + triple_str(t.i, t.j, t.w));
    if (t.i < 0 || t.j < 0 || t.i >= n || t.j >= n)
      throw IndexOutOfRange("build_network: node index out of range in " +
                            triple_str(t.i, t.j, t.w) +
                            " for n=" + std::to_string(n));
    Edge e = t;
    if (e.i > e.j)
      std::swap(e.i, e.j);
    canon.push_back(e);
  }
  std::sort(canon.begin(), canon.end(), [](const Edge& a, const Edge& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  for (std::size_t e = 1; e < canon.size(); ++e) {
    if (canon[e - 1].i == canon[e].i && canon[e - 1].j == canon[e].j)
      throw DuplicateEdge("build_network: duplicate pair in " +
                          triple_str(canon[e].i, canon[e].j, canon[e].w));
  }
  return WeightedNetwork(n, std::move(canon));
}

int degree(const WeightedNetwork& net, int i) {
  return static_cast<int>(net.neighbors(i).size());
}

} // namespace npwnet
