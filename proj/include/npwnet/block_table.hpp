#pragma once

#include <string>
#include <vector>

#include "npwnet/errors.hpp"

namespace npwnet {

//! Symmetric K x K table storing one entry per unordered pair (k, l).
template <typename T>
class BlockPairTable {
public:
  BlockPairTable() = default;
  explicit BlockPairTable(int k) : k_(k), data_(static_cast<std::size_t>(k * (k + 1) / 2)) {}
  BlockPairTable(int k, const T& value)
      : k_(k), data_(static_cast<std::size_t>(k * (k + 1) / 2), value) {}

  int num_clusters() const { return k_; }
  int num_pairs() const { return static_cast<int>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T& at(int k, int l) { return data_[index(k, l)]; }
  const T& at(int k, int l) const { return data_[index(k, l)]; }

  //! Flat index of an unordered pair.
  int flat_index(int k, int l) const { return static_cast<int>(index(k, l)); }

  //! Flat access in (k <= l) lexicographic order.
  T& flat(int idx) { return data_[static_cast<std::size_t>(idx)]; }
  const T& flat(int idx) const { return data_[static_cast<std::size_t>(idx)]; }

  //! Unordered pair for a flat index, with k <= l.
  std::pair<int, int> pair_of(int idx) const {
    for (int k = 0, base = 0; k < k_; ++k) {
      const int row = k_ - k;
      if (idx < base + row)
        return {k, k + (idx - base)};
      base += row;
    }
    throw Error("BlockPairTable: flat index out of range");
  }

private:
  std::size_t index(int k, int l) const {
    if (k < 0 || l < 0 || k >= k_ || l >= k_)
      throw IndexOutOfRange("BlockPairTable: pair (" + std::to_string(k) + ", " +
                            std::to_string(l) + ") out of range for K=" +
                            std::to_string(k_));
    if (k > l)
      std::swap(k, l);
    // row k starts after k rows of decreasing length K, K-1, ...
    const int base = k * k_ - k * (k - 1) / 2;
    return static_cast<std::size_t>(base + (l - k));
  }

  int k_{0};
  std::vector<T> data_;
};

} // namespace npwnet
