#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace toscca {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Sample standard deviation with the n-1 denominator.
inline double sample_sd(const Eigen::Ref<const VectorXd>& v) {
  const Index n = v.size();
  if (n < 2) return 0.0;
  const double mu = v.mean();
  return std::sqrt((v.array() - mu).square().sum() / static_cast<double>(n - 1));
}

inline double pearson(const Eigen::Ref<const VectorXd>& a,
                      const Eigen::Ref<const VectorXd>& b) {
  if (a.size() != b.size())
    throw Error("pearson: length mismatch (" + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()) + ")");
  if (a.size() < 2) throw Error("pearson: need at least 2 observations");
  const double ma = a.mean();
  const double mb = b.mean();
  const VectorXd da = a.array() - ma;
  const VectorXd db = b.array() - mb;
  const double va = da.squaredNorm();
  const double vb = db.squaredNorm();
  if (va <= 0.0 || vb <= 0.0) throw Error("pearson: zero variance");
  return da.dot(db) / std::sqrt(va * vb);
}

// Seeded engine for a named substream. Mixing the stream id through
// splitmix64 keeps per-subject streams independent of iteration order.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  z = z ^ (z >> 31);
  return std::mt19937_64(z);
}

// Engine-independent bounded draw, used where the assignment itself is a
// documented deterministic contract (fold splits, masks).
inline std::uint64_t bounded(std::mt19937_64& eng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r = eng();
  while (r >= limit) r = eng();
  return r % n;
}

template <typename T>
void fisher_yates(std::vector<T>& items, std::mt19937_64& eng) {
  for (std::size_t i = items.size(); i > 1; --i)
    std::swap(items[i - 1], items[bounded(eng, i)]);
}

}  // namespace toscca
