#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "toscca/threshold.hpp"

using namespace toscca;

TEST_CASE("top-k soft threshold worked examples", "[threshold]") {
  const VectorXd w = (VectorXd(4) << 3, -1, 0.5, 2).finished();
  const VectorXd out = soft_threshold_topk(w, 2);
  CHECK(out[0] == Catch::Approx(2.0));
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 0.0);
  CHECK(out[3] == Catch::Approx(1.0));

  // k = len leaves the vector unchanged (shrinkage 0).
  const VectorXd full = soft_threshold_topk(w, 4);
  CHECK((full - w).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(soft_threshold_topk(w, 0), Error);
  CHECK_THROWS_AS(soft_threshold_topk(w, 5), Error);
}

TEST_CASE("ties at the cut keep the lowest index at the next-distinct gap", "[threshold]") {
  const VectorXd w = (VectorXd(3) << 2, 2, 1).finished();
  const VectorXd out = soft_threshold_topk(w, 1);
  CHECK(out[0] == Catch::Approx(1.0));  // |2| - next distinct (1)
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 0.0);

  const VectorXd wn = (VectorXd(3) << -2, 2, 1).finished();
  const VectorXd outn = soft_threshold_topk(wn, 1);
  CHECK(outn[0] == Catch::Approx(-1.0));  // sign preserved

  // Tie above the cut: both survive, shrunk by the next distinct value.
  const VectorXd w2 = (VectorXd(4) << 3, 2, 2, 1).finished();
  const VectorXd out2 = soft_threshold_topk(w2, 2);
  CHECK(out2[0] == Catch::Approx(2.0));
  CHECK(out2[1] == Catch::Approx(1.0));
  CHECK(out2[2] == 0.0);
  CHECK(out2[3] == 0.0);
}

TEST_CASE("cardinality, sign and ranking over random vectors", "[threshold]") {
  auto eng = substream(5, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int rep = 0; rep < 300; ++rep) {
    const Index p = 1 + static_cast<Index>(bounded(eng, 12));
    VectorXd w(p);
    for (Index j = 0; j < p; ++j) w[j] = normal(eng);
    const Index k = 1 + static_cast<Index>(bounded(eng, static_cast<std::uint64_t>(p)));
    const VectorXd out = soft_threshold_topk(w, k);

    Index nnz = 0;
    for (Index j = 0; j < p; ++j) {
      if (out[j] != 0.0) {
        ++nnz;
        CHECK(out[j] * w[j] > 0.0);                  // sign preserved
        CHECK(std::abs(out[j]) <= std::abs(w[j]));   // pure shrinkage
      }
    }
    CHECK(nnz == k);  // continuous draws are tie-free almost surely

    // Ranking among survivors matches the input ranking.
    std::vector<Index> sel;
    for (Index j = 0; j < p; ++j)
      if (out[j] != 0.0) sel.push_back(j);
    for (std::size_t a = 0; a < sel.size(); ++a)
      for (std::size_t b = a + 1; b < sel.size(); ++b) {
        const bool in_order = std::abs(w[sel[a]]) >= std::abs(w[sel[b]]);
        const bool out_order = std::abs(out[sel[a]]) >= std::abs(out[sel[b]]);
        CHECK(in_order == out_order);
      }
  }
}

TEST_CASE("tied inputs stay deterministic and within budget", "[threshold]") {
  auto eng = substream(6, 0);
  for (int rep = 0; rep < 200; ++rep) {
    const Index p = 2 + static_cast<Index>(bounded(eng, 10));
    VectorXd w(p);
    for (Index j = 0; j < p; ++j)
      w[j] = static_cast<double>(bounded(eng, 4)) - 1.5;  // heavy ties
    const Index k = 1 + static_cast<Index>(bounded(eng, static_cast<std::uint64_t>(p)));
    const VectorXd a = soft_threshold_topk(w, k);
    const VectorXd b = soft_threshold_topk(w, k);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    Index nnz = 0;
    for (Index j = 0; j < p; ++j) nnz += a[j] != 0.0;
    CHECK(nnz <= k);
  }
}
