#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "toscca/cca.hpp"

using namespace toscca;

namespace {

MatrixXd random_matrix(Index n, Index p, std::uint64_t seed, std::uint64_t tag) {
  auto eng = substream(seed, tag);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd m(n, p);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < p; ++c) m(r, c) = normal(eng);
  return m;
}

MatrixXd center_columns(MatrixXd m) {
  m.rowwise() -= m.colwise().mean();
  return m;
}

MatrixXd standardize_columns(MatrixXd m) {
  m = center_columns(std::move(m));
  for (Index c = 0; c < m.cols(); ++c) m.col(c) /= sample_sd(m.col(c));
  return m;
}

MatrixXd inverse_sqrt(const MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s);
  return eig.eigenvectors() *
         eig.eigenvalues().cwiseMax(1e-12).cwiseSqrt().cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

// Whiten each view with its own sample covariance; canonical correlations
// are invariant under invertible within-view transforms, so this is an
// equivalent CCA instance with exactly identity covariance.
MatrixXd whiten(const MatrixXd& m) {
  const MatrixXd c = center_columns(m);
  const MatrixXd cov = c.transpose() * c / static_cast<double>(m.rows() - 1);
  return c * inverse_sqrt(cov);
}

struct CcaOracle {
  double rho = 0.0;
  VectorXd w_x, w_y;
};

// Closed-form first canonical pair via the generalized eigenvalue route:
// SVD of Sxx^{-1/2} Sxy Syy^{-1/2}.
CcaOracle cca_eigen_oracle(const MatrixXd& x, const MatrixXd& y) {
  const MatrixXd xc = center_columns(x);
  const MatrixXd yc = center_columns(y);
  const double denom = static_cast<double>(x.rows() - 1);
  const MatrixXd sxx = xc.transpose() * xc / denom;
  const MatrixXd syy = yc.transpose() * yc / denom;
  const MatrixXd sxy = xc.transpose() * yc / denom;
  const MatrixXd sxx_is = inverse_sqrt(sxx);
  const MatrixXd syy_is = inverse_sqrt(syy);
  Eigen::JacobiSVD<MatrixXd> svd(sxx_is * sxy * syy_is,
                                 Eigen::ComputeThinU | Eigen::ComputeThinV);
  CcaOracle o;
  o.rho = svd.singularValues()[0];
  o.w_x = sxx_is * svd.matrixU().col(0);
  o.w_y = syy_is * svd.matrixV().col(0);
  return o;
}

double abs_cosine(const VectorXd& a, const VectorXd& b) {
  return std::abs(a.dot(b)) / (a.norm() * b.norm());
}

// Correlated pair with one planted component, columns standardized.
std::pair<MatrixXd, MatrixXd> planted_pair(Index n, Index p, Index q, std::uint64_t seed) {
  auto eng = substream(seed, 0xcc);
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd z(n);
  for (Index r = 0; r < n; ++r) z[r] = normal(eng);
  VectorXd a(p), b(q);
  for (Index j = 0; j < p; ++j) a[j] = normal(eng);
  for (Index j = 0; j < q; ++j) b[j] = normal(eng);
  MatrixXd x = z * a.transpose() + 0.8 * random_matrix(n, p, seed, 0xe1);
  MatrixXd y = z * b.transpose() + 0.8 * random_matrix(n, q, seed, 0xe2);
  return {standardize_columns(std::move(x)), standardize_columns(std::move(y))};
}

}  // namespace

TEST_CASE("canonical correlation basics", "[cca]") {
  const VectorXd a = (VectorXd(5) << 1, 2, 3, 4, 5).finished();
  CHECK(canonical_correlation(a, a) == Catch::Approx(1.0));
  CHECK(canonical_correlation(a, -a) == Catch::Approx(-1.0));

  const VectorXd u = (VectorXd(4) << 1, -1, 1, -1).finished();
  const VectorXd v = (VectorXd(4) << 1, 1, -1, -1).finished();
  CHECK(std::abs(canonical_correlation(u, v)) < 1e-12);

  // Independent textbook formula.
  const VectorXd r1 = random_matrix(40, 1, 2, 1).col(0);
  const VectorXd r2 = random_matrix(40, 1, 2, 2).col(0);
  double sxy = 0, sxx = 0, syy = 0;
  const double m1 = r1.mean(), m2 = r2.mean();
  for (Index i = 0; i < r1.size(); ++i) {
    sxy += (r1[i] - m1) * (r2[i] - m2);
    sxx += (r1[i] - m1) * (r1[i] - m1);
    syy += (r2[i] - m2) * (r2[i] - m2);
  }
  CHECK(canonical_correlation(r1, r2) ==
        Catch::Approx(sxy / std::sqrt(sxx * syy)).margin(1e-12));

  CHECK_THROWS_WITH(canonical_correlation(VectorXd::Ones(4), r1.head(4)),
                    Catch::Matchers::ContainsSubstring("zero variance"));
  CHECK_THROWS_AS(canonical_correlation(r1, r2.head(10)), Error);
}

TEST_CASE("deflation projects, is idempotent and drops rank by one", "[cca]") {
  MatrixXd x = random_matrix(20, 5, 3, 1);
  MatrixXd y = random_matrix(20, 4, 3, 2);
  const VectorXd eta = x * VectorXd::Ones(5);
  const VectorXd gamma = y * VectorXd::Ones(4);

  auto state = deflate(DeflationState::start(x, y), eta, gamma);
  CHECK((eta.transpose() * state.x).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((gamma.transpose() * state.y).cwiseAbs().maxCoeff() < 1e-8);

  auto twice = deflate(state, eta, gamma);
  CHECK((twice.x - state.x).cwiseAbs().maxCoeff() < 1e-10);

  const auto rank_of = [](const MatrixXd& m) {
    Eigen::JacobiSVD<MatrixXd> svd(m);
    return (svd.singularValues().array() > 1e-9 * svd.singularValues()[0]).count();
  };
  REQUIRE(rank_of(x) == 5);
  CHECK(rank_of(state.x) == 4);

  CHECK_THROWS_WITH(deflate(DeflationState::start(x, y), VectorXd::Zero(20), gamma),
                    Catch::Matchers::ContainsSubstring("zero-norm"));
}

TEST_CASE("least-squares mode matches the generalized-eigenvalue CCA oracle", "[cca]") {
  const auto [x, y] = planted_pair(200, 5, 4, 11);
  const auto oracle = cca_eigen_oracle(x, y);

  NipalsOptions opts;
  opts.p_x = 5;
  opts.q_y = 4;
  opts.tol = 1e-13;
  opts.max_iter = 1000;
  opts.update = WeightUpdate::least_squares;
  const auto res = nipals_pair(x, y, opts);

  REQUIRE(res.converged);
  CHECK(std::abs(res.rho - oracle.rho) < 1e-6);
  CHECK(abs_cosine(res.w_x, oracle.w_x) > 1.0 - 1e-6);
  CHECK(abs_cosine(res.w_y, oracle.w_y) > 1.0 - 1e-6);
}

TEST_CASE("covariance mode matches the oracle on whitened views", "[cca]") {
  const auto [x0, y0] = planted_pair(200, 5, 4, 23);
  const MatrixXd x = whiten(x0);
  const MatrixXd y = whiten(y0);
  const auto oracle = cca_eigen_oracle(x, y);

  NipalsOptions opts;
  opts.p_x = 5;
  opts.q_y = 4;
  opts.tol = 1e-13;
  opts.max_iter = 1000;
  const auto res = nipals_pair(x, y, opts);

  REQUIRE(res.converged);
  CHECK(std::abs(res.rho - oracle.rho) < 1e-6);
  CHECK(abs_cosine(res.w_x, oracle.w_x) > 1.0 - 1e-6);
  CHECK(abs_cosine(res.w_y, oracle.w_y) > 1.0 - 1e-6);
}

TEST_CASE("identical views with full sparsity give rho 1", "[cca]") {
  const MatrixXd x = standardize_columns(random_matrix(60, 6, 4, 9));
  NipalsOptions opts;
  opts.p_x = 6;
  opts.q_y = 6;
  const auto res = nipals_pair(x, x, opts);
  CHECK(res.rho == Catch::Approx(1.0).margin(1e-8));
}

TEST_CASE("noise correlation sits inside the permutation null", "[cca]") {
  const Index n = 80;
  const MatrixXd x = standardize_columns(random_matrix(n, 10, 31, 1));
  const MatrixXd y = standardize_columns(random_matrix(n, 8, 31, 2));
  NipalsOptions opts;
  opts.p_x = 3;
  opts.q_y = 3;
  const auto res = nipals_pair(x, y, opts);

  auto eng = substream(31, 99);
  std::vector<double> null_rhos;
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    fisher_yates(perm, eng);
    MatrixXd yp(n, y.cols());
    for (Index r = 0; r < n; ++r) yp.row(r) = y.row(perm[static_cast<std::size_t>(r)]);
    null_rhos.push_back(std::abs(nipals_pair(x, yp, opts).rho));
  }
  std::sort(null_rhos.begin(), null_rhos.end());
  const double q95 = null_rhos[189];  // 95th percentile of 200
  CHECK(std::abs(res.rho) <= q95);
}

TEST_CASE("rho is nondecreasing per iteration in non-longitudinal mode", "[cca]") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto [x, y] = planted_pair(70, 9, 7, seed);
    NipalsOptions opts;
    opts.p_x = 4;
    opts.q_y = 3;
    opts.seed = seed;  // random init to vary the start
    const auto res = nipals_pair(x, y, opts);
    REQUIRE(res.converged);
    for (std::size_t l = 1; l < res.rho_history.size(); ++l)
      CHECK(res.rho_history[l] >= res.rho_history[l - 1] - 1e-10);
  }
}

TEST_CASE("rescaling a selected column leaves the other selections alone", "[cca]") {
  // Single-update form: exact property of the covariance update.
  const MatrixXd x = standardize_columns(random_matrix(50, 8, 77, 1));
  const VectorXd target = random_matrix(50, 1, 77, 2).col(0);
  const VectorXd w = x.transpose() * target;
  const VectorXd sel = soft_threshold_topk(w, 3);
  std::vector<Index> support;
  for (Index j = 0; j < 8; ++j)
    if (sel[j] != 0.0) support.push_back(j);
  const Index scaled_col = support.front();

  MatrixXd x2 = x;
  x2.col(scaled_col) *= 3.0;
  const VectorXd sel2 = soft_threshold_topk(x2.transpose() * target, 3);
  REQUIRE(sel2[scaled_col] != 0.0);  // stays selected after upscaling
  for (Index j = 0; j < 8; ++j) {
    if (j == scaled_col) continue;
    CHECK((sel[j] != 0.0) == (sel2[j] != 0.0));
  }

  // Full-run form on a well-separated instance.
  const auto [px, py] = planted_pair(120, 8, 6, 78);
  NipalsOptions opts;
  opts.p_x = 3;
  opts.q_y = 3;
  const auto base = nipals_pair(px, py, opts);
  std::vector<Index> base_support;
  for (Index j = 0; j < 8; ++j)
    if (base.w_x[j] != 0.0) base_support.push_back(j);
  MatrixXd px2 = px;
  px2.col(base_support.front()) *= 2.0;
  const auto mod = nipals_pair(px2, py, opts);
  REQUIRE(mod.w_x[base_support.front()] != 0.0);
  for (Index j = 0; j < 8; ++j) {
    if (j == base_support.front()) continue;
    CHECK((base.w_x[j] != 0.0) == (mod.w_x[j] != 0.0));
  }
}

TEST_CASE("orientation and determinism of nipals", "[cca]") {
  const auto [x, y] = planted_pair(90, 7, 5, 41);
  NipalsOptions opts;
  opts.p_x = 4;
  opts.q_y = 3;
  const auto a = nipals_pair(x, y, opts);
  const auto b = nipals_pair(x, y, opts);
  CHECK((a.w_x - b.w_x).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.w_y - b.w_y).cwiseAbs().maxCoeff() == 0.0);

  Index arg = 0;
  a.w_x.cwiseAbs().maxCoeff(&arg);
  CHECK(a.w_x[arg] > 0.0);
}
