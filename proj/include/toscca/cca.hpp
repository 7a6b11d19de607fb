#pragma once

#include <optional>
#include <vector>

#include "toscca/common.hpp"
#include "toscca/threshold.hpp"

namespace toscca {

// Pearson correlation between two latent series of equal length.
inline double canonical_correlation(const Eigen::Ref<const VectorXd>& a,
                                    const Eigen::Ref<const VectorXd>& b) {
  return pearson(a, b);
}

// Residualized copies of both views plus the latent vectors already
// extracted; later components are computed against these.
struct DeflationState {
  MatrixXd x;
  MatrixXd y;
  std::vector<VectorXd> prior_eta;
  std::vector<VectorXd> prior_gamma;

  static DeflationState start(MatrixXd x, MatrixXd y) {
    DeflationState s;
    s.x = std::move(x);
    s.y = std::move(y);
    return s;
  }
};

namespace detail {

// X <- X - eta (eta'eta)^{-1} eta' X; projects every column off the latent
// vector, so later latent variables are orthogonal to it.
inline void project_out(MatrixXd& m, const VectorXd& latent) {
  const double nrm2 = latent.squaredNorm();
  if (nrm2 < 1e-24) throw Error("deflate: zero-norm latent vector");
  const Eigen::RowVectorXd coef = (latent.transpose() * m) / nrm2;
  m.noalias() -= latent * coef;
}

}  // namespace detail

inline DeflationState deflate(DeflationState state, const VectorXd& eta,
                              const VectorXd& gamma) {
  detail::project_out(state.x, eta);
  detail::project_out(state.y, gamma);
  state.prior_eta.push_back(eta);
  state.prior_gamma.push_back(gamma);
  return state;
}

// How w~ is computed from the other view's latent vector. `covariance` is
// the transpose update of the algorithm's inner loop and the only usable
// form when features outnumber rows; `least_squares` solves the full
// regression and reproduces classical CCA when the Gram matrices are
// invertible.
enum class WeightUpdate { covariance, least_squares };

struct NipalsOptions {
  Index p_x = 0;  // nonzero count kept in w_x
  Index q_y = 0;  // nonzero count kept in w_y
  double tol = 1e-6;
  int max_iter = 200;
  WeightUpdate update = WeightUpdate::covariance;
  std::optional<VectorXd> w0;           // initial w_x
  std::optional<std::uint64_t> seed;    // random unit-vector init instead
};

struct NipalsResult {
  VectorXd w_x;
  VectorXd w_y;
  double rho = 0.0;
  int iterations = 0;
  bool converged = false;
  bool null_component = false;
  std::vector<double> rho_history;  // rho after each full sweep
  std::vector<std::string> warnings;
};

namespace detail {

// Deterministic default start: a few power-iteration passes approximate the
// leading right singular direction of the cross product X'Y, pointing the
// start at shared structure rather than either view's own variance.
inline VectorXd default_init(const MatrixXd& x, const MatrixXd& y) {
  VectorXd v = VectorXd::Ones(x.cols()) / std::sqrt(static_cast<double>(x.cols()));
  for (int pass = 0; pass < 3; ++pass) {
    const VectorXd u = y.transpose() * (x * v);
    v = x.transpose() * (y * u);
    const double nrm = v.norm();
    if (nrm < 1e-30) return VectorXd::Unit(x.cols(), 0);
    v /= nrm;
  }
  return v;
}

inline VectorXd random_unit(Index p, std::uint64_t seed) {
  auto eng = substream(seed, 0x1417ull);
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd v(p);
  for (Index j = 0; j < p; ++j) v[j] = normal(eng);
  const double nrm = v.norm();
  return nrm > 0.0 ? VectorXd(v / nrm) : VectorXd::Unit(p, 0);
}

// Flip (w_x, w_y) jointly so that w_x's largest-magnitude element is
// positive; the correlation is invariant under the pair flip.
inline void canonical_orientation(VectorXd& w_x, VectorXd& w_y) {
  Index arg = 0;
  double best = -1.0;
  for (Index j = 0; j < w_x.size(); ++j) {
    if (std::abs(w_x[j]) > best) {
      best = std::abs(w_x[j]);
      arg = j;
    }
  }
  if (w_x[arg] < 0.0) {
    w_x = -w_x;
    w_y = -w_y;
  }
}

struct WeightSolver {
  const MatrixXd& m;
  WeightUpdate mode;
  std::optional<Eigen::ColPivHouseholderQR<MatrixXd>> qr;

  WeightSolver(const MatrixXd& mat, WeightUpdate update) : m(mat), mode(update) {
    if (mode == WeightUpdate::least_squares) qr.emplace(m);
  }

  VectorXd operator()(const VectorXd& target) const {
    if (mode == WeightUpdate::least_squares) return qr->solve(target);
    return m.transpose() * target;
  }
};

}  // namespace detail

// One sparse canonical pair by alternating updates: w~_y from eta, top-k
// threshold, gamma = Y w_y standardized to unit sample sd; then the mirror
// update for w_x. Stops when rho(l) - rho(l-1) < tol (signed, so the first
// stall or decrease ends the loop); a decreasing final step rolls back to
// the previous iterate, which keeps the accepted rho sequence nondecreasing.
inline NipalsResult nipals_pair(const MatrixXd& x, const MatrixXd& y,
                                const NipalsOptions& opts) {
  if (x.rows() != y.rows())
    throw Error("nipals_pair: row counts differ between views");
  if (x.rows() < 3) throw Error("nipals_pair: need at least 3 rows");
  const Index p = x.cols();
  const Index q = y.cols();
  if (opts.p_x < 1 || opts.p_x > p || opts.q_y < 1 || opts.q_y > q)
    throw Error("nipals_pair: sparsity counts out of range");

  NipalsResult res;
  res.w_x = opts.w0 ? *opts.w0
            : opts.seed ? detail::random_unit(p, *opts.seed)
                        : detail::default_init(x, y);
  if (res.w_x.size() != p) throw Error("nipals_pair: w0 has wrong length");

  const detail::WeightSolver solve_x(x, opts.update);
  const detail::WeightSolver solve_y(y, opts.update);

  auto standardized = [](const VectorXd& v) -> std::optional<VectorXd> {
    const double sd = sample_sd(v);
    if (sd < 1e-12) return std::nullopt;
    return VectorXd(v / sd);
  };

  auto latent0 = standardized(x * res.w_x);
  if (!latent0) {
    res.null_component = true;
    res.converged = true;
    res.warnings.push_back("nipals_pair: initial latent variable has zero variance");
    res.w_x.setZero();
    res.w_y = VectorXd::Zero(q);
    return res;
  }
  VectorXd eta = *latent0;

  double rho_prev = 0.0;
  double best_rho = -std::numeric_limits<double>::infinity();
  VectorXd best_wx = res.w_x, best_wy = VectorXd::Zero(q);
  VectorXd prev_wx = res.w_x, prev_wy = VectorXd::Zero(q);

  for (int l = 1; l <= opts.max_iter; ++l) {
    const VectorXd wy_raw = solve_y(eta);
    if (wy_raw.cwiseAbs().maxCoeff() < 1e-12) {
      res.null_component = true;
      break;
    }
    res.w_y = soft_threshold_topk(wy_raw, opts.q_y);
    auto gamma_std = standardized(y * res.w_y);
    if (!gamma_std) {
      res.null_component = true;
      break;
    }
    const VectorXd gamma = *gamma_std;

    const VectorXd wx_raw = solve_x(gamma);
    if (wx_raw.cwiseAbs().maxCoeff() < 1e-12) {
      res.null_component = true;
      break;
    }
    res.w_x = soft_threshold_topk(wx_raw, opts.p_x);
    auto eta_std = standardized(x * res.w_x);
    if (!eta_std) {
      res.null_component = true;
      break;
    }
    eta = *eta_std;

    const double rho = canonical_correlation(eta, gamma);
    res.iterations = l;
    if (rho - rho_prev < opts.tol) {
      res.converged = true;
      if (l > 1 && rho < rho_prev) {
        // Past the peak: keep the previous (accepted) iterate.
        res.w_x = prev_wx;
        res.w_y = prev_wy;
        res.rho = rho_prev;
      } else {
        res.rho_history.push_back(rho);
        res.rho = rho;
      }
      break;
    }
    res.rho_history.push_back(rho);
    res.rho = rho;
    if (rho > best_rho) {
      best_rho = rho;
      best_wx = res.w_x;
      best_wy = res.w_y;
    }
    prev_wx = res.w_x;
    prev_wy = res.w_y;
    rho_prev = rho;
  }

  if (res.null_component) {
    res.converged = true;
    res.w_x = VectorXd::Zero(p);
    res.w_y = VectorXd::Zero(q);
    res.rho = 0.0;
    res.warnings.push_back("nipals_pair: null component (zero weights or latent variance)");
    return res;
  }
  if (!res.converged) {
    res.warnings.push_back("nipals_pair: no convergence after " +
                           std::to_string(opts.max_iter) +
                           " iterations; returning best iterate");
    res.w_x = best_wx;
    res.w_y = best_wy;
    res.rho = best_rho;
  }
  detail::canonical_orientation(res.w_x, res.w_y);
  return res;
}

}  // namespace toscca
