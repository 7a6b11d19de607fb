#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toscca/long_view.hpp"
#include "toscca/time_basis.hpp"

namespace toscca {

// A latent series holds one value per row of the LongView it was computed
// from, in that view's row order.
using LatentSeries = VectorXd;

// Random-intercept model y_it = x(t)'beta + b_i + e_it with b_i ~ N(0, s2a)
// and e ~ N(0, s2e), fitted by profiled maximum likelihood over the
// variance ratio lambda = s2a/s2e.
struct MixedModelFit {
  TimeBasis basis;
  VectorXd fixed_effects;  // raw-basis coefficients, intercept first
  std::map<std::string, double> random_intercepts;
  double var_random = 0.0;  // sigma^2_alpha
  double var_resid = 1.0;   // sigma^2_epsilon
  double lambda = 0.0;      // var_random / var_resid at the optimum
  double loglik = 0.0;
  bool singleton_fallback = false;
  std::vector<std::string> warnings;
};

struct LmeOptions {
  double log_lambda_min = -14.0;
  double log_lambda_max = 7.0;
  double tol_log_lambda = 1e-10;
  // Skip the 1-D search and use this ratio as-is (tests, degenerate modes).
  std::optional<double> fixed_lambda;
};

namespace detail {

// Per-subject sufficient statistics for the conditioned design; with
// V_i = I + lambda*J the GLS pieces reduce to rank-one corrections, so one
// profile evaluation costs O(subjects * k^2) regardless of row count.
struct LmeStats {
  MatrixXd gram;       // Z'Z
  VectorXd zty;        // Z'y
  double yty = 0.0;
  Index n_rows = 0;
  std::vector<VectorXd> col_sums;  // s_i = Z_i' 1
  std::vector<double> y_sums;      // u_i = 1' y_i
  std::vector<double> counts;      // m_i
};

struct LmeProfile {
  VectorXd beta;  // scaled-basis GLS coefficients
  double rss = 0.0;
  double loglik = 0.0;
};

inline LmeProfile lme_profile(const LmeStats& st, double lambda) {
  const Index k = st.gram.rows();
  MatrixXd a = st.gram;
  VectorXd b = st.zty;
  double logdet = 0.0;
  for (std::size_t i = 0; i < st.counts.size(); ++i) {
    const double c = lambda / (1.0 + lambda * st.counts[i]);
    a.noalias() -= c * st.col_sums[i] * st.col_sums[i].transpose();
    b.noalias() -= c * st.y_sums[i] * st.col_sums[i];
    logdet += std::log1p(lambda * st.counts[i]);
  }
  LmeProfile p;
  Eigen::LDLT<MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success)
    throw Error("fit_lme: GLS normal equations not solvable");
  p.beta = ldlt.solve(b);
  double rss = st.yty - 2.0 * p.beta.dot(st.zty) +
               p.beta.dot(st.gram * p.beta);
  for (std::size_t i = 0; i < st.counts.size(); ++i) {
    const double c = lambda / (1.0 + lambda * st.counts[i]);
    const double ri = st.y_sums[i] - st.col_sums[i].dot(p.beta);
    rss -= c * ri * ri;
  }
  p.rss = std::max(rss, 0.0);
  const double n = static_cast<double>(st.n_rows);
  const double s2 = std::max(p.rss / n, 1e-300);
  p.loglik = -0.5 * (n * std::log(2.0 * M_PI) + n * std::log(s2) + logdet + n);
  (void)k;
  return p;
}

}  // namespace detail

inline MixedModelFit fit_lme(const LatentSeries& series, const LongView& view,
                             const TimeBasis& basis, const LmeOptions& opts = {}) {
  const Index n = view.rows();
  if (series.size() != n) throw Error("fit_lme: series length does not match view rows");
  if (view.subjects.size() < 2) throw Error("fit_lme: need at least 2 subjects");
  if (!series.allFinite()) throw Error("fit_lme: non-finite latent values");

  const auto cond = detail::ConditionedBasis::fit_to(basis, view.times);
  const MatrixXd design = cond.design(view.times);
  const Index k = design.cols();

  {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < k)
      throw Error("fit_lme: rank-deficient design (basis degree too high for observed grid)");
  }

  detail::LmeStats st;
  st.gram = design.transpose() * design;
  st.zty = design.transpose() * series;
  st.yty = series.squaredNorm();
  st.n_rows = n;
  for (const auto& s : view.subjects) {
    st.col_sums.push_back(design.middleRows(s.start, s.count).colwise().sum().transpose());
    st.y_sums.push_back(series.segment(s.start, s.count).sum());
    st.counts.push_back(static_cast<double>(s.count));
  }

  MixedModelFit fit;
  fit.basis = basis;

  bool all_singleton = true;
  for (double m : st.counts)
    if (m > 1.0) all_singleton = false;

  double lambda = 0.0;
  if (opts.fixed_lambda) {
    lambda = *opts.fixed_lambda;
    if (lambda < 0.0) throw Error("fit_lme: fixed_lambda must be >= 0");
  } else if (all_singleton) {
    // One row per subject: the intercept variance is unidentifiable, so
    // fall back to sigma^2_alpha = 0 (plain OLS).
    lambda = 0.0;
    fit.singleton_fallback = true;
    fit.warnings.push_back(
        "fit_lme: all subjects have a single observation; variance ratio is "
        "unidentifiable, falling back to sigma^2_alpha = 0");
  } else {
    // Coarse scan in log lambda, then golden-section refinement around the
    // best grid point.
    auto value_at = [&](double log_lambda) {
      return detail::lme_profile(st, std::exp(log_lambda)).loglik;
    };
    const double lo = opts.log_lambda_min;
    const double hi = opts.log_lambda_max;
    const int n_grid = 43;
    double best_x = lo, best_f = -std::numeric_limits<double>::infinity();
    for (int g = 0; g < n_grid; ++g) {
      const double x = lo + (hi - lo) * g / (n_grid - 1);
      const double f = value_at(x);
      if (f > best_f) {
        best_f = f;
        best_x = x;
      }
    }
    const double step = (hi - lo) / (n_grid - 1);
    double a = std::max(lo, best_x - step);
    double b = std::min(hi, best_x + step);
    const double inv_phi = 0.6180339887498949;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = value_at(x1);
    double f2 = value_at(x2);
    while (b - a > opts.tol_log_lambda) {
      if (f1 < f2) {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + inv_phi * (b - a);
        f2 = value_at(x2);
      } else {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - inv_phi * (b - a);
        f1 = value_at(x1);
      }
    }
    const double x_star = 0.5 * (a + b);
    lambda = std::exp(x_star);
    // The lower edge approximates sigma^2_alpha = 0; snap to the exact
    // boundary when the search lands there.
    if (value_at(x_star) <= detail::lme_profile(st, 0.0).loglik) lambda = 0.0;
  }

  const auto prof = detail::lme_profile(st, lambda);
  fit.lambda = lambda;
  fit.fixed_effects = cond.to_raw(prof.beta);
  fit.var_resid = std::max(prof.rss / static_cast<double>(n), 1e-300);
  fit.var_random = lambda * fit.var_resid;
  fit.loglik = prof.loglik;
  for (std::size_t i = 0; i < view.subjects.size(); ++i) {
    const double c = lambda / (1.0 + lambda * st.counts[i]);
    const double ri = st.y_sums[i] - st.col_sums[i].dot(prof.beta);
    fit.random_intercepts[view.subjects[i].id] = c * ri;
  }
  return fit;
}

// Subject-aware prediction on a target grid: fixed-effects curve plus the
// subject's BLUP; subjects unseen at fit time get the population curve.
inline LatentSeries predict_latent(const MixedModelFit& fit, const LongView& target) {
  LatentSeries out(target.rows());
  const MatrixXd design = build_design(fit.basis, target.times);
  out = design * fit.fixed_effects;
  for (const auto& s : target.subjects) {
    const auto it = fit.random_intercepts.find(s.id);
    if (it == fit.random_intercepts.end()) continue;
    out.segment(s.start, s.count).array() += it->second;
  }
  return out;
}

// Population (fixed-effects) curve over an arbitrary grid.
inline VectorXd mean_trajectory(const MixedModelFit& fit,
                                const Eigen::Ref<const VectorXd>& grid) {
  return build_design(fit.basis, grid) * fit.fixed_effects;
}

}  // namespace toscca
