#pragma once

#include <optional>
#include <vector>

#include "toscca/cca.hpp"
#include "toscca/lme.hpp"
#include "toscca/long_view.hpp"

namespace toscca {

struct CanonicalWeights {
  VectorXd w_x;
  VectorXd w_y;
  int k = 1;  // component index, 1-based
};

struct MmConfig {
  int K = 1;
  Index p_x = 0;
  Index q_y = 0;
  TimeBasis basis_x = TimeBasis::make_linear();
  TimeBasis basis_y = TimeBasis::make_linear();
  double tol = 1e-6;
  int max_iter = 200;
  std::uint64_t seed = 0;
  bool random_init = false;   // seeded random w0 instead of the sketch init
  bool symmetric_rho = false; // average the X-grid and Y-grid correlations
  WeightUpdate update = WeightUpdate::covariance;
  LmeOptions lme;

  void validate(Index p, Index q) const {
    if (K < 1) throw Error("MmConfig: K must be >= 1");
    if (p_x < 1 || p_x > p)
      throw Error("MmConfig: p_x out of range [1, " + std::to_string(p) + "]");
    if (q_y < 1 || q_y > q)
      throw Error("MmConfig: q_y out of range [1, " + std::to_string(q) + "]");
    if (max_iter < 1) throw Error("MmConfig: max_iter must be >= 1");
  }
};

// Everything extracted for one component: the weight pair, both latent
// trajectory fits, the observed latent series on each view's own grid and
// the model predictions on the other view's grid.
struct ComponentResult {
  CanonicalWeights weights;
  MixedModelFit fit_x;  // eta over t_x
  MixedModelFit fit_y;  // gamma over t_y
  double rho = 0.0;
  int iterations = 0;
  bool converged = false;
  bool null_component = false;
  LatentSeries latent_x;            // eta, standardized, on t_x rows
  LatentSeries latent_y;            // gamma, standardized, on t_y rows
  LatentSeries predicted_x_on_ty;   // eta-model prediction at t_y rows
  LatentSeries predicted_y_on_tx;   // gamma-model prediction at t_x rows
  std::vector<double> rho_history;
  std::vector<std::string> warnings;
};

// Convergence correlation on the X grid: eta against the gamma-model
// prediction at t_x (the two observed series have different lengths in MM
// mode, so they cannot be correlated directly).
inline double cor_mode(const LatentSeries& eta, const LatentSeries& gamma_pred) {
  return canonical_correlation(eta, gamma_pred);
}

namespace detail {

inline std::optional<VectorXd> standardize_latent(const VectorXd& v) {
  const double sd = sample_sd(v);
  if (sd < 1e-12) return std::nullopt;
  return VectorXd(v / sd);
}

// Per-feature mean curve over a shared grid: row g holds the average of all
// measurement rows taken at grid[g].
inline MatrixXd time_profile(const MatrixXd& values, const VectorXd& times,
                             const std::vector<double>& grid) {
  MatrixXd prof = MatrixXd::Zero(static_cast<Index>(grid.size()), values.cols());
  VectorXd counts = VectorXd::Zero(static_cast<Index>(grid.size()));
  for (Index r = 0; r < values.rows(); ++r) {
    const auto it = std::lower_bound(grid.begin(), grid.end(), times[r]);
    const Index g = static_cast<Index>(it - grid.begin());
    prof.row(g) += values.row(r);
    counts[g] += 1.0;
  }
  for (Index g = 0; g < prof.rows(); ++g)
    if (counts[g] > 0.0) prof.row(g) /= counts[g];
  return prof;
}

// Deterministic start for the MM loop: the leading right singular direction
// of the cross product of both views' time profiles. Grids differ between
// views, so the sketch lives on the union grid; averaging over subjects
// washes out view-specific noise and points the start at structure the two
// views share, which matters once earlier components have been deflated.
inline VectorXd profile_cross_init(const DeflationState& state, const PairedStudy& study) {
  const auto grid = study.union_times();
  const MatrixXd px = time_profile(state.x, study.x.times, grid);
  const MatrixXd py = time_profile(state.y, study.y.times, grid);
  VectorXd v = VectorXd::Ones(state.x.cols()) /
               std::sqrt(static_cast<double>(state.x.cols()));
  for (int pass = 0; pass < 3; ++pass) {
    const VectorXd u = py.transpose() * (px * v);
    v = px.transpose() * (py * u);
    const double nrm = v.norm();
    if (nrm < 1e-30) return VectorXd::Unit(state.x.cols(), 0);
    v /= nrm;
  }
  return v;
}

}  // namespace detail

// One component of the longitudinal loop: sparse weight updates interleaved
// with latent-trajectory fitting and cross-grid prediction. `state` carries
// the (possibly deflated) view matrices, row-aligned with the study's views.
inline ComponentResult fit_component_mm(const PairedStudy& study, const MmConfig& cfg,
                                        const DeflationState& state, int component = 1) {
  const MatrixXd& x = state.x;
  const MatrixXd& y = state.y;
  cfg.validate(x.cols(), y.cols());
  if (x.rows() != study.x.rows() || y.rows() != study.y.rows())
    throw Error("fit_component_mm: deflation state out of step with study");

  ComponentResult res;
  res.weights.k = component;

  auto mark_null = [&](const std::string& why) {
    res.null_component = true;
    res.converged = true;
    res.weights.w_x = VectorXd::Zero(x.cols());
    res.weights.w_y = VectorXd::Zero(y.cols());
    res.rho = 0.0;
    res.latent_x = VectorXd::Zero(x.rows());
    res.latent_y = VectorXd::Zero(y.rows());
    res.predicted_x_on_ty = VectorXd::Zero(y.rows());
    res.predicted_y_on_tx = VectorXd::Zero(x.rows());
    res.warnings.push_back("component " + std::to_string(component) + " is null: " + why);
  };

  VectorXd w_x = cfg.random_init
                     ? detail::random_unit(x.cols(), cfg.seed + 7919ull * component)
                     : detail::profile_cross_init(state, study);
  auto eta0 = detail::standardize_latent(x * w_x);
  if (!eta0) {
    mark_null("initial latent variable has zero variance");
    return res;
  }
  VectorXd eta = *eta0;
  VectorXd gamma;
  VectorXd w_y;

  const detail::WeightSolver solve_x(x, cfg.update);
  const detail::WeightSolver solve_y(y, cfg.update);

  double rho_prev = 0.0;
  for (int l = 1; l <= cfg.max_iter; ++l) {
    // Steps 3-4: latent trajectory of eta over t_x, predicted onto t_y.
    MixedModelFit fit_x = fit_lme(eta, study.x, cfg.basis_x, cfg.lme);
    const VectorXd eta_pred = predict_latent(fit_x, study.y);

    // Steps 5-6.
    const VectorXd wy_raw = solve_y(eta_pred);
    if (wy_raw.cwiseAbs().maxCoeff() < 1e-12) {
      mark_null("weight gradient for Y vanished");
      return res;
    }
    w_y = soft_threshold_topk(wy_raw, cfg.q_y);

    // Step 7.
    auto gamma_std = detail::standardize_latent(y * w_y);
    if (!gamma_std) {
      mark_null("gamma has zero variance");
      return res;
    }
    gamma = *gamma_std;

    // Steps 8-9.
    MixedModelFit fit_y = fit_lme(gamma, study.y, cfg.basis_y, cfg.lme);
    const VectorXd gamma_pred = predict_latent(fit_y, study.x);

    // Steps 10-11.
    const VectorXd wx_raw = solve_x(gamma_pred);
    if (wx_raw.cwiseAbs().maxCoeff() < 1e-12) {
      mark_null("weight gradient for X vanished");
      return res;
    }
    w_x = soft_threshold_topk(wx_raw, cfg.p_x);

    // Step 12.
    auto eta_std = detail::standardize_latent(x * w_x);
    if (!eta_std) {
      mark_null("eta has zero variance");
      return res;
    }
    eta = *eta_std;

    // Steps 13-14.
    double rho;
    try {
      rho = cor_mode(eta, gamma_pred);
      if (cfg.symmetric_rho) rho = 0.5 * (rho + cor_mode(gamma, eta_pred));
    } catch (const Error&) {
      mark_null("predicted latent series has zero variance");
      return res;
    }
    res.rho_history.push_back(rho);
    res.iterations = l;
    if (std::abs(rho - rho_prev) < cfg.tol) {
      res.converged = true;
      break;
    }
    rho_prev = rho;
  }
  if (!res.converged)
    res.warnings.push_back("component " + std::to_string(component) +
                           ": no convergence after " + std::to_string(cfg.max_iter) +
                           " iterations");

  // Finalize with everything consistent with the converged weight pair.
  detail::canonical_orientation(w_x, w_y);
  res.weights.w_x = w_x;
  res.weights.w_y = w_y;
  res.latent_x = *detail::standardize_latent(x * w_x);
  res.latent_y = *detail::standardize_latent(y * w_y);
  res.fit_x = fit_lme(res.latent_x, study.x, cfg.basis_x, cfg.lme);
  res.fit_y = fit_lme(res.latent_y, study.y, cfg.basis_y, cfg.lme);
  res.predicted_x_on_ty = predict_latent(res.fit_x, study.y);
  res.predicted_y_on_tx = predict_latent(res.fit_y, study.x);
  try {
    res.rho = cor_mode(res.latent_x, res.predicted_y_on_tx);
    if (cfg.symmetric_rho)
      res.rho = 0.5 * (res.rho + cor_mode(res.latent_y, res.predicted_x_on_ty));
  } catch (const Error&) {
    mark_null("final predicted latent series has zero variance");
  }
  for (const auto& w : res.fit_x.warnings) res.warnings.push_back("fit_x: " + w);
  for (const auto& w : res.fit_y.warnings) res.warnings.push_back("fit_y: " + w);
  return res;
}

// K components in sequence, deflating both views against their own observed
// latent series after each. Stops early (with partial results) on a null
// component.
inline std::vector<ComponentResult> fit(const PairedStudy& study, const MmConfig& cfg) {
  cfg.validate(study.x.cols(), study.y.cols());
  std::vector<ComponentResult> results;
  DeflationState state = DeflationState::start(study.x.values, study.y.values);
  for (int k = 1; k <= cfg.K; ++k) {
    ComponentResult r = fit_component_mm(study, cfg, state, k);
    const bool stop = r.null_component;
    results.push_back(std::move(r));
    if (stop) break;
    state = deflate(std::move(state), results.back().latent_x, results.back().latent_y);
  }
  return results;
}

}  // namespace toscca
