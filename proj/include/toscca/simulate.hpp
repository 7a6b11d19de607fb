#pragma once

#include <set>
#include <vector>

#include "toscca/long_view.hpp"
#include "toscca/toscca_mm.hpp"

namespace toscca {

// Generative setup: one latent path per component drives both views, rows
// are multivariate normal around z_i * w' with an AR(1) time covariance,
// and a fixed fraction of measurement rows is removed per view.
struct SimConfig {
  int n = 100;
  Index p = 10000;
  Index q = 200;
  int n_measurements = 10;  // grid t = 1..m
  double mask_x = 0.20;     // fraction of X rows removed
  double mask_y = 0.30;     // fraction of Y rows removed
  int n_components = 2;
  Index nnz_x = 10;  // true support size per component in w_x
  Index nnz_y = 20;  // and in w_y
  double theta0 = 0.3;
  double theta1 = 1.0;
  double theta2 = -0.8;
  double latent_noise_sd = 0.25;
  double feature_noise_sd = 1.0;  // scales the Psi draw; 0 = noiseless views
  double ar1 = 0.5;               // Psi off-diagonal decay
  // True: sin(theta1*t)^t element-wise with the sign of the base kept and
  // 0^0 = 1. False: the alternative reading sin(theta1*t*t).
  bool sin_power_reading = true;
  std::uint64_t seed = 1;

  void validate() const {
    if (n < 1 || p < 1 || q < 1 || n_measurements < 1)
      throw Error("SimConfig: dimensions must be positive");
    if (nnz_x < 1 || nnz_x > p || nnz_y < 1 || nnz_y > q)
      throw Error("SimConfig: support sizes out of range");
    if (n_components < 1 || static_cast<Index>(n_components) * nnz_x > p ||
        static_cast<Index>(n_components) * nnz_y > q)
      throw Error("SimConfig: disjoint supports do not fit the feature count");
    if (mask_x < 0.0 || mask_x >= 1.0 || mask_y < 0.0 || mask_y >= 1.0)
      throw Error("SimConfig: mask fractions must be in [0, 1)");
  }
};

struct SimulationTruth {
  VectorXd grid;                 // shared measurement grid
  std::vector<VectorXd> w_x;     // per component, length p
  std::vector<VectorXd> w_y;     // per component, length q
  std::vector<MatrixXd> z;       // per component, n x grid
  MatrixXd psi_x;                // time covariance, unit diagonal at default
  MatrixXd psi_y;
  std::vector<std::vector<bool>> mask_x;  // n x grid, true = row removed
  std::vector<std::vector<bool>> mask_y;
  SimConfig config;

  std::string subject_label(int i) const { return "s" + std::to_string(i + 1); }
};

inline VectorXd sim_time_grid(const SimConfig& cfg) {
  VectorXd grid(cfg.n_measurements);
  for (int m = 0; m < cfg.n_measurements; ++m) grid[m] = m + 1;
  return grid;
}

// Deterministic part of the latent path for component k (1-based).
inline double latent_path_mean(const SimConfig& cfg, int k, double t, double t_max) {
  if (k == 1) {
    double osc;
    if (cfg.sin_power_reading) {
      const double s = std::sin(cfg.theta1 * t);
      osc = (s < 0.0 ? -1.0 : 1.0) * std::pow(std::abs(s), t);  // 0^0 = 1
    } else {
      osc = std::sin(cfg.theta1 * t * t);
    }
    return cfg.theta0 * t + osc;
  }
  if (k == 2) {
    const double r = 1.0 + t / t_max;
    return cfg.theta2 * t + r * r * r;
  }
  return 0.0;  // components beyond the second carry no signal
}

// Latent paths z_{k,i}: shared deterministic trajectory plus i.i.d. noise
// per (subject, time), drawn from per-subject substreams.
inline std::vector<MatrixXd> gen_latent_paths(const SimConfig& cfg) {
  const VectorXd grid = sim_time_grid(cfg);
  const double t_max = grid[grid.size() - 1];
  std::vector<MatrixXd> z(static_cast<std::size_t>(cfg.n_components));
  for (int k = 1; k <= cfg.n_components; ++k) {
    MatrixXd zk(cfg.n, grid.size());
    for (int i = 0; i < cfg.n; ++i) {
      auto eng = substream(cfg.seed, 0x2a00ull + 1000ull * k + static_cast<std::uint64_t>(i));
      std::normal_distribution<double> noise(0.0, cfg.latent_noise_sd);
      for (Index m = 0; m < grid.size(); ++m)
        zk(i, m) = latent_path_mean(cfg, k, grid[m], t_max) +
                   (cfg.latent_noise_sd > 0.0 ? noise(eng) : 0.0);
    }
    z[static_cast<std::size_t>(k - 1)] = std::move(zk);
  }
  return z;
}

namespace detail {

inline MatrixXd ar1_covariance(Index dim, double rho) {
  MatrixXd psi(dim, dim);
  for (Index a = 0; a < dim; ++a)
    for (Index b = 0; b < dim; ++b)
      psi(a, b) = std::pow(rho, std::abs(static_cast<double>(a - b)));
  return psi;
}

// Disjoint supports across components; magnitudes +-U(0.5, 1).
inline std::vector<VectorXd> draw_true_weights(Index dim, Index nnz, int n_components,
                                               std::uint64_t seed, std::uint64_t tag) {
  std::vector<Index> order(static_cast<std::size_t>(dim));
  std::iota(order.begin(), order.end(), Index{0});
  auto eng = substream(seed, tag);
  fisher_yates(order, eng);
  std::uniform_real_distribution<double> mag(0.5, 1.0);
  std::vector<VectorXd> w;
  Index next = 0;
  for (int k = 0; k < n_components; ++k) {
    VectorXd wk = VectorXd::Zero(dim);
    for (Index s = 0; s < nnz; ++s) {
      const Index j = order[static_cast<std::size_t>(next++)];
      const double sign = (eng() & 1ull) ? 1.0 : -1.0;
      wk[j] = sign * mag(eng);
    }
    w.push_back(std::move(wk));
  }
  return w;
}

// Remove exactly round(fraction * n_rows) measurement rows, uniformly over
// all (subject, time) rows, so any subject may lose none, several or all.
inline std::vector<std::vector<bool>> draw_mask(int n, Index grid_size, double fraction,
                                                std::uint64_t seed, std::uint64_t tag) {
  const Index total = static_cast<Index>(n) * grid_size;
  const Index n_remove = static_cast<Index>(std::llround(fraction * static_cast<double>(total)));
  std::vector<Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), Index{0});
  auto eng = substream(seed, tag);
  fisher_yates(order, eng);
  std::vector<std::vector<bool>> mask(
      static_cast<std::size_t>(n),
      std::vector<bool>(static_cast<std::size_t>(grid_size), false));
  for (Index r = 0; r < n_remove; ++r) {
    const Index flat = order[static_cast<std::size_t>(r)];
    mask[static_cast<std::size_t>(flat / grid_size)]
        [static_cast<std::size_t>(flat % grid_size)] = true;
  }
  return mask;
}

// Complete per-subject matrices are generated first (mean + chol(Psi) mixed
// noise, independent across features, correlated across time), then masked
// rows are dropped, mirroring "generate, then remove at random".
inline LongView assemble_view(const SimulationTruth& truth, const std::vector<VectorXd>& w,
                              const MatrixXd& psi, Index dim,
                              const std::vector<std::vector<bool>>& mask,
                              std::uint64_t tag) {
  const SimConfig& cfg = truth.config;
  const Index grid_size = truth.grid.size();
  const MatrixXd chol = Eigen::LLT<MatrixXd>(psi).matrixL();

  Index total_kept = 0;
  for (int i = 0; i < cfg.n; ++i)
    for (Index m = 0; m < grid_size; ++m)
      if (!mask[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)]) ++total_kept;

  MatrixXd values(total_kept, dim);
  std::vector<std::string> sids;
  VectorXd times(total_kept);
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(dim));
  for (Index j = 0; j < dim; ++j) names.push_back("f" + std::to_string(j + 1));

  Index row = 0;
  MatrixXd full(grid_size, dim);
  MatrixXd g(grid_size, dim);
  for (int i = 0; i < cfg.n; ++i) {
    full.setZero();
    for (std::size_t k = 0; k < w.size(); ++k)
      full.noalias() += truth.z[k].row(i).transpose() * w[k].transpose();
    if (cfg.feature_noise_sd > 0.0) {
      auto eng = substream(cfg.seed, tag + static_cast<std::uint64_t>(i));
      std::normal_distribution<double> unit(0.0, 1.0);
      for (Index m = 0; m < grid_size; ++m)
        for (Index j = 0; j < dim; ++j) g(m, j) = unit(eng);
      full.noalias() += cfg.feature_noise_sd * (chol * g);
    }
    for (Index m = 0; m < grid_size; ++m) {
      if (mask[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)]) continue;
      values.row(row) = full.row(m);
      sids.push_back(truth.subject_label(i));
      times[row] = truth.grid[m];
      ++row;
    }
  }
  return LongView::make(std::move(values), std::move(sids), std::move(times),
                        std::move(names));
}

}  // namespace detail

inline SimulationTruth gen_truth(const SimConfig& cfg) {
  cfg.validate();
  SimulationTruth truth;
  truth.config = cfg;
  truth.grid = sim_time_grid(cfg);
  truth.z = gen_latent_paths(cfg);
  truth.w_x = detail::draw_true_weights(cfg.p, cfg.nnz_x, cfg.n_components, cfg.seed, 0xa11ull);
  truth.w_y = detail::draw_true_weights(cfg.q, cfg.nnz_y, cfg.n_components, cfg.seed, 0xb22ull);
  truth.psi_x = detail::ar1_covariance(truth.grid.size(), cfg.ar1);
  truth.psi_y = detail::ar1_covariance(truth.grid.size(), cfg.ar1);
  truth.mask_x = detail::draw_mask(cfg.n, truth.grid.size(), cfg.mask_x, cfg.seed, 0xc33000ull);
  truth.mask_y = detail::draw_mask(cfg.n, truth.grid.size(), cfg.mask_y, cfg.seed, 0xd44000ull);
  return truth;
}

inline PairedStudy gen_views(const SimulationTruth& truth) {
  LongView x = detail::assemble_view(truth, truth.w_x, truth.psi_x, truth.config.p,
                                     truth.mask_x, 0x10000ull);
  LongView y = detail::assemble_view(truth, truth.w_y, truth.psi_y, truth.config.q,
                                     truth.mask_y, 0x20000ull);
  return PairedStudy::make(std::move(x), std::move(y));
}

inline std::pair<PairedStudy, SimulationTruth> simulate_study(const SimConfig& cfg) {
  SimulationTruth truth = gen_truth(cfg);
  PairedStudy study = gen_views(truth);
  return {std::move(study), std::move(truth)};
}

// Recovery quality of one extracted component against one true component.
// Weight metrics are computed after sign alignment; the path correlation
// compares the estimated fixed-effects trajectory with the true
// deterministic path over the grid.
struct RecoveryMetrics {
  double precision_x = 0.0, recall_x = 0.0, cosine_x = 0.0;
  double precision_y = 0.0, recall_y = 0.0, cosine_y = 0.0;
  double path_cor_x = 0.0;
  double path_cor_y = 0.0;
};

namespace detail {

struct SupportScore {
  double precision, recall, cosine, sign;
};

inline SupportScore support_score(const VectorXd& est, const VectorXd& truth) {
  if (est.size() != truth.size()) throw Error("score_recovery: dimension mismatch");
  const double dot = est.dot(truth);
  const double sign = dot < 0.0 ? -1.0 : 1.0;
  Index tp = 0, fp = 0, fn = 0;
  for (Index j = 0; j < est.size(); ++j) {
    const bool e = est[j] != 0.0;
    const bool t = truth[j] != 0.0;
    tp += (e && t);
    fp += (e && !t);
    fn += (!e && t);
  }
  SupportScore s{};
  s.sign = sign;
  s.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  s.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  const double denom = est.norm() * truth.norm();
  s.cosine = denom > 0.0 ? sign * dot / denom : 0.0;
  return s;
}

}  // namespace detail

inline RecoveryMetrics score_recovery(const ComponentResult& result,
                                      const SimulationTruth& truth, int true_k) {
  if (true_k < 1 || true_k > truth.config.n_components)
    throw Error("score_recovery: true component index out of range");
  const auto sx = detail::support_score(result.weights.w_x,
                                        truth.w_x[static_cast<std::size_t>(true_k - 1)]);
  const auto sy = detail::support_score(result.weights.w_y,
                                        truth.w_y[static_cast<std::size_t>(true_k - 1)]);
  RecoveryMetrics m;
  m.precision_x = sx.precision;
  m.recall_x = sx.recall;
  m.cosine_x = sx.cosine;
  m.precision_y = sy.precision;
  m.recall_y = sy.recall;
  m.cosine_y = sy.cosine;

  const double t_max = truth.grid[truth.grid.size() - 1];
  VectorXd true_path(truth.grid.size());
  for (Index g = 0; g < truth.grid.size(); ++g)
    true_path[g] = latent_path_mean(truth.config, true_k, truth.grid[g], t_max);
  const VectorXd est_x = mean_trajectory(result.fit_x, truth.grid);
  const VectorXd est_y = mean_trajectory(result.fit_y, truth.grid);
  m.path_cor_x = sx.sign * pearson(est_x, true_path);
  m.path_cor_y = sy.sign * pearson(est_y, true_path);
  return m;
}

}  // namespace toscca
