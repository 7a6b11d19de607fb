#pragma once

#include <atomic>
#include <set>
#include <thread>
#include <vector>

#include "toscca/toscca_mm.hpp"

namespace toscca {

struct CvCell {
  Index p_x = 0;
  Index q_y = 0;
};

struct CvCellFold {
  std::size_t cell = 0;
  int fold = 0;
  double rho = 0.0;
  bool ok = false;
  std::string error;
};

struct CvReport {
  std::vector<CvCell> grid;
  int k_folds = 0;
  std::uint64_t seed = 0;
  std::vector<CvCellFold> results;  // cell-major, fold-minor
  std::vector<double> mean_rho;     // per cell, over successful folds
  std::vector<double> sd_rho;
  std::size_t selected = 0;         // index into grid
};

namespace detail {

// Views split on subject level; standardization statistics come from the
// training subjects only and are applied to the held-out subjects.
struct FoldContext {
  LongView train_x, train_y;  // standardized on training stats
  LongView test_x, test_y;    // training stats applied
};

inline FoldContext make_fold(const PairedStudy& study,
                             const std::map<std::string, int>& folds, int fold) {
  std::set<std::string> train_ids, test_ids;
  for (const auto& [id, f] : folds) (f == fold ? test_ids : train_ids).insert(id);
  FoldContext ctx;
  auto sx = standardize(subset_subjects(study.x, train_ids));
  auto sy = standardize(subset_subjects(study.y, train_ids));
  ctx.train_x = std::move(sx.view);
  ctx.train_y = std::move(sy.view);
  ctx.test_x = apply_standardization(subset_subjects(study.x, test_ids), sx.stats);
  ctx.test_y = apply_standardization(subset_subjects(study.y, test_ids), sy.stats);
  return ctx;
}

struct FoldScore {
  double rho = 0.0;
  VectorXd w_x, w_y;  // trained weights, useful for leakage checks
};

// Fit component 1 on the training subjects, freeze the weights, project the
// held-out rows, refit the latent trajectory of gamma on the held-out
// subjects and correlate eta_test with its prediction on the test X grid.
inline FoldScore eval_cell_fold(const FoldContext& ctx, const CvCell& cell,
                                const MmConfig& cfg_template) {
  MmConfig cfg = cfg_template;
  cfg.K = 1;
  cfg.p_x = cell.p_x;
  cfg.q_y = cell.q_y;
  const PairedStudy train = PairedStudy::make(ctx.train_x, ctx.train_y);
  const auto components = fit(train, cfg);
  if (components.empty() || components.front().null_component)
    throw Error("cv: training fit produced a null component");
  const ComponentResult& comp = components.front();

  FoldScore score;
  score.w_x = comp.weights.w_x;
  score.w_y = comp.weights.w_y;
  const VectorXd eta_test = ctx.test_x.values * comp.weights.w_x;
  const VectorXd gamma_test = ctx.test_y.values * comp.weights.w_y;
  MixedModelFit fit_gamma = fit_lme(gamma_test, ctx.test_y, cfg.basis_y, cfg.lme);
  const VectorXd gamma_pred = predict_latent(fit_gamma, ctx.test_x);
  score.rho = cor_mode(eta_test, gamma_pred);
  return score;
}

inline std::size_t select_cell(const std::vector<CvCell>& grid,
                               const std::vector<double>& mean_rho) {
  std::size_t best = grid.size();
  for (std::size_t c = 0; c < grid.size(); ++c) {
    if (!std::isfinite(mean_rho[c])) continue;
    if (best == grid.size()) {
      best = c;
      continue;
    }
    const double cur = mean_rho[best];
    if (mean_rho[c] > cur) {
      best = c;
    } else if (mean_rho[c] == cur) {
      // Ties go to the sparser model.
      const auto key = [&](std::size_t i) {
        return std::make_tuple(grid[i].p_x + grid[i].q_y, grid[i].p_x, grid[i].q_y);
      };
      if (key(c) < key(best)) best = c;
    }
  }
  if (best == grid.size()) throw Error("cv_select: every cell failed on every fold");
  return best;
}

}  // namespace detail

inline CvReport cv_select(const PairedStudy& study, const std::vector<CvCell>& grid,
                          int k_folds, const MmConfig& cfg_template, std::uint64_t seed,
                          int threads = 1) {
  if (grid.empty()) throw Error("cv_select: empty grid");
  const auto folds = subject_folds(study, k_folds, seed);

  std::vector<detail::FoldContext> contexts;
  contexts.reserve(static_cast<std::size_t>(k_folds));
  for (int f = 0; f < k_folds; ++f) contexts.push_back(detail::make_fold(study, folds, f));

  CvReport report;
  report.grid = grid;
  report.k_folds = k_folds;
  report.seed = seed;
  report.results.resize(grid.size() * static_cast<std::size_t>(k_folds));

  // Grid x fold cells are independent; each task writes its own slot, so
  // the report is identical for any thread count.
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t task = next.fetch_add(1);
      if (task >= report.results.size()) return;
      const std::size_t c = task / static_cast<std::size_t>(k_folds);
      const int f = static_cast<int>(task % static_cast<std::size_t>(k_folds));
      CvCellFold& slot = report.results[task];
      slot.cell = c;
      slot.fold = f;
      try {
        slot.rho = detail::eval_cell_fold(contexts[static_cast<std::size_t>(f)],
                                          grid[c], cfg_template).rho;
        slot.ok = true;
      } catch (const std::exception& e) {
        slot.ok = false;
        slot.error = e.what();
      }
    }
  };
  const int n_threads = std::max(1, threads);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  report.mean_rho.assign(grid.size(), -std::numeric_limits<double>::infinity());
  report.sd_rho.assign(grid.size(), 0.0);
  for (std::size_t c = 0; c < grid.size(); ++c) {
    std::vector<double> rhos;
    for (int f = 0; f < k_folds; ++f) {
      const auto& slot = report.results[c * static_cast<std::size_t>(k_folds) +
                                        static_cast<std::size_t>(f)];
      if (slot.ok) rhos.push_back(slot.rho);
    }
    if (rhos.empty()) continue;  // scored -inf, excluded from selection
    double mean = 0.0;
    for (double r : rhos) mean += r;
    mean /= static_cast<double>(rhos.size());
    double var = 0.0;
    for (double r : rhos) var += (r - mean) * (r - mean);
    report.mean_rho[c] = mean;
    report.sd_rho[c] = rhos.size() > 1
                           ? std::sqrt(var / static_cast<double>(rhos.size() - 1))
                           : 0.0;
  }
  report.selected = detail::select_cell(grid, report.mean_rho);
  return report;
}

}  // namespace toscca
