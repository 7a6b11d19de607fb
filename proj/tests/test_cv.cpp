#include <catch2/catch_amalgamated.hpp>

#include "toscca/cross_validation.hpp"
#include "toscca/simulate.hpp"

using namespace toscca;

namespace {

std::pair<PairedStudy, SimulationTruth> small_study(std::uint64_t seed) {
  SimConfig cfg;
  cfg.n = 40;
  cfg.p = 60;
  cfg.q = 30;
  cfg.n_components = 1;
  cfg.nnz_x = 5;
  cfg.nnz_y = 5;
  cfg.seed = seed;
  return simulate_study(cfg);
}

MmConfig cv_template() {
  MmConfig cfg;
  cfg.p_x = 1;  // placeholder; cv fills per cell
  cfg.q_y = 1;
  cfg.basis_x = TimeBasis::make_polynomial(3);
  cfg.basis_y = TimeBasis::make_polynomial(3);
  return cfg;
}

}  // namespace

TEST_CASE("one-cell grid selects that cell", "[cv]") {
  const auto [raw, truth] = small_study(1);
  const std::vector<CvCell> grid{{5, 5}};
  const auto report = cv_select(raw, grid, 3, cv_template(), 7);
  CHECK(report.selected == 0);
  CHECK(report.grid.size() == 1);
  CHECK(std::isfinite(report.mean_rho[0]));
}

TEST_CASE("tie break prefers the sparser cell", "[cv]") {
  const std::vector<CvCell> grid{{20, 20}, {10, 20}, {30, 5}};
  const std::vector<double> means{0.8, 0.8, 0.8};
  CHECK(detail::select_cell(grid, means) == 1);  // p+q = 30 beats 40 and 35
  const std::vector<double> means2{0.8, 0.7, 0.9};
  CHECK(detail::select_cell(grid, means2) == 2);
}

TEST_CASE("failed cells score minus infinity and are excluded", "[cv]") {
  const auto [raw, truth] = small_study(2);
  // 500 > p = 60, so the first cell fails validation on every fold.
  const std::vector<CvCell> grid{{500, 5}, {5, 5}};
  const auto report = cv_select(raw, grid, 3, cv_template(), 11);
  CHECK(report.selected == 1);
  CHECK(report.mean_rho[0] == -std::numeric_limits<double>::infinity());
  for (int f = 0; f < 3; ++f) {
    CHECK_FALSE(report.results[static_cast<std::size_t>(f)].ok);
    CHECK_FALSE(report.results[static_cast<std::size_t>(f)].error.empty());
  }
  CHECK_THROWS_WITH(cv_select(raw, {{500, 5}}, 3, cv_template(), 11),
                    Catch::Matchers::ContainsSubstring("every cell failed"));
}

TEST_CASE("report is deterministic in the seed and thread count", "[cv]") {
  const auto [raw, truth] = small_study(3);
  const std::vector<CvCell> grid{{3, 5}, {5, 5}, {10, 5}};
  const auto a = cv_select(raw, grid, 3, cv_template(), 21, 1);
  const auto b = cv_select(raw, grid, 3, cv_template(), 21, 4);
  REQUIRE(a.results.size() == b.results.size());
  for (std::size_t i = 0; i < a.results.size(); ++i) {
    CHECK(a.results[i].ok == b.results[i].ok);
    CHECK(a.results[i].rho == b.results[i].rho);
  }
  CHECK(a.selected == b.selected);

  const auto c = cv_select(raw, grid, 3, cv_template(), 22);
  bool identical = true;
  for (std::size_t i = 0; i < a.results.size(); ++i)
    identical = identical && a.results[i].rho == c.results[i].rho;
  CHECK_FALSE(identical);  // different fold split
}

TEST_CASE("held-out subjects never leak into training", "[cv]") {
  const auto [raw, truth] = small_study(4);
  const auto folds = subject_folds(raw, 4, 17);
  const auto ctx = detail::make_fold(raw, folds, 0);

  const CvCell cell{5, 5};
  const auto base = detail::eval_cell_fold(ctx, cell, cv_template());

  // Corrupt the held-out rows wildly; trained weights must not move.
  auto corrupted = ctx;
  corrupted.test_x.values.array() *= 1e3;
  corrupted.test_x.values.array() += 5.0;
  corrupted.test_y.values.array() *= -2e2;
  const auto mod = detail::eval_cell_fold(corrupted, cell, cv_template());

  CHECK((base.w_x - mod.w_x).cwiseAbs().maxCoeff() == 0.0);
  CHECK((base.w_y - mod.w_y).cwiseAbs().maxCoeff() == 0.0);
  CHECK(base.rho != mod.rho);  // the held-out score does react

  // Standardization statistics come from training subjects only: a test
  // feature's mean in the standardized test view is generally nonzero.
  double max_abs_mean = 0.0;
  for (Index j = 0; j < ctx.test_x.cols(); ++j)
    max_abs_mean = std::max(max_abs_mean, std::abs(ctx.test_x.values.col(j).mean()));
  CHECK(max_abs_mean > 1e-8);
}

TEST_CASE("cv lands near the true sparsity on simulated data", "[cv]") {
  // Statistical sanity at desk scale; the full criterion runs in the
  // acceptance suite.
  int within = 0;
  for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
    const auto [raw, truth] = small_study(seed);
    const std::vector<CvCell> grid{{2, 5}, {5, 5}, {10, 5}, {30, 5}};
    const auto report = cv_select(raw, grid, 3, cv_template(), seed, 4);
    const Index chosen = report.grid[report.selected].p_x;
    if (chosen >= 3 && chosen <= 10) ++within;
  }
  CHECK(within >= 2);
}
