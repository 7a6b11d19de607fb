// Batch front end: simulate, align, fit and cross-validate paired
// longitudinal studies, writing plot-ready CSV tables plus a manifest that
// is sufficient to re-run the command bit-identically.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "toscca/toscca.hpp"

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;
using namespace toscca;

namespace {

std::string fmt(double v) { return detail::format_double(v); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

struct CommonFitFlags {
  std::string x_path, y_path;
  std::string basis_x = "poly:3";
  std::string basis_y = "poly:3";
  double tol = 1e-6;
  int max_iter = 200;
  std::uint64_t seed = 1;
  int threads = 1;
  bool random_init = false;
  bool symmetric_rho = false;
  std::string update = "covariance";
  std::string out = ".";

  void add_to(CLI::App& app, bool need_sparsity, Index* px, Index* qy, int* k) {
    app.add_option("--x", x_path, "long-format CSV for the X view")->required();
    app.add_option("--y", y_path, "long-format CSV for the Y view")->required();
    app.add_option("--basis-x", basis_x, "time basis: linear | poly:D | changepoint:D:S");
    app.add_option("--basis-y", basis_y, "time basis for the Y view");
    if (need_sparsity) {
      app.add_option("--px", *px, "nonzero count kept in w_x");
      app.add_option("--qy", *qy, "nonzero count kept in w_y");
    }
    if (k != nullptr) app.add_option("--k", *k, "number of components");
    app.add_option("--tol", tol, "convergence tolerance on rho");
    app.add_option("--max-iter", max_iter, "iteration cap per component");
    app.add_option("--seed", seed, "seed for all randomness in the run");
    app.add_option("--threads", threads, "parallel task cap");
    app.add_flag("--random-init", random_init, "seeded random start instead of the sketch");
    app.add_flag("--symmetric-rho", symmetric_rho,
                 "average the X-grid and Y-grid correlations");
    app.add_option("--update", update, "weight update: covariance | least-squares");
    app.add_option("--out", out, "output directory");
  }

  MmConfig to_config(Index px, Index qy, int k) const {
    MmConfig cfg;
    cfg.K = k;
    cfg.p_x = px;
    cfg.q_y = qy;
    cfg.basis_x = TimeBasis::parse(basis_x);
    cfg.basis_y = TimeBasis::parse(basis_y);
    cfg.tol = tol;
    cfg.max_iter = max_iter;
    cfg.seed = seed;
    cfg.random_init = random_init;
    cfg.symmetric_rho = symmetric_rho;
    if (update == "covariance") {
      cfg.update = WeightUpdate::covariance;
    } else if (update == "least-squares") {
      cfg.update = WeightUpdate::least_squares;
    } else {
      throw Error("unknown --update '" + update + "'");
    }
    return cfg;
  }

  json to_json() const {
    json j;
    j["x"] = x_path;
    j["y"] = y_path;
    j["basis_x"] = basis_x;
    j["basis_y"] = basis_y;
    j["tol"] = tol;
    j["max_iter"] = max_iter;
    j["seed"] = seed;
    j["threads"] = threads;
    j["random_init"] = random_init;
    j["symmetric_rho"] = symmetric_rho;
    j["update"] = update;
    j["out"] = out;
    return j;
  }
};

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const SimConfig& cfg, const std::string& out_dir) {
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  const auto [study, truth] = simulate_study(cfg);

  export_long_csv(study.x, (dir / "x.csv").string());
  export_long_csv(study.y, (dir / "y.csv").string());

  json truth_json;
  truth_json["seed"] = cfg.seed;
  truth_json["n"] = cfg.n;
  truth_json["p"] = cfg.p;
  truth_json["q"] = cfg.q;
  truth_json["n_measurements"] = cfg.n_measurements;
  truth_json["n_components"] = cfg.n_components;
  truth_json["theta"] = {{"theta0", cfg.theta0},
                         {"theta1", cfg.theta1},
                         {"theta2", cfg.theta2},
                         {"latent_noise_sd", cfg.latent_noise_sd},
                         {"sin_power_reading", cfg.sin_power_reading}};
  truth_json["psi"] = {{"kind", "ar1"},
                       {"coefficient", cfg.ar1},
                       {"scale", cfg.feature_noise_sd}};
  truth_json["mask_fractions"] = {{"x", cfg.mask_x}, {"y", cfg.mask_y}};
  for (int k = 0; k < cfg.n_components; ++k) {
    json wx = json::array(), wy = json::array();
    const auto& wxk = truth.w_x[static_cast<std::size_t>(k)];
    const auto& wyk = truth.w_y[static_cast<std::size_t>(k)];
    for (Index j = 0; j < wxk.size(); ++j)
      if (wxk[j] != 0.0) wx.push_back({{"feature", "f" + std::to_string(j + 1)}, {"value", wxk[j]}});
    for (Index j = 0; j < wyk.size(); ++j)
      if (wyk[j] != 0.0) wy.push_back({{"feature", "f" + std::to_string(j + 1)}, {"value", wyk[j]}});
    truth_json["w_x"].push_back(wx);
    truth_json["w_y"].push_back(wy);
  }
  json masks_x = json::array(), masks_y = json::array();
  for (int i = 0; i < cfg.n; ++i)
    for (Index m = 0; m < truth.grid.size(); ++m) {
      if (truth.mask_x[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)])
        masks_x.push_back({{"subject", truth.subject_label(i)}, {"time", truth.grid[m]}});
      if (truth.mask_y[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)])
        masks_y.push_back({{"subject", truth.subject_label(i)}, {"time", truth.grid[m]}});
    }
  truth_json["removed_rows"] = {{"x", masks_x}, {"y", masks_y}};
  write_json(dir / "truth.json", truth_json);

  json manifest;
  manifest["command"] = "simulate";
  manifest["config"] = {{"n", cfg.n},
                        {"p", cfg.p},
                        {"q", cfg.q},
                        {"measurements", cfg.n_measurements},
                        {"components", cfg.n_components},
                        {"nnz_x", cfg.nnz_x},
                        {"nnz_y", cfg.nnz_y},
                        {"mask_x", cfg.mask_x},
                        {"mask_y", cfg.mask_y},
                        {"theta0", cfg.theta0},
                        {"theta1", cfg.theta1},
                        {"theta2", cfg.theta2},
                        {"latent_noise_sd", cfg.latent_noise_sd},
                        {"feature_noise_sd", cfg.feature_noise_sd},
                        {"ar1", cfg.ar1},
                        {"sin_power_reading", cfg.sin_power_reading},
                        {"seed", cfg.seed}};
  manifest["outputs"] = {"x.csv", "y.csv", "truth.json"};
  write_json(dir / "manifest.json", manifest);
  return 0;
}

// ---------------------------------------------------------------------------
// align
// ---------------------------------------------------------------------------

int cmd_align(const std::string& x_path, const std::string& events_path,
              double bin_width, const std::string& out_dir) {
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  const LongView view = ingest_long_csv(x_path);
  const EventTable events = ingest_event_csv(events_path);
  const auto res = align_to_event(view, events, bin_width);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  export_long_csv(res.view, (dir / "aligned.csv").string());

  json manifest;
  manifest["command"] = "align";
  manifest["config"] = {{"x", x_path}, {"events", events_path}, {"bin_width", bin_width},
                        {"out", out_dir}};
  manifest["warnings"] = res.warnings;
  manifest["outputs"] = {"aligned.csv"};
  write_json(dir / "manifest.json", manifest);
  return 0;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

void write_weights_csv(const fs::path& path, const std::vector<ComponentResult>& comps,
                       const PairedStudy& study) {
  std::string text = "component,view,feature,weight\n";
  for (const auto& c : comps) {
    for (Index j = 0; j < c.weights.w_x.size(); ++j)
      if (c.weights.w_x[j] != 0.0)
        text += std::to_string(c.weights.k) + ",x," +
                study.x.feature_names[static_cast<std::size_t>(j)] + "," +
                fmt(c.weights.w_x[j]) + "\n";
    for (Index j = 0; j < c.weights.w_y.size(); ++j)
      if (c.weights.w_y[j] != 0.0)
        text += std::to_string(c.weights.k) + ",y," +
                study.y.feature_names[static_cast<std::size_t>(j)] + "," +
                fmt(c.weights.w_y[j]) + "\n";
  }
  write_text(path, text);
}

// observed_latent is the view's own projection; fitted_latent its own
// trajectory model at the same rows; predicted_latent the counterpart
// view's model predicted onto this grid (the series rho is computed from).
void write_latent_paths_csv(const fs::path& path, const std::vector<ComponentResult>& comps,
                            const PairedStudy& study) {
  std::string text =
      "component,view,subject,time,observed_latent,fitted_latent,predicted_latent\n";
  for (const auto& c : comps) {
    if (c.null_component) continue;
    const VectorXd fitted_x = predict_latent(c.fit_x, study.x);
    const VectorXd fitted_y = predict_latent(c.fit_y, study.y);
    for (Index r = 0; r < study.x.rows(); ++r)
      text += std::to_string(c.weights.k) + ",x," +
              study.x.subject_ids[static_cast<std::size_t>(r)] + "," +
              fmt(study.x.times[r]) + "," + fmt(c.latent_x[r]) + "," + fmt(fitted_x[r]) +
              "," + fmt(c.predicted_y_on_tx[r]) + "\n";
    for (Index r = 0; r < study.y.rows(); ++r)
      text += std::to_string(c.weights.k) + ",y," +
              study.y.subject_ids[static_cast<std::size_t>(r)] + "," +
              fmt(study.y.times[r]) + "," + fmt(c.latent_y[r]) + "," + fmt(fitted_y[r]) +
              "," + fmt(c.predicted_x_on_ty[r]) + "\n";
  }
  write_text(path, text);
}

void write_mean_curves_csv(const fs::path& path, const std::vector<ComponentResult>& comps,
                           const PairedStudy& study) {
  const auto grid_values = study.union_times();
  VectorXd grid(static_cast<Index>(grid_values.size()));
  for (std::size_t g = 0; g < grid_values.size(); ++g)
    grid[static_cast<Index>(g)] = grid_values[g];
  std::string text = "component,view,grid_t,value\n";
  for (const auto& c : comps) {
    if (c.null_component) continue;
    const VectorXd mx = mean_trajectory(c.fit_x, grid);
    const VectorXd my = mean_trajectory(c.fit_y, grid);
    for (Index g = 0; g < grid.size(); ++g)
      text += std::to_string(c.weights.k) + ",x," + fmt(grid[g]) + "," + fmt(mx[g]) + "\n";
    for (Index g = 0; g < grid.size(); ++g)
      text += std::to_string(c.weights.k) + ",y," + fmt(grid[g]) + "," + fmt(my[g]) + "\n";
  }
  write_text(path, text);
}

int cmd_fit(const CommonFitFlags& flags, Index px, Index qy, int k,
            const std::string& from_cv) {
  const fs::path dir(flags.out);
  fs::create_directories(dir);

  Index use_px = px, use_qy = qy;
  if (!from_cv.empty()) {
    std::ifstream in(from_cv);
    if (!in) throw Error("cannot open cv summary '" + from_cv + "'");
    const json summary = json::parse(in);
    use_px = summary.at("selected").at("p_x").get<Index>();
    use_qy = summary.at("selected").at("q_y").get<Index>();
  }
  if (use_px < 1 || use_qy < 1)
    throw Error("--px and --qy are required (or use --from-cv)");

  const LongView x_raw = ingest_long_csv(flags.x_path);
  const LongView y_raw = ingest_long_csv(flags.y_path);
  const auto sx = standardize(x_raw);
  const auto sy = standardize(y_raw);
  for (const auto& w : sx.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& w : sy.warnings) std::cerr << "warning: " << w << "\n";
  const PairedStudy study = PairedStudy::make(sx.view, sy.view);

  const MmConfig cfg = flags.to_config(use_px, use_qy, k);
  const auto comps = fit(study, cfg);

  write_weights_csv(dir / "weights.csv", comps, study);
  write_latent_paths_csv(dir / "latent_paths.csv", comps, study);
  write_mean_curves_csv(dir / "mean_curves.csv", comps, study);

  json manifest;
  manifest["command"] = "fit";
  manifest["config"] = flags.to_json();
  manifest["config"]["px"] = use_px;
  manifest["config"]["qy"] = use_qy;
  manifest["config"]["k"] = k;
  if (!from_cv.empty()) manifest["config"]["from_cv"] = from_cv;
  manifest["dropped_features"] = {{"x", sx.dropped}, {"y", sy.dropped}};
  manifest["components"] = json::array();
  bool all_ok = true;
  for (const auto& c : comps) {
    json cj;
    cj["k"] = c.weights.k;
    cj["rho"] = c.rho;
    cj["iterations"] = c.iterations;
    cj["converged"] = c.converged;
    cj["null_component"] = c.null_component;
    cj["warnings"] = c.warnings;
    manifest["components"].push_back(cj);
    if (!c.converged && !c.null_component) all_ok = false;
  }
  manifest["outputs"] = {"weights.csv", "latent_paths.csv", "mean_curves.csv"};
  write_json(dir / "manifest.json", manifest);

  for (const auto& c : comps)
    std::cout << "component " << c.weights.k << ": rho=" << c.rho << " iterations="
              << c.iterations << (c.null_component ? " (null)" : "")
              << (c.converged ? "" : " (not converged)") << "\n";
  return all_ok ? 0 : 3;
}

// ---------------------------------------------------------------------------
// cv
// ---------------------------------------------------------------------------

std::vector<Index> parse_grid_list(const std::string& text) {
  std::vector<Index> values;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto comma = text.find(',', pos);
    const auto tok = text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    try {
      values.push_back(static_cast<Index>(std::stoll(tok)));
    } catch (const std::exception&) {
      throw Error("cannot parse grid entry '" + tok + "'");
    }
    pos = comma == std::string::npos ? text.size() : comma + 1;
  }
  if (values.empty()) throw Error("empty grid list");
  return values;
}

int cmd_cv(const CommonFitFlags& flags, const std::string& px_grid,
           const std::string& qy_grid, int folds) {
  const fs::path dir(flags.out);
  fs::create_directories(dir);

  const LongView x_raw = ingest_long_csv(flags.x_path);
  const LongView y_raw = ingest_long_csv(flags.y_path);
  const PairedStudy study = PairedStudy::make(x_raw, y_raw);

  std::vector<CvCell> grid;
  for (const Index px : parse_grid_list(px_grid))
    for (const Index qy : parse_grid_list(qy_grid)) grid.push_back({px, qy});

  const MmConfig tmpl = flags.to_config(1, 1, 1);
  const CvReport report = cv_select(study, grid, folds, tmpl, flags.seed, flags.threads);

  std::string text = "p_x,q_y,fold,rho,ok,error\n";
  for (const auto& r : report.results) {
    const auto& cell = report.grid[r.cell];
    text += std::to_string(cell.p_x) + "," + std::to_string(cell.q_y) + "," +
            std::to_string(r.fold) + "," + (r.ok ? fmt(r.rho) : "") + "," +
            (r.ok ? "1" : "0") + "," + r.error + "\n";
  }
  write_text(dir / "cv_results.csv", text);

  json summary;
  summary["seed"] = report.seed;
  summary["k_folds"] = report.k_folds;
  summary["cells"] = json::array();
  for (std::size_t c = 0; c < report.grid.size(); ++c) {
    json cj;
    cj["p_x"] = report.grid[c].p_x;
    cj["q_y"] = report.grid[c].q_y;
    cj["mean_rho"] = std::isfinite(report.mean_rho[c]) ? json(report.mean_rho[c]) : json();
    cj["sd_rho"] = report.sd_rho[c];
    summary["cells"].push_back(cj);
  }
  summary["selected"] = {{"p_x", report.grid[report.selected].p_x},
                         {"q_y", report.grid[report.selected].q_y}};
  write_json(dir / "cv_summary.json", summary);

  json manifest;
  manifest["command"] = "cv";
  manifest["config"] = flags.to_json();
  manifest["config"]["px_grid"] = px_grid;
  manifest["config"]["qy_grid"] = qy_grid;
  manifest["config"]["folds"] = folds;
  manifest["outputs"] = {"cv_results.csv", "cv_summary.json"};
  write_json(dir / "manifest.json", manifest);

  std::cout << "selected p_x=" << report.grid[report.selected].p_x
            << " q_y=" << report.grid[report.selected].q_y << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse longitudinal CCA with latent-trajectory mixed models"};
  app.require_subcommand(1);

  // simulate
  SimConfig sim;
  std::string sim_out = ".";
  std::string sin_reading = "power";
  auto* simulate_cmd = app.add_subcommand("simulate", "generate a paired study with truth");
  simulate_cmd->add_option("--n", sim.n, "subjects");
  simulate_cmd->add_option("--p", sim.p, "features in X");
  simulate_cmd->add_option("--q", sim.q, "features in Y");
  simulate_cmd->add_option("--measurements", sim.n_measurements, "grid length");
  simulate_cmd->add_option("--components", sim.n_components, "true components");
  simulate_cmd->add_option("--nnz-x", sim.nnz_x, "true support size in w_x");
  simulate_cmd->add_option("--nnz-y", sim.nnz_y, "true support size in w_y");
  simulate_cmd->add_option("--mask-x", sim.mask_x, "fraction of X rows removed");
  simulate_cmd->add_option("--mask-y", sim.mask_y, "fraction of Y rows removed");
  simulate_cmd->add_option("--theta0", sim.theta0, "component-1 drift");
  simulate_cmd->add_option("--theta1", sim.theta1, "component-1 oscillation");
  simulate_cmd->add_option("--theta2", sim.theta2, "component-2 drift");
  simulate_cmd->add_option("--latent-noise", sim.latent_noise_sd, "latent path noise sd");
  simulate_cmd->add_option("--feature-noise", sim.feature_noise_sd, "view noise scale");
  simulate_cmd->add_option("--ar1", sim.ar1, "Psi off-diagonal decay");
  simulate_cmd->add_option("--sin-reading", sin_reading,
                           "oscillation reading: power | argument");
  simulate_cmd->add_option("--seed", sim.seed, "seed");
  simulate_cmd->add_option("--out", sim_out, "output directory");

  // align
  std::string align_x, align_events, align_out = ".";
  double bin_width = 1.0;
  auto* align_cmd = app.add_subcommand("align", "re-center times around per-subject events");
  align_cmd->add_option("--x", align_x, "long-format CSV")->required();
  align_cmd->add_option("--events", align_events, "event CSV (id,event_time)")->required();
  align_cmd->add_option("--bin-width", bin_width, "bin width in time units");
  align_cmd->add_option("--out", align_out, "output directory");

  // fit
  CommonFitFlags fit_flags;
  Index fit_px = 0, fit_qy = 0;
  int fit_k = 1;
  std::string from_cv;
  auto* fit_cmd = app.add_subcommand("fit", "extract sparse canonical components");
  fit_flags.add_to(*fit_cmd, true, &fit_px, &fit_qy, &fit_k);
  fit_cmd->add_option("--from-cv", from_cv, "cv_summary.json to take p_x/q_y from");

  // cv
  CommonFitFlags cv_flags;
  std::string px_grid = "5,10,20,40,80", qy_grid = "10,20,40";
  int folds = 5;
  auto* cv_cmd = app.add_subcommand("cv", "subject-fold cross-validation over sparsity");
  cv_flags.add_to(*cv_cmd, false, nullptr, nullptr, nullptr);
  cv_cmd->add_option("--px-grid", px_grid, "comma-separated p_x grid");
  cv_cmd->add_option("--qy-grid", qy_grid, "comma-separated q_y grid");
  cv_cmd->add_option("--folds", folds, "subject folds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate_cmd->parsed()) {
      if (sin_reading == "power") {
        sim.sin_power_reading = true;
      } else if (sin_reading == "argument") {
        sim.sin_power_reading = false;
      } else {
        throw Error("unknown --sin-reading '" + sin_reading + "'");
      }
      return cmd_simulate(sim, sim_out);
    }
    if (align_cmd->parsed()) return cmd_align(align_x, align_events, bin_width, align_out);
    if (fit_cmd->parsed()) return cmd_fit(fit_flags, fit_px, fit_qy, fit_k, from_cv);
    if (cv_cmd->parsed()) return cmd_cv(cv_flags, px_grid, qy_grid, folds);
  } catch (const std::exception& e) {
    json err;
    err["error"] = e.what();
    err["command"] = app.get_subcommands().empty() ? "" : app.get_subcommands()[0]->get_name();
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
