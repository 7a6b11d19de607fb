#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "toscca/common.hpp"

namespace toscca {

struct SubjectSpan {
  std::string id;
  Index start = 0;
  Index count = 0;
};

// One stacked long-format view: rows are (subject, time) measurements,
// columns are features. Rows are contiguous per subject with strictly
// increasing times inside each block. Treat as immutable once built.
struct LongView {
  MatrixXd values;                         // rows x features
  std::vector<std::string> subject_ids;    // per row
  VectorXd times;                          // per row
  std::vector<std::string> feature_names;  // per column
  std::vector<SubjectSpan> subjects;       // contiguous grouping index

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }

  const SubjectSpan* find_subject(const std::string& id) const {
    for (const auto& s : subjects)
      if (s.id == id) return &s;
    return nullptr;
  }

  static LongView make(MatrixXd values, std::vector<std::string> subject_ids,
                       VectorXd times, std::vector<std::string> feature_names) {
    LongView v;
    v.values = std::move(values);
    v.subject_ids = std::move(subject_ids);
    v.times = std::move(times);
    v.feature_names = std::move(feature_names);
    v.rebuild_index();
    v.validate();
    return v;
  }

  // Stable sort of rows by (subject, time); used by ingestion.
  static LongView make_sorted(MatrixXd values, std::vector<std::string> subject_ids,
                              VectorXd times, std::vector<std::string> feature_names) {
    const Index n = values.rows();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      if (subject_ids[a] != subject_ids[b]) return subject_ids[a] < subject_ids[b];
      return times[a] < times[b];
    });
    MatrixXd sv(n, values.cols());
    std::vector<std::string> sids(static_cast<std::size_t>(n));
    VectorXd st(n);
    for (Index r = 0; r < n; ++r) {
      sv.row(r) = values.row(order[static_cast<std::size_t>(r)]);
      sids[static_cast<std::size_t>(r)] = subject_ids[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])];
      st[r] = times[order[static_cast<std::size_t>(r)]];
    }
    return make(std::move(sv), std::move(sids), std::move(st), std::move(feature_names));
  }

  void rebuild_index() {
    subjects.clear();
    const Index n = values.rows();
    Index r = 0;
    while (r < n) {
      SubjectSpan s;
      s.id = subject_ids[static_cast<std::size_t>(r)];
      s.start = r;
      while (r < n && subject_ids[static_cast<std::size_t>(r)] == s.id) ++r;
      s.count = r - s.start;
      subjects.push_back(std::move(s));
    }
  }

  void validate() const {
    const Index n = values.rows();
    if (static_cast<Index>(subject_ids.size()) != n || times.size() != n)
      throw Error("LongView: row metadata length mismatch");
    if (static_cast<Index>(feature_names.size()) != values.cols())
      throw Error("LongView: feature name count mismatch");
    if (!values.allFinite() || !times.allFinite())
      throw Error("LongView: non-finite values");
    std::set<std::string> seen;
    for (const auto& s : subjects) {
      if (!seen.insert(s.id).second)
        throw Error("LongView: subject '" + s.id + "' is not contiguous");
      for (Index r = s.start + 1; r < s.start + s.count; ++r) {
        if (!(times[r] > times[r - 1]))
          throw Error("LongView: times not strictly increasing for subject '" + s.id + "'");
      }
    }
    Index total = 0;
    for (const auto& s : subjects) total += s.count;
    if (total != n) throw Error("LongView: grouping does not cover all rows");
  }
};

// Paired views; per-subject counts and times may differ between them.
struct PairedStudy {
  LongView x;
  LongView y;
  std::vector<std::string> shared_subjects;  // present in at least one view

  static PairedStudy make(LongView x, LongView y) {
    PairedStudy s;
    s.x = std::move(x);
    s.y = std::move(y);
    std::set<std::string> ids;
    for (const auto& sp : s.x.subjects) ids.insert(sp.id);
    for (const auto& sp : s.y.subjects) ids.insert(sp.id);
    s.shared_subjects.assign(ids.begin(), ids.end());
    return s;
  }

  // Union of all measurement times across both views, sorted.
  std::vector<double> union_times() const {
    std::set<double> ts;
    for (Index r = 0; r < x.times.size(); ++r) ts.insert(x.times[r]);
    for (Index r = 0; r < y.times.size(); ++r) ts.insert(y.times[r]);
    return {ts.begin(), ts.end()};
  }
};

using EventTable = std::map<std::string, double>;

struct FeatureStats {
  std::string name;
  double mean = 0.0;
  double sd = 1.0;
};

struct StandardizeResult {
  LongView view;
  std::vector<FeatureStats> stats;     // retained features only
  std::vector<std::string> dropped;    // constant features
  std::vector<std::string> warnings;
};

// Column-wise z-scaling over all stacked rows (n-1 denominator).
// Constant features are dropped with a warning.
inline StandardizeResult standardize(const LongView& view) {
  if (view.rows() < 2) throw Error("standardize: need at least 2 rows");
  StandardizeResult out;
  std::vector<Index> keep;
  for (Index j = 0; j < view.cols(); ++j) {
    const double mu = view.values.col(j).mean();
    const double sd = sample_sd(view.values.col(j));
    if (sd > 0.0) {
      keep.push_back(j);
      out.stats.push_back({view.feature_names[static_cast<std::size_t>(j)], mu, sd});
    } else {
      out.dropped.push_back(view.feature_names[static_cast<std::size_t>(j)]);
      out.warnings.push_back("standardize: dropped constant feature '" +
                             view.feature_names[static_cast<std::size_t>(j)] + "'");
    }
  }
  if (keep.empty()) throw Error("standardize: all features constant");
  MatrixXd z(view.rows(), static_cast<Index>(keep.size()));
  std::vector<std::string> names;
  for (std::size_t k = 0; k < keep.size(); ++k) {
    z.col(static_cast<Index>(k)) =
        (view.values.col(keep[k]).array() - out.stats[k].mean) / out.stats[k].sd;
    names.push_back(out.stats[k].name);
  }
  out.view = LongView::make(std::move(z), view.subject_ids, view.times, std::move(names));
  return out;
}

// Apply previously computed standardization (e.g. training-fold stats) to
// another view with the same feature set.
inline LongView apply_standardization(const LongView& view,
                                      const std::vector<FeatureStats>& stats) {
  MatrixXd z(view.rows(), static_cast<Index>(stats.size()));
  std::vector<std::string> names;
  for (std::size_t k = 0; k < stats.size(); ++k) {
    auto it = std::find(view.feature_names.begin(), view.feature_names.end(), stats[k].name);
    if (it == view.feature_names.end())
      throw Error("apply_standardization: feature '" + stats[k].name + "' missing");
    const Index j = static_cast<Index>(it - view.feature_names.begin());
    z.col(static_cast<Index>(k)) = (view.values.col(j).array() - stats[k].mean) / stats[k].sd;
    names.push_back(stats[k].name);
  }
  return LongView::make(std::move(z), view.subject_ids, view.times, std::move(names));
}

struct AlignResult {
  LongView view;
  std::vector<std::string> warnings;  // e.g. event ids absent from the view
};

// Re-center each subject's time axis on its event and bin to multiples of
// bin_width (truncation toward zero, so binned times never leave the
// centered span). Subjects without an event are left-shifted so the final
// visit lands one bin before 0. Rows falling in the same bin are replaced
// by their feature-wise mean.
inline AlignResult align_to_event(const LongView& view, const EventTable& events,
                                  double bin_width) {
  if (!(bin_width > 0.0)) throw Error("align_to_event: bin_width must be positive");
  AlignResult out;

  for (const auto& [id, t_event] : events) {
    if (view.find_subject(id) == nullptr) {
      out.warnings.push_back("align_to_event: event subject '" + id + "' not in view");
    }
  }

  std::vector<std::string> sids;
  std::vector<double> ts;
  std::vector<Eigen::RowVectorXd> rows;
  for (const auto& s : view.subjects) {
    const auto ev = events.find(s.id);
    double shift;
    if (ev != events.end()) {
      const double t_min = view.times[s.start];
      const double t_max = view.times[s.start + s.count - 1];
      if (ev->second < t_min || ev->second > t_max)
        throw Error("align_to_event: event time for subject '" + s.id +
                    "' outside observation span");
      shift = ev->second;
    } else {
      shift = view.times[s.start + s.count - 1] + bin_width;
    }
    // bin -> (sum of rows, count), keyed by integer bin index
    std::map<long long, std::pair<Eigen::RowVectorXd, Index>> bins;
    for (Index r = s.start; r < s.start + s.count; ++r) {
      const double centered = view.times[r] - shift;
      const long long b = static_cast<long long>(std::trunc(centered / bin_width));
      auto it = bins.find(b);
      if (it == bins.end()) {
        bins.emplace(b, std::make_pair(view.values.row(r).eval(), Index{1}));
      } else {
        it->second.first += view.values.row(r);
        it->second.second += 1;
      }
    }
    for (const auto& [b, acc] : bins) {
      sids.push_back(s.id);
      ts.push_back(static_cast<double>(b) * bin_width);
      rows.push_back(acc.first / static_cast<double>(acc.second));
    }
  }

  MatrixXd values(static_cast<Index>(rows.size()), view.cols());
  VectorXd times(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    values.row(static_cast<Index>(r)) = rows[r];
    times[static_cast<Index>(r)] = ts[r];
  }
  out.view = LongView::make(std::move(values), std::move(sids), std::move(times),
                            view.feature_names);
  return out;
}

// Deterministic subject-level fold assignment: shuffle by seed, then deal
// round-robin so fold sizes differ by at most one.
inline std::map<std::string, int> subject_folds(const PairedStudy& study, int k_folds,
                                                std::uint64_t seed) {
  const auto& ids = study.shared_subjects;
  if (k_folds < 2) throw Error("subject_folds: k_folds must be >= 2");
  if (static_cast<std::size_t>(k_folds) > ids.size())
    throw Error("subject_folds: fewer subjects (" + std::to_string(ids.size()) +
                ") than folds (" + std::to_string(k_folds) + ")");
  std::vector<std::string> shuffled = ids;
  auto eng = substream(seed, 0xf01d5ull);
  fisher_yates(shuffled, eng);
  std::map<std::string, int> fold;
  for (std::size_t i = 0; i < shuffled.size(); ++i)
    fold[shuffled[i]] = static_cast<int>(i % static_cast<std::size_t>(k_folds));
  return fold;
}

// Rows of `view` restricted to the given subjects, preserving order.
inline LongView subset_subjects(const LongView& view,
                                const std::set<std::string>& keep) {
  std::vector<Index> rows;
  for (const auto& s : view.subjects) {
    if (keep.count(s.id) == 0) continue;
    for (Index r = s.start; r < s.start + s.count; ++r) rows.push_back(r);
  }
  MatrixXd values(static_cast<Index>(rows.size()), view.cols());
  std::vector<std::string> sids;
  VectorXd times(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    values.row(static_cast<Index>(k)) = view.values.row(rows[k]);
    sids.push_back(view.subject_ids[static_cast<std::size_t>(rows[k])]);
    times[static_cast<Index>(k)] = view.times[rows[k]];
  }
  return LongView::make(std::move(values), std::move(sids), std::move(times),
                        view.feature_names);
}

}  // namespace toscca
