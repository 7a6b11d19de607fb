#pragma once

#include <cmath>
#include <string>

#include "toscca/common.hpp"

namespace toscca {

// Fixed-effects expansion of scalar time. `linear` is polynomial(1);
// `changepoint` appends one extra-slope column t*1{t>s} to polynomial(d).
// Columns are ordered [1, t, ..., t^d, (t*1{t>s})?]; the leading 1 is the
// global fixed intercept (subject intercepts are the random effect).
struct TimeBasis {
  enum class Kind { linear, polynomial, changepoint };

  Kind kind = Kind::linear;
  int degree = 1;
  double knot = 0.0;  // changepoint only

  static TimeBasis make_linear() { return {Kind::linear, 1, 0.0}; }
  static TimeBasis make_polynomial(int degree) {
    if (degree < 1) throw Error("TimeBasis: polynomial degree must be >= 1");
    return {Kind::polynomial, degree, 0.0};
  }
  static TimeBasis make_changepoint(int degree, double knot) {
    if (degree < 1) throw Error("TimeBasis: changepoint degree must be >= 1");
    return {Kind::changepoint, degree, knot};
  }

  // "linear", "poly:D", "changepoint:D:S"
  static TimeBasis parse(const std::string& text) {
    auto next = [](const std::string& s, std::size_t& pos) {
      const auto colon = s.find(':', pos);
      const auto tok = s.substr(pos, colon == std::string::npos ? colon : colon - pos);
      pos = colon == std::string::npos ? s.size() : colon + 1;
      return tok;
    };
    std::size_t pos = 0;
    const auto head = next(text, pos);
    try {
      if (head == "linear" && pos == text.size()) return make_linear();
      if (head == "poly") return make_polynomial(std::stoi(next(text, pos)));
      if (head == "changepoint") {
        const int d = std::stoi(next(text, pos));
        const double s = std::stod(next(text, pos));
        return make_changepoint(d, s);
      }
    } catch (const std::exception&) {
    }
    throw Error("TimeBasis: cannot parse '" + text +
                "' (expected linear, poly:D, or changepoint:D:S)");
  }

  std::string describe() const {
    switch (kind) {
      case Kind::linear: return "linear";
      case Kind::polynomial: return "poly:" + std::to_string(degree);
      case Kind::changepoint:
        return "changepoint:" + std::to_string(degree) + ":" + std::to_string(knot);
    }
    return "?";
  }

  bool has_changepoint() const { return kind == Kind::changepoint; }
  Index n_columns() const { return degree + 1 + (has_changepoint() ? 1 : 0); }

  Eigen::RowVectorXd row(double t) const {
    Eigen::RowVectorXd r(n_columns());
    double p = 1.0;
    for (int j = 0; j <= degree; ++j) {
      r[j] = p;
      p *= t;
    }
    if (has_changepoint()) r[degree + 1] = t > knot ? t : 0.0;
    return r;
  }
};

inline MatrixXd build_design(const TimeBasis& basis, const Eigen::Ref<const VectorXd>& times) {
  if (!times.allFinite()) throw Error("build_design: non-finite times");
  MatrixXd design(times.size(), basis.n_columns());
  for (Index r = 0; r < times.size(); ++r) design.row(r) = basis.row(times[r]);
  return design;
}

namespace detail {

// Degree-3 monomials on raw month-scale grids are ill-conditioned, so the
// fit works on u = a*t + b with the observed span mapped to [-1, 1] and the
// changepoint column divided by its own scale. Both transforms preserve the
// column span exactly, so fitted coefficients map back to the raw basis.
struct ConditionedBasis {
  TimeBasis basis;
  double a = 1.0;
  double b = 0.0;
  double cp_scale = 1.0;

  static ConditionedBasis fit_to(const TimeBasis& basis,
                                 const Eigen::Ref<const VectorXd>& times) {
    ConditionedBasis c;
    c.basis = basis;
    const double t_min = times.minCoeff();
    const double t_max = times.maxCoeff();
    if (t_max > t_min) {
      c.a = 2.0 / (t_max - t_min);
      c.b = -(t_max + t_min) / (t_max - t_min);
    } else {
      c.a = 1.0;
      c.b = -t_min;  // degenerate grid; rank check downstream rejects it
    }
    if (basis.has_changepoint())
      c.cp_scale = std::max(1.0, times.cwiseAbs().maxCoeff());
    return c;
  }

  MatrixXd design(const Eigen::Ref<const VectorXd>& times) const {
    MatrixXd d(times.size(), basis.n_columns());
    for (Index r = 0; r < times.size(); ++r) {
      const double t = times[r];
      const double u = a * t + b;
      double p = 1.0;
      for (int j = 0; j <= basis.degree; ++j) {
        d(r, j) = p;
        p *= u;
      }
      if (basis.has_changepoint())
        d(r, basis.degree + 1) = t > basis.knot ? t / cp_scale : 0.0;
    }
    return d;
  }

  // Expand scaled-basis coefficients onto the raw monomial basis:
  // sum_k g_k (a t + b)^k = sum_j [sum_{k>=j} g_k C(k,j) a^j b^{k-j}] t^j.
  VectorXd to_raw(const Eigen::Ref<const VectorXd>& scaled) const {
    const int d = basis.degree;
    VectorXd raw = VectorXd::Zero(basis.n_columns());
    for (int k = 0; k <= d; ++k) {
      double binom = 1.0;
      for (int j = 0; j <= k; ++j) {
        raw[j] += scaled[k] * binom * std::pow(a, j) * std::pow(b, k - j);
        binom *= static_cast<double>(k - j) / static_cast<double>(j + 1);
      }
    }
    if (basis.has_changepoint()) raw[d + 1] = scaled[d + 1] / cp_scale;
    return raw;
  }
};

}  // namespace detail
}  // namespace toscca
