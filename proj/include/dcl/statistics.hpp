#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace dcl {

namespace stats_detail {

// Continued fraction for the incomplete beta function, modified Lentz method.
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace stats_detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0) throw std::domain_error("incomplete_beta: x outside [0,1]");
  if (x == 0.0 || x == 1.0) return x;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * stats_detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * stats_detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// P(|T| >= |t|) for Student's t with df degrees of freedom.
inline double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw std::domain_error("student_t: df must be positive");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

inline double student_t_cdf(double t, double df) {
  const double tail = 0.5 * student_t_two_sided_p(t, df);
  return t >= 0.0 ? 1.0 - tail : tail;
}

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 1.0;
  double mean_difference = 0.0;
  double sd_difference = 0.0;
  bool degenerate = false;  // zero variance with a nonzero mean difference
};

/// Paired two-sided t-test on a - b.
inline TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_ttest: series lengths differ");
  if (a.size() < 2) throw std::invalid_argument("paired_ttest: need at least two pairs");
  const auto n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  TTestResult r;
  r.df = n - 1.0;
  r.mean_difference = mean;
  r.sd_difference = std::sqrt(ss / (n - 1.0));
  if (r.sd_difference == 0.0) {
    if (mean == 0.0) {
      r.t = 0.0;
      r.p_two_sided = 1.0;
    } else {
      r.t = mean > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p_two_sided = 0.0;
      r.degenerate = true;
    }
    return r;
  }
  r.t = mean / (r.sd_difference / std::sqrt(n));
  r.p_two_sided = student_t_two_sided_p(r.t, r.df);
  return r;
}

struct KappaResult {
  double kappa = 0.0;
  double mean_agreement = 0.0;  // P-bar
  double chance_agreement = 0.0;  // P-bar_e
  bool degenerate = false;
};

/// Fleiss' kappa on an items x categories count table; every row sums to the rater count.
inline KappaResult fleiss_kappa(const std::vector<std::vector<int>>& counts) {
  if (counts.empty()) throw std::invalid_argument("fleiss_kappa: no items");
  const std::size_t q = counts[0].size();
  int n = 0;
  for (int c : counts[0]) n += c;
  if (n < 2) throw std::invalid_argument("fleiss_kappa: need at least two raters per item");
  std::vector<double> col(q, 0.0);
  double p_bar = 0.0;
  for (const auto& row : counts) {
    if (row.size() != q) throw std::invalid_argument("fleiss_kappa: ragged count table");
    int sum = 0;
    double agree = 0.0;
    for (std::size_t j = 0; j < q; ++j) {
      if (row[j] < 0) throw std::invalid_argument("fleiss_kappa: negative count");
      sum += row[j];
      agree += static_cast<double>(row[j]) * (row[j] - 1);
      col[j] += row[j];
    }
    if (sum != n) throw std::invalid_argument("fleiss_kappa: items have different rater counts");
    p_bar += agree / (static_cast<double>(n) * (n - 1));
  }
  const auto N = static_cast<double>(counts.size());
  p_bar /= N;
  double p_e = 0.0;
  for (double c : col) {
    const double pj = c / (N * n);
    p_e += pj * pj;
  }
  KappaResult r{0.0, p_bar, p_e, false};
  if (p_e >= 1.0) {
    // every judgment fell in one category
    r.kappa = 1.0;
    if (p_bar < 1.0) r.degenerate = true;
    return r;
  }
  r.kappa = (p_bar - p_e) / (1.0 - p_e);
  return r;
}

}  // namespace dcl
