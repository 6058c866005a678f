#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpr/errors.hpp"

namespace dpr {

using Vec = std::vector<double>;

/// Large negative sentinel standing in for -inf inside logits. Keeps the
/// exclusion arithmetic finite; softmax maps it to exactly zero.
inline constexpr double kNegInf = -1e30;

/// Threshold below which a logit is treated as the -inf sentinel.
inline constexpr double kSentinelCut = -1e29;

inline bool is_neg_inf(double x) { return x <= kSentinelCut; }

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline void require_same_dim(const Vec& a, const Vec& b, const char* op) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(op) + ": dimension mismatch (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
}

/// Temperature softmax. Entries at or below the sentinel cut contribute
/// exactly zero mass. Scaling by tau happens before the max subtraction so
/// that softmax_tau(l, tau) == softmax_tau(l / tau, 1) holds bit for bit.
inline Vec softmax_tau(const Vec& logits, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("softmax_tau: tau must be positive");
  if (logits.empty()) throw std::invalid_argument("softmax_tau: empty logits");
  Vec z(logits.size());
  double zmax = kNegInf;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double l = logits[i];
    if (std::isnan(l) || l == std::numeric_limits<double>::infinity())
      throw std::invalid_argument("softmax_tau: logits must be finite or the -inf sentinel");
    z[i] = is_neg_inf(l) ? kNegInf : l / tau;
    if (!is_neg_inf(z[i])) zmax = std::max(zmax, z[i]);
  }
  if (is_neg_inf(zmax))
    throw DegenerateDistributionError("softmax_tau: all logits are -inf");
  double total = 0.0;
  Vec out(logits.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = is_neg_inf(z[i]) ? 0.0 : std::exp(z[i] - zmax);
    total += out[i];
  }
  for (double& o : out) o /= total;
  return out;
}

inline double l2_dist(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "l2_dist");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double l1_dist(const Vec& a, const Vec& b) {
  require_same_dim(a, b, "l1_dist");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

inline Vec avg_pool(const std::vector<Vec>& vs) {
  if (vs.empty()) throw std::invalid_argument("avg_pool: empty list");
  Vec out(vs.front().size(), 0.0);
  for (const Vec& v : vs) {
    require_same_dim(out, v, "avg_pool");
    for (std::size_t i = 0; i < v.size(); ++i) out[i] += v[i];
  }
  for (double& o : out) o /= static_cast<double>(vs.size());
  return out;
}

/// sum_i w_i * f_i; weights need not be normalized.
inline Vec weighted_sum(const std::vector<Vec>& feats, const Vec& weights) {
  if (feats.size() != weights.size())
    throw std::invalid_argument("weighted_sum: one weight per vector required");
  if (feats.empty()) throw std::invalid_argument("weighted_sum: empty list");
  Vec out(feats.front().size(), 0.0);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    require_same_dim(out, feats[i], "weighted_sum");
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += weights[i] * feats[i][j];
  }
  return out;
}

/// First index attaining the maximum.
inline int argmax(const Vec& v) {
  if (v.empty()) throw std::invalid_argument("argmax: empty vector");
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline double sum(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace dpr
