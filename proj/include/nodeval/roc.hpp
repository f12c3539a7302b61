#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nodeval/error.hpp"
#include "nodeval/normal.hpp"

namespace nodeval {

enum class Estimator { Empirical, Binormal };

inline std::string_view to_string(Estimator e) {
  return e == Estimator::Empirical ? "empirical" : "binormal";
}

inline Estimator parse_estimator(std::string_view s) {
  if (s == "empirical") return Estimator::Empirical;
  if (s == "binormal") return Estimator::Binormal;
  throw InputError("unknown estimator '" + std::string(s) + "' (expected empirical|binormal)");
}

/// Paired binary labels (1 = malignant) and real-valued scores.
class ScoreSample {
 public:
  ScoreSample() = default;
  ScoreSample(std::vector<int> labels, std::vector<double> scores)
      : labels_(std::move(labels)), scores_(std::move(scores)) {
    if (labels_.size() != scores_.size())
      throw InputError("ScoreSample: labels and scores differ in length");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] != 0 && labels_[i] != 1)
        throw InputError("ScoreSample: label at index " + std::to_string(i) + " is not 0/1");
      if (!std::isfinite(scores_[i]))
        throw InputError("ScoreSample: non-finite score at index " + std::to_string(i));
      (labels_[i] == 1 ? positives_ : negatives_).push_back(scores_[i]);
    }
  }

  const std::vector<int>& labels() const noexcept { return labels_; }
  const std::vector<double>& scores() const noexcept { return scores_; }
  std::span<const double> positives() const noexcept { return positives_; }
  std::span<const double> negatives() const noexcept { return negatives_; }
  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t n_positive() const noexcept { return positives_.size(); }
  std::size_t n_negative() const noexcept { return negatives_.size(); }

  /// Throws DegenerateError unless each class has at least `min_per_class` members.
  void require_classes(std::size_t min_per_class, std::string_view what) const {
    if (n_positive() < min_per_class || n_negative() < min_per_class)
      throw DegenerateError(std::string(what) + ": need at least " +
                            std::to_string(min_per_class) + " positive and negative cases (have " +
                            std::to_string(n_positive()) + "/" + std::to_string(n_negative()) + ")");
  }

 private:
  std::vector<int> labels_;
  std::vector<double> scores_;
  std::vector<double> positives_;
  std::vector<double> negatives_;
};

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
  double level = 0.95;
  std::string method;
};

struct AucEstimate {
  double value = 0.0;
  Estimator method = Estimator::Empirical;
  std::optional<ConfidenceInterval> ci;
};

struct RocPoint {
  double fpr;
  double tpr;
  double threshold;  // +inf for the (0,0) anchor
};

using RocCurve = std::vector<RocPoint>;

struct BinormalFit {
  double a;  // (mean_pos - mean_neg) / sd_pos
  double b;  // sd_neg / sd_pos
  double auc;
};

namespace detail {

/// Twice the Mann-Whitney U count (ties = 1/2), kept integral so it is exact.
/// Both spans must be sorted ascending.
inline std::int64_t twice_u_sorted(std::span<const double> pos, std::span<const double> neg) {
  std::int64_t twice_u = 0;
  std::size_t below = 0;  // negatives strictly below the current positive
  std::size_t upto = 0;   // negatives <= the current positive
  for (double p : pos) {
    while (below < neg.size() && neg[below] < p) ++below;
    if (upto < below) upto = below;
    while (upto < neg.size() && neg[upto] <= p) ++upto;
    twice_u += static_cast<std::int64_t>(2 * below + (upto - below));
  }
  return twice_u;
}

inline double empirical_auc(std::span<const double> pos, std::span<const double> neg) {
  std::vector<double> p(pos.begin(), pos.end());
  std::vector<double> n(neg.begin(), neg.end());
  std::sort(p.begin(), p.end());
  std::sort(n.begin(), n.end());
  const double mn = static_cast<double>(p.size()) * static_cast<double>(n.size());
  return static_cast<double>(twice_u_sorted(p, n)) / (2.0 * mn);
}

inline void mean_sd(std::span<const double> x, double& mean, double& sd) {
  mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  sd = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
}

/// Method-of-moments binormal fit; empty when the positive sd is zero.
inline std::optional<BinormalFit> fit_binormal(std::span<const double> pos,
                                               std::span<const double> neg) {
  double m0, s0, m1, s1;
  mean_sd(neg, m0, s0);
  mean_sd(pos, m1, s1);
  if (!(s1 > 0.0)) return std::nullopt;
  const double a = (m1 - m0) / s1;
  const double b = s0 / s1;
  return BinormalFit{a, b, normal_cdf(a / std::sqrt(1.0 + b * b))};
}

}  // namespace detail

/// Mann-Whitney AUC: fraction of (negative, positive) pairs ordered correctly,
/// ties counting one half. O(N log N).
inline double empirical_auc(const ScoreSample& sample) {
  sample.require_classes(1, "empirical_auc");
  return detail::empirical_auc(sample.positives(), sample.negatives());
}

/// Empirical ROC operating points, from (0,0) through every distinct score as
/// a ">= threshold" cut, in descending threshold order, ending at (1,1).
inline RocCurve roc_points(const ScoreSample& sample) {
  sample.require_classes(1, "roc_points");
  std::vector<std::size_t> order(sample.size());
  std::iota(order.begin(), order.end(), 0);
  const auto& s = sample.scores();
  const auto& y = sample.labels();
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return s[i] > s[j]; });

  const double m = static_cast<double>(sample.n_positive());
  const double n = static_cast<double>(sample.n_negative());
  RocCurve curve;
  curve.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double t = s[order[k]];
    while (k < order.size() && s[order[k]] == t) {
      (y[order[k]] == 1 ? tp : fp) += 1;
      ++k;
    }
    curve.push_back({static_cast<double>(fp) / n, static_cast<double>(tp) / m, t});
  }
  return curve;
}

inline double trapezoid_area(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
  return area;
}

/// `fpr,tpr,threshold` CSV with a header line.
inline void write_roc_csv(std::ostream& out, const RocCurve& curve) {
  out << "fpr,tpr,threshold\n";
  char buf[96];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.fpr, p.tpr, p.threshold);
    out << buf;
  }
}

inline BinormalFit fit_binormal(const ScoreSample& sample) {
  sample.require_classes(2, "binormal_auc");
  auto fit = detail::fit_binormal(sample.positives(), sample.negatives());
  if (!fit) throw DegenerateError("binormal_auc: positive scores have zero variance; AUC unestimable");
  return *fit;
}

/// Parametric binormal AUC, Phi(a / sqrt(1 + b^2)), with a and b estimated by
/// moments from the class means and sample (n-1) standard deviations.
inline AucEstimate binormal_auc(const ScoreSample& sample) {
  return AucEstimate{fit_binormal(sample).auc, Estimator::Binormal, std::nullopt};
}

inline AucEstimate estimate_auc(const ScoreSample& sample, Estimator method) {
  if (method == Estimator::Binormal) return binormal_auc(sample);
  return AucEstimate{empirical_auc(sample), Estimator::Empirical, std::nullopt};
}

}  // namespace nodeval
