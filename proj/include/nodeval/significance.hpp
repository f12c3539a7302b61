#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "nodeval/error.hpp"
#include "nodeval/normal.hpp"
#include "nodeval/rng.hpp"
#include "nodeval/roc.hpp"

namespace nodeval {

/// DeLong structural components of the empirical AUC.
struct DeLongComponents {
  double auc = 0.0;
  std::vector<double> v10;  // one per positive: mean psi against all negatives
  std::vector<double> v01;  // one per negative: mean psi against all positives
};

struct DeLongResult {
  double auc_a = 0.0;
  double auc_b = 0.0;
  double var_a = 0.0;
  double var_b = 0.0;
  double cov_ab = 0.0;
  double z = 0.0;
  double p = 1.0;  // two-sided
  bool paired = false;
};

struct BootstrapOptions {
  int replicates = 2000;
  double level = 0.95;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  double max_degenerate_fraction = 0.10;
};

struct BootstrapCi {
  double low = 0.0;
  double high = 0.0;
  double level = 0.95;
  int replicates = 0;
  std::uint64_t seed = 0;
  int degenerate_draws = 0;
};

namespace detail {

inline double sample_variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(x.size() - 1);
}

inline double sample_covariance(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 2) return 0.0;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
  return s / (n - 1.0);
}

/// Two-sided normal p-value, 2 * (1 - Phi(|z|)), without cancellation.
inline double two_sided_p(double z) { return std::erfc(std::abs(z) / std::numbers::sqrt2); }

/// Type-7 quantile (linear interpolation between order statistics) of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline std::optional<double> try_auc(std::span<const double> pos, std::span<const double> neg,
                                     Estimator method) {
  if (method == Estimator::Empirical) return empirical_auc(pos, neg);
  auto fit = fit_binormal(pos, neg);
  if (!fit) return std::nullopt;
  return fit->auc;
}

}  // namespace detail

/// Per-case components: V10 for each positive, V01 for each negative, using
/// psi = 1 / 0.5 / 0 for greater / tied / smaller. Computed by binary search
/// over sorted class scores in O(N log N).
inline DeLongComponents delong_components(const ScoreSample& sample) {
  sample.require_classes(2, "delong_components");
  const auto pos = sample.positives();
  const auto neg = sample.negatives();
  std::vector<double> sp(pos.begin(), pos.end());
  std::vector<double> sn(neg.begin(), neg.end());
  std::sort(sp.begin(), sp.end());
  std::sort(sn.begin(), sn.end());

  DeLongComponents out;
  const double m = static_cast<double>(sp.size());
  const double n = static_cast<double>(sn.size());
  out.v10.reserve(pos.size());
  for (double x : pos) {
    const auto below = std::lower_bound(sn.begin(), sn.end(), x) - sn.begin();
    const auto upto = std::upper_bound(sn.begin(), sn.end(), x) - sn.begin();
    out.v10.push_back(static_cast<double>(below + upto) / (2.0 * n));
  }
  out.v01.reserve(neg.size());
  for (double x : neg) {
    const auto below = std::lower_bound(sp.begin(), sp.end(), x) - sp.begin();
    const auto upto = std::upper_bound(sp.begin(), sp.end(), x) - sp.begin();
    const auto above = static_cast<std::ptrdiff_t>(sp.size()) - upto;
    const auto tied = upto - below;
    out.v01.push_back(static_cast<double>(2 * above + tied) / (2.0 * m));
  }
  out.auc = static_cast<double>(detail::twice_u_sorted(sp, sn)) / (2.0 * m * n);
  return out;
}

inline double delong_variance(const DeLongComponents& c) {
  return detail::sample_variance(c.v10) / static_cast<double>(c.v10.size()) +
         detail::sample_variance(c.v01) / static_cast<double>(c.v01.size());
}

/// S10/m + S01/n with sample (n-1) variances of the components.
inline double delong_variance(const ScoreSample& sample) {
  return delong_variance(delong_components(sample));
}

namespace detail {

inline DeLongResult finish_test(DeLongResult r, double var_diff) {
  const double scale = r.var_a + r.var_b;
  if (!(var_diff > std::numeric_limits<double>::epsilon() * scale) || !(var_diff > 0.0)) {
    if (r.auc_a == r.auc_b) {
      r.z = 0.0;
      r.p = 1.0;
      return r;
    }
    throw DegenerateError("DeLong test: zero variance of the AUC difference but AUCs differ");
  }
  r.z = (r.auc_a - r.auc_b) / std::sqrt(var_diff);
  r.p = two_sided_p(r.z);
  return r;
}

}  // namespace detail

/// Correlated comparison of two scoring systems on the same cases.
inline DeLongResult delong_paired_test(const ScoreSample& a, const ScoreSample& b) {
  if (a.labels() != b.labels())
    throw InputError("delong_paired_test: samples must share identical labels in identical case order");
  const auto ca = delong_components(a);
  const auto cb = delong_components(b);
  DeLongResult r;
  r.paired = true;
  r.auc_a = ca.auc;
  r.auc_b = cb.auc;
  r.var_a = delong_variance(ca);
  r.var_b = delong_variance(cb);
  r.cov_ab = detail::sample_covariance(ca.v10, cb.v10) / static_cast<double>(ca.v10.size()) +
             detail::sample_covariance(ca.v01, cb.v01) / static_cast<double>(ca.v01.size());
  return detail::finish_test(r, r.var_a + r.var_b - 2.0 * r.cov_ab);
}

/// Comparison of AUCs measured on disjoint case sets (cov = 0).
inline DeLongResult delong_unpaired_test(const ScoreSample& a, const ScoreSample& b) {
  const auto ca = delong_components(a);
  const auto cb = delong_components(b);
  DeLongResult r;
  r.paired = false;
  r.auc_a = ca.auc;
  r.auc_b = cb.auc;
  r.var_a = delong_variance(ca);
  r.var_b = delong_variance(cb);
  return detail::finish_test(r, r.var_a + r.var_b);
}

/// AUC of every stratified bootstrap replicate, in replicate order.
///
/// Replicate r, attempt k draws from Rng(stream_key(stream_key(seed, r), k)):
/// positives and negatives are resampled separately with replacement, keeping
/// the class counts. Attempts on which the estimator is degenerate are redrawn.
/// The output depends only on (sample, method, seed, replicates), never on
/// `threads`. `degenerate_draws` receives the total number of redraws.
inline std::vector<double> bootstrap_replicates(const ScoreSample& sample, Estimator method,
                                                const BootstrapOptions& opt,
                                                int* degenerate_draws = nullptr) {
  if (opt.replicates < 1) throw InputError("bootstrap: replicates must be positive");
  sample.require_classes(method == Estimator::Binormal ? 2 : 1, "stratified bootstrap");
  if (!detail::try_auc(sample.positives(), sample.negatives(), method))
    throw DegenerateError("stratified bootstrap: estimator is degenerate on the full sample");

  const auto pos = sample.positives();
  const auto neg = sample.negatives();
  const auto n_rep = static_cast<std::size_t>(opt.replicates);
  const int max_attempts = std::max(16, static_cast<int>(opt.max_degenerate_fraction * opt.replicates) + 1);
  std::vector<double> values(n_rep);
  std::vector<int> redraws(n_rep, 0);

  auto run = [&](std::size_t begin, std::size_t end) {
    std::vector<double> bp(pos.size()), bn(neg.size());
    for (std::size_t r = begin; r < end; ++r) {
      const std::uint64_t rep_key = stream_key(opt.seed, r);
      for (int k = 0;; ++k) {
        if (k == max_attempts) {
          values[r] = std::numeric_limits<double>::quiet_NaN();
          break;
        }
        Rng rng(rep_key, static_cast<std::uint64_t>(k));
        for (auto& v : bp) v = pos[rng.below(pos.size())];
        for (auto& v : bn) v = neg[rng.below(neg.size())];
        if (auto auc = detail::try_auc(bp, bn, method)) {
          values[r] = *auc;
          break;
        }
        ++redraws[r];
      }
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(opt.threads, 1, n_rep);
  if (workers == 1) {
    run(0, n_rep);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n_rep + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(n_rep, begin + chunk);
      if (begin < end) pool.emplace_back(run, begin, end);
    }
  }

  const int total_redraws = std::accumulate(redraws.begin(), redraws.end(), 0);
  if (degenerate_draws) *degenerate_draws = total_redraws;
  const bool exhausted = std::any_of(values.begin(), values.end(), [](double v) { return std::isnan(v); });
  if (exhausted || total_redraws > opt.max_degenerate_fraction * opt.replicates)
    throw DegenerateError("stratified bootstrap: " + std::to_string(total_redraws) + " of " +
                          std::to_string(opt.replicates) +
                          " replicates were degenerate for the " + std::string(to_string(method)) +
                          " estimator (limit " +
                          std::to_string(static_cast<int>(opt.max_degenerate_fraction * 100)) + "%)");
  return values;
}

/// Percentile interval from stratified bootstrap replicates.
inline BootstrapCi stratified_bootstrap_ci(const ScoreSample& sample, Estimator method,
                                           const BootstrapOptions& opt) {
  if (!(opt.level > 0.0 && opt.level < 1.0)) throw InputError("bootstrap: level must be in (0,1)");
  BootstrapCi ci;
  ci.level = opt.level;
  ci.replicates = opt.replicates;
  ci.seed = opt.seed;
  auto values = bootstrap_replicates(sample, method, opt, &ci.degenerate_draws);
  std::sort(values.begin(), values.end());
  const double tail = (1.0 - opt.level) / 2.0;
  ci.low = std::clamp(detail::quantile_sorted(values, tail), 0.0, 1.0);
  ci.high = std::clamp(detail::quantile_sorted(values, 1.0 - tail), 0.0, 1.0);
  return ci;
}

}  // namespace nodeval
