#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "nodeval/json.hpp"

#include "nodeval/cohort.hpp"
#include "nodeval/error.hpp"
#include "nodeval/image.hpp"
#include "nodeval/normal.hpp"
#include "nodeval/preprocess.hpp"
#include "nodeval/rng.hpp"

namespace nodeval {

/// Score sources in report order: four readers, then the model.
inline constexpr std::size_t kSynthSources = kReaders + 1;

/// Device mix of the reference cohort (378 nodules).
inline std::vector<std::pair<Scanner, double>> default_scanner_mix() {
  const std::vector<std::pair<Scanner, int>> counts = {
      {Scanner::LOGIQ_E9, 79}, {Scanner::LOGIQ_9, 1}, {Scanner::HDI3000, 4},
      {Scanner::HDI5000, 64},  {Scanner::iU22, 218},  {Scanner::Sequoia, 1},
      {Scanner::S2000, 5},     {Scanner::Z_ONE, 1},   {Scanner::MPTronic, 5}};
  std::vector<std::pair<Scanner, double>> mix;
  for (auto [s, c] : counts) mix.emplace_back(s, c / 378.0);
  return mix;
}

struct CohortSpec {
  int n_benign = 231;
  int n_malignant = 147;
  std::vector<std::pair<Scanner, double>> scanner_mix = default_scanner_mix();
  std::array<double, kSynthSources> auc = {0.63, 0.66, 0.65, 0.63, 0.69};  // reader1..4, model
  double reader_correlation = 0.9;
  std::uint64_t seed = 42;
};

inline void validate(const CohortSpec& s) {
  if (s.n_benign < 0 || s.n_malignant < 0 || s.n_benign + s.n_malignant == 0)
    throw InputError("cohort spec: class counts must be non-negative and not both zero");
  double total = 0.0;
  for (auto [sc, p] : s.scanner_mix) {
    if (!(p >= 0.0)) throw InputError("cohort spec: negative scanner proportion");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InputError("cohort spec: scanner proportions must sum to 1");
  for (double a : s.auc)
    if (!(a > 0.0 && a < 1.0)) throw InputError("cohort spec: AUCs must lie in (0,1)");
  if (!(s.reader_correlation >= 0.0 && s.reader_correlation < 1.0))
    throw InputError("cohort spec: reader_correlation must lie in [0,1)");
}

namespace detail {

inline constexpr std::array<double, 4> kLikertQuantiles = {0.2, 0.4, 0.6, 0.8};

/// Quantile of the two-class mixture (1-prev) N(0,1) + prev N(shift,1).
inline double mixture_quantile(double q, double prevalence, double shift) {
  double lo = std::min(0.0, shift) - 12.0, hi = std::max(0.0, shift) + 12.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = (1.0 - prevalence) * normal_cdf(mid) + prevalence * normal_cdf(mid - shift);
    (f < q ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline std::array<double, 4> likert_cuts(double prevalence, double shift) {
  std::array<double, 4> cuts{};
  for (std::size_t k = 0; k < cuts.size(); ++k) cuts[k] = mixture_quantile(kLikertQuantiles[k], prevalence, shift);
  return cuts;
}

/// Population AUC (ties 1/2) of the 5-level score obtained by cutting a
/// unit-variance binormal pair with separation `shift` at the mixture quintiles.
inline double discretized_auc(double prevalence, double shift) {
  const auto cuts = likert_cuts(prevalence, shift);
  std::array<double, 5> p0{}, p1{};
  double prev0 = 0.0, prev1 = 0.0;
  for (std::size_t k = 0; k < 5; ++k) {
    const double c0 = k < 4 ? normal_cdf(cuts[k]) : 1.0;
    const double c1 = k < 4 ? normal_cdf(cuts[k] - shift) : 1.0;
    p0[k] = c0 - prev0;
    p1[k] = c1 - prev1;
    prev0 = c0;
    prev1 = c1;
  }
  double auc = 0.0, below0 = 0.0;
  for (std::size_t k = 0; k < 5; ++k) {
    auc += p1[k] * (below0 + 0.5 * p0[k]);
    below0 += p0[k];
  }
  return auc;
}

/// Separation giving the requested population AUC after discretization.
inline double shift_for_discretized_auc(double target, double prevalence) {
  double lo = -12.0, hi = 12.0;
  if (target > discretized_auc(prevalence, hi) || target < discretized_auc(prevalence, lo))
    throw InputError("cohort spec: reader AUC " + std::to_string(target) +
                     " is unattainable on a 5-point scale at this class balance");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (discretized_auc(prevalence, mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Largest-remainder apportionment of n items to proportions.
inline std::vector<int> apportion(int n, const std::vector<double>& props) {
  std::vector<int> counts(props.size());
  std::vector<std::pair<double, std::size_t>> rema;
  int used = 0;
  for (std::size_t i = 0; i < props.size(); ++i) {
    const double exact = props[i] * n;
    counts[i] = static_cast<int>(std::floor(exact));
    used += counts[i];
    rema.emplace_back(exact - counts[i], i);
  }
  std::stable_sort(rema.begin(), rema.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < n; ++k, ++used) ++counts[rema[k % rema.size()].second];
  return counts;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

inline double round_to(double v, double step) { return std::round(v / step) * step; }

}  // namespace detail

/// Synthetic study cohort.
///
/// Each nodule gets a latent quality term Z shared by all sources. Source s
/// scores a case as shift_s * y + sqrt(rho) Z + sqrt(1 - rho) E_s with
/// independent unit noise E_s, so within-class scores are N(0,1) and sources
/// correlate at rho. Reader scores are cut into 1..5 at the population
/// quintiles of their mixture distribution; shift_s is solved so that the
/// population AUC of the *discretized* score equals the requested AUC. The
/// model score uses shift = sqrt(2) Phi^-1(AUC) and is reported as
/// logistic(score - shift / 2).
inline Cohort generate_cohort(const CohortSpec& spec) {
  validate(spec);
  const int n = spec.n_benign + spec.n_malignant;
  const double prevalence = static_cast<double>(spec.n_malignant) / n;

  std::array<double, kSynthSources> shift{};
  std::array<std::array<double, 4>, kReaders> cuts{};
  for (std::size_t r = 0; r < kReaders; ++r) {
    shift[r] = detail::shift_for_discretized_auc(spec.auc[r], prevalence);
    cuts[r] = detail::likert_cuts(prevalence, shift[r]);
  }
  shift[kReaders] = std::numbers::sqrt2 * normal_quantile(spec.auc[kReaders]);

  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  std::fill(labels.begin() + spec.n_benign, labels.end(), 1);
  Rng order_rng(spec.seed, 1);
  detail::shuffle(labels, order_rng);

  std::vector<double> props;
  for (auto [s, p] : spec.scanner_mix) props.push_back(p);
  const auto counts = detail::apportion(n, props);
  std::vector<Scanner> scanners;
  for (std::size_t i = 0; i < counts.size(); ++i)
    scanners.insert(scanners.end(), static_cast<std::size_t>(counts[i]), spec.scanner_mix[i].first);
  Rng scanner_rng(spec.seed, 2);
  detail::shuffle(scanners, scanner_rng);

  Rng latent_rng(spec.seed, 3);
  std::array<Rng, kSynthSources> noise_rng = {Rng(spec.seed, 10), Rng(spec.seed, 11), Rng(spec.seed, 12),
                                              Rng(spec.seed, 13), Rng(spec.seed, 14)};
  Rng demo_rng(spec.seed, 4);
  const double shared = std::sqrt(spec.reader_correlation);
  const double own = std::sqrt(1.0 - spec.reader_correlation);

  Cohort cohort;
  cohort.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    CaseRecord c;
    char id[32];
    std::snprintf(id, sizeof id, "N%04d", i + 1);
    c.nodule_id = id;
    c.label = y ? Label::Malignant : Label::Benign;
    c.scanner = scanners[static_cast<std::size_t>(i)];

    const double z = latent_rng.normal();
    for (std::size_t s = 0; s < kSynthSources; ++s) {
      const double x = shift[s] * y + shared * z + own * noise_rng[s].normal();
      if (s < kReaders) {
        const auto& cut = cuts[s];
        c.reader_scores[s] = 1 + static_cast<int>(std::upper_bound(cut.begin(), cut.end(), x) - cut.begin());
        c.fna[s] = c.reader_scores[s] >= 3;
      } else {
        c.dl_probability = 1.0 / (1.0 + std::exp(-(x - shift[s] / 2.0)));
      }
    }

    // Demographics: class-conditional sex ratio, age and size moments of the
    // reference cohort.
    const bool m = y == 1;
    c.bethesda = m ? (demo_rng.bernoulli(0.5) ? 5 : 6) : 2;
    c.sex = demo_rng.bernoulli(m ? 111.0 / 147.0 : 193.0 / 231.0) ? Sex::F : Sex::M;
    c.age = detail::round_to(std::clamp((m ? 50.10 : 54.38) + (m ? 14.65 : 14.49) * demo_rng.normal(), 18.0, 95.0), 0.1);
    c.size_cm = detail::round_to(std::max(0.3, (m ? 2.1 : 2.3) + (m ? 1.2 : 1.1) * demo_rng.normal()), 0.1);
    cohort.push_back(std::move(c));
  }
  return cohort;
}

inline const std::array<std::string, kSynthSources>& synth_source_keys() {
  static const std::array<std::string, kSynthSources> keys = {"reader1", "reader2", "reader3", "reader4", "model"};
  return keys;
}

/// JSON form:
/// {"n_benign":231, "n_malignant":147, "scanner_mix":{"iU22":0.5767,...},
///  "auc":{"reader1":0.63,...,"model":0.69}, "reader_correlation":0.9, "seed":42}
/// Absent fields keep their defaults.
inline CohortSpec cohort_spec_from_json(const Json& j) {
  CohortSpec s;
  try {
    if (!j.is_object()) throw InputError("cohort spec must be a JSON object");
    if (j.contains("n_benign")) s.n_benign = j.at("n_benign").get<int>();
    if (j.contains("n_malignant")) s.n_malignant = j.at("n_malignant").get<int>();
    if (j.contains("scanner_mix")) {
      s.scanner_mix.clear();
      for (const auto& [name, p] : j.at("scanner_mix").items())
        s.scanner_mix.emplace_back(parse_scanner(name), p.get<double>());
    }
    if (j.contains("auc")) {
      const auto& a = j.at("auc");
      for (std::size_t k = 0; k < kSynthSources; ++k)
        if (a.contains(synth_source_keys()[k])) s.auc[k] = a.at(synth_source_keys()[k]).get<double>();
    }
    if (j.contains("reader_correlation")) s.reader_correlation = j.at("reader_correlation").get<double>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("cohort spec: ") + e.what());
  }
  validate(s);
  return s;
}

inline Json to_json(const CohortSpec& s) {
  Json mix = Json::object(), auc = Json::object();
  for (auto [sc, p] : s.scanner_mix) mix[std::string(to_string(sc))] = p;
  for (std::size_t k = 0; k < kSynthSources; ++k) auc[synth_source_keys()[k]] = s.auc[k];
  return {{"n_benign", s.n_benign}, {"n_malignant", s.n_malignant}, {"scanner_mix", mix},
          {"auc", auc}, {"reader_correlation", s.reader_correlation}, {"seed", s.seed}};
}

inline constexpr int kMarkerArm = 7;
inline constexpr int kMarkerBorder = kMarkerArm + 8;

/// Speckled frame with a darker elliptical nodule and 2 or 4 cross markers on
/// its diameters. Markers sit at least kMarkerBorder pixels inside the frame.
inline std::pair<GrayImage, CaliperSet> generate_caliper_image(int width, int height, int n_calipers,
                                                               std::uint64_t seed) {
  if (n_calipers != 2 && n_calipers != 4) throw InputError("n_calipers must be 2 or 4");
  constexpr int min_semi = 2 * kMarkerArm + 2;
  const int room = std::min(width, height) - 2 * kMarkerBorder;
  if (room < 2 * min_semi + 1) throw InputError("image too small for caliper markers");

  Rng rng(seed, 0x696d67ULL);
  // Placement first, so the marker layout depends only on (size, count, seed).
  const int max_semi = std::max(min_semi, std::min(room / 2, 3 * min_semi + 20));
  CaliperSet truth;
  double cx = 0, cy = 0, semi_a = 0, semi_b = 0, theta = 0;
  for (;;) {
    semi_a = min_semi + rng.below(static_cast<std::uint64_t>(max_semi - min_semi + 1));
    semi_b = min_semi + rng.below(static_cast<std::uint64_t>(max_semi - min_semi + 1));
    theta = rng.uniform() * std::numbers::pi;
    cx = kMarkerBorder + rng.uniform() * (width - 1 - 2 * kMarkerBorder);
    cy = kMarkerBorder + rng.uniform() * (height - 1 - 2 * kMarkerBorder);
    const double ca = std::cos(theta), sa = std::sin(theta);
    std::vector<std::pair<double, double>> offsets = {{semi_a * ca, semi_a * sa}, {-semi_a * ca, -semi_a * sa}};
    if (n_calipers == 4) {
      offsets.push_back({-semi_b * sa, semi_b * ca});
      offsets.push_back({semi_b * sa, -semi_b * ca});
    }
    truth.points.clear();
    bool inside = true;
    for (auto [dx, dy] : offsets) {
      const int x = static_cast<int>(std::lround(cx + dx)), y = static_cast<int>(std::lround(cy + dy));
      inside = inside && x >= kMarkerBorder && y >= kMarkerBorder && x < width - kMarkerBorder &&
               y < height - kMarkerBorder;
      truth.points.push_back({x, y});
    }
    if (inside) break;
  }

  GrayImage img(width, height);
  const double ca = std::cos(theta), sa = std::sin(theta);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      // Rayleigh speckle over a soft depth gradient.
      double u = rng.uniform();
      if (u <= 0.0) u = 1e-12;
      double v = (55.0 + 25.0 * y / height) * std::sqrt(-2.0 * std::log(u)) / 1.2533;
      const double ex = (x - cx) * ca + (y - cy) * sa, ey = -(x - cx) * sa + (y - cy) * ca;
      if ((ex * ex) / (semi_a * semi_a) + (ey * ey) / (semi_b * semi_b) < 1.0) v *= 0.45;
      img.at(x, y) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 200.0));
    }
  for (const auto& p : truth.points) draw_cross(img, p.x, p.y, kMarkerArm);
  return {std::move(img), std::move(truth)};
}

}  // namespace nodeval
