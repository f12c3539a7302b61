// Acceptance suite: one PASS/FAIL line per criterion; non-zero exit on any failure.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nodeval/nodeval.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace nodeval;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

unsigned worker_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ScoreSample to_sample(const oracle::Sample& s) { return ScoreSample(s.labels, s.scores); }

// Sizes 2..60 per class; half the samples on a coarse grid, the rest
// continuous with duplicated values spliced in.
oracle::Sample tied_sample(Rng& rng) {
  const int m = 2 + static_cast<int>(rng.below(59)), n = 2 + static_cast<int>(rng.below(59));
  if (rng.bernoulli(0.5)) return oracle::random_tied_sample(rng, m, n, 2 + static_cast<int>(rng.below(12)));
  oracle::Sample s = oracle::binormal_sample(rng, m, n, rng.uniform() * 2.0);
  for (int k = 0; k < (m + n) / 4; ++k) s.scores[rng.below(s.scores.size())] = s.scores[rng.below(s.scores.size())];
  return s;
}

Outcome auc_oracle() {
  Rng rng(1001, 0);
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto s = tied_sample(rng);
    worst = std::max(worst, std::abs(empirical_auc(to_sample(s)) - oracle::pairwise_auc(s.labels, s.scores)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 5.0, fmt("max |diff| %.3g over 1000 samples, %.2f s", worst, secs)};
}

Outcome delong_consistency() {
  Rng rng(1002, 0);
  double worst = 0.0, min_var = 1.0;
  for (int i = 0; i < 1000; ++i) {
    const auto sample = to_sample(tied_sample(rng));
    const auto c = delong_components(sample);
    const double auc = empirical_auc(sample);
    const double m10 = std::accumulate(c.v10.begin(), c.v10.end(), 0.0) / c.v10.size();
    const double m01 = std::accumulate(c.v01.begin(), c.v01.end(), 0.0) / c.v01.size();
    worst = std::max({worst, std::abs(m10 - auc), std::abs(m01 - auc)});
    min_var = std::min(min_var, delong_variance(c));
  }
  return {worst <= 1e-12 && min_var >= 0.0, fmt("max |mean(V) - AUC| %.3g, min variance %.3g", worst, min_var)};
}

Outcome delong_vs_bootstrap() {
  const auto t0 = Clock::now();
  const double shift = std::numbers::sqrt2 * normal_quantile(0.75);
  std::vector<double> rel;
  for (int sim = 0; sim < 50; ++sim) {
    Rng rng(1003, sim);
    const auto sample = to_sample(oracle::binormal_sample(rng, 200, 200, shift));
    BootstrapOptions opt;
    opt.replicates = 2000;
    opt.seed = stream_key(1003, 1000 + sim);
    opt.threads = worker_threads();
    const auto reps = bootstrap_replicates(sample, Estimator::Empirical, opt, nullptr);
    const double vb = detail::sample_variance(reps);
    rel.push_back(std::abs(delong_variance(sample) - vb) / vb);
  }
  const double med = median(rel), secs = seconds_since(t0);
  return {med <= 0.2 && secs < 60.0, fmt("median relative difference %.4f, %.1f s", med, secs)};
}

Outcome paired_calibration() {
  const double shift = std::numbers::sqrt2 * normal_quantile(0.69);
  int rejected = 0, total = 0;
  for (int sim = 0; sim < 2000; ++sim) {
    Rng rng(1004, sim);
    std::vector<int> labels;
    std::vector<double> a, b;
    for (int i = 0; i < 231 + 147; ++i) {
      const int y = i < 147;
      const double z = rng.normal();
      labels.push_back(y);
      a.push_back(shift * y + std::sqrt(0.5) * z + std::sqrt(0.5) * rng.normal());
      b.push_back(shift * y + std::sqrt(0.5) * z + std::sqrt(0.5) * rng.normal());
    }
    ++total;
    if (delong_paired_test(ScoreSample(labels, a), ScoreSample(labels, b)).p < 0.05) ++rejected;
  }
  const double rate = static_cast<double>(rejected) / total;
  return {rate >= 0.035 && rate <= 0.065, fmt("rejection rate %.4f (%d/%d)", rate, rejected, total)};
}

Outcome ci_coverage() {
  const auto t0 = Clock::now();
  const double truth = 0.69;
  const double shift = std::numbers::sqrt2 * normal_quantile(truth);
  int covered = 0;
  for (int sim = 0; sim < 500; ++sim) {
    Rng rng(1005, sim);
    const auto sample = to_sample(oracle::binormal_sample(rng, 147, 231, shift));
    BootstrapOptions opt;
    opt.replicates = 2000;
    opt.seed = stream_key(1005, 1000 + sim);
    opt.threads = worker_threads();
    const auto ci = stratified_bootstrap_ci(sample, Estimator::Binormal, opt);
    if (ci.low <= truth && truth <= ci.high) ++covered;
  }
  const double cov = covered / 500.0, secs = seconds_since(t0);
  return {cov >= 0.92 && cov <= 0.98 && secs < 300.0, fmt("coverage %.3f (%d/500), %.1f s", cov, covered, secs)};
}

Outcome binormal_consistency() {
  // Unequal variances: positives N(mu, 1.5^2), negatives N(0, 1).
  const double sd_pos = 1.5;
  const double mu = normal_quantile(0.75) * std::sqrt(1.0 + sd_pos * sd_pos);
  Rng rng(1006, 0);
  std::vector<int> labels;
  std::vector<double> scores;
  for (int i = 0; i < 5000; ++i) labels.push_back(1), scores.push_back(mu + sd_pos * rng.normal());
  for (int i = 0; i < 5000; ++i) labels.push_back(0), scores.push_back(rng.normal());
  const double est = binormal_auc(ScoreSample(labels, scores)).value;

  // Same multiset of scores in both classes: zero separation.
  std::vector<int> l0;
  std::vector<double> s0;
  for (int i = 0; i < 40; ++i) {
    const double v = rng.normal();
    l0.push_back(1), s0.push_back(v);
    l0.push_back(0), s0.push_back(v);
  }
  const auto fit = fit_binormal(ScoreSample(l0, s0));
  const double half = binormal_auc(ScoreSample(l0, s0)).value;
  return {std::abs(est - 0.75) <= 0.02 && fit.a == 0.0 && half == 0.5,
          fmt("estimate %.4f vs 0.75; a = 0 gives %.17g", est, half)};
}

Outcome kappa_exactness() {
  bool ok = true;
  std::string notes;
  auto check = [&](bool cond, const char* what) {
    if (!cond) ok = false, notes += std::string(notes.empty() ? "" : "; ") + what;
  };
  const RatingVector a({1, 2, 3, 4, 5, 3, 2});
  check(std::abs(cohen_kappa(a, a).kappa - 1.0) <= 1e-12, "perfect agreement");
  // Every cell of a 5x5 table filled equally.
  std::vector<int> r1, r2;
  for (int i = 1; i <= 5; ++i)
    for (int j = 1; j <= 5; ++j) r1.push_back(i), r2.push_back(j);
  check(std::abs(cohen_kappa(RatingVector(r1), RatingVector(r2)).kappa) <= 1e-12, "uniform independence");
  check(std::abs(cohen_kappa(RatingVector({1, 1, 2, 2}), RatingVector({1, 2, 1, 2})).kappa) <= 1e-12,
        "4-case example");
  Rng rng(1007, 0);
  for (int t = 0; t < 200; ++t) {
    std::vector<int> x, y;
    for (int i = 0; i < 30; ++i) x.push_back(1 + int(rng.below(5))), y.push_back(1 + int(rng.below(5)));
    if (cohen_kappa(RatingVector(x), RatingVector(y)).kappa != cohen_kappa(RatingVector(y), RatingVector(x)).kappa) {
      check(false, "symmetry");
      break;
    }
  }
  const auto merged = collapse_categories(RatingVector({1, 3, 2, 5}), merge_mapping({1, 2, 3, 4, 5}, parse_merge_rules("3:2")));
  check(merged.values() == std::vector<int>{1, 2, 2, 4}, "merge 3:2");
  return {ok, ok ? "1.0 / 0.0 / 0.0, symmetric, 3:2 maps (1,3,2,5) to (1,2,2,4)" : notes};
}

Outcome crop_geometry() {
  const auto t0 = Clock::now();
  Rng rng(1008, 0);
  int failures = 0, padded = 0;
  for (int t = 0; t < 500; ++t) {
    const int w = 16 + int(rng.below(500)), h = 16 + int(rng.below(500));
    GrayImage img(w, h, 0);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(1 + rng.below(255));
    // Roughly a third of the configurations put calipers on or near the border;
    // the rest keep them in the central half of the image.
    const bool collide = rng.bernoulli(0.3);
    auto coord = [&](int lim) {
      if (collide) {
        const auto r = rng.below(4);
        return r == 0 ? 0 : r == 1 ? lim - 1 : int(rng.below(lim));
      }
      return lim / 4 + int(rng.below(lim / 2));
    };
    CaliperSet cal;
    const int npts = rng.bernoulli(0.5) ? 2 : 4;
    for (int k = 0; k < npts; ++k) cal.points.push_back({coord(w), coord(h)});
    const BBox b = caliper_bbox(cal);
    const int margin = int(rng.below(48));
    const auto [crop, box] = square_crop_with_margin(img, b, margin);
    bool ok = crop.width == crop.height && crop.width == box.side;
    if (!box.pad_left) ok &= b.xmin - box.x0 >= margin;
    if (!box.pad_top) ok &= b.ymin - box.y0 >= margin;
    if (!box.pad_right) ok &= box.x0 + box.side - b.xmax >= margin;
    if (!box.pad_bottom) ok &= box.y0 + box.side - b.ymax >= margin;
    for (int y = 0; y < box.side && ok; ++y)
      for (int x = 0; x < box.side; ++x) {
        const int sx = box.x0 + x, sy = box.y0 + y;
        if (crop.at(x, y) != (img.contains(sx, sy) ? img.at(sx, sy) : 0)) {
          ok = false;
          break;
        }
      }
    padded += box.pad_left || box.pad_top || box.pad_right || box.pad_bottom;
    failures += !ok;
  }
  const auto [anchor, box] = square_crop_with_margin(GrayImage(400, 400, 1), {100, 100, 150, 130}, 32);
  const bool anchor_ok = anchor.width == 114 && anchor.height == 114 && box.y0 == 58 && box.y0 + box.side == 172;
  const double secs = seconds_since(t0);
  return {failures == 0 && anchor_ok && secs < 1.0,
          fmt("%d/500 failures (%d padded), anchor %dx%d y [%d,%d], %.3f s", failures, padded, anchor.width,
              anchor.height, box.y0, box.y0 + box.side, secs)};
}

Outcome cnn_checks() {
  const CnnModel zero;
  const bool half = forward(zero, Plane(160, 160, 0.25)) == 0.5;

  const auto trace = forward_trace(zero, Plane(160, 160, 0.25));
  bool sizes = true;
  const int expected[kConvLayers] = {160, 80, 40, 20, 10, 5};
  for (int l = 0; l < kConvLayers; ++l)
    sizes &= trace.relu_out[l].height == expected[l] && trace.relu_out[l].width == expected[l];

  // Reduced model: 8x8 input, two channels per layer.
  CnnModel small({2, 2, 2, 2, 2, 2}, 8);
  init_random(small, 17);
  for (int l = 0; l < kConvLayers; ++l)
    for (std::size_t i = small.conv_bias_offset(l); i < small.conv_bias_offset(l) + 2; ++i) small.params()[i] = 0.1;
  Rng rng(1009, 0);
  int sampled = 0, good = 0;
  for (int trial = 0; trial < 4; ++trial) {
    Plane x(8, 8);
    for (auto& v : x.values) v = rng.uniform();
    const int y = trial % 2;
    const Gradient g = backward(small, x, y);
    for (std::size_t i = 0; i < small.params().size(); ++i) {
      const double keep = small.params()[i], h = 1e-6;
      small.params()[i] = keep + h;
      const double up = bce_loss(forward(small, x), y);
      small.params()[i] = keep - h;
      const double down = bce_loss(forward(small, x), y);
      small.params()[i] = keep;
      const double fd = (up - down) / (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(g.params[i]), 1e-8});
      ++sampled;
      good += std::abs(fd - g.params[i]) / denom <= 1e-4;
    }
  }
  const double frac = static_cast<double>(good) / sampled;

  CnnModel full;
  init_random(full, 23);
  std::stringstream buf;
  write_weights(buf, full);
  const CnnModel back = read_weights(buf);
  const bool bits = back.params().size() == full.params().size() &&
                    std::memcmp(back.params().data(), full.params().data(), 8 * full.params().size()) == 0;
  return {half && sizes && frac >= 0.99 && bits,
          fmt("zero->0.5 %s, sizes %s, gradient %.4f of %d weights, round-trip %s", half ? "yes" : "no",
              sizes ? "ok" : "bad", frac, sampled, bits ? "bit-exact" : "differs")};
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(NODEVAL_CLI_PATH) + " " + args).c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome end_to_end() {
  const fs::path dir = fs::temp_directory_path() / "nodeval_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string csv = (dir / "cohort.csv").string();
  const auto t0 = Clock::now();
  int rc = run_cli("synth cohort --out " + csv);
  const std::string ev = "evaluate --input " + csv + " --seed 42 --format json --out ";
  rc |= run_cli(ev + (dir / "a.json").string());
  rc |= run_cli(ev + (dir / "b.json").string());
  const double secs = seconds_since(t0);
  rc |= run_cli(ev + (dir / "c.json").string() + " --threads 4");
  if (rc != 0) return {false, "CLI exited with an error"};

  const std::string a = slurp(dir / "a.json"), b = slurp(dir / "b.json"), c = slurp(dir / "c.json");
  const Cohort cohort = load_cohort(csv);
  int benign = 0, iu22 = 0, e9 = 0, hdi = 0;
  for (const auto& r : cohort) {
    benign += r.label == Label::Benign;
    iu22 += r.scanner == Scanner::iU22;
    e9 += r.scanner == Scanner::LOGIQ_E9;
    hdi += r.scanner == Scanner::HDI5000;
  }
  const bool cohort_ok = cohort.size() == 378 && benign == 231 && iu22 == 218 && e9 == 79 && hdi == 64;

  const Json j = Json::parse(a);
  bool shape = j["table2_auc"]["rows"].size() == 6 && j["table2_auc"]["columns"].size() == 4 &&
               j["table2_auc"]["paired_p"].size() == 4 && j["table4_kappa"].size() == 6 &&
               j["table3_scanner_p"]["pairs"].size() == 3 && j["table3_scanner_p"]["rows"].size() == 6;
  for (const auto& row : j["table2_auc"]["rows"]) shape = shape && row["cells"].size() == 4;
  for (const auto& row : j["table3_scanner_p"]["rows"]) shape = shape && row["cells"].size() == 3;
  fs::remove_all(dir);

  const bool same = a == b, parallel = a == c;
  return {cohort_ok && same && parallel && shape && secs < 10.0,
          fmt("cohort %s, repeat %s, threads 1 vs 4 %s, tables %s, %.2f s", cohort_ok ? "ok" : "bad",
              same ? "identical" : "differs", parallel ? "identical" : "differs", shape ? "ok" : "bad", secs)};
}

Outcome formatting_anchor() {
  const std::string s = format_auc_cell(0.694, 0.641, 0.748);
  return {s == "0.69 (0.64-0.75)", "\"" + s + "\""};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"AUC oracle equivalence", auc_oracle},
      {"DeLong internal consistency", delong_consistency},
      {"DeLong vs bootstrap variance", delong_vs_bootstrap},
      {"Paired-test calibration", paired_calibration},
      {"Bootstrap CI coverage", ci_coverage},
      {"Binormal estimator consistency", binormal_consistency},
      {"Kappa exactness", kappa_exactness},
      {"Crop geometry", crop_geometry},
      {"CNN checks", cnn_checks},
      {"End-to-end determinism and structure", end_to_end},
      {"Formatting anchor", formatting_anchor},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %2zu  %-38s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
