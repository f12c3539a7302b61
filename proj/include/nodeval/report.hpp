#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "nodeval/json.hpp"

#include "nodeval/agreement.hpp"
#include "nodeval/cohort.hpp"
#include "nodeval/error.hpp"
#include "nodeval/rng.hpp"
#include "nodeval/roc.hpp"
#include "nodeval/significance.hpp"
#include "nodeval/version.hpp"

namespace nodeval {


/// Per-case arithmetic mean of the four reader scores.
inline double reader_average(const std::array<int, kReaders>& scores) {
  for (int s : scores)
    if (s < 1 || s > 5) throw InputError("reader_average: score outside 1..5");
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(kReaders);
}

/// Decimal rounding, half away from zero. The 1e-9 nudge makes values whose
/// decimal expansion ends in 5 (0.745 is stored as 0.74499999...) round up.
inline double round_half_up(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const double sign = v < 0 ? -1.0 : 1.0;
  return sign * std::floor(std::abs(v) * scale + 0.5 + 1e-9) / scale;
}

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, round_half_up(v, decimals));
  return buf;
}

/// "P.PP (L.LL-H.HH)".
inline std::string format_auc_cell(double point, double low, double high) {
  return fixed(point, 2) + " (" + fixed(low, 2) + "-" + fixed(high, 2) + ")";
}

/// Four decimals; below 0.0001 prints "<0.0001".
inline std::string format_p(double p) {
  if (p < 0.0001) return "<0.0001";
  return fixed(p, 4);
}

enum class GroupBy { Scanner, None };

inline GroupBy parse_group_by(std::string_view s) {
  if (s == "scanner") return GroupBy::Scanner;
  if (s == "none") return GroupBy::None;
  throw InputError("unknown --group-by '" + std::string(s) + "' (expected scanner|none)");
}

struct EvaluationConfig {
  int replicates = 2000;
  double level = 0.95;
  Estimator estimator = Estimator::Binormal;
  std::uint64_t seed = 42;
  GroupBy group_by = GroupBy::Scanner;
  int min_group = 10;
  unsigned threads = 1;
  std::vector<std::pair<int, int>> merge = {{3, 2}};  // kappa category merges
};

enum class Source { Reader1, Reader2, Reader3, Reader4, ReaderAverage, DeepLearning };
inline constexpr std::array kSources = {Source::Reader1,       Source::Reader2, Source::Reader3,
                                        Source::Reader4,       Source::ReaderAverage,
                                        Source::DeepLearning};

inline std::string source_key(Source s) {
  switch (s) {
    case Source::ReaderAverage: return "reader_average";
    case Source::DeepLearning: return "deep_learning";
    default: return "reader" + std::to_string(static_cast<int>(s) + 1);
  }
}

inline std::string source_name(Source s) {
  switch (s) {
    case Source::ReaderAverage: return "Radiologist Average";
    case Source::DeepLearning: return "Deep Learning";
    default: return "Radiologist " + std::to_string(static_cast<int>(s) + 1);
  }
}

/// Score series of one source over `cases`, paired with the binary labels.
inline ScoreSample source_sample(const Cohort& cases, Source s) {
  std::vector<int> labels;
  std::vector<double> scores;
  for (const auto& c : cases) {
    labels.push_back(c.label01());
    switch (s) {
      case Source::ReaderAverage: scores.push_back(reader_average(c.reader_scores)); break;
      case Source::DeepLearning:
        if (!c.dl_probability) throw InputError("case " + c.nodule_id + " has no model probability (dl_prob)");
        scores.push_back(*c.dl_probability);
        break;
      default: scores.push_back(c.reader_scores[static_cast<std::size_t>(s)]); break;
    }
  }
  return ScoreSample(std::move(labels), std::move(scores));
}

// ---------------------------------------------------------------------------
// Report model

struct ReportColumn {
  std::string key;      // "All" or scanner name
  std::string display;  // table header
  int n = 0;
  int n_benign = 0;
  int n_malignant = 0;
  friend bool operator==(const ReportColumn&, const ReportColumn&) = default;
};

struct ExcludedGroup {
  std::string key;
  int n = 0;
  std::string reason;
  friend bool operator==(const ExcludedGroup&, const ExcludedGroup&) = default;
};

struct AucCell {
  std::string status = "ok";  // "ok" | "degenerate"
  double auc = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int degenerate_draws = 0;
  bool ci_excludes_point = false;
  std::string text;
  std::string message;
  friend bool operator==(const AucCell&, const AucCell&) = default;
};

struct TestCell {
  std::string status = "ok";
  double auc_a = 0.0;
  double auc_b = 0.0;
  double z = 0.0;
  double p = 1.0;
  std::string text;
  std::string message;
  friend bool operator==(const TestCell&, const TestCell&) = default;
};

struct SourceRow {
  std::string key;
  std::string name;
  std::vector<AucCell> cells;  // parallel to EvaluationReport::columns
  friend bool operator==(const SourceRow&, const SourceRow&) = default;
};

struct ScannerPRow {
  std::string key;
  std::string name;
  std::vector<TestCell> cells;  // parallel to EvaluationReport::scanner_pairs
  friend bool operator==(const ScannerPRow&, const ScannerPRow&) = default;
};

struct KappaEntry {
  std::string pair;
  double kappa = 0.0;
  double observed = 0.0;
  double expected = 0.0;
  bool degenerate = false;
  std::string text;
  friend bool operator==(const KappaEntry&, const KappaEntry&) = default;
};

struct RocSeries {
  std::string key;
  std::vector<RocPoint> points;
  friend bool operator==(const RocSeries& a, const RocSeries& b) {
    if (a.key != b.key || a.points.size() != b.points.size()) return false;
    for (std::size_t i = 0; i < a.points.size(); ++i)
      if (a.points[i].fpr != b.points[i].fpr || a.points[i].tpr != b.points[i].tpr ||
          a.points[i].threshold != b.points[i].threshold)
        return false;
    return true;
  }
};

struct Provenance {
  std::string software = std::string("nodeval ") + NODEVAL_VERSION;
  std::uint64_t seed = 0;
  int replicates = 0;
  double level = 0.95;
  std::string estimator;
  std::string group_by;
  int min_group = 0;
  std::string ci_method = "percentile stratified bootstrap";
  std::string paired_test = "DeLong paired (Radiologist Average vs Deep Learning)";
  std::string group_test = "DeLong unpaired (disjoint scanner groups)";
  std::string kappa_merge;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct EvaluationReport {
  Provenance provenance;
  CohortSummary summary;
  std::vector<ReportColumn> columns;
  std::vector<ExcludedGroup> excluded_groups;
  std::vector<SourceRow> auc_rows;
  std::vector<TestCell> paired_p;  // parallel to columns
  std::vector<std::string> scanner_pairs;
  std::vector<ScannerPRow> scanner_p;
  std::vector<KappaEntry> kappa;
  std::vector<RocSeries> roc;  // full cohort, one per source
};

inline bool operator==(const GroupSummary& a, const GroupSummary& b) {
  auto eq = [](const std::optional<MeanSd>& x, const std::optional<MeanSd>& y) {
    return x.has_value() == y.has_value() && (!x || (x->mean == y->mean && x->sd == y->sd));
  };
  return a.count == b.count && a.female == b.female && a.male == b.male && eq(a.age, b.age) &&
         eq(a.size_cm, b.size_cm);
}
inline bool operator==(const CohortSummary& a, const CohortSummary& b) {
  return a.all == b.all && a.benign == b.benign && a.malignant == b.malignant;
}
inline bool operator==(const EvaluationReport& a, const EvaluationReport& b) {
  return a.provenance == b.provenance && a.summary == b.summary && a.columns == b.columns &&
         a.excluded_groups == b.excluded_groups && a.auc_rows == b.auc_rows && a.paired_p == b.paired_p &&
         a.scanner_pairs == b.scanner_pairs && a.scanner_p == b.scanner_p && a.kappa == b.kappa &&
         a.roc == b.roc;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace detail {

inline AucCell auc_cell(const Cohort& cases, Source s, const EvaluationConfig& cfg, std::uint64_t cell_seed) {
  AucCell cell;
  const ScoreSample sample = source_sample(cases, s);
  try {
    cell.auc = estimate_auc(sample, cfg.estimator).value;
    BootstrapOptions opt;
    opt.replicates = cfg.replicates;
    opt.level = cfg.level;
    opt.seed = cell_seed;
    opt.threads = cfg.threads;
    const BootstrapCi ci = stratified_bootstrap_ci(sample, cfg.estimator, opt);
    cell.ci_low = ci.low;
    cell.ci_high = ci.high;
    cell.degenerate_draws = ci.degenerate_draws;
    cell.ci_excludes_point = cell.auc < ci.low || cell.auc > ci.high;
    cell.text = format_auc_cell(cell.auc, ci.low, ci.high);
  } catch (const DegenerateError& e) {
    cell = AucCell{};
    cell.status = "degenerate";
    cell.text = "n/a";
    cell.message = e.what();
  }
  return cell;
}

template <typename Test>
TestCell test_cell(Test&& run) {
  TestCell cell;
  try {
    const DeLongResult r = run();
    cell.auc_a = r.auc_a;
    cell.auc_b = r.auc_b;
    cell.z = r.z;
    cell.p = r.p;
    cell.text = format_p(r.p);
  } catch (const DegenerateError& e) {
    cell = TestCell{};
    cell.status = "degenerate";
    cell.text = "n/a";
    cell.message = e.what();
  }
  return cell;
}

inline std::string merge_text(const std::vector<std::pair<int, int>>& merge) {
  std::string out;
  for (auto [a, b] : merge) out += (out.empty() ? "" : ",") + std::to_string(a) + ":" + std::to_string(b);
  return out.empty() ? "none" : out;
}

}  // namespace detail

/// Kappa row over the whole cohort after applying the merge rules to every
/// reader's 1..5 scores.
inline std::vector<KappaPair> reader_kappas(const Cohort& cohort, const std::vector<std::pair<int, int>>& merge) {
  const std::vector<int> scale = {1, 2, 3, 4, 5};
  const CategoryMap mapping = merge_mapping(scale, merge);
  std::vector<RatingVector> readers;
  for (std::size_t r = 0; r < kReaders; ++r) {
    std::vector<int> v;
    for (const auto& c : cohort) v.push_back(c.reader_scores[r]);
    readers.push_back(collapse_categories(RatingVector(std::move(v), scale), mapping));
  }
  return kappa_matrix(readers);
}

/// Full reader-vs-model analysis: AUC grid with bootstrap CIs (all cases and
/// each sufficiently large scanner group), paired DeLong p per column,
/// unpaired DeLong p between scanner groups per source, and reader kappas.
///
/// Every bootstrap uses seed stream_key(stream_key(seed, source), column), so
/// the report depends only on (cohort, config minus threads).
inline EvaluationReport evaluate(const Cohort& cohort, const EvaluationConfig& cfg) {
  if (cohort.empty()) throw InputError("evaluate: empty cohort");
  if (cfg.min_group < 1) throw InputError("evaluate: min_group must be at least 1");
  for (const auto& c : cohort)
    if (!c.dl_probability) throw InputError("evaluate: case " + c.nodule_id + " has no model probability (dl_prob)");

  EvaluationReport rep;
  rep.provenance.seed = cfg.seed;
  rep.provenance.replicates = cfg.replicates;
  rep.provenance.level = cfg.level;
  rep.provenance.estimator = std::string(to_string(cfg.estimator));
  rep.provenance.group_by = cfg.group_by == GroupBy::Scanner ? "scanner" : "none";
  rep.provenance.min_group = cfg.min_group;
  rep.provenance.kappa_merge = detail::merge_text(cfg.merge);
  rep.summary = summarize(cohort);

  std::vector<Cohort> groups;
  auto add_column = [&](std::string key, std::string display, Cohort cases) {
    ReportColumn col{std::move(key), std::move(display), static_cast<int>(cases.size()), 0, 0};
    for (const auto& c : cases) (c.label == Label::Malignant ? col.n_malignant : col.n_benign) += 1;
    rep.columns.push_back(std::move(col));
    groups.push_back(std::move(cases));
  };
  add_column("All", "All (" + std::to_string(cohort.size()) + " cases)", cohort);
  if (cfg.group_by == GroupBy::Scanner) {
    for (auto& s : stratify(cohort, StratifyKey::Scanner)) {
      const int n = static_cast<int>(s.cases.size());
      if (n < cfg.min_group) {
        rep.excluded_groups.push_back({s.key, n, "insufficient n"});
        continue;
      }
      const std::string display =
          std::string(display_name(parse_scanner(s.key))) + " (" + std::to_string(n) + " cases)";
      add_column(s.key, display, std::move(s.cases));
    }
  }

  for (std::size_t si = 0; si < kSources.size(); ++si) {
    const Source src = kSources[si];
    SourceRow row{source_key(src), source_name(src), {}};
    const std::uint64_t source_seed = stream_key(cfg.seed, si);
    for (std::size_t ci = 0; ci < groups.size(); ++ci)
      row.cells.push_back(detail::auc_cell(groups[ci], src, cfg, stream_key(source_seed, ci)));
    if (row.cells.front().status != "ok")
      throw DegenerateError("evaluate: " + row.name + " AUC is not estimable on the full cohort: " +
                            row.cells.front().message);
    rep.auc_rows.push_back(std::move(row));
  }

  for (const auto& g : groups)
    rep.paired_p.push_back(detail::test_cell([&] {
      return delong_paired_test(source_sample(g, Source::ReaderAverage), source_sample(g, Source::DeepLearning));
    }));

  for (std::size_t i = 1; i < groups.size(); ++i)
    for (std::size_t j = i + 1; j < groups.size(); ++j)
      rep.scanner_pairs.push_back(rep.columns[i].key + " vs " + rep.columns[j].key);
  for (Source src : kSources) {
    ScannerPRow row{source_key(src), source_name(src), {}};
    for (std::size_t i = 1; i < groups.size(); ++i)
      for (std::size_t j = i + 1; j < groups.size(); ++j)
        row.cells.push_back(detail::test_cell(
            [&] { return delong_unpaired_test(source_sample(groups[i], src), source_sample(groups[j], src)); }));
    rep.scanner_p.push_back(std::move(row));
  }

  for (const auto& kp : reader_kappas(cohort, cfg.merge))
    rep.kappa.push_back({kappa_pair_label(kp), kp.result.kappa, kp.result.observed, kp.result.expected,
                         kp.result.degenerate, fixed(kp.result.kappa, 4)});

  for (Source src : kSources) rep.roc.push_back({source_key(src), roc_points(source_sample(cohort, src))});
  return rep;
}

// ---------------------------------------------------------------------------
// JSON

inline Json to_json(const GroupSummary& g) {
  auto ms = [](const std::optional<MeanSd>& m) -> Json {
    if (!m) return nullptr;
    return Json{{"mean", m->mean}, {"sd", m->sd}};
  };
  return Json{{"count", g.count}, {"female", g.female}, {"male", g.male}, {"age", ms(g.age)}, {"size_cm", ms(g.size_cm)}};
}

inline Json to_json(const CohortSummary& s) {
  return Json{{"all", to_json(s.all)}, {"benign", to_json(s.benign)}, {"malignant", to_json(s.malignant)}};
}

inline GroupSummary group_summary_from_json(const Json& j) {
  auto ms = [](const Json& m) -> std::optional<MeanSd> {
    if (m.is_null()) return std::nullopt;
    return MeanSd{m.at("mean").get<double>(), m.at("sd").get<double>()};
  };
  GroupSummary g;
  g.count = j.at("count").get<std::size_t>();
  g.female = j.at("female").get<std::size_t>();
  g.male = j.at("male").get<std::size_t>();
  g.age = ms(j.at("age"));
  g.size_cm = ms(j.at("size_cm"));
  return g;
}

inline CohortSummary cohort_summary_from_json(const Json& j) {
  return {group_summary_from_json(j.at("all")), group_summary_from_json(j.at("benign")),
          group_summary_from_json(j.at("malignant"))};
}

namespace detail {

inline Json to_json(const TestCell& c) {
  return Json{{"status", c.status}, {"auc_a", c.auc_a}, {"auc_b", c.auc_b}, {"z", c.z},
              {"p", c.p},           {"text", c.text},   {"message", c.message}};
}

inline TestCell test_cell_from_json(const Json& j) {
  TestCell c;
  c.status = j.at("status").get<std::string>();
  c.auc_a = j.at("auc_a").get<double>();
  c.auc_b = j.at("auc_b").get<double>();
  c.z = j.at("z").get<double>();
  c.p = j.at("p").get<double>();
  c.text = j.at("text").get<std::string>();
  c.message = j.at("message").get<std::string>();
  return c;
}

inline Json roc_to_json(const RocSeries& r) {
  Json pts = Json::array();
  for (const auto& p : r.points)
    pts.push_back(Json::array({p.fpr, p.tpr, std::isinf(p.threshold) ? Json("inf") : Json(p.threshold)}));
  return Json{{"source", r.key}, {"points", pts}};
}

}  // namespace detail

/// Canonical machine-readable report. Keys appear in a fixed order.
inline Json to_json(const EvaluationReport& r) {
  const auto& pv = r.provenance;
  Json j;
  j["provenance"] = Json{{"software", pv.software},       {"seed", pv.seed},
                         {"replicates", pv.replicates},   {"level", pv.level},
                         {"estimator", pv.estimator},     {"group_by", pv.group_by},
                         {"min_group", pv.min_group},     {"ci_method", pv.ci_method},
                         {"paired_test", pv.paired_test}, {"group_test", pv.group_test},
                         {"kappa_merge", pv.kappa_merge}};
  j["table1_cohort"] = to_json(r.summary);

  Json cols = Json::array();
  for (const auto& c : r.columns)
    cols.push_back(Json{{"key", c.key}, {"display", c.display}, {"n", c.n}, {"n_benign", c.n_benign}, {"n_malignant", c.n_malignant}});
  Json excluded = Json::array();
  for (const auto& e : r.excluded_groups) excluded.push_back(Json{{"key", e.key}, {"n", e.n}, {"reason", e.reason}});
  Json rows = Json::array();
  for (const auto& row : r.auc_rows) {
    Json cells = Json::array();
    for (const auto& c : row.cells)
      cells.push_back(Json{{"status", c.status},
                           {"auc", c.auc},
                           {"ci_low", c.ci_low},
                           {"ci_high", c.ci_high},
                           {"degenerate_draws", c.degenerate_draws},
                           {"ci_excludes_point", c.ci_excludes_point},
                           {"text", c.text},
                           {"message", c.message}});
    rows.push_back(Json{{"source", row.key}, {"name", row.name}, {"cells", cells}});
  }
  Json paired = Json::array();
  for (const auto& c : r.paired_p) paired.push_back(detail::to_json(c));
  j["table2_auc"] = Json{{"columns", cols}, {"excluded_groups", excluded}, {"rows", rows}, {"paired_p", paired}};

  Json prow = Json::array();
  for (const auto& row : r.scanner_p) {
    Json cells = Json::array();
    for (const auto& c : row.cells) cells.push_back(detail::to_json(c));
    prow.push_back(Json{{"source", row.key}, {"name", row.name}, {"cells", cells}});
  }
  j["table3_scanner_p"] = Json{{"pairs", r.scanner_pairs}, {"rows", prow}};

  Json kap = Json::array();
  for (const auto& k : r.kappa)
    kap.push_back(Json{{"pair", k.pair}, {"kappa", k.kappa}, {"observed", k.observed}, {"expected", k.expected},
                       {"degenerate", k.degenerate}, {"text", k.text}});
  j["table4_kappa"] = kap;

  Json roc = Json::array();
  for (const auto& s : r.roc) roc.push_back(detail::roc_to_json(s));
  j["roc"] = roc;
  return j;
}

inline EvaluationReport report_from_json(const Json& j) {
  EvaluationReport r;
  try {
    const auto& pv = j.at("provenance");
    r.provenance.software = pv.at("software").get<std::string>();
    r.provenance.seed = pv.at("seed").get<std::uint64_t>();
    r.provenance.replicates = pv.at("replicates").get<int>();
    r.provenance.level = pv.at("level").get<double>();
    r.provenance.estimator = pv.at("estimator").get<std::string>();
    r.provenance.group_by = pv.at("group_by").get<std::string>();
    r.provenance.min_group = pv.at("min_group").get<int>();
    r.provenance.ci_method = pv.at("ci_method").get<std::string>();
    r.provenance.paired_test = pv.at("paired_test").get<std::string>();
    r.provenance.group_test = pv.at("group_test").get<std::string>();
    r.provenance.kappa_merge = pv.at("kappa_merge").get<std::string>();
    r.summary = cohort_summary_from_json(j.at("table1_cohort"));

    const auto& t2 = j.at("table2_auc");
    for (const auto& c : t2.at("columns"))
      r.columns.push_back({c.at("key").get<std::string>(), c.at("display").get<std::string>(), c.at("n").get<int>(),
                           c.at("n_benign").get<int>(), c.at("n_malignant").get<int>()});
    for (const auto& e : t2.at("excluded_groups"))
      r.excluded_groups.push_back({e.at("key").get<std::string>(), e.at("n").get<int>(), e.at("reason").get<std::string>()});
    for (const auto& row : t2.at("rows")) {
      SourceRow sr{row.at("source").get<std::string>(), row.at("name").get<std::string>(), {}};
      for (const auto& c : row.at("cells")) {
        AucCell cell;
        cell.status = c.at("status").get<std::string>();
        cell.auc = c.at("auc").get<double>();
        cell.ci_low = c.at("ci_low").get<double>();
        cell.ci_high = c.at("ci_high").get<double>();
        cell.degenerate_draws = c.at("degenerate_draws").get<int>();
        cell.ci_excludes_point = c.at("ci_excludes_point").get<bool>();
        cell.text = c.at("text").get<std::string>();
        cell.message = c.at("message").get<std::string>();
        sr.cells.push_back(std::move(cell));
      }
      r.auc_rows.push_back(std::move(sr));
    }
    for (const auto& c : t2.at("paired_p")) r.paired_p.push_back(detail::test_cell_from_json(c));

    const auto& t3 = j.at("table3_scanner_p");
    r.scanner_pairs = t3.at("pairs").get<std::vector<std::string>>();
    for (const auto& row : t3.at("rows")) {
      ScannerPRow pr{row.at("source").get<std::string>(), row.at("name").get<std::string>(), {}};
      for (const auto& c : row.at("cells")) pr.cells.push_back(detail::test_cell_from_json(c));
      r.scanner_p.push_back(std::move(pr));
    }
    for (const auto& k : j.at("table4_kappa"))
      r.kappa.push_back({k.at("pair").get<std::string>(), k.at("kappa").get<double>(), k.at("observed").get<double>(),
                         k.at("expected").get<double>(), k.at("degenerate").get<bool>(), k.at("text").get<std::string>()});
    for (const auto& s : j.at("roc")) {
      RocSeries series{s.at("source").get<std::string>(), {}};
      for (const auto& p : s.at("points")) {
        const double t = p.at(2).is_string() ? std::numeric_limits<double>::infinity() : p.at(2).get<double>();
        series.points.push_back({p.at(0).get<double>(), p.at(1).get<double>(), t});
      }
      r.roc.push_back(std::move(series));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("report JSON: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Text and CSV renderings

namespace detail {

inline std::string mean_sd_text(const std::optional<MeanSd>& m, int decimals) {
  if (!m) return "-";
  return fixed(m->mean, decimals) + " ± " + fixed(m->sd, decimals);
}

/// Table 1 rows: label then All / Benign / Malignant cells.
inline std::vector<std::vector<std::string>> table1_rows(const CohortSummary& s) {
  const GroupSummary* g[3] = {&s.all, &s.benign, &s.malignant};
  std::vector<std::vector<std::string>> rows = {{"Image Characteristic", "All Nodules", "Benign Nodules", "Malignant Nodules"}};
  auto add = [&](std::string label, auto cell) {
    std::vector<std::string> row{std::move(label)};
    for (auto* x : g) row.push_back(cell(*x));
    rows.push_back(std::move(row));
  };
  add("Number of Nodules", [](const GroupSummary& x) { return std::to_string(x.count); });
  add("Number of Nodules in Female Patients", [](const GroupSummary& x) { return std::to_string(x.female); });
  add("Number of Nodules in Male Patients", [](const GroupSummary& x) { return std::to_string(x.male); });
  add("Mean Age of Patients", [](const GroupSummary& x) { return mean_sd_text(x.age, 2); });
  add("Maximum Nodule Size (cm) (± std. dev.)", [](const GroupSummary& x) { return mean_sd_text(x.size_cm, 1); });
  return rows;
}

inline std::vector<std::vector<std::string>> table2_rows(const EvaluationReport& r) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head{"Source"};
  for (const auto& c : r.columns) head.push_back(c.display);
  rows.push_back(std::move(head));
  for (const auto& row : r.auc_rows) {
    std::vector<std::string> line{row.name};
    for (const auto& c : row.cells) line.push_back(c.text + (c.ci_excludes_point ? " *" : ""));
    rows.push_back(std::move(line));
  }
  std::vector<std::string> p{"p-value Between Radiologist Average and Deep Learning"};
  for (const auto& c : r.paired_p) p.push_back(c.text);
  rows.push_back(std::move(p));
  return rows;
}

inline std::vector<std::vector<std::string>> table3_rows(const EvaluationReport& r) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head{"p value Between Different Scanners (unpaired)"};
  for (const auto& p : r.scanner_pairs) head.push_back(p);
  rows.push_back(std::move(head));
  for (const auto& row : r.scanner_p) {
    std::vector<std::string> line{row.name};
    for (const auto& c : row.cells) line.push_back(c.text);
    rows.push_back(std::move(line));
  }
  return rows;
}

inline std::vector<std::vector<std::string>> table4_rows(const EvaluationReport& r) {
  std::vector<std::vector<std::string>> rows = {{"pair", "kappa"}};
  for (const auto& k : r.kappa) rows.push_back({k.pair, k.text});
  return rows;
}

inline std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;  // count UTF-8 code points
  return n;
}

inline void render_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (width.size() <= i) width.push_back(0);
      width[i] = std::max(width[i], display_width(row[i]));
    }
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << row[i];
      if (i + 1 < row.size()) out << std::string(width[i] - display_width(row[i]) + 2, ' ');
    }
    out << '\n';
  }
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

inline void write_csv(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_field(row[i]);
    out << '\n';
  }
}

}  // namespace detail

inline void write_text(std::ostream& out, const EvaluationReport& r) {
  const auto& pv = r.provenance;
  out << "Provenance\n"
      << "  software:    " << pv.software << '\n'
      << "  seed:        " << pv.seed << '\n'
      << "  replicates:  " << pv.replicates << '\n'
      << "  level:       " << fixed(pv.level, 2) << '\n'
      << "  estimator:   " << pv.estimator << '\n'
      << "  group_by:    " << pv.group_by << " (min_group " << pv.min_group << ")\n"
      << "  CI:          " << pv.ci_method << '\n'
      << "  paired test: " << pv.paired_test << '\n'
      << "  group test:  " << pv.group_test << '\n'
      << "  kappa merge: " << pv.kappa_merge << "\n\n";
  out << "Table 1: Cohort statistics\n";
  detail::render_table(out, detail::table1_rows(r.summary));
  out << "\nTable 2: AUC (" << fixed(pv.level * 100, 0) << "% CI)\n";
  detail::render_table(out, detail::table2_rows(r));
  for (const auto& e : r.excluded_groups) out << "  not analyzed: " << e.key << " (n=" << e.n << ", " << e.reason << ")\n";
  if (r.scanner_pairs.empty()) {
    out << "\nTable 3: no scanner groups to compare\n";
  } else {
    out << "\nTable 3: p-values between scanner groups\n";
    detail::render_table(out, detail::table3_rows(r));
  }
  out << "\nTable 4: Cohen's kappa between readers\n";
  detail::render_table(out, detail::table4_rows(r));
}

enum class ReportFormat { Json, Csv, Text };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "text") return ReportFormat::Text;
  throw InputError("unknown --format '" + std::string(s) + "' (expected json|csv|text)");
}

/// Writes the report. json and text go to the file `out`; csv treats `out` as
/// a directory and writes table1_cohort.csv, table2_auc.csv,
/// table3_scanner_p.csv, table4_kappa.csv and roc_<source>.csv per source.
inline void emit(const EvaluationReport& r, ReportFormat format, const std::filesystem::path& out) {
  auto open = [](const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw InputError("cannot write '" + p.string() + "'");
    return f;
  };
  switch (format) {
    case ReportFormat::Json: {
      auto f = open(out);
      f << to_json(r).dump(2) << '\n';
      if (!f) throw InputError("error writing '" + out.string() + "'");
      break;
    }
    case ReportFormat::Text: {
      auto f = open(out);
      write_text(f, r);
      if (!f) throw InputError("error writing '" + out.string() + "'");
      break;
    }
    case ReportFormat::Csv: {
      std::error_code ec;
      std::filesystem::create_directories(out, ec);
      if (ec) throw InputError("cannot create directory '" + out.string() + "': " + ec.message());
      {
        auto f = open(out / "table1_cohort.csv");
        detail::write_csv(f, detail::table1_rows(r.summary));
      }
      {
        auto f = open(out / "table2_auc.csv");
        detail::write_csv(f, detail::table2_rows(r));
      }
      {
        auto f = open(out / "table3_scanner_p.csv");
        detail::write_csv(f, detail::table3_rows(r));
      }
      {
        auto f = open(out / "table4_kappa.csv");
        detail::write_csv(f, detail::table4_rows(r));
      }
      for (const auto& s : r.roc) {
        auto f = open(out / ("roc_" + s.key + ".csv"));
        write_roc_csv(f, s.points);
      }
      break;
    }
  }
}

}  // namespace nodeval
