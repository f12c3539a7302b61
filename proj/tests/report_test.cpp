#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nodeval/report.hpp"
#include "nodeval/synthcohort.hpp"

using namespace nodeval;

namespace {

EvaluationConfig quick_config() {
  EvaluationConfig cfg;
  cfg.replicates = 200;
  return cfg;
}

const Cohort& reference_cohort() {
  static const Cohort c = generate_cohort(CohortSpec{});
  return c;
}

const EvaluationReport& reference_report() {
  static const EvaluationReport r = evaluate(reference_cohort(), quick_config());
  return r;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("nodeval_report_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Format, AucCell) {
  EXPECT_EQ(format_auc_cell(0.694, 0.641, 0.748), "0.69 (0.64-0.75)");
  EXPECT_EQ(format_auc_cell(0.625, 0.5, 1.0), "0.63 (0.50-1.00)");
  EXPECT_EQ(format_auc_cell(0.125, 0.005, 0.995), "0.13 (0.01-1.00)");
}

TEST(Format, PValue) {
  EXPECT_EQ(format_p(0.04567), "0.0457");
  EXPECT_EQ(format_p(1.0), "1.0000");
  EXPECT_EQ(format_p(0.0001), "0.0001");
  EXPECT_EQ(format_p(0.00004), "<0.0001");
  EXPECT_EQ(format_p(0.0), "<0.0001");
}

TEST(Format, RoundHalfUp) {
  EXPECT_EQ(round_half_up(0.125, 2), 0.13);
  EXPECT_EQ(round_half_up(0.745, 2), 0.75);
  EXPECT_EQ(fixed(0.5, 4), "0.5000");
}

TEST(ReaderAverage, MeanOfFour) {
  EXPECT_EQ(reader_average({1, 2, 3, 5}), 2.75);
  EXPECT_EQ(reader_average({4, 4, 4, 4}), 4.0);
}

TEST(Evaluate, StructureOfReferenceReport) {
  const auto& r = reference_report();
  ASSERT_EQ(r.auc_rows.size(), 6u);
  // All + iU22, LOGIQ E9, HDI 5000; six small scanner groups are excluded.
  ASSERT_EQ(r.columns.size(), 4u);
  EXPECT_EQ(r.columns[0].key, "All");
  EXPECT_EQ(r.columns[0].n, 378);
  EXPECT_EQ(r.excluded_groups.size(), 6u);
  for (const auto& e : r.excluded_groups) {
    EXPECT_LT(e.n, 10);
    EXPECT_EQ(e.reason, "insufficient n");
  }
  int in_columns = 0;
  for (std::size_t i = 1; i < r.columns.size(); ++i) in_columns += r.columns[i].n;
  for (const auto& e : r.excluded_groups) in_columns += e.n;
  EXPECT_EQ(in_columns, 378);

  for (const auto& row : r.auc_rows) {
    ASSERT_EQ(row.cells.size(), r.columns.size());
    for (const auto& cell : row.cells) {
      ASSERT_EQ(cell.status, "ok") << row.key;
      EXPECT_LE(cell.ci_low, cell.ci_high);
      EXPECT_GE(cell.ci_low, 0.0);
      EXPECT_LE(cell.ci_high, 1.0);
    }
  }
  EXPECT_EQ(r.paired_p.size(), r.columns.size());
  EXPECT_EQ(r.scanner_pairs.size(), 3u);
  EXPECT_EQ(r.scanner_p.size(), 6u);
  EXPECT_EQ(r.kappa.size(), 6u);
  EXPECT_EQ(r.roc.size(), 6u);
  EXPECT_EQ(r.provenance.kappa_merge, "3:2");
}

TEST(Evaluate, ReaderAverageUsesAveragedScores) {
  const auto& c = reference_cohort();
  std::vector<int> labels;
  std::vector<double> scores;
  for (const auto& rec : c) {
    labels.push_back(rec.label == Label::Malignant);
    scores.push_back(reader_average(rec.reader_scores));
  }
  const double expected = estimate_auc(ScoreSample(labels, scores), Estimator::Binormal).value;
  const auto& row = reference_report().auc_rows[4];
  EXPECT_EQ(row.key, source_key(Source::ReaderAverage));
  EXPECT_EQ(row.cells[0].auc, expected);
}

TEST(Evaluate, ModelEqualToReaderAverageGivesPOne) {
  Cohort c = generate_cohort(CohortSpec{});
  for (auto& rec : c) rec.dl_probability = reader_average(rec.reader_scores) / 5.0;
  const auto r = evaluate(c, quick_config());
  ASSERT_EQ(r.paired_p[0].status, "ok");
  EXPECT_EQ(r.paired_p[0].p, 1.0);
  EXPECT_EQ(r.paired_p[0].text, "1.0000");
}

TEST(Evaluate, ThreadCountDoesNotChangeResult) {
  EvaluationConfig one = quick_config(), four = quick_config();
  four.threads = 4;
  EXPECT_EQ(evaluate(reference_cohort(), one), evaluate(reference_cohort(), four));
}

TEST(Evaluate, GroupByNoneAndErrors) {
  EvaluationConfig cfg = quick_config();
  cfg.group_by = GroupBy::None;
  const auto r = evaluate(reference_cohort(), cfg);
  EXPECT_EQ(r.columns.size(), 1u);
  EXPECT_TRUE(r.scanner_pairs.empty());

  EXPECT_THROW(evaluate({}, cfg), InputError);
  Cohort missing = reference_cohort();
  missing[3].dl_probability.reset();
  EXPECT_THROW(evaluate(missing, cfg), InputError);

  Cohort benign_only;
  for (const auto& rec : reference_cohort())
    if (rec.label == Label::Benign) benign_only.push_back(rec);
  EXPECT_THROW(evaluate(benign_only, cfg), DegenerateError);
}

TEST(Report, JsonRoundTrip) {
  const auto& r = reference_report();
  const Json j = to_json(r);
  for (const char* key : {"provenance", "table1_cohort", "table2_auc", "table3_scanner_p", "table4_kappa", "roc"})
    EXPECT_TRUE(j.contains(key)) << key;
  const EvaluationReport back = report_from_json(Json::parse(j.dump()));
  EXPECT_TRUE(back == r);
}

TEST(Report, CsvWritesAllTables) {
  const auto dir = scratch_dir("csv");
  emit(reference_report(), ReportFormat::Csv, dir);
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) files += e.is_regular_file();
  EXPECT_EQ(files, 4 + 6);
  std::ifstream kappa(dir / "table4_kappa.csv");
  std::string header;
  std::getline(kappa, header);
  EXPECT_EQ(header, "pair,kappa");
  std::filesystem::remove_all(dir);
}

TEST(Report, RenderingsAgree) {
  const auto& r = reference_report();
  std::ostringstream text;
  write_text(text, r);
  const std::string t = text.str();
  EXPECT_NE(t.find("Provenance"), std::string::npos);
  EXPECT_NE(t.find("seed:        42"), std::string::npos);
  EXPECT_NE(t.find("not analyzed"), std::string::npos);

  const auto dir = scratch_dir("agree");
  emit(r, ReportFormat::Csv, dir);
  std::ifstream csv(dir / "table2_auc.csv");
  const std::string csv_text((std::istreambuf_iterator<char>(csv)), std::istreambuf_iterator<char>());
  const Json j = to_json(r);
  for (const auto& row : r.auc_rows)
    for (const auto& cell : row.cells) {
      EXPECT_NE(t.find(cell.text), std::string::npos) << cell.text;
      EXPECT_NE(csv_text.find(cell.text), std::string::npos) << cell.text;
    }
  for (const auto& k : r.kappa) EXPECT_NE(t.find(k.text), std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST(Kappa, ReaderKappasUseMergedScale) {
  const auto pairs = reader_kappas(reference_cohort(), {{3, 2}});
  ASSERT_EQ(pairs.size(), 6u);
  EXPECT_EQ(pairs[0].result.categories, (std::vector<int>{1, 2, 3, 4}));
  for (const auto& p : pairs) {
    EXPECT_GT(p.result.kappa, 0.0);
    EXPECT_LT(p.result.kappa, 1.0);
  }
}
