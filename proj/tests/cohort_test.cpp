#include <gtest/gtest.h>

#include <sstream>

#include "nodeval/cohort.hpp"
#include "nodeval/synthcohort.hpp"

using namespace nodeval;

namespace {

const std::string kHeader = std::string(kCohortHeader) + "\n";

Cohort parse(const std::string& text) {
  std::istringstream in(text);
  return read_cohort(in);
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(LoadCohort, TwoRowsInOrder) {
  const auto c = parse(kHeader +
                       "b1,benign,2,iU22,F,50,1.5,1,2,2,1,0,0,0,0,0.2\n"
                       "m1,malignant,6,LOGIQ E9,M,61.5,3.25,5,4,4,5,1,1,1,1,\n");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].nodule_id, "b1");
  EXPECT_EQ(c[1].nodule_id, "m1");
  EXPECT_EQ(c[1].scanner, Scanner::LOGIQ_E9);
  EXPECT_EQ(c[1].reader_scores, (std::array<int, 4>{5, 4, 4, 5}));
  EXPECT_TRUE(c[1].fna[2]);
  EXPECT_FALSE(c[1].dl_probability.has_value());
  EXPECT_DOUBLE_EQ(*c[0].dl_probability, 0.2);
}

TEST(LoadCohort, ErrorsNameLineAndColumn) {
  const auto score = error_of(kHeader + "b1,benign,2,iU22,F,50,1.5,1,6,2,1,0,0,0,0,0.2\n");
  EXPECT_NE(score.find("line 2"), std::string::npos) << score;
  EXPECT_NE(score.find("column r2"), std::string::npos) << score;

  const auto dup = error_of(kHeader + "b1,benign,2,iU22,F,50,1.5,1,1,2,1,0,0,0,0,0.2\n" +
                            "b1,benign,2,iU22,F,50,1.5,1,1,2,1,0,0,0,0,0.2\n");
  EXPECT_NE(dup.find("line 3"), std::string::npos) << dup;
  EXPECT_NE(dup.find("duplicate"), std::string::npos) << dup;

  EXPECT_NE(error_of("nodule_id,label\n").find("missing column"), std::string::npos);
  EXPECT_NE(error_of(kHeader + "b1,benign,2,iU22,F,fifty,1.5,1,1,2,1,0,0,0,0,\n").find("column age"), std::string::npos);
  EXPECT_NE(error_of(kHeader + "b1,benign,5,iU22,F,50,1.5,1,1,2,1,0,0,0,0,\n").find("bethesda"), std::string::npos);
  EXPECT_NE(error_of(kHeader + "b1,benign,2,iU22,F,50,1.5,1,1,2,1,0,0,0,0,1.5\n").find("dl_prob"), std::string::npos);
  EXPECT_NE(error_of(kHeader + "b1,benign,2,iU22,F,50,1.5,1,1,2,1,0,2,0,0,\n").find("r2_fna"), std::string::npos);
  EXPECT_NE(error_of(kHeader + "b1,benign,2,iU22,F,50,1.5,1,1\n").find("fields"), std::string::npos);
  EXPECT_NE(error_of("").find("header"), std::string::npos);
}

TEST(LoadCohort, UnknownScannerMapsToOther) {
  const auto c = parse(kHeader + "b1,benign,2,Acme 3000,F,50,1.5,1,1,2,1,0,0,0,0,\n");
  EXPECT_EQ(c[0].scanner, Scanner::Other);
  EXPECT_EQ(parse_scanner("hdi_5000"), Scanner::HDI5000);
  EXPECT_EQ(parse_scanner("IU22"), Scanner::iU22);
}

TEST(LoadCohort, RoundTrip) {
  CohortSpec spec;
  spec.n_benign = 40;
  spec.n_malignant = 25;
  const Cohort original = generate_cohort(spec);
  std::stringstream buf;
  write_cohort(buf, original);
  EXPECT_EQ(read_cohort(buf), original);
}

TEST(LoadCohort, ReferenceClassCounts) {
  const Cohort c = generate_cohort(CohortSpec{});
  std::stringstream buf;
  write_cohort(buf, c);
  const Cohort loaded = read_cohort(buf);
  ASSERT_EQ(loaded.size(), 378u);
  const auto s = summarize(loaded);
  EXPECT_EQ(s.benign.count, 231u);
  EXPECT_EQ(s.malignant.count, 147u);
}

TEST(Summarize, SingleCaseAndPair) {
  CaseRecord a;
  a.nodule_id = "a";
  a.age = 50;
  const auto one = summarize({a});
  EXPECT_EQ(one.all.age->mean, 50.0);
  EXPECT_EQ(one.all.age->sd, 0.0);
  EXPECT_FALSE(one.malignant.age.has_value());

  CaseRecord b = a, c = a;
  b.age = 40;
  c.nodule_id = "c";
  c.age = 60;
  const auto two = summarize({b, c});
  EXPECT_DOUBLE_EQ(two.all.age->mean, 50.0);
  EXPECT_NEAR(two.all.age->sd, 14.142135623730951, 1e-12);
  EXPECT_THROW(summarize({}), InputError);
}

TEST(Summarize, ColumnsReconcile) {
  const auto s = summarize(generate_cohort(CohortSpec{}));
  EXPECT_EQ(s.benign.count + s.malignant.count, s.all.count);
  EXPECT_EQ(s.benign.female + s.malignant.female, s.all.female);
  EXPECT_EQ(s.all.female + s.all.male, s.all.count);
  EXPECT_GE(s.all.size_cm->sd, 0.0);
}

TEST(Stratify, PartitionPreservesOrder) {
  const Cohort c = generate_cohort(CohortSpec{});
  const auto groups = stratify(c, StratifyKey::Scanner);
  std::size_t total = 0;
  for (const auto& g : groups) {
    total += g.cases.size();
    // Order within each stratum follows the cohort.
    std::size_t pos = 0;
    for (const auto& rec : g.cases) {
      while (pos < c.size() && c[pos].nodule_id != rec.nodule_id) ++pos;
      ASSERT_LT(pos, c.size());
      EXPECT_EQ(std::string(to_string(rec.scanner)), g.key);
    }
  }
  EXPECT_EQ(total, c.size());
  const auto iu22 = std::find_if(groups.begin(), groups.end(), [](auto& g) { return g.key == "iU22"; });
  ASSERT_NE(iu22, groups.end());
  EXPECT_NEAR(static_cast<double>(iu22->cases.size()) / c.size(), 0.5767, 0.0001);

  const auto labels = stratify(c, StratifyKey::Label);
  ASSERT_EQ(labels.size(), 2u);
  EXPECT_EQ(labels[0].cases.size(), 231u);
}

TEST(Stratify, SingleCase) {
  CaseRecord a;
  a.nodule_id = "x";
  a.scanner = Scanner::iU22;
  const auto g = stratify({a}, StratifyKey::Scanner);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0].key, "iU22");
  EXPECT_EQ(g[0].cases.size(), 1u);
}

TEST(Validate, RecordInvariants) {
  CaseRecord r;
  r.nodule_id = "r";
  EXPECT_NO_THROW(validate(r));
  r.label = Label::Malignant;
  EXPECT_THROW(validate(r), InputError);
  r.bethesda = 5;
  EXPECT_NO_THROW(validate(r));
  r.reader_scores[3] = 0;
  EXPECT_THROW(validate(r), InputError);
}
