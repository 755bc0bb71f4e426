#include <gtest/gtest.h>

#include <sstream>

#include "leaf/dataset.hpp"
#include "support.hpp"

using namespace leaf;

namespace {

KpiFrame parse(const std::string& text, const CsvSchema& schema = {}) {
  std::istringstream in(text);
  return read_csv(in, schema);
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

KpiFrame daily(int days, const std::string& station = "s1") {
  std::ostringstream csv;
  csv << "station,date,x,target\n";
  for (int t = 0; t < days; ++t)
    csv << station << ',' << format_date(parse_date("2018-01-01") + t) << ',' << t << ',' << 100 + t << '\n';
  return parse(csv.str());
}

}  // namespace

TEST(ReadCsv, ParsesColumnsAndUnlabeledRows) {
  const auto f = parse("station,date,a,b,target\ns1,2018-01-01,1,2,10\ns1,2018-01-02,3,4,\n");
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f.feature_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(f.column("b")[1], 4.0);
  EXPECT_TRUE(f.labeled[0]);
  EXPECT_FALSE(f.labeled[1]);
  EXPECT_EQ(f.target[0], 10.0);
}

TEST(ReadCsv, HonoursExplicitFeatureList) {
  CsvSchema s;
  s.features = {"b"};
  const auto f = parse("station,date,a,b,target\ns1,2018-01-01,1,2,10\n", s);
  EXPECT_EQ(f.feature_names, std::vector<std::string>{"b"});
  s.features = {"missing"};
  EXPECT_THROW(parse("station,date,a,target\ns1,2018-01-01,1,2\n", s), DataError);
}

TEST(ReadCsv, ReportsEveryBadRowByLineNumber) {
  const std::string msg = error_of(
      "station,date,x,target\n"
      "s1,2018-01-01,1,10\n"
      "s1,2018-01-01,2,11\n"
      "s1,2018-01-03,abc,12\n"
      "s1,2018-01-04,1\n"
      "s1,2018-01-05,inf,12\n");
  EXPECT_NE(msg.find("row 3: duplicate"), std::string::npos) << msg;
  EXPECT_NE(msg.find("first seen on row 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("row 4: unparseable cell 'abc'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("row 5: expected 4 cells"), std::string::npos) << msg;
  EXPECT_NE(msg.find("row 6: non-finite"), std::string::npos) << msg;
}

TEST(ReadCsv, MissingColumnsAndEmptyInput) {
  EXPECT_THROW(parse(""), DataError);
  EXPECT_THROW(parse("station,date,x\n"), DataError);
  EXPECT_THROW(parse("station,date,target\ns1,2018-01-01,1\n"), DataError);
}

TEST(WriteCsv, RoundTripsExactly) {
  const auto f = parse("station,date,x,target\ns1,2018-01-01,0.1,0.3333333333333333\ns2,2018-01-01,2.5,\n");
  std::ostringstream out;
  write_csv(out, f);
  const auto g = parse(out.str());
  EXPECT_EQ(g.column("x"), f.column("x"));
  EXPECT_EQ(g.target, f.target);
  EXPECT_EQ(g.labeled, f.labeled);
  std::ostringstream again;
  write_csv(again, g);
  EXPECT_EQ(again.str(), out.str());
}

TEST(TemporalFeatures, CivilFieldsOfFeatureDate) {
  const auto f = add_temporal_features(parse("station,date,x,target\ns1,2018-07-01,1,2\n"));
  EXPECT_EQ(f.column("day_of_week")[0], 6.0);
  EXPECT_EQ(f.column("month")[0], 7.0);
  EXPECT_EQ(f.column("year")[0], 2018.0);
  EXPECT_THROW(add_temporal_features(f), DataError);
}

TEST(MakeSupervised, CountsPartnersAtHorizon) {
  const auto sup = make_supervised(daily(10), 3);
  ASSERT_EQ(sup.size(), 7u);
  for (std::size_t i = 0; i < sup.size(); ++i) {
    EXPECT_EQ(sup.target_date[i] - sup.date[i], 3);
    EXPECT_EQ(sup.target[i], sup.column("x")[i] + 103.0);
  }
  EXPECT_EQ(sup.horizon_days, 3);
  EXPECT_THROW(make_supervised(daily(10), 10), DegenerateError);
  EXPECT_THROW(make_supervised(daily(10), 0), ConfigError);
  EXPECT_THROW(make_supervised(sup, 1), DataError);
}

TEST(MakeSupervised, SkipsUnlabeledTargetsAndGaps) {
  const auto f = parse(
      "station,date,x,target\n"
      "s1,2018-01-01,1,10\n"
      "s1,2018-01-02,2,\n"
      "s1,2018-01-04,4,40\n"
      "s2,2018-01-02,5,50\n"
      "s2,2018-01-03,6,60\n");
  // s1: day 1 pairs with an unlabeled day 2, day 2 with a missing day 3. Only
  // s2 day 2 -> day 3 survives.
  const auto sup = make_supervised(f, 1);
  ASSERT_EQ(sup.size(), 1u);
  EXPECT_EQ(sup.station[0], "s2");
  EXPECT_EQ(sup.target[0], 60.0);
  EXPECT_EQ(sup.column("x")[0], 5.0);
}

TEST(TrainWindow, SlicesByFeatureOrTargetDate) {
  const auto sup = make_supervised(daily(30), 5);
  const TrainWindow w{parse_date("2018-01-14"), 7};
  const auto by_feature = slice(sup, w);
  const auto by_target = slice_by_target(sup, w);
  EXPECT_EQ(by_feature.size(), 7u);
  EXPECT_EQ(by_target.size(), 7u);
  for (Day d : by_feature.date) EXPECT_TRUE(w.contains(d));
  for (Day d : by_target.target_date) EXPECT_TRUE(w.contains(d));
  EXPECT_EQ(by_target.date.front(), parse_date("2018-01-03"));
}

TEST(KpiFrame, ValidateCatchesDuplicateKeysAndRaggedColumns) {
  auto f = daily(3);
  EXPECT_NO_THROW(f.validate(true));
  f.push_row_from(f, 0);
  EXPECT_THROW(f.validate(true), DataError);
  auto g = daily(3);
  g.columns[0].pop_back();
  EXPECT_THROW(g.validate(false), DataError);
}
