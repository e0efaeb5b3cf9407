#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "fixtures.hpp"

using namespace tabemb;
using fixtures::toy_schema;
using fixtures::toy_table;

TEST(Parse, TitanicColumnRoles) {
  const auto t = parse_table(fixtures::titanic_csv(), fixtures::titanic_schema());
  EXPECT_EQ(t.n_rows, 891u);
  EXPECT_EQ(t.categorical.size() + t.numeric.size(), 7u);
  EXPECT_EQ(t.categorical.count("Sex"), 1u);
  EXPECT_EQ(t.numeric.count("Fare"), 1u);
  EXPECT_EQ(t.excluded.count("Name"), 1u);
  ASSERT_TRUE(t.target);
  // Age is missing for 177 passengers in this file.
  std::size_t missing = 0;
  for (const auto& v : t.numeric.at("Age")) missing += !v;
  EXPECT_EQ(missing, 177u);
}

TEST(Parse, HeaderOnlyGivesEmptyTable) {
  const auto t = parse_table_text("id,color,size,x,n,label\n", toy_schema());
  EXPECT_EQ(t.n_rows, 0u);
  EXPECT_TRUE(t.categorical.at("color").empty());
}

TEST(Parse, CategoricalCellsAreOpaque) {
  const auto t = parse_table_text("id,color,size,x,n,label\n1,3.5,S,1,0,1\n", toy_schema());
  EXPECT_EQ(t.categorical.at("color")[0], "3.5");
}

TEST(Parse, SentinelsBecomeMissing) {
  const auto t = parse_table_text("id,color,size,x,n,label\n1,NA,,null,NaN,1\n", toy_schema());
  EXPECT_FALSE(t.categorical.at("color")[0]);
  EXPECT_FALSE(t.categorical.at("size")[0]);
  EXPECT_FALSE(t.numeric.at("x")[0]);
  EXPECT_FALSE(t.numeric.at("n")[0]);
}

TEST(Parse, NonNumericCellNamesColumnAndRow) {
  try {
    parse_table_text("id,color,size,x,n,label\n1,red,S,1,0,1\n2,red,S,abc,0,1\n", toy_schema());
    FAIL() << "expected NonNumericCell";
  } catch (const NonNumericCell& e) {
    EXPECT_EQ(e.column(), "x");
    EXPECT_NE(std::string(e.what()).find("abc"), std::string::npos);
  }
}

TEST(Parse, MissingColumn) {
  try {
    parse_table_text("id,color,size,x,label\n1,red,S,1,1\n", toy_schema());
    FAIL() << "expected MissingColumn";
  } catch (const MissingColumn& e) {
    EXPECT_EQ(e.column(), "n");
  }
}

TEST(Parse, UndeclaredColumnIsSchemaError) {
  EXPECT_THROW(parse_table_text("id,color,size,x,n,label,extra\n1,red,S,1,0,1,z\n", toy_schema()), SchemaError);
}

TEST(Parse, QuotedFieldsAndCrlf) {
  const auto t = parse_table_text("id,color,size,x,n,label\r\n1,\"re,d\",\"S \"\"x\"\"\",1,0,1\r\n", toy_schema());
  EXPECT_EQ(t.categorical.at("color")[0], "re,d");
  EXPECT_EQ(t.categorical.at("size")[0], "S \"x\"");
}

TEST(Parse, UnterminatedQuoteFails) {
  EXPECT_THROW(parse_table_text("id,color,size,x,n,label\n1,\"red,S,1,0,1\n", toy_schema()), Error);
}

TEST(Parse, ColumnOrderFollowsHeader) {
  const auto t = parse_table_text("label,n,x,size,color,id\n1,0,1.5,S,red,1\n", toy_schema());
  EXPECT_EQ(t.categorical.at("color")[0], "red");
  EXPECT_EQ(t.numeric.at("x")[0], 1.5);
}

TEST(Parse, DateTransforms) {
  TableSchema s;
  s.columns = {{"d", ColumnRole::numeric, BinPolicy::quantile(2), TargetKind::continuous, ValueTransform::day_of_year},
               {"m", ColumnRole::numeric, BinPolicy::quantile(2), TargetKind::continuous, ValueTransform::month},
               {"c", ColumnRole::categorical, {}, TargetKind::continuous, ValueTransform::none}};
  const auto t = parse_table_text("d,m,c\n2015-03-01,2015-03-01,a\n2016-03-01,2016-12-31,b\n", s);
  EXPECT_EQ(t.numeric.at("d")[0], 60.0);
  EXPECT_EQ(t.numeric.at("d")[1], 61.0);  // leap year
  EXPECT_EQ(t.numeric.at("m")[1], 12.0);
  EXPECT_THROW(parse_table_text("d,m,c\n2015-13-01,2015-01-01,a\n", s), NonNumericCell);
}

TEST(Schema, ValidationRules) {
  auto s = toy_schema();
  s.columns.push_back(s.columns[1]);
  EXPECT_THROW(s.validate(), SchemaError);

  TableSchema only_target;
  only_target.columns = {{"y", ColumnRole::target, {}, TargetKind::binary, ValueTransform::none}};
  EXPECT_THROW(only_target.validate(), SchemaError);

  auto two_targets = toy_schema();
  two_targets.columns[0].role = ColumnRole::target;
  EXPECT_THROW(two_targets.validate(), SchemaError);

  auto zero_bins = toy_schema();
  zero_bins.columns[3].bin_policy = BinPolicy::quantile(0);
  EXPECT_THROW(zero_bins.validate(), SchemaError);

  auto no_target = toy_schema();
  no_target.columns.pop_back();
  EXPECT_NO_THROW(no_target.validate());
}

TEST(Schema, JsonRoundTrip) {
  const auto s = fixtures::titanic_schema();
  const auto again = schema_from_json(to_json(s));
  EXPECT_EQ(to_json(again), to_json(s));
  EXPECT_EQ(schema_fingerprint(again), schema_fingerprint(s));
}

TEST(Schema, BadJsonIsSchemaErrorWithColumn) {
  const auto j = nlohmann::json::parse(R"({"columns":[{"name":"a","role":"categorical"},{"name":"b","role":"nope"}]})");
  try {
    schema_from_json(j);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("nope"), std::string::npos);
  }
  EXPECT_THROW(schema_from_json(nlohmann::json::parse(R"({"columns": 3})")), SchemaError);
}

TEST(Serialize, ParseWriteParseIsIdempotent) {
  const auto schema = fixtures::titanic_schema();
  const auto a = parse_table(fixtures::titanic_csv(), schema);
  std::ostringstream out;
  write_table(out, a);
  const auto b = parse_table_text(out.str(), schema);
  EXPECT_EQ(a, b);
  std::ostringstream again;
  write_table(again, b);
  EXPECT_EQ(out.str(), again.str());
}

TEST(Serialize, SingleColumnWithEmptyCells) {
  TableSchema s;
  s.columns = {{"c", ColumnRole::categorical, {}, TargetKind::continuous, ValueTransform::none}};
  const auto a = parse_table_text("c\nx\n\"\"\ny\n", s);
  std::ostringstream out;
  write_table(out, a);
  EXPECT_EQ(parse_table_text(out.str(), s), a);
}

TEST(Split, RandomPartitionsRows) {
  const auto t = parse_table(fixtures::titanic_csv(), fixtures::titanic_schema());
  const auto s = split_rows(t, SplitStrategy::random(0.1, 7));
  EXPECT_EQ(s.test.n_rows, 89u);
  EXPECT_EQ(s.train.n_rows + s.test.n_rows, t.n_rows);
  std::set<std::size_t> seen(s.train_rows.begin(), s.train_rows.end());
  for (auto i : s.test_rows) EXPECT_TRUE(seen.insert(i).second);
  EXPECT_EQ(seen.size(), t.n_rows);
  EXPECT_TRUE(std::is_sorted(s.test_rows.begin(), s.test_rows.end()));

  const auto again = split_rows(t, SplitStrategy::random(0.1, 7));
  EXPECT_EQ(again.test_rows, s.test_rows);
  const auto other = split_rows(t, SplitStrategy::random(0.1, 8));
  EXPECT_NE(other.test_rows, s.test_rows);
}

TEST(Split, TitanicProtocolCounts) {
  const auto t = parse_table(fixtures::titanic_csv(), fixtures::titanic_schema());
  const auto s = split_rows(t, SplitStrategy::random(74.0 / 891.0, 1));
  EXPECT_EQ(s.test.n_rows, 74u);
  EXPECT_EQ(s.train.n_rows, 817u);
}

TEST(Split, ChronologicalTailAndHead) {
  const auto t = toy_table();
  const auto tail = split_rows(t, SplitStrategy::chronological_tail(0.3));  // ceil(1.8) = 2
  EXPECT_EQ(tail.test_rows, (std::vector<std::size_t>{4, 5}));
  const auto head = split_rows(t, SplitStrategy::chronological_head(0.3));
  EXPECT_EQ(head.test_rows, (std::vector<std::size_t>{0, 1}));
}

TEST(Split, DegenerateSplitsRejected) {
  const auto one = parse_table_text("id,color,size,x,n,label\n1,red,S,1,0,1\n", toy_schema());
  EXPECT_THROW(split_rows(one, SplitStrategy::random(0.1, 1)), InvalidArgument);
  EXPECT_THROW(split_rows(one, SplitStrategy::chronological_tail(0.1)), InvalidArgument);
  EXPECT_THROW(split_rows(toy_table(), SplitStrategy::random(0.0, 1)), InvalidArgument);
  EXPECT_THROW(split_rows(toy_table(), SplitStrategy::random(1.0, 1)), InvalidArgument);
}

TEST(Filter, KeepsMatchingRows) {
  const auto t = toy_table();
  EXPECT_EQ(filter_rows(t, "color", "red").n_rows, 3u);
  EXPECT_EQ(filter_rows(t, "n", "1.0").n_rows, 2u);
  EXPECT_EQ(filter_rows(t, "color", "purple").n_rows, 0u);
  // Excluded columns still filter.
  const auto f = filter_rows(t, "id", "4");
  ASSERT_EQ(f.n_rows, 1u);
  EXPECT_EQ(f.categorical.at("color")[0], "green");
  EXPECT_THROW(filter_rows(t, "nope", "1"), MissingColumn);
}

namespace {

TableSchema sales_schema() {
  TableSchema s;
  s.columns = {{"store", ColumnRole::categorical, {}, TargetKind::continuous, ValueTransform::none},
               {"promo", ColumnRole::categorical, {}, TargetKind::continuous, ValueTransform::none},
               {"sales", ColumnRole::target, {}, TargetKind::continuous, ValueTransform::none}};
  return s;
}

}  // namespace

TEST(Normalize, DividesByTrainGroupMean) {
  const auto train = parse_table_text("store,promo,sales\na,0,100\na,1,300\nb,0,50\n", sales_schema());
  const auto test = parse_table_text("store,promo,sales\na,0,250\nc,1,150\n", sales_schema());
  const auto n = normalize_target_by_group(train, test, "store");
  EXPECT_EQ(n.means.per_group.at("a"), 200.0);
  EXPECT_EQ((*n.test.target)[0], 1.25);
  // Unseen group: global train mean (100 + 300 + 50) / 3 = 150.
  EXPECT_EQ(n.means.global, 150.0);
  EXPECT_EQ((*n.test.target)[1], 1.0);
  EXPECT_EQ((*n.train.target)[2], 1.0);
}

TEST(Normalize, ConstantTargetsBecomeOne) {
  const auto train = parse_table_text("store,promo,sales\na,0,7\nb,1,7\na,1,7\n", sales_schema());
  const auto n = normalize_target_by_group(train, train, "store");
  for (const auto& y : *n.train.target) EXPECT_EQ(*y, 1.0);
}

TEST(Normalize, ZeroMeanAndWrongKind) {
  const auto train = parse_table_text("store,promo,sales\na,0,0\nb,1,5\n", sales_schema());
  try {
    normalize_target_by_group(train, train, "store");
    FAIL();
  } catch (const ZeroGroupMean& e) {
    EXPECT_EQ(e.group(), "a");
  }
  auto s = sales_schema();
  s.columns[2].target_kind = TargetKind::binary;
  const auto bin = parse_table_text("store,promo,sales\na,0,1\n", s);
  EXPECT_THROW(normalize_target_by_group(bin, bin, "store"), InvalidArgument);
  EXPECT_THROW(normalize_target_by_group(train, train, "region"), MissingColumn);
}

TEST(Normalize, PerfectPredictorStaysPerfect) {
  const auto train = parse_table_text("store,promo,sales\na,0,100\na,1,300\nb,0,50\n", sales_schema());
  const auto test = parse_table_text("store,promo,sales\na,0,250\nb,1,80\n", sales_schema());
  const auto n = normalize_target_by_group(train, test, "store");
  std::vector<double> y;
  for (const auto& v : *n.test.target) y.push_back(*v);
  EXPECT_EQ(rmspe(y, y), 0.0);
}
