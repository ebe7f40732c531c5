#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "aegr/data.hpp"

namespace aegr::data {
namespace {

CsvSchema numeric_with_label(const std::string& label = "y") {
  CsvSchema schema;
  schema.by_name[label] = ColumnKind::label;
  return schema;
}

Dataset column(std::vector<double> values) {
  Dataset d;
  d.features.resize(static_cast<Eigen::Index>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) d.features(static_cast<Eigen::Index>(i), 0) = values[i];
  d.feature_names = {"x"};
  return d;
}

Dataset indexed_rows(std::size_t n) {
  Dataset d;
  d.features.resize(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    d.features(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
    d.features(static_cast<Eigen::Index>(i), 1) = -static_cast<double>(i);
  }
  d.labels = std::vector<int>(n, 0);
  d.feature_names = {"a", "b"};
  return d;
}

std::multiset<double> first_column(const Dataset& d) {
  return {d.features.col(0).begin(), d.features.col(0).end()};
}

TEST(LoadCsv, ParsesRowsAndColumns) {
  const auto table = parse_csv("a,b,y\n1,2,0\n3.5,-4,1\n5,6e1,0\n", numeric_with_label());
  ASSERT_EQ(table.num_rows(), 3u);
  ASSERT_EQ(table.columns.size(), 3u);
  EXPECT_EQ(table.columns[2].kind, ColumnKind::label);
  EXPECT_DOUBLE_EQ(std::get<double>(table.rows[1][0]), 3.5);
  EXPECT_DOUBLE_EQ(std::get<double>(table.rows[2][1]), 60.0);
  EXPECT_EQ(table.label_index(), 2u);
}

TEST(LoadCsv, EmptyInputIsAnError) {
  EXPECT_THROW(
      {
        try {
          parse_csv("", CsvSchema{});
        } catch (const std::runtime_error& e) {
          EXPECT_STREQ(e.what(), "no rows");
          throw;
        }
      },
      std::runtime_error);
  EXPECT_THROW(parse_csv("a,b\n", CsvSchema{}), std::runtime_error);
}

TEST(LoadCsv, ArityViolationNamesRow) {
  try {
    parse_csv("a,b,y\n1,2,0\n3,1\n", numeric_with_label());
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
}

TEST(LoadCsv, UnparsableNumberIsAnError) {
  EXPECT_THROW(parse_csv("a,y\nabc,0\n", numeric_with_label()), std::runtime_error);
  EXPECT_THROW(parse_csv("a,y\n1,7\n", numeric_with_label()), std::runtime_error);
}

TEST(LoadCsv, MissingFileNamesPath) {
  try {
    load_csv("/nonexistent/data.csv", CsvSchema{});
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/data.csv"), std::string::npos);
  }
}

TEST(LoadCsv, StringLabelsIgnoredColumnsAndQuotes) {
  CsvSchema schema;
  schema.by_name["class"] = ColumnKind::label;
  schema.by_index[0] = ColumnKind::ignore;
  schema.by_name["proto"] = ColumnKind::categorical;
  schema.label_normal_values = {"normal"};
  const auto table = parse_csv("id,proto,bytes,class\n7,\"tcp,x\",10,normal\n8,udp,20,smurf\n", schema);
  ASSERT_EQ(table.columns.size(), 3u);
  EXPECT_EQ(std::get<std::string>(table.rows[0][0]), "tcp,x");
  EXPECT_DOUBLE_EQ(std::get<double>(table.rows[0][2]), 0.0);
  EXPECT_DOUBLE_EQ(std::get<double>(table.rows[1][2]), 1.0);
}

TEST(LoadCsv, HeaderlessFileGetsPositionalNames) {
  CsvSchema schema;
  schema.has_header = false;
  schema.by_index[2] = ColumnKind::label;
  const auto table = parse_csv("1,2,0\n3,4,1\n", schema);
  EXPECT_EQ(table.num_rows(), 2u);
  EXPECT_EQ(table.columns[0].name, "c0");
}

TEST(LoadCsv, RoundTripsThroughFile) {
  const auto path = std::filesystem::temp_directory_path() / "aegr_test_load.csv";
  std::ofstream(path) << "a,b,y\n1,2,0\n3,4,1\n";
  EXPECT_EQ(load_csv(path, numeric_with_label()).num_rows(), 2u);
  std::filesystem::remove(path);
}

TEST(OneHot, ExpandsCategoriesInFirstSeenOrder) {
  CsvSchema schema;
  schema.by_name["proto"] = ColumnKind::categorical;
  const auto table = parse_csv("proto,n\ntcp,1\nudp,2\nicmp,3\ntcp,4\n", schema);
  const auto d = one_hot_encode(table);
  ASSERT_EQ(d.num_features(), 4u);
  EXPECT_EQ(d.feature_names[0], "proto=tcp");
  EXPECT_EQ(d.features.row(0), (RowVector(4) << 1, 0, 0, 1).finished());
  EXPECT_EQ(d.features.row(2), (RowVector(4) << 0, 0, 1, 3).finished());
  EXPECT_FALSE(d.has_labels());
}

TEST(OneHot, NumericOnlyTableIsIdentity) {
  const auto table = parse_csv("a,b,y\n1,2,0\n3,4,1\n", numeric_with_label());
  const auto d = one_hot_encode(table);
  EXPECT_EQ(d.features, (Matrix(2, 2) << 1, 2, 3, 4).finished());
  EXPECT_EQ(*d.labels, (std::vector<int>{0, 1}));
}

TEST(OneHot, NslKddShapedTableExpandsTo122) {
  // 41 raw features with three categorical columns of 3, 70 and 11 distinct
  // values (protocol_type, service, flag) expand to 38 + 84 = 122 columns.
  const std::vector<std::size_t> vocab_sizes{3, 70, 11};
  CsvSchema schema;
  schema.by_name["label"] = ColumnKind::label;
  for (std::size_t c = 1; c <= 3; ++c) schema.by_name["f" + std::to_string(c)] = ColumnKind::categorical;
  std::string csv;
  for (std::size_t c = 0; c < 41; ++c) csv += "f" + std::to_string(c) + ",";
  csv += "label\n";
  for (std::size_t r = 0; r < 70; ++r) {
    for (std::size_t c = 0; c < 41; ++c) {
      if (c >= 1 && c <= 3) csv += "v" + std::to_string(r % vocab_sizes[c - 1]) + ",";
      else csv += std::to_string(r * 0.5 + static_cast<double>(c)) + ",";
    }
    csv += std::to_string(r % 2) + "\n";
  }
  EXPECT_EQ(one_hot_encode(parse_csv(csv, schema)).num_features(), 122u);
}

TEST(OneHot, UnseenCategoryEncodesAsZeros) {
  CsvSchema schema;
  schema.by_name["proto"] = ColumnKind::categorical;
  const auto enc = OneHotEncoder::fit(parse_csv("proto\ntcp\nudp\n", schema));
  const auto d = enc.apply(parse_csv("proto\nicmp\nudp\n", schema));
  EXPECT_EQ(d.features.row(0).sum(), 0.0);
  EXPECT_EQ(d.features.row(1), (RowVector(2) << 0, 1).finished());
}

TEST(OneHot, BlocksSumToOneAndWidthIgnoresRowOrder) {
  CsvSchema schema;
  schema.by_name["p"] = ColumnKind::categorical;
  schema.by_name["q"] = ColumnKind::categorical;
  std::mt19937_64 rng(3);
  std::vector<std::string> lines;
  for (int i = 0; i < 50; ++i) {
    lines.push_back("c" + std::to_string(rng() % 4) + ",k" + std::to_string(rng() % 7) + "," +
                    std::to_string(i));
  }
  auto build = [&](const std::vector<std::string>& rows) {
    std::string csv = "p,q,x\n";
    for (const auto& l : rows) csv += l + "\n";
    return parse_csv(csv, schema);
  };
  const auto table = build(lines);
  const auto enc = OneHotEncoder::fit(table);
  const auto d = enc.apply(table);
  const std::size_t p_width = enc.encoded_width() - 1 - [&] {
    std::set<std::string> q;
    for (const auto& row : table.rows) q.insert(std::get<std::string>(row[1]));
    return q.size();
  }();
  for (Eigen::Index r = 0; r < d.features.rows(); ++r) {
    EXPECT_EQ(d.features.row(r).head(static_cast<Eigen::Index>(p_width)).sum(), 1.0);
    EXPECT_EQ(d.features.row(r).segment(static_cast<Eigen::Index>(p_width),
                                        d.features.cols() - 1 - static_cast<Eigen::Index>(p_width)).sum(),
              1.0);
  }
  auto shuffled = lines;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  EXPECT_EQ(one_hot_encode(build(shuffled)).num_features(), d.num_features());
}

TEST(Normalize, MapsTrainingRangeOntoMinusOneOne) {
  const auto d = column({2, 4, 6});
  const auto params = normalize_fit(d);
  const auto n = normalize_apply(params, d);
  EXPECT_EQ(n.features, (Matrix(3, 1) << -1, 0, 1).finished());
}

TEST(Normalize, ExtrapolatesWithoutClipping) {
  NormParams params{{0.0}, {10.0}};
  const auto n = normalize_apply(params, column({12}));
  EXPECT_NEAR(n.features(0, 0), 1.4, 1e-15);
}

TEST(Normalize, ConstantFeatureMapsToZero) {
  const auto d = column({5, 5, 5});
  const auto n = normalize_apply(normalize_fit(d), d);
  EXPECT_EQ(n.features, Matrix::Zero(3, 1));
  EXPECT_TRUE(n.features.allFinite());
}

TEST(Normalize, RoundTripRecoversOriginals) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  Dataset d;
  d.features.resize(40, 6);
  for (Eigen::Index i = 0; i < d.features.size(); ++i) d.features.data()[i] = u(rng);
  const auto params = normalize_fit(d);
  const auto n = normalize_apply(params, d);
  EXPECT_LE(n.features.maxCoeff(), 1.0);
  EXPECT_GE(n.features.minCoeff(), -1.0);
  EXPECT_LT((denormalize(params, n).features - d.features).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Split, SizesFollowFractions) {
  const auto s = split(indexed_rows(100), {0.6, 0.2, 0.2, 7, std::nullopt});
  EXPECT_EQ(s.train.num_rows(), 60u);
  EXPECT_EQ(s.val.num_rows(), 20u);
  EXPECT_EQ(s.test.num_rows(), 20u);
}

TEST(Split, RemainderGoesToTrain) {
  const auto s = split(indexed_rows(11), {0.6, 0.2, 0.2, 7, std::nullopt});
  EXPECT_EQ(s.val.num_rows(), 2u);
  EXPECT_EQ(s.test.num_rows(), 2u);
  EXPECT_EQ(s.train.num_rows(), 7u);
}

TEST(Split, DeterministicPerSeed) {
  const auto d = indexed_rows(50);
  const auto a = split(d, {0.6, 0.2, 0.2, 42, std::nullopt});
  const auto b = split(d, {0.6, 0.2, 0.2, 42, std::nullopt});
  const auto c = split(d, {0.6, 0.2, 0.2, 43, std::nullopt});
  EXPECT_EQ(a.train.features, b.train.features);
  EXPECT_EQ(a.test.features, b.test.features);
  EXPECT_NE(a.train.features, c.train.features);
}

TEST(Split, IsAPartitionForManySeeds) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const std::size_t n = 10 + seed * 7;
    const auto d = indexed_rows(n);
    const auto s = split(d, {0.6, 0.2, 0.2, seed, std::nullopt});
    std::multiset<double> all = first_column(s.train);
    for (const auto& part : {s.val, s.test}) {
      const auto m = first_column(part);
      all.insert(m.begin(), m.end());
    }
    EXPECT_EQ(all, first_column(d)) << "seed " << seed;
  }
}

TEST(Split, RejectsBadSpecs) {
  EXPECT_THROW(split(indexed_rows(2), {0.6, 0.2, 0.2, 0, std::nullopt}), std::invalid_argument);
  EXPECT_THROW(split(indexed_rows(10), {0.6, 0.3, 0.2, 0, std::nullopt}), std::invalid_argument);
  EXPECT_THROW(split(indexed_rows(10), {1.2, -0.1, -0.1, 0, std::nullopt}), std::invalid_argument);
  EXPECT_THROW(split(indexed_rows(4), {0.8, 0.1, 0.1, 0, std::nullopt}), std::invalid_argument);
}

TEST(Subsample, TakesFloorFraction) {
  EXPECT_EQ(subsample(indexed_rows(1000), 0.1, 1).num_rows(), 100u);
}

TEST(Subsample, FullFractionKeepsEveryRow) {
  const auto d = indexed_rows(30);
  EXPECT_EQ(first_column(subsample(d, 1.0, 5)), first_column(d));
}

TEST(Subsample, DeterministicAndWithoutReplacement) {
  const auto d = indexed_rows(200);
  const auto a = subsample(d, 0.25, 9);
  EXPECT_EQ(a.features, subsample(d, 0.25, 9).features);
  const auto values = first_column(a);
  EXPECT_EQ(std::set<double>(values.begin(), values.end()).size(), values.size());
}

TEST(Subsample, RejectsEmptyResult) {
  EXPECT_THROW(subsample(indexed_rows(5), 0.1, 0), std::invalid_argument);
  EXPECT_THROW(subsample(indexed_rows(5), 0.0, 0), std::invalid_argument);
  EXPECT_THROW(subsample(indexed_rows(5), 1.5, 0), std::invalid_argument);
}

}  // namespace
}  // namespace aegr::data
