#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "geodesy/core.hpp"
#include "geodesy/nuisance.hpp"

namespace geodesy {
namespace {

TEST(Support, RejectsEmptyAndInfiniteIntervals) {
  EXPECT_THROW(Support(1.0, 1.0), InvalidInput);
  EXPECT_THROW(Support(2.0, 1.0), InvalidInput);
  EXPECT_THROW(Support(0.0, INFINITY), InvalidInput);
  const Support s(-1.0, 5.0);
  EXPECT_DOUBLE_EQ(s.width(), 6.0);
  EXPECT_TRUE(s.contains(-1.0));
  EXPECT_FALSE(s.contains(5.5));
}

TEST(Dataset, ValidatesShapeAndSupport) {
  const Support s(0.0, 1.0);
  EXPECT_THROW(Dataset({}, 1, {}, {}, s), InvalidInput);
  EXPECT_THROW(Dataset({1.0, 2.0}, 1, {0.5}, {1.0}, s), InvalidInput);
  EXPECT_THROW(Dataset({1.0}, 1, {0.5}, {NAN}, s), InvalidInput);
  try {
    Dataset({1.0, 2.0}, 1, {0.5, 1.5}, {0.0, 0.0}, s);
    FAIL() << "exposure outside the support accepted";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
}

TEST(Dataset, SubsetAndMean) {
  const Dataset d({1, 2, 3, 4, 5, 6}, 2, {0.1, 0.2, 0.3}, {1.0, 2.0, 6.0}, Support(0.0, 1.0));
  EXPECT_DOUBLE_EQ(d.mean_y(), 3.0);
  const std::vector<std::size_t> rows{2, 0};
  const Dataset s = d.subset(rows);
  ASSERT_EQ(s.n(), 2u);
  EXPECT_DOUBLE_EQ(s.x(0)[1], 6.0);
  EXPECT_DOUBLE_EQ(s.a(1), 0.1);
}

TEST(DatasetCsv, RoundTripsExactly) {
  const Dataset d({0.1, -2.5, 1e-17, 3.0}, 2, {0.25, 0.75}, {1.0 / 3.0, -7.0}, Support(0.0, 1.0));
  std::stringstream ss;
  write_dataset_csv(ss, d);
  const Dataset back = read_dataset_csv(ss, Support(0.0, 1.0));
  ASSERT_EQ(back.n(), 2u);
  ASSERT_EQ(back.d(), 2u);
  EXPECT_EQ(back.x_data(), d.x_data());
  EXPECT_EQ(back.a(), d.a());
  EXPECT_EQ(back.y(), d.y());
}

TEST(DatasetCsv, RejectsBadHeaderAndValues) {
  std::stringstream bad_header("x1,b,y\n1,0.5,1\n");
  EXPECT_THROW(read_dataset_csv(bad_header, Support(0.0, 1.0)), InvalidInput);
  std::stringstream bad_value("x1,a,y\n1,0.5,oops\n");
  EXPECT_THROW(read_dataset_csv(bad_value, Support(0.0, 1.0)), InvalidInput);
  std::stringstream out_of_support("x1,a,y\n1,0.5,1\n1,2.0,1\n");
  EXPECT_THROW(read_dataset_csv(out_of_support, Support(0.0, 1.0)), InvalidInput);
}

TEST(TGrid, IncludesEndpointsAndRejectsOne) {
  const TGrid g = make_tgrid(0.99, 0.05);
  ASSERT_EQ(g.size(), 21u);
  EXPECT_DOUBLE_EQ(g[0], 0.0);
  EXPECT_DOUBLE_EQ(g[19], 0.95);
  EXPECT_DOUBLE_EQ(g[20], 0.99);
  EXPECT_EQ(make_tgrid(0.5, 0.1).size(), 6u);
  EXPECT_THROW(make_tgrid(1.0, 0.1), InvalidInput);
  EXPECT_THROW(make_tgrid(0.5, 0.6), InvalidInput);
  EXPECT_THROW(make_tgrid(0.5, 0.0), InvalidInput);
}

TEST(Seeds, DeriveSeedIsDeterministicAndDistinct) {
  EXPECT_EQ(derive_seed(42, 7), derive_seed(42, 7));
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 10000; ++s) seen.insert(derive_seed(42, s));
  EXPECT_EQ(seen.size(), 10000u);
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
}

std::vector<std::size_t> fold_sizes(const FoldPlan& p) {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(p.k), 0);
  for (int f : p.assignment) ++sizes[static_cast<std::size_t>(f)];
  return sizes;
}

TEST(FoldPlan, EqualSizesWhenDivisible) {
  const auto sizes = fold_sizes(make_fold_plan(10, 5, 3));
  EXPECT_EQ(sizes, std::vector<std::size_t>(5, 2));
}

TEST(FoldPlan, SizesDifferByAtMostOne) {
  auto sizes = fold_sizes(make_fold_plan(11, 5, 3));
  std::sort(sizes.begin(), sizes.end());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{2, 2, 2, 2, 3}));
}

TEST(FoldPlan, DeterministicInSeed) {
  EXPECT_EQ(make_fold_plan(100, 5, 9).assignment, make_fold_plan(100, 5, 9).assignment);
  EXPECT_NE(make_fold_plan(100, 5, 9).assignment, make_fold_plan(100, 5, 10).assignment);
}

TEST(FoldPlan, RejectsTooManyFolds) {
  EXPECT_THROW(make_fold_plan(4, 5, 1), InvalidInput);
  EXPECT_THROW(make_fold_plan(4, 1, 1), InvalidInput);
}

}  // namespace
}  // namespace geodesy
