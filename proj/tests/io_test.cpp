#include "landmark/io.hpp"

#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

using namespace landmark;
namespace fs = std::filesystem;

namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("landmark_io_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string fixture(const std::string& name, const std::string& content) {
    fs::path p = dir_ / name;
    std::ofstream out(p);
    out << content;
    return p.string();
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  fs::path dir_;
};

}  // namespace

TEST(FormatDouble, RoundTripsExactly) {
  for (double v : {3.141592653589793, 1.0 / 3.0, -2.5e-17, 1e300, 0.0, -7.0}) {
    const std::string s = format_double(v);
    EXPECT_EQ(std::strtod(s.c_str(), nullptr), v) << s;
  }
  const std::string nan_s = format_double(std::nan(""));
  EXPECT_TRUE(std::isnan(std::strtod(nan_s.c_str(), nullptr)));
}

TEST_F(IoTest, ReadsPlainNumericCsv) {
  IngestResult res = ingest_csv(fixture("a.csv", "1,2\n3,4\n"), false);
  EXPECT_TRUE(res.header.empty());
  ASSERT_EQ(res.data.rows(), 2);
  ASSERT_EQ(res.data.cols(), 2);
  EXPECT_EQ(res.data(0, 0), 1.0);
  EXPECT_EQ(res.data(1, 1), 4.0);
  EXPECT_TRUE(res.warnings.empty());
}

TEST_F(IoTest, StandardizesToZeroMeanUnitVariance) {
  IngestResult res = ingest_csv(fixture("b.csv", "1,10\n3,20\n"));
  // two points: centered to +-half-spread, population variance 1 => +-1
  EXPECT_NEAR(res.data(0, 0), -1.0, 1e-15);
  EXPECT_NEAR(res.data(1, 0), 1.0, 1e-15);
  EXPECT_NEAR(res.data(0, 1), -1.0, 1e-15);
  EXPECT_NEAR(res.data(1, 1), 1.0, 1e-15);
  for (Index j = 0; j < 2; ++j) {
    EXPECT_NEAR(res.data.col(j).mean(), 0.0, 1e-15);
    EXPECT_NEAR(res.data.col(j).squaredNorm() / 2.0, 1.0, 1e-15);
  }
}

TEST_F(IoTest, DetectsHeaderRow) {
  IngestResult res = ingest_csv(fixture("c.csv", "alpha,beta\n1,2\n3,4\n"), false);
  ASSERT_EQ(res.header.size(), 2u);
  EXPECT_EQ(res.header[0], "alpha");
  EXPECT_EQ(res.header[1], "beta");
  EXPECT_EQ(res.data.rows(), 2);
}

TEST_F(IoTest, NumericFirstRowIsData) {
  IngestResult res = ingest_csv(fixture("d.csv", "1,2\n3,4\n"), false);
  EXPECT_TRUE(res.header.empty());
  EXPECT_EQ(res.data.rows(), 2);
}

TEST_F(IoTest, ConstantColumnZeroedWithWarning) {
  IngestResult res = ingest_csv(fixture("e.csv", "5,1\n5,2\n5,3\n"));
  EXPECT_EQ(res.data.col(0).norm(), 0.0);
  ASSERT_EQ(res.warnings.size(), 1u);
  EXPECT_NE(res.warnings[0].find("column 1"), std::string::npos);
  EXPECT_NE(res.warnings[0].find("constant"), std::string::npos);
}

TEST_F(IoTest, RaggedRowNamesTheRow) {
  try {
    ingest_csv(fixture("f.csv", "1,2\n3\n"), false);
    FAIL() << "expected failure";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("expected 2"), std::string::npos);
  }
}

TEST_F(IoTest, NonNumericCellNamesRowAndColumn) {
  try {
    ingest_csv(fixture("g.csv", "1,2\n3,oops\n"), false);
    FAIL() << "expected failure";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("column 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("oops"), std::string::npos);
  }
}

TEST_F(IoTest, TrailingCommaIsAnEmptyCell) {
  EXPECT_THROW(ingest_csv(fixture("h.csv", "1,2,\n3,4,\n"), false),
               std::runtime_error);
}

TEST_F(IoTest, EmptyAndMissingFiles) {
  EXPECT_THROW(ingest_csv(fixture("i.csv", "\n  \n")), std::runtime_error);
  EXPECT_THROW(ingest_csv((dir_ / "absent.csv").string()), std::runtime_error);
}

TEST_F(IoTest, BlankLinesSkipped) {
  IngestResult res = ingest_csv(fixture("j.csv", "1,2\n\n3,4\n\n"), false);
  EXPECT_EQ(res.data.rows(), 2);
}

TEST_F(IoTest, AtomicWriteCreatesParentsAndLeavesNoTemp) {
  fs::path target = dir_ / "nested" / "deep" / "out.txt";
  atomic_write(target, "payload");
  EXPECT_EQ(slurp(target), "payload");
  EXPECT_FALSE(fs::exists(target.string() + ".tmp"));
  atomic_write(target, "rewritten");
  EXPECT_EQ(slurp(target), "rewritten");
}

TEST_F(IoTest, TrajectoryCsvSchema) {
  Vector t0(2), t1(2);
  t0 << 0.5, 0.25;
  t1 << 0.75, 0.0;
  std::vector<std::pair<Index, Vector>> traj = {{0, t0}, {10, t1}};
  const std::string text = trajectory_csv(traj);
  EXPECT_EQ(text,
            "iteration,coordinate,t_value\n"
            "0,0,0.5\n"
            "0,1,0.25\n"
            "10,0,0.75\n"
            "10,1,0\n");

  fs::path p = dir_ / "traj.csv";
  write_trajectory_csv(p, traj);
  EXPECT_EQ(slurp(p), text);
}
