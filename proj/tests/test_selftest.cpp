#include <gtest/gtest.h>

#include <filesystem>

#include "xlpool/selftest.hpp"

using namespace xlpool;

TEST(Selftest, PassesOnFreshBuild) {
  auto report = run_selftest(1);
  EXPECT_TRUE(report.all_passed()) << report.text();
  EXPECT_EQ(report.checks.size(), 4u);
}

TEST(Selftest, SeededReportIsReproducible) {
  EXPECT_EQ(run_selftest(77).text(), run_selftest(77).text());
}

TEST(Selftest, CorruptedFixtureFails) {
  auto dir = std::filesystem::temp_directory_path();
  GalleryIndex idx;
  idx.add({"a", SignVector::from_trits(1, 4, std::vector<std::int8_t>{1, 0, -1, 1}), ChannelStats{{0.5f}}});
  auto good = dir / "xlpool_selftest_good.idx";
  save_index(good, idx);
  EXPECT_TRUE(run_selftest(1, good).all_passed());

  auto bytes = encode_index(idx);
  bytes[8 + 4 + 4 + 4 + 8 + 2 + 1] = static_cast<char>(0xAA);  // reserved codes in the trit payload
  auto bad = dir / "xlpool_selftest_bad.idx";
  detail::write_file_bytes(bad, bytes);
  auto report = run_selftest(1, bad);
  EXPECT_FALSE(report.all_passed());
  EXPECT_FALSE(report.checks.back().passed);
  std::filesystem::remove(good);
  std::filesystem::remove(bad);
}
