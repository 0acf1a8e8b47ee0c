#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "srres/archive.hpp"
#include "srres/png_io.hpp"
#include "srres/rng.hpp"
#include "test_util.hpp"

namespace srres {
namespace {

using testing::random_tensor;
using testing::TempDir;

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

Archive sample_archive() {
  Archive a;
  a.put("z/weights", random_tensor(2, 3, 4, 5, 1));
  a.put("a/bias", random_tensor(1, 7, 1, 1, 2));
  a.put_scalar("iteration", 100);
  a.put_string("format", "srres-train");
  a.put_string("config", "scale=4\nbatch_size=16\n");
  a.put_string("empty", "");
  return a;
}

TEST(Archive, RoundTripIsExact) {
  TempDir dir("ar");
  const Archive a = sample_archive();
  a.save(dir.path() / "a.ckpt");
  const Archive b = Archive::load(dir.path() / "a.ckpt");
  EXPECT_EQ(a, b);
  EXPECT_EQ(b.scalar("iteration"), 100.0);
  EXPECT_EQ(b.string("config"), "scale=4\nbatch_size=16\n");
}

TEST(Archive, SaveLoadSaveIsByteIdentical) {
  TempDir dir("ar");
  sample_archive().save(dir.path() / "1.ckpt");
  Archive::load(dir.path() / "1.ckpt").save(dir.path() / "2.ckpt");
  EXPECT_EQ(read_bytes(dir.path() / "1.ckpt"), read_bytes(dir.path() / "2.ckpt"));
}

TEST(Archive, InsertionOrderDoesNotMatter) {
  TempDir dir("ar");
  Archive a, b;
  a.put_scalar("x", 1);
  a.put_scalar("y", 2);
  b.put_scalar("y", 2);
  b.put_scalar("x", 1);
  a.save(dir.path() / "a");
  b.save(dir.path() / "b");
  EXPECT_EQ(read_bytes(dir.path() / "a"), read_bytes(dir.path() / "b"));
}

TEST(Archive, HeaderLayout) {
  TempDir dir("ar");
  sample_archive().save(dir.path() / "a.ckpt");
  const std::string bytes = read_bytes(dir.path() / "a.ckpt");
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(bytes.substr(0, 8), "SRRESCKP");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), Archive::kVersion);
  EXPECT_EQ(bytes.substr(9, 3), std::string(3, '\0'));
}

TEST(Archive, Errors) {
  TempDir dir("ar");
  EXPECT_THROW(Archive::load(dir.path() / "missing"), std::runtime_error);
  sample_archive().save(dir.path() / "a.ckpt");
  std::string bytes = read_bytes(dir.path() / "a.ckpt");

  std::string wrong_version = bytes;
  wrong_version[8] = 2;
  write_bytes(dir.path() / "v.ckpt", wrong_version);
  try {
    Archive::load(dir.path() / "v.ckpt");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  write_bytes(dir.path() / "m.ckpt", bad_magic);
  EXPECT_THROW(Archive::load(dir.path() / "m.ckpt"), std::runtime_error);

  for (std::size_t cut : {std::size_t{4}, std::size_t{13}, bytes.size() / 2, bytes.size() - 1}) {
    write_bytes(dir.path() / "t.ckpt", bytes.substr(0, cut));
    EXPECT_THROW(Archive::load(dir.path() / "t.ckpt"), std::runtime_error) << cut;
  }
  write_bytes(dir.path() / "x.ckpt", bytes + "junk");
  EXPECT_THROW(Archive::load(dir.path() / "x.ckpt"), std::runtime_error);

  const Archive a = sample_archive();
  EXPECT_THROW(a.tensor("nope"), std::out_of_range);
  EXPECT_THROW(a.string("nope"), std::out_of_range);
}

TEST(Rng, StateRoundTrip) {
  Rng a(123);
  for (int i = 0; i < 17; ++i) a();
  Rng b = rng_from_state(rng_state(a));
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
  EXPECT_THROW(rng_from_state("not a state"), std::runtime_error);
}

TEST(Rng, BetaSampleMoments) {
  Rng r(5);
  double s = 0.0, s2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = beta_sample(r, 0.2, 0.2);
    ASSERT_GE(x, 0.0);
    ASSERT_LE(x, 1.0);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  // Beta(a, a): mean 1/2, variance 1 / (4 (2a + 1)).
  EXPECT_NEAR(mean, 0.5, 0.01);
  EXPECT_NEAR(var, 1.0 / (4.0 * 1.4), 0.01);
}

}  // namespace
}  // namespace srres
