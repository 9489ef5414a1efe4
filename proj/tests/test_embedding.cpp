#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ktup/embedding.hpp"
#include "ktup/error.hpp"
#include "ktup/vecmath.hpp"

using namespace ktup;
namespace fs = std::filesystem;

namespace {

SpaceShape small_shape() {
  SpaceShape s;
  s.dim = 16;
  s.num_users = 5;
  s.num_items = 7;
  s.num_entities = 9;
  s.num_prefs = 3;
  s.num_relations = 3;
  return s;
}

double row_norm(const Matrix& m, int32_t r) { return norm2(std::span<const float>(m.row(r))); }

}  // namespace

TEST_SUITE_BEGIN("embedding");

TEST_CASE("init is seed-deterministic") {
  EmbeddingSpace a = EmbeddingSpace::init(small_shape(), 11);
  EmbeddingSpace b = EmbeddingSpace::init(small_shape(), 11);
  EmbeddingSpace c = EmbeddingSpace::init(small_shape(), 12);
  CHECK(a.same_bits(b));
  CHECK(!a.same_bits(c));
}

TEST_CASE("init satisfies all norm constraints") {
  EmbeddingSpace space = EmbeddingSpace::init(small_shape(), 3);
  for (Param p : {Param::pref_norm, Param::rel_norm})
    for (int32_t r = 0; r < space.mat(p).rows(); ++r)
      CHECK(std::fabs(row_norm(space.mat(p), r) - 1.0) <= 1e-6);
  for (Param p : {Param::user, Param::item, Param::entity})
    for (int32_t r = 0; r < space.mat(p).rows(); ++r)
      CHECK(row_norm(space.mat(p), r) <= 1.0 + 1e-6);
}

TEST_CASE("init entries follow the uniform law") {
  // translation rows are unconstrained, so their entries keep the raw draw
  SpaceShape s;
  s.dim = 100;
  s.num_relations = 10000;  // 1e6 entries
  EmbeddingSpace space = EmbeddingSpace::init(s, 123);
  const Matrix& rel = space.mat(Param::rel);
  double bound = 6.0 / std::sqrt(100.0);
  double sum = 0.0, sum_sq = 0.0;
  int64_t n = static_cast<int64_t>(rel.size());
  for (int64_t k = 0; k < n; ++k) {
    double v = rel.data()[k];
    CHECK(std::fabs(v) <= bound);
    sum += v;
    sum_sq += v * v;
  }
  double mean = sum / n;
  double sigma_mean = bound / std::sqrt(3.0 * n);
  CHECK(std::fabs(mean) < 3.0 * sigma_mean);
  double var = sum_sq / n - mean * mean;
  CHECK(var == doctest::Approx(bound * bound / 3.0).epsilon(0.01));
}

TEST_CASE("zero dimension is rejected") {
  SpaceShape s = small_shape();
  s.dim = 0;
  CHECK_THROWS_AS(EmbeddingSpace::init(s, 1), ConfigError);
}

TEST_CASE("enforce_constraints rescales and preserves direction") {
  EmbeddingSpace space = EmbeddingSpace::init(small_shape(), 5);
  auto row = space.mat(Param::pref_norm).row(0);
  std::vector<float> doubled(row.begin(), row.end());
  for (size_t k = 0; k < doubled.size(); ++k) row[k] = doubled[k] * 2.0f;

  space.enforce_constraints();
  CHECK(std::fabs(row_norm(space.mat(Param::pref_norm), 0) - 1.0) <= 1e-6);
  double cos = 0.0;
  for (size_t k = 0; k < doubled.size(); ++k) cos += double(doubled[k]) * double(row[k]);
  CHECK(cos > 0.0);  // same direction

  SUBCASE("already-satisfying rows stay bit-identical") {
    EmbeddingSpace before = space;
    space.enforce_constraints();
    CHECK(space.same_bits(before));
  }
}

TEST_CASE("enforce_constraints repairs zero-norm normals") {
  EmbeddingSpace space = EmbeddingSpace::init(small_shape(), 5);
  auto row = space.mat(Param::rel_norm).row(1);
  for (float& x : row) x = 0.0f;
  int repaired = space.enforce_constraints(99);
  CHECK(repaired == 1);
  CHECK(std::fabs(row_norm(space.mat(Param::rel_norm), 1) - 1.0) <= 1e-6);
}

TEST_CASE("constraint property over random rows") {
  SpaceShape s;
  s.dim = 24;
  s.num_entities = 500;
  s.num_prefs = 250;
  s.num_relations = 250;
  EmbeddingSpace space = EmbeddingSpace::init(s, 7);
  Rng rng(4242);
  // scribble random values over everything, then enforce
  for (int p = 0; p < kNumParams; ++p) {
    Matrix& m = space.mat(static_cast<Param>(p));
    for (size_t k = 0; k < m.size(); ++k)
      m.data()[k] = static_cast<float>(rng.uniform(-3.0, 3.0));
  }
  space.enforce_constraints();
  for (Param p : {Param::pref_norm, Param::rel_norm})
    for (int32_t r = 0; r < space.mat(p).rows(); ++r)
      CHECK(std::fabs(row_norm(space.mat(p), r) - 1.0) <= 1e-6);
  for (Param p : {Param::user, Param::item, Param::entity})
    for (int32_t r = 0; r < space.mat(p).rows(); ++r)
      CHECK(row_norm(space.mat(p), r) <= 1.0 + 1e-6);
}

TEST_CASE("snapshot is an independent read-only copy") {
  EmbeddingSpace space = EmbeddingSpace::init(small_shape(), 77);
  auto snap = space.snapshot();
  space.mat(Param::user).row(0)[0] += 1.0f;
  CHECK(!space.same_bits(*snap));
  EmbeddingSpace fresh = EmbeddingSpace::init(small_shape(), 77);
  CHECK(fresh.same_bits(*snap));
}

TEST_CASE("save/load round-trips bit-exactly") {
  fs::path path = fs::temp_directory_path() / "ktup_space_test.bin";
  EmbeddingSpace space = EmbeddingSpace::init(small_shape(), 21);
  space.save(path.string());
  EmbeddingSpace loaded = EmbeddingSpace::load(path.string());
  CHECK(loaded.same_bits(space));
  CHECK(loaded.shape() == space.shape());
  fs::remove(path);
}

TEST_CASE("truncated and corrupted files are rejected without partial state") {
  fs::path path = fs::temp_directory_path() / "ktup_space_bad.bin";
  EmbeddingSpace space = EmbeddingSpace::init(small_shape(), 21);
  space.save(path.string());

  SUBCASE("truncated payload") {
    auto size = fs::file_size(path);
    fs::resize_file(path, size - 13);
    CHECK_THROWS_WITH_AS(EmbeddingSpace::load(path.string()), doctest::Contains("truncated"),
                         DataError);
  }
  SUBCASE("bad magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("NOTMAGIC", 8);
    f.close();
    CHECK_THROWS_WITH_AS(EmbeddingSpace::load(path.string()), doctest::Contains("magic"),
                         DataError);
  }
  SUBCASE("unsupported version") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    char v[4] = {9, 0, 0, 0};
    f.write(v, 4);
    f.close();
    CHECK_THROWS_WITH_AS(EmbeddingSpace::load(path.string()), doctest::Contains("version"),
                         DataError);
  }
  SUBCASE("edited header row count no longer matches the payload") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8 + 4 + 4);  // first row-count field
    char v[4] = {99, 0, 0, 0};
    f.write(v, 4);
    f.close();
    CHECK_THROWS_AS(EmbeddingSpace::load(path.string()), DataError);
  }
  fs::remove(path);
}

TEST_CASE("absorb copies matching matrices and rejects mismatches") {
  EmbeddingSpace target = EmbeddingSpace::init(small_shape(), 1);

  SpaceShape rec_only;
  rec_only.dim = 16;
  rec_only.num_users = 5;
  rec_only.num_items = 7;
  EmbeddingSpace pretrained = EmbeddingSpace::init(rec_only, 2);
  auto copied = target.absorb(pretrained);
  CHECK(copied == std::vector<Param>{Param::user, Param::item});
  CHECK(std::memcmp(target.mat(Param::user).data(), pretrained.mat(Param::user).data(),
                    pretrained.mat(Param::user).size() * sizeof(float)) == 0);

  SpaceShape wrong = rec_only;
  wrong.num_users = 6;
  EmbeddingSpace bad = EmbeddingSpace::init(wrong, 3);
  CHECK_THROWS_WITH_AS(target.absorb(bad), doctest::Contains("mismatch"), DataError);

  SpaceShape wrong_dim = rec_only;
  wrong_dim.dim = 8;
  EmbeddingSpace bad_dim = EmbeddingSpace::init(wrong_dim, 4);
  CHECK_THROWS_WITH_AS(target.absorb(bad_dim), doctest::Contains("dim"), DataError);
}

TEST_SUITE_END();
