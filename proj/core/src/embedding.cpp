#include "ktup/embedding.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "ktup/error.hpp"
#include "ktup/vecmath.hpp"

namespace ktup {

namespace {

constexpr char kMagic[8] = {'K', 'T', 'U', 'P', 'E', 'M', 'B', '\0'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

void put_f32_block(std::ostream& out, const float* data, size_t n) {
  static_assert(sizeof(float) == 4);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), std::streamsize(n * 4));
  } else {
    for (size_t k = 0; k < n; ++k) {
      uint32_t v;
      std::memcpy(&v, &data[k], 4);
      put_u32(out, v);
    }
  }
}

void get_f32_block(std::istream& in, float* data, size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(data), std::streamsize(n * 4));
  } else {
    for (size_t k = 0; k < n; ++k) {
      uint32_t v = get_u32(in);
      std::memcpy(&data[k], &v, 4);
    }
  }
}

void scale_row(std::span<float> row, double factor) {
  for (float& x : row) x = static_cast<float>(static_cast<double>(x) * factor);
}

}  // namespace

const char* param_name(Param p) {
  switch (p) {
    case Param::user: return "user";
    case Param::item: return "item";
    case Param::entity: return "entity";
    case Param::pref: return "pref";
    case Param::pref_norm: return "pref_norm";
    case Param::rel: return "rel";
    case Param::rel_norm: return "rel_norm";
  }
  return "?";
}

EmbeddingSpace EmbeddingSpace::init(const SpaceShape& shape, uint64_t seed) {
  if (shape.dim <= 0) throw ConfigError("embedding dim must be positive");
  EmbeddingSpace space;
  space.dim_ = shape.dim;
  space.mats_[int(Param::user)] = Matrix(shape.num_users, shape.dim);
  space.mats_[int(Param::item)] = Matrix(shape.num_items, shape.dim);
  space.mats_[int(Param::entity)] = Matrix(shape.num_entities, shape.dim);
  space.mats_[int(Param::pref)] = Matrix(shape.num_prefs, shape.dim);
  space.mats_[int(Param::pref_norm)] = Matrix(shape.num_prefs, shape.dim);
  space.mats_[int(Param::rel)] = Matrix(shape.num_relations, shape.dim);
  space.mats_[int(Param::rel_norm)] = Matrix(shape.num_relations, shape.dim);

  double bound = 6.0 / std::sqrt(static_cast<double>(shape.dim));
  Rng rng(mix_seed(seed, 0x696e6974ULL));
  for (Matrix& m : space.mats_)
    for (size_t k = 0; k < m.size(); ++k)
      m.data()[k] = static_cast<float>(rng.uniform(-bound, bound));

  space.enforce_constraints(seed);
  return space;
}

SpaceShape EmbeddingSpace::shape() const {
  SpaceShape s;
  s.dim = dim_;
  s.num_users = mat(Param::user).rows();
  s.num_items = mat(Param::item).rows();
  s.num_entities = mat(Param::entity).rows();
  s.num_prefs = mat(Param::pref).rows();
  s.num_relations = mat(Param::rel).rows();
  return s;
}

int EmbeddingSpace::enforce_constraints(uint64_t repair_seed) {
  Rng repair_rng(mix_seed(repair_seed, 0x7265706169720aULL));
  int repaired = 0;
  for (int p = 0; p < kNumParams; ++p) {
    Param param = static_cast<Param>(p);
    if (!is_projection(param) && !is_norm_clipped(param)) continue;
    Matrix& m = mats_[p];
    for (int32_t r = 0; r < m.rows(); ++r) {
      double before = norm2(std::span<const float>(m.row(r)));
      enforce_row(param, r, repair_rng);
      if (is_projection(param) && before == 0.0) ++repaired;
    }
  }
  return repaired;
}

void EmbeddingSpace::enforce_row(Param p, int32_t row, Rng& repair_rng) {
  // skip band at 1e-7 (just above float rounding) so rows that already
  // satisfy the constraint are left bit-identical
  Matrix& m = mat(p);
  auto r = m.row(row);
  if (is_projection(p)) {
    double n = norm2(std::span<const float>(r));
    while (n == 0.0) {  // degenerate normal: re-draw
      double bound = 6.0 / std::sqrt(static_cast<double>(dim_));
      for (float& x : r) x = static_cast<float>(repair_rng.uniform(-bound, bound));
      n = norm2(std::span<const float>(r));
    }
    if (std::fabs(n - 1.0) > 1e-7) scale_row(r, 1.0 / n);
  } else if (is_norm_clipped(p)) {
    double n = norm2(std::span<const float>(r));
    if (n > 1.0 + 1e-7) scale_row(r, 1.0 / n);
  }
}

void EmbeddingSpace::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write(kMagic, 8);
  put_u32(out, kVersion);
  put_u32(out, static_cast<uint32_t>(dim_));
  for (const Matrix& m : mats_) put_u32(out, static_cast<uint32_t>(m.rows()));
  for (const Matrix& m : mats_) put_f32_block(out, m.data(), m.size());
  if (!out) throw DataError("write failed: " + path);
}

EmbeddingSpace EmbeddingSpace::load(const std::string& path) {
  std::error_code ec;
  auto file_size = std::filesystem::file_size(path, ec);
  if (ec) throw DataError("cannot stat file: " + path);

  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);

  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("not an embedding file (bad magic): " + path);
  uint32_t version = get_u32(in);
  if (version != kVersion)
    throw DataError("embedding file version " + std::to_string(version) + " unsupported: " + path);

  EmbeddingSpace space;
  space.dim_ = static_cast<int32_t>(get_u32(in));
  if (space.dim_ <= 0) throw DataError("embedding file has non-positive dim: " + path);
  uint32_t rows[kNumParams];
  uint64_t payload = 0;
  for (int p = 0; p < kNumParams; ++p) {
    rows[p] = get_u32(in);
    payload += uint64_t(rows[p]) * uint64_t(space.dim_) * 4;
  }
  if (!in) throw DataError("truncated embedding file header: " + path);
  uint64_t expected = 8 + 4 + 4 + 4 * kNumParams + payload;
  if (file_size != expected)
    throw DataError("truncated or oversized embedding file (expected " + std::to_string(expected) +
                    " bytes, have " + std::to_string(file_size) + "): " + path);

  for (int p = 0; p < kNumParams; ++p) {
    space.mats_[p] = Matrix(static_cast<int32_t>(rows[p]), space.dim_);
    get_f32_block(in, space.mats_[p].data(), space.mats_[p].size());
  }
  if (!in) throw DataError("truncated embedding file payload: " + path);
  return space;
}

bool EmbeddingSpace::same_bits(const EmbeddingSpace& other) const {
  if (dim_ != other.dim_) return false;
  for (int p = 0; p < kNumParams; ++p) {
    const Matrix& a = mats_[p];
    const Matrix& b = other.mats_[p];
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    if (std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

std::vector<Param> EmbeddingSpace::absorb(const EmbeddingSpace& source) {
  if (source.dim_ != dim_)
    throw DataError("init-from: dim mismatch (" + std::to_string(source.dim_) + " vs " +
                    std::to_string(dim_) + ")");
  std::vector<Param> copied;
  for (int p = 0; p < kNumParams; ++p) {
    const Matrix& src = source.mats_[p];
    Matrix& dst = mats_[p];
    if (src.rows() == 0) continue;
    if (src.rows() != dst.rows())
      throw DataError(std::string("init-from: row count mismatch for ") +
                      param_name(static_cast<Param>(p)));
    std::memcpy(dst.data(), src.data(), src.size() * sizeof(float));
    copied.push_back(static_cast<Param>(p));
  }
  return copied;
}

}  // namespace ktup
