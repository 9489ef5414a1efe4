#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ktup/rng.hpp"

namespace ktup {

// Row-major float32 matrix. Parameters live in float32 (the on-disk format);
// training/evaluation arithmetic widens rows to double.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int32_t rows, int32_t cols) : rows_(rows), cols_(cols), data_(size_t(rows) * cols, 0.f) {}

  std::span<float> row(int32_t r) { return {data_.data() + size_t(r) * cols_, size_t(cols_)}; }
  std::span<const float> row(int32_t r) const {
    return {data_.data() + size_t(r) * cols_, size_t(cols_)};
  }
  int32_t rows() const { return rows_; }
  int32_t cols() const { return cols_; }
  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  size_t size() const { return data_.size(); }

 private:
  int32_t rows_ = 0;
  int32_t cols_ = 0;
  std::vector<float> data_;
};

// The seven trainable matrices.
enum class Param : uint8_t {
  user = 0,
  item = 1,
  entity = 2,
  pref = 3,       // preference translation vectors
  pref_norm = 4,  // preference hyperplane normals
  rel = 5,        // relation translation vectors
  rel_norm = 6,   // relation hyperplane normals
};
inline constexpr int kNumParams = 7;
const char* param_name(Param p);

// true for hyperplane-normal matrices (kept at unit row norm)
inline bool is_projection(Param p) { return p == Param::pref_norm || p == Param::rel_norm; }
// true for matrices whose row norms are clipped to <= 1
inline bool is_norm_clipped(Param p) {
  return p == Param::user || p == Param::item || p == Param::entity;
}

struct SpaceShape {
  int32_t dim = 100;
  int32_t num_users = 0;
  int32_t num_items = 0;
  int32_t num_entities = 0;
  int32_t num_prefs = 0;
  int32_t num_relations = 0;

  bool operator==(const SpaceShape&) const = default;
};

class EmbeddingSpace {
 public:
  EmbeddingSpace() = default;

  // Entries uniform in [-6/sqrt(dim), +6/sqrt(dim)], then one constraint
  // pass: normal rows to unit norm, user/item/entity rows clipped to <= 1.
  static EmbeddingSpace init(const SpaceShape& shape, uint64_t seed);

  Matrix& mat(Param p) { return mats_[static_cast<int>(p)]; }
  const Matrix& mat(Param p) const { return mats_[static_cast<int>(p)]; }

  int32_t dim() const { return dim_; }
  SpaceShape shape() const;

  // Rescales every normal row to unit norm and clips user/item/entity rows
  // to norm <= 1. Zero-norm normal rows are re-randomized (counted in the
  // return value).
  int enforce_constraints(uint64_t repair_seed = 0);

  // Same constraints for a single row; used by the trainer on touched rows.
  void enforce_row(Param p, int32_t row, Rng& repair_rng);

  // Read-only deep copy for concurrent evaluation while training continues.
  std::shared_ptr<const EmbeddingSpace> snapshot() const {
    return std::make_shared<const EmbeddingSpace>(*this);
  }

  // Binary file: magic, version, dim, 7 row counts, then row-major float32
  // little-endian payload in Param order. Round-trips bit-exactly.
  void save(const std::string& path) const;
  static EmbeddingSpace load(const std::string& path);

  bool same_bits(const EmbeddingSpace& other) const;

  // Copies every matrix of `source` whose shape matches and has rows into
  // this space (pretraining hand-off). Returns the copied Params.
  std::vector<Param> absorb(const EmbeddingSpace& source);

 private:
  int32_t dim_ = 0;
  std::array<Matrix, kNumParams> mats_;
};

}  // namespace ktup
