#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "ktup/embedding.hpp"

namespace ktup {

// Sparse per-row gradient accumulator. Rows never touched by a batch keep
// their parameters bit-identical through the optimizer step.
class GradBuffer {
 public:
  explicit GradBuffer(int32_t dim) : dim_(dim) {}

  struct Entry {
    Param param;
    int32_t row;
  };

  // Get-or-create a zeroed accumulator for (param, row). Rows live in
  // individually allocated buffers, so spans stay valid as new rows appear.
  std::span<double> acc(Param p, int32_t row) {
    uint64_t key = (static_cast<uint64_t>(static_cast<uint8_t>(p)) << 32) |
                   static_cast<uint32_t>(row);
    auto [it, fresh] = slots_.try_emplace(key, touched_.size());
    if (fresh) {
      touched_.push_back({p, row});
      rows_.emplace_back(dim_, 0.0);
    }
    return {rows_[it->second].data(), static_cast<size_t>(dim_)};
  }

  const std::vector<Entry>& touched() const { return touched_; }
  std::span<const double> grad(size_t idx) const {
    return {rows_[idx].data(), static_cast<size_t>(dim_)};
  }

  // nullptr when the row was never touched
  const double* find(Param p, int32_t row) const {
    uint64_t key = (static_cast<uint64_t>(static_cast<uint8_t>(p)) << 32) |
                   static_cast<uint32_t>(row);
    auto it = slots_.find(key);
    return it == slots_.end() ? nullptr : rows_[it->second].data();
  }
  std::span<double> grad(size_t idx) { return {rows_[idx].data(), static_cast<size_t>(dim_)}; }

  void clear() {
    slots_.clear();
    touched_.clear();
    rows_.clear();
  }

  int32_t dim() const { return dim_; }

 private:
  int32_t dim_;
  std::unordered_map<uint64_t, size_t> slots_;
  std::vector<Entry> touched_;
  std::vector<std::vector<double>> rows_;
};

}  // namespace ktup
