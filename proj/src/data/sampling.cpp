#include "dasam/data/sampling.hpp"

#include <numeric>

#include "dasam/error.hpp"

namespace dasam::data {

std::vector<std::size_t> sample_mask_indices(std::size_t mask_count, int k, Rng& rng) {
  if (k < 1) throw ContractViolation("sample_training_masks: k must be >= 1");
  std::vector<std::size_t> pool(mask_count);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  const std::size_t take = std::min(static_cast<std::size_t>(k), mask_count);
  for (std::size_t i = 0; i < take; ++i) {
    const auto j = static_cast<std::size_t>(
        uniform_int(rng, static_cast<std::int64_t>(i), static_cast<std::int64_t>(mask_count) - 1));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(take);
  return pool;
}

std::vector<InstanceMask> sample_training_masks(const DatasetRecord& record, int k, Rng& rng) {
  std::vector<InstanceMask> out;
  for (auto i : sample_mask_indices(record.masks.size(), k, rng)) out.push_back(record.masks[i]);
  return out;
}

}  // namespace dasam::data
