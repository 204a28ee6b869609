#pragma once

#include <vector>

#include "dasam/data/random.hpp"
#include "dasam/data/types.hpp"

namespace dasam::data {

/// Indices of min(k, |masks|) distinct masks drawn uniformly without
/// replacement (partial Fisher-Yates). Throws ContractViolation if k < 1.
std::vector<std::size_t> sample_mask_indices(std::size_t mask_count, int k, Rng& rng);

std::vector<InstanceMask> sample_training_masks(const DatasetRecord& record, int k, Rng& rng);

}  // namespace dasam::data
