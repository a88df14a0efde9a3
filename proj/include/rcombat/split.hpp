#pragma once

#include <array>

#include "rcombat/cohort.hpp"

namespace rcombat {

struct SplitResult {
    CohortDataset train;
    CohortDataset val;
    CohortDataset test;
};

/// Stratified train/val/test split on the HC-vs-pathology group label.
/// Fractions must sum to 1 within 1e-9 and each stratum needs >= 3 subjects
/// (unless its fraction vector makes a split trivially empty). Deterministic
/// under `seed`; the three parts are an exact partition of the input.
SplitResult split_dataset(const CohortDataset& dataset,
                          const std::array<double, 3>& fractions,
                          std::uint64_t seed);

}  // namespace rcombat
