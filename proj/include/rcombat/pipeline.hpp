#pragma once

#include "rcombat/combat.hpp"
#include "rcombat/filters.hpp"

namespace rcombat {

struct PairwiseResult {
    CohortDataset harmonized;
    SiteEffects effects;
    FilterMask mask;
};

/// Full Robust-ComBat projection of one moving site onto the normative
/// reference: fit reference model, standardize, filter, estimate site
/// effects on surviving residuals, harmonize everyone.
PairwiseResult pairwise_harmonize(const CohortDataset& moving_site,
                                  const CohortDataset& reference,
                                  const FilterSpec& filter, const EBConfig& eb = {},
                                  const SubjectMaskFn& subject_masker = {});

/// Same, with a prefitted reference model (sweeps reuse one fit).
PairwiseResult pairwise_harmonize(const CohortDataset& moving_site,
                                  const NormativeModel& model,
                                  const FilterSpec& filter, const EBConfig& eb = {},
                                  const SubjectMaskFn& subject_masker = {});

}  // namespace rcombat
