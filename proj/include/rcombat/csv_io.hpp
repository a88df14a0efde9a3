#pragma once

#include <filesystem>
#include <optional>

#include "rcombat/cohort.hpp"

namespace rcombat {

/// Canonical cohort file: CSV with header
///   subject_id,site_id,group,age,sex,handedness,<bundle>__<metric>...
/// UTF-8, '.' decimal separator, no quoting of numeric fields.
///
/// When `schema` is absent the taxonomy is inferred from the feature
/// column names. Rows with unparseable or non-finite values are rejected
/// with row/column diagnostics; sites with fewer than 2 subjects are
/// rejected at load.
CohortDataset load_cohort(const std::filesystem::path& path,
                          const std::optional<FeatureTaxonomy>& schema = std::nullopt);

/// Values are written with 17 significant digits so load(save(d)) is the
/// identity bit-for-bit.
void save_cohort(const CohortDataset& dataset, const std::filesystem::path& path);

}  // namespace rcombat
