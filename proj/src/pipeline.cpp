#include "rcombat/pipeline.hpp"

namespace rcombat {

PairwiseResult pairwise_harmonize(const CohortDataset& moving_site,
                                  const NormativeModel& model,
                                  const FilterSpec& filter, const EBConfig& eb,
                                  const SubjectMaskFn& subject_masker) {
    ResidualMatrix residuals = standardize(moving_site, model);
    FilterMask mask = apply_filter(residuals, filter, moving_site.taxonomy,
                                   &moving_site, subject_masker);
    SiteEffects effects = estimate_site_effects(residuals, mask, model, eb);
    PairwiseResult out{harmonize(moving_site, model, effects), std::move(effects),
                       std::move(mask)};
    return out;
}

PairwiseResult pairwise_harmonize(const CohortDataset& moving_site,
                                  const CohortDataset& reference,
                                  const FilterSpec& filter, const EBConfig& eb,
                                  const SubjectMaskFn& subject_masker) {
    if (moving_site.taxonomy != reference.taxonomy)
        fail(ErrorCode::TaxonomyMismatch, "moving site and reference taxonomies differ");
    NormativeModel model = fit_normative_model(reference);
    return pairwise_harmonize(moving_site, model, filter, eb, subject_masker);
}

}  // namespace rcombat
