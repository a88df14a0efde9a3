#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rcombat/combat.hpp"

namespace rcombat {

/// Disease pattern in units of the reference sigma_v. `metric_shifts`
/// apply to a seeded subset of bundles (`bundle_fraction` of them) per
/// metric; `feature_shifts` pin explicit features. Shift signs must agree
/// with the metric's pathological direction.
struct PathologyProfile {
    std::string label;
    std::map<std::string, double> metric_shifts;   // metric -> SD shift
    std::map<std::string, double> feature_shifts;  // full feature -> SD shift
    double bundle_fraction = 0.2;
    double subject_variability = 0.1;  // sd of per-subject shift multiplier
};

/// AD-like, TBI-like, and a mild MCI-like pattern.
std::vector<PathologyProfile> default_profiles();

struct SiteEffectSample {
    Eigen::VectorXd gamma;  // feature units
    Eigen::VectorXd delta;  // > 0
    std::uint64_t seed = 0;
};

struct SiteEffectRanges {
    double gamma_scale = 0.5;  // gamma_v ~ N(0, (gamma_scale * sigma_v)^2)
    double delta_min = 0.7;    // delta_v ~ U(delta_min, delta_max)
    double delta_max = 1.4;
};

struct CovariateRanges {
    double age_min = 20.0;
    double age_max = 80.0;
    double sex_p = 0.5;
    double handedness_p = 0.9;
};

/// Plausible dMRI-scale generative truth: per-metric baseline levels and
/// dispersions with seeded per-bundle variation, plus small age/sex/
/// handedness effects. This is the model control sites are drawn from.
NormativeModel default_generative_model(const FeatureTaxonomy& taxonomy,
                                        std::uint64_t seed);

/// Resolve a profile to a per-feature SD shift vector (seeded bundle choice).
Eigen::VectorXd resolve_profile_shifts(const PathologyProfile& profile,
                                       const FeatureTaxonomy& taxonomy,
                                       std::uint64_t seed);

/// HC subjects drawn from the normative model (y = alpha + x'beta + sigma*eps);
/// pathology subjects additionally shifted per profile.
CohortDataset generate_pool(const NormativeModel& model, const FeatureTaxonomy& taxonomy,
                            std::size_t n_hc,
                            const std::vector<PathologyProfile>& profiles,
                            std::size_t n_per_profile, std::uint64_t seed,
                            const CovariateRanges& covariates = {});

/// Reference cohort: all-HC draw from the generative law itself.
CohortDataset generate_reference(const NormativeModel& model,
                                 const FeatureTaxonomy& taxonomy, std::size_t n,
                                 std::uint64_t seed,
                                 const CovariateRanges& covariates = {});

/// Exactly round(n * disease_ratio) pathology subjects sampled uniformly
/// across profiles, the rest HC; without replacement within the site.
CohortDataset sample_control_site(const CohortDataset& pool, std::size_t n_subjects,
                                  double disease_ratio, std::uint64_t seed,
                                  const std::string& site_id);

SiteEffectSample sample_site_effects(const NormativeModel& model,
                                     const SiteEffectRanges& ranges,
                                     std::uint64_t seed);

/// Original subjects plus (factor - 1) perturbed copies per subject with
/// iid Gaussian noise of sd noise_scale * sd_v (the dataset's own
/// per-feature sd). Copies share labels/covariates under derived ids.
CohortDataset augment(const CohortDataset& dataset, double noise_scale,
                      std::size_t factor, std::uint64_t seed);

struct GridSite {
    CohortDataset biased;
    CohortDataset ground_truth;
    SiteEffectSample effects;
    double disease_ratio = 0.0;
    std::uint64_t seed = 0;
    std::string site_id;
};

inline const std::vector<double>& default_disease_ratios() {
    static const std::vector<double> r = {0.03, 0.10, 0.30, 0.50, 0.70, 0.80};
    return r;
}

/// The paper-scale grid: sites_per_ratio sites per disease ratio, each
/// sampled from the pool and given injected bias; pre-bias values are
/// retained as ground truth. Site seeds derive from the master seed.
std::vector<GridSite> build_experiment_grid(
    const CohortDataset& pool, const NormativeModel& model,
    const std::vector<double>& ratios = default_disease_ratios(),
    std::size_t sites_per_ratio = 40, std::size_t n_subjects = 100,
    std::uint64_t seed = 0, const SiteEffectRanges& ranges = {});

/// Deterministic child-seed derivation (splitmix64 of master ^ index).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace rcombat
