#include "rcombat/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace rcombat {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::vector<PathologyProfile> default_profiles() {
    // FW/AFD magnitudes are the published anchors; the diffusivity-metric
    // shifts reflect pathologies that deviate by more than two standard
    // deviations from the normative range.
    std::vector<PathologyProfile> profiles;
    {
        PathologyProfile ad;
        ad.label = "AD";
        ad.metric_shifts = {{"fw", 1.02}, {"md", 3.0},  {"mdt", 2.8},
                            {"rd", 2.4},  {"fa", -2.0}, {"adt", 1.8}};
        ad.bundle_fraction = 0.35;
        profiles.push_back(std::move(ad));
    }
    {
        PathologyProfile tbi;
        tbi.label = "TBI";
        tbi.metric_shifts = {{"afd", -1.31}, {"fat", -1.8}, {"fw", 0.9},
                             {"rd", 1.4},    {"ad", 1.2}};
        tbi.bundle_fraction = 0.35;
        profiles.push_back(std::move(tbi));
    }
    {
        PathologyProfile mci;
        mci.label = "MCI";
        mci.metric_shifts = {{"fw", 0.4}, {"fa", -0.3}};
        mci.bundle_fraction = 0.15;
        profiles.push_back(std::move(mci));
    }
    return profiles;
}

NormativeModel default_generative_model(const FeatureTaxonomy& taxonomy,
                                        std::uint64_t seed) {
    // Baseline level / dispersion per metric, roughly on dMRI scales
    // (diffusivities in 1e-3 mm^2/s).
    static const std::map<std::string, std::pair<double, double>> scales = {
        {"fa", {0.45, 0.05}},  {"fat", {0.55, 0.05}}, {"md", {0.80, 0.06}},
        {"mdt", {0.75, 0.05}}, {"rd", {0.60, 0.05}},  {"rdt", {0.55, 0.05}},
        {"ad", {1.20, 0.08}},  {"adt", {1.15, 0.07}}, {"fw", {0.20, 0.06}},
        {"afd", {0.35, 0.06}}};

    const std::size_t V = taxonomy.n_features();
    NormativeModel model;
    model.covariate_names = default_covariate_names();
    model.alpha.resize(static_cast<Eigen::Index>(V));
    model.beta.resize(static_cast<Eigen::Index>(V), 3);
    model.sigma.resize(static_cast<Eigen::Index>(V));
    model.zero_variance.assign(V, false);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> sigma_jitter(0.8, 1.2);
    for (std::size_t b = 0; b < taxonomy.n_bundles(); ++b) {
        for (std::size_t m = 0; m < taxonomy.n_metrics(); ++m) {
            const Eigen::Index v =
                static_cast<Eigen::Index>(taxonomy.feature_index(b, m));
            auto it = scales.find(taxonomy.metrics()[m]);
            double base = 0.5, spread = 0.05;
            if (it != scales.end()) {
                base = it->second.first;
                spread = it->second.second;
            }
            double sigma = spread * sigma_jitter(rng);
            model.sigma(v) = sigma;
            model.alpha(v) = base + 0.3 * spread * normal(rng);
            // Small covariate effects: age drift, sex offset, handedness nudge.
            model.beta(v, 0) = 0.005 * sigma * normal(rng);
            model.beta(v, 1) = 0.2 * sigma * normal(rng);
            model.beta(v, 2) = 0.05 * sigma * normal(rng);
        }
    }
    return model;
}

Eigen::VectorXd resolve_profile_shifts(const PathologyProfile& profile,
                                       const FeatureTaxonomy& taxonomy,
                                       std::uint64_t seed) {
    const std::size_t B = taxonomy.n_bundles();
    Eigen::VectorXd shifts =
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(taxonomy.n_features()));
    std::mt19937_64 rng(seed);

    for (const auto& [metric, shift] : profile.metric_shifts) {
        auto it = std::find(taxonomy.metrics().begin(), taxonomy.metrics().end(), metric);
        if (it == taxonomy.metrics().end())
            fail(ErrorCode::InvalidRange,
                 "profile '" + profile.label + "' shifts unknown metric '" + metric + "'");
        bool increases = taxonomy.direction(metric) ==
                         PathologyDirection::IncreasesWithPathology;
        if ((increases && shift < 0.0) || (!increases && shift > 0.0))
            fail(ErrorCode::InvalidRange,
                 "shift sign for metric '" + metric +
                     "' contradicts its pathological direction");
        std::size_t m = static_cast<std::size_t>(it - taxonomy.metrics().begin());
        std::size_t n_affected = std::max<std::size_t>(
            1, static_cast<std::size_t>(
                   std::llround(profile.bundle_fraction * static_cast<double>(B))));
        std::vector<std::size_t> bundles(B);
        std::iota(bundles.begin(), bundles.end(), 0);
        std::shuffle(bundles.begin(), bundles.end(), rng);
        for (std::size_t k = 0; k < n_affected; ++k)
            shifts(static_cast<Eigen::Index>(taxonomy.feature_index(bundles[k], m))) =
                shift;
    }
    for (const auto& [feature, shift] : profile.feature_shifts)
        shifts(static_cast<Eigen::Index>(taxonomy.feature_index(feature))) = shift;
    return shifts;
}

namespace {

Eigen::VectorXd sample_covariates(std::mt19937_64& rng, const CovariateRanges& cr) {
    std::uniform_real_distribution<double> age(cr.age_min, cr.age_max);
    std::bernoulli_distribution sex(cr.sex_p), hand(cr.handedness_p);
    Eigen::VectorXd x(3);
    x << age(rng), sex(rng) ? 1.0 : 0.0, hand(rng) ? 1.0 : 0.0;
    return x;
}

SubjectRecord draw_subject(const NormativeModel& model, std::mt19937_64& rng,
                           const CovariateRanges& cr, const std::string& id,
                           const std::string& site, const std::string& group,
                           const Eigen::VectorXd* sd_shifts, double variability) {
    SubjectRecord s;
    s.subject_id = id;
    s.site_id = site;
    s.group = group;
    s.covariates = sample_covariates(rng, cr);
    const std::size_t V = model.n_features();
    s.features.resize(static_cast<Eigen::Index>(V));
    std::normal_distribution<double> normal(0.0, 1.0);
    double subject_scale = 1.0;
    if (sd_shifts) subject_scale = 1.0 + variability * normal(rng);
    for (std::size_t v = 0; v < V; ++v) {
        const Eigen::Index vi = static_cast<Eigen::Index>(v);
        double y = model.expected(v, s.covariates) + model.sigma(vi) * normal(rng);
        if (sd_shifts)
            y += (*sd_shifts)(vi) * model.sigma(vi) * subject_scale;
        s.features(vi) = y;
    }
    return s;
}

std::string padded(std::size_t i, int width = 5) {
    std::string s = std::to_string(i);
    while (static_cast<int>(s.size()) < width) s = "0" + s;
    return s;
}

}  // namespace

CohortDataset generate_pool(const NormativeModel& model, const FeatureTaxonomy& taxonomy,
                            std::size_t n_hc,
                            const std::vector<PathologyProfile>& profiles,
                            std::size_t n_per_profile, std::uint64_t seed,
                            const CovariateRanges& covariates) {
    CohortDataset pool;
    pool.taxonomy = taxonomy;
    pool.covariate_names = model.covariate_names;
    std::mt19937_64 rng(seed);
    for (std::size_t j = 0; j < n_hc; ++j)
        pool.subjects.push_back(draw_subject(model, rng, covariates,
                                             "hc" + padded(j), "pool", "HC", nullptr,
                                             0.0));
    std::size_t p = 0;
    for (const auto& profile : profiles) {
        Eigen::VectorXd shifts =
            resolve_profile_shifts(profile, taxonomy, derive_seed(seed, 1000 + p));
        for (std::size_t j = 0; j < n_per_profile; ++j)
            pool.subjects.push_back(draw_subject(
                model, rng, covariates, profile.label + "_" + padded(j), "pool",
                profile.label, &shifts, profile.subject_variability));
        ++p;
    }
    return pool;
}

CohortDataset generate_reference(const NormativeModel& model,
                                 const FeatureTaxonomy& taxonomy, std::size_t n,
                                 std::uint64_t seed, const CovariateRanges& covariates) {
    CohortDataset ref;
    ref.taxonomy = taxonomy;
    ref.covariate_names = model.covariate_names;
    ref.reference_site = "reference";
    std::mt19937_64 rng(seed);
    for (std::size_t j = 0; j < n; ++j)
        ref.subjects.push_back(draw_subject(model, rng, covariates,
                                            "ref" + padded(j), "reference", "HC",
                                            nullptr, 0.0));
    return ref;
}

CohortDataset sample_control_site(const CohortDataset& pool, std::size_t n_subjects,
                                  double disease_ratio, std::uint64_t seed,
                                  const std::string& site_id) {
    if (disease_ratio < 0.0 || disease_ratio >= 1.0)
        fail(ErrorCode::InvalidRange, "disease ratio must lie in [0, 1)");
    const std::size_t n_path = static_cast<std::size_t>(
        std::llround(static_cast<double>(n_subjects) * disease_ratio));
    const std::size_t n_hc = n_subjects - n_path;

    std::vector<std::size_t> hc_idx, path_idx;
    for (std::size_t j = 0; j < pool.n_subjects(); ++j)
        (pool.subjects[j].healthy() ? hc_idx : path_idx).push_back(j);
    if (hc_idx.size() < n_hc || path_idx.size() < n_path)
        fail(ErrorCode::PoolExhausted,
             "pool has " + std::to_string(hc_idx.size()) + " HC / " +
                 std::to_string(path_idx.size()) + " pathology subjects; need " +
                 std::to_string(n_hc) + " / " + std::to_string(n_path));

    std::mt19937_64 rng(seed);
    std::shuffle(hc_idx.begin(), hc_idx.end(), rng);
    std::shuffle(path_idx.begin(), path_idx.end(), rng);

    CohortDataset site;
    site.taxonomy = pool.taxonomy;
    site.covariate_names = pool.covariate_names;
    for (std::size_t k = 0; k < n_hc; ++k) {
        site.subjects.push_back(pool.subjects[hc_idx[k]]);
        site.subjects.back().site_id = site_id;
    }
    for (std::size_t k = 0; k < n_path; ++k) {
        site.subjects.push_back(pool.subjects[path_idx[k]]);
        site.subjects.back().site_id = site_id;
    }
    return site;
}

SiteEffectSample sample_site_effects(const NormativeModel& model,
                                     const SiteEffectRanges& ranges,
                                     std::uint64_t seed) {
    if (!(ranges.delta_min > 0.0) || ranges.delta_max < ranges.delta_min)
        fail(ErrorCode::InvalidRange, "delta range must be positive and ordered");
    if (ranges.gamma_scale < 0.0)
        fail(ErrorCode::InvalidRange, "gamma scale must be >= 0");

    const std::size_t V = model.n_features();
    SiteEffectSample fx;
    fx.seed = seed;
    fx.gamma.resize(static_cast<Eigen::Index>(V));
    fx.delta.resize(static_cast<Eigen::Index>(V));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uni(ranges.delta_min, ranges.delta_max);
    for (std::size_t v = 0; v < V; ++v) {
        const Eigen::Index vi = static_cast<Eigen::Index>(v);
        fx.gamma(vi) = ranges.gamma_scale * model.sigma(vi) * normal(rng);
        fx.delta(vi) = uni(rng);
    }
    return fx;
}

CohortDataset augment(const CohortDataset& dataset, double noise_scale,
                      std::size_t factor, std::uint64_t seed) {
    if (noise_scale < 0.0) fail(ErrorCode::InvalidRange, "noise scale must be >= 0");
    if (factor < 1) fail(ErrorCode::InvalidRange, "augmentation factor must be >= 1");

    const std::size_t n = dataset.n_subjects();
    const std::size_t V = dataset.n_features();
    Eigen::VectorXd sd = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(V));
    if (n >= 2) {
        Eigen::MatrixXd X = dataset.feature_matrix();
        for (Eigen::Index v = 0; v < X.cols(); ++v) {
            double mu = X.col(v).mean();
            sd(v) = std::sqrt((X.col(v).array() - mu).square().sum() /
                              static_cast<double>(n - 1));
        }
    }

    CohortDataset out = dataset;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t copy = 1; copy < factor; ++copy) {
        for (std::size_t j = 0; j < n; ++j) {
            SubjectRecord s = dataset.subjects[j];
            s.subject_id += "_aug" + std::to_string(copy);
            for (Eigen::Index v = 0; v < s.features.size(); ++v)
                s.features(v) += noise_scale * sd(v) * normal(rng);
            out.subjects.push_back(std::move(s));
        }
    }
    return out;
}

std::vector<GridSite> build_experiment_grid(const CohortDataset& pool,
                                            const NormativeModel& model,
                                            const std::vector<double>& ratios,
                                            std::size_t sites_per_ratio,
                                            std::size_t n_subjects, std::uint64_t seed,
                                            const SiteEffectRanges& ranges) {
    std::vector<GridSite> grid;
    grid.reserve(ratios.size() * sites_per_ratio);
    std::uint64_t index = 0;
    for (double ratio : ratios) {
        for (std::size_t k = 0; k < sites_per_ratio; ++k, ++index) {
            GridSite site;
            site.disease_ratio = ratio;
            site.seed = derive_seed(seed, index);
            site.site_id = "site_r" + std::to_string(static_cast<int>(ratio * 100)) +
                           "_" + std::to_string(k);
            site.ground_truth = sample_control_site(pool, n_subjects, ratio,
                                                    site.seed, site.site_id);
            site.effects =
                sample_site_effects(model, ranges, derive_seed(site.seed, 1));
            site.biased = inject_bias(site.ground_truth, model, site.effects.gamma,
                                      site.effects.delta);
            grid.push_back(std::move(site));
        }
    }
    return grid;
}

}  // namespace rcombat
