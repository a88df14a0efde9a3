#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "rcombat/cohort.hpp"

namespace rcombat {

/// Per-feature linear model of the normative reference cohort:
/// y_v = alpha_v + x' beta_v + sigma_v * eps. Features whose OLS residual
/// variance is zero are flagged in `zero_variance` and pass through
/// standardization/harmonization untouched.
struct NormativeModel {
    Eigen::VectorXd alpha;            // V
    Eigen::MatrixXd beta;             // V x C
    Eigen::VectorXd sigma;            // V, residual sd (n - C - 1 denominator)
    std::vector<std::string> covariate_names;
    std::vector<bool> zero_variance;  // V

    std::size_t n_features() const { return static_cast<std::size_t>(alpha.size()); }
    bool usable(std::size_t v) const { return !zero_variance[v]; }

    /// alpha_v + x' beta_v for one subject.
    double expected(std::size_t v, const Eigen::VectorXd& covariates) const {
        return alpha(static_cast<Eigen::Index>(v)) +
               beta.row(static_cast<Eigen::Index>(v)).dot(covariates);
    }
};

/// Covariate-regressed, sigma-standardized residuals of one site.
struct ResidualMatrix {
    Eigen::MatrixXd z;  // subjects x V
    std::vector<std::string> subject_ids;
    std::string site_id;

    std::size_t n_subjects() const { return static_cast<std::size_t>(z.rows()); }
    std::size_t n_features() const { return static_cast<std::size_t>(z.cols()); }
};

enum class MaskKind { PerValue, PerSubject };

/// Which (subject, feature) residuals enter site-effect estimation. The
/// mask only ever affects estimation; harmonization transforms everyone.
struct FilterMask {
    MaskKind kind = MaskKind::PerValue;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> per_value;  // subjects x V
    std::vector<bool> per_subject;                                 // subjects

    bool included(std::size_t subject, std::size_t feature) const {
        if (kind == MaskKind::PerSubject) return per_subject[subject];
        return per_value(static_cast<Eigen::Index>(subject),
                         static_cast<Eigen::Index>(feature));
    }

    static FilterMask all_included(std::size_t n_subjects, std::size_t n_features) {
        FilterMask m;
        m.kind = MaskKind::PerValue;
        m.per_value.setConstant(static_cast<Eigen::Index>(n_subjects),
                                static_cast<Eigen::Index>(n_features), true);
        return m;
    }

    static FilterMask from_subject_flags(std::vector<bool> include) {
        FilterMask m;
        m.kind = MaskKind::PerSubject;
        m.per_subject = std::move(include);
        return m;
    }

    std::size_t n_excluded_subjects() const {
        if (kind != MaskKind::PerSubject) return 0;
        std::size_t n = 0;
        for (bool b : per_subject) n += b ? 0 : 1;
        return n;
    }
};

struct EBConfig {
    double tol = 1e-4;      // max per-feature change in (gamma*, delta*^2)
    int max_iterations = 100;
    bool empirical_bayes = true;  // false: gamma* = gamma_hat, delta* = delta_hat
};

/// Per-site additive/multiplicative effects with their EB-shrunken
/// counterparts and the moment-matched hyperparameters.
struct SiteEffects {
    Eigen::VectorXd gamma_hat;   // V
    Eigen::VectorXd delta_hat;   // V, > 0
    Eigen::VectorXd gamma_star;  // V
    Eigen::VectorXd delta_star;  // V, > 0
    double gamma_bar = 0.0;
    double tau_sq = 0.0;
    double lambda = 0.0;
    double theta = 0.0;
    Eigen::VectorXi n_used;      // V

    std::string to_json() const;
    static SiteEffects from_json(const std::string& text);
};

/// OLS fit of every feature on [1, covariates] over the reference cohort.
NormativeModel fit_normative_model(const CohortDataset& reference,
                                   const std::vector<std::string>& covariates);

inline NormativeModel fit_normative_model(const CohortDataset& reference) {
    return fit_normative_model(reference, reference.covariate_names);
}

/// z_jv = (y_jv - alpha_v - x_j' beta_v) / sigma_v; zero-variance features
/// map to 0.
ResidualMatrix standardize(const CohortDataset& site_data, const NormativeModel& model);

/// Mask-aware moment estimates plus the parametric EB fixed point
/// (Normal prior on gamma, Inverse-Gamma prior on delta^2).
SiteEffects estimate_site_effects(const ResidualMatrix& residuals,
                                  const FilterMask& mask,
                                  const NormativeModel& model,
                                  const EBConfig& eb = {});

/// y' = (sigma_v / delta*_v)(z - gamma*_v) + alpha_v + x' beta_v, applied
/// to every subject regardless of the estimation mask.
CohortDataset harmonize(const CohortDataset& site_data, const NormativeModel& model,
                        const SiteEffects& effects);

/// Inverse of harmonization: y~ = alpha + x'beta + gamma_v + delta_v (y - alpha - x'beta).
CohortDataset inject_bias(const CohortDataset& site_data, const NormativeModel& model,
                          const Eigen::VectorXd& gamma, const Eigen::VectorXd& delta);

}  // namespace rcombat
