#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rcombat/combat.hpp"
#include "rcombat/taxonomy.hpp"

namespace rcombat {

enum class FilterMethod {
    None,
    ZS,
    IQR,
    MAD,
    Sn,
    Qn,
    MMS,
    VS,
    G_ZS,
    G_MAD,
    MLP,
    OracleHC,
};

FilterMethod parse_filter_method(const std::string& name);
std::string filter_method_name(FilterMethod method);

/// Method + threshold. A NaN threshold/tol means "use the shipped default"
/// (ZS 3.0, IQR 1.5, MAD 3.5, Sn/Qn 3.0, G_ZS 1.5, G_MAD 3.5, MMS tol 1e-3,
/// VS tol 0.05, MLP probability 0.5).
struct FilterSpec {
    FilterMethod method = FilterMethod::None;
    double threshold = std::numeric_limits<double>::quiet_NaN();
    double tol = std::numeric_limits<double>::quiet_NaN();

    double threshold_or_default() const;
    double tol_or_default() const;

    static FilterSpec parse(const std::string& text);  // "mad" or "mad:4.0"
    std::string to_string() const;
};

// Bundle-level filters: one residual column in, include flags out.
std::vector<bool> filter_zscore(const std::vector<double>& column, double threshold = 3.0);
std::vector<bool> filter_iqr(const std::vector<double>& column, double k = 1.5);
std::vector<bool> filter_mad(const std::vector<double>& column, double threshold = 3.5);
std::vector<bool> filter_sn(const std::vector<double>& column, double threshold = 3.0);
std::vector<bool> filter_qn(const std::vector<double>& column, double threshold = 3.0);
std::vector<bool> filter_mms(const std::vector<double>& column, PathologyDirection direction,
                             double tol = 1e-3);
std::vector<bool> filter_vs(const std::vector<double>& column, PathologyDirection direction,
                            double tol = 0.05);

// Subject-level filters over the whole residual matrix.
std::vector<bool> filter_global_zscore(const ResidualMatrix& residuals,
                                       double threshold = 1.5);
std::vector<bool> filter_global_mad(const ResidualMatrix& residuals,
                                    double threshold = 3.5);

/// Hook for subject-level maskers that need more than residuals
/// (MLP detector, oracle labels).
using SubjectMaskFn = std::function<std::vector<bool>(const CohortDataset&)>;

/// Dispatch a FilterSpec over a site's residuals. Bundle-level methods
/// yield PerValue masks, subject-level methods PerSubject masks.
/// `site_data` is required for OracleHC; `subject_masker` for MLP.
FilterMask apply_filter(const ResidualMatrix& residuals, const FilterSpec& spec,
                        const FeatureTaxonomy& taxonomy,
                        const CohortDataset* site_data = nullptr,
                        const SubjectMaskFn& subject_masker = {});

// Order statistics shared with the evaluation code. `quantile` is the
// linear-interpolation ("type 7") convention on a sorted copy.
double quantile(std::vector<double> values, double p);
double median(std::vector<double> values);

}  // namespace rcombat
