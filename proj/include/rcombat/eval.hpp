#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rcombat/mlp.hpp"
#include "rcombat/pipeline.hpp"
#include "rcombat/synth.hpp"

namespace rcombat {

struct StdMae {
    Eigen::VectorXd per_feature;
    double mean = 0.0;
};

/// Per-feature mean |harmonized - truth| / sigma_ref plus the across-feature
/// mean. Subject sets must match one-to-one.
StdMae std_mae(const CohortDataset& harmonized, const CohortDataset& ground_truth,
               const Eigen::VectorXd& ref_std);

/// Mean of the top ceil(fraction * len) values.
double worst_case(const std::vector<double>& values, double fraction = 0.10);

/// Closed-form Bhattacharyya distance between two univariate Gaussians.
double bhattacharyya_gaussian(double mean_a, double std_a, double mean_b, double std_b);

/// (mu_patients - mu_controls) / sd_controls.
double standardized_difference(const std::vector<double>& patients,
                               const std::vector<double>& controls);

/// Per-feature sample standard deviation of a cohort (reference scale for
/// STD_MAE).
Eigen::VectorXd feature_std(const CohortDataset& dataset);

struct SiteEvalRecord {
    std::string site_id;
    double disease_ratio = 0.0;
    std::size_t site_size = 0;
    std::string filter;
    double mean_std_mae = 0.0;
    std::vector<double> per_feature_std_mae;
    // Mask audit: exclusions split by true label.
    std::size_t n_hc = 0;
    std::size_t n_pathology = 0;
    std::size_t excluded_hc = 0;
    std::size_t excluded_pathology = 0;
    bool failed = false;
    std::string error;
};

struct BootstrapMetricRow {
    std::string metric;
    std::map<std::string, double> mean_bhattacharyya;  // filter -> mean distance
};

struct EvaluationReport {
    std::vector<SiteEvalRecord> sites;
    std::vector<BootstrapMetricRow> bootstrap;
    std::uint64_t master_seed = 0;
    std::string config_hash;

    /// Mean over sites of the per-site mean STD_MAE for one grid cell.
    double mean_std_mae(double ratio, const std::string& filter) const;
    double mean_std_mae_at_size(std::size_t size, double ratio,
                                const std::string& filter) const;
    /// Top-fraction mean over all pooled per-feature values of a cell.
    double worst_case_std_mae(double ratio, const std::string& filter,
                              double fraction = 0.10) const;
    std::size_t n_failed() const;

    std::string to_json() const;
    static EvaluationReport from_json(const std::string& text);
    /// Ratio x filter table of mean and worst-case STD_MAE.
    std::string to_csv() const;
};

/// MLP-backed subject masker for FilterSpec dispatch.
SubjectMaskFn mlp_masker(NetworkState& state, double threshold = 0.5);

/// Harmonize every grid site under every filter and score against ground
/// truth. Individual site failures are recorded, not fatal.
EvaluationReport run_experiment(const std::vector<GridSite>& grid,
                                const CohortDataset& reference,
                                const std::vector<FilterSpec>& filters,
                                NetworkState* mlp = nullptr,
                                const EBConfig& eb = {});

/// Grid over (site size, ratio) with fresh sites per cell.
EvaluationReport run_size_sweep(const CohortDataset& pool,
                                const CohortDataset& reference,
                                const std::vector<double>& ratios,
                                const std::vector<std::size_t>& sizes,
                                const std::vector<FilterSpec>& filters,
                                std::size_t sites_per_cell, std::uint64_t seed,
                                NetworkState* mlp = nullptr,
                                const SiteEffectRanges& ranges = {});

struct BootstrapConfig {
    int n_iterations = 30;
    std::size_t heldout_per_iter = 3;
    std::size_t sites_per_iter = 12;
    std::size_t site_size = 100;
    std::uint64_t seed = 0;
    NetworkConfig mlp;  // trained fresh each iteration
    SiteEffectRanges ranges;
};

/// Site-level bootstrap: per iteration, hold sites out, train the detector
/// on the rest, harmonize the held-out sites with and without it, and
/// compare per-metric Bhattacharyya distances of held-out HC vs reference HC.
EvaluationReport run_bootstrap(const CohortDataset& pool,
                               const CohortDataset& reference,
                               const BootstrapConfig& config);

}  // namespace rcombat
