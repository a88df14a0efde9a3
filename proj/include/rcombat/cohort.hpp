#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rcombat/errors.hpp"
#include "rcombat/taxonomy.hpp"

namespace rcombat {

/// Group label: "HC" is healthy control, anything else is a pathology label
/// (AD, MCI, TBI, SCHZ, BIP, ADHD, ...).
inline bool is_hc(const std::string& group) { return group == "HC"; }

struct SubjectRecord {
    std::string subject_id;
    std::string site_id;
    std::string group;          // "HC" or pathology label
    Eigen::VectorXd covariates; // (age, sex, handedness) by default
    Eigen::VectorXd features;   // length V, taxonomy order

    bool healthy() const { return is_hc(group); }
};

inline const std::vector<std::string>& default_covariate_names() {
    static const std::vector<std::string> names = {"age", "sex", "handedness"};
    return names;
}

/// Immutable after load; all subjects share one taxonomy.
struct CohortDataset {
    FeatureTaxonomy taxonomy;
    std::vector<std::string> covariate_names = default_covariate_names();
    std::vector<SubjectRecord> subjects;
    std::optional<std::string> reference_site;

    std::size_t n_subjects() const { return subjects.size(); }
    std::size_t n_features() const { return taxonomy.n_features(); }
    std::size_t n_covariates() const { return covariate_names.size(); }

    std::vector<std::string> site_ids() const {
        std::vector<std::string> ids;
        for (const auto& s : subjects)
            if (std::find(ids.begin(), ids.end(), s.site_id) == ids.end())
                ids.push_back(s.site_id);
        return ids;
    }

    CohortDataset site_subset(const std::string& site_id) const {
        CohortDataset out;
        out.taxonomy = taxonomy;
        out.covariate_names = covariate_names;
        out.reference_site = reference_site;
        for (const auto& s : subjects)
            if (s.site_id == site_id) out.subjects.push_back(s);
        if (out.subjects.empty())
            fail(ErrorCode::EmptySite, "no subjects at site '" + site_id + "'");
        return out;
    }

    CohortDataset subset_where(const std::vector<bool>& keep) const {
        CohortDataset out;
        out.taxonomy = taxonomy;
        out.covariate_names = covariate_names;
        out.reference_site = reference_site;
        for (std::size_t j = 0; j < subjects.size(); ++j)
            if (keep[j]) out.subjects.push_back(subjects[j]);
        return out;
    }

    CohortDataset hc_subset() const {
        std::vector<bool> keep(subjects.size());
        for (std::size_t j = 0; j < subjects.size(); ++j)
            keep[j] = subjects[j].healthy();
        return subset_where(keep);
    }

    /// subjects x V feature matrix, row order = subject order.
    Eigen::MatrixXd feature_matrix() const {
        Eigen::MatrixXd m(subjects.size(), n_features());
        for (std::size_t j = 0; j < subjects.size(); ++j)
            m.row(static_cast<Eigen::Index>(j)) = subjects[j].features.transpose();
        return m;
    }

    /// subjects x C covariate matrix.
    Eigen::MatrixXd covariate_matrix() const {
        Eigen::MatrixXd m(subjects.size(), n_covariates());
        for (std::size_t j = 0; j < subjects.size(); ++j)
            m.row(static_cast<Eigen::Index>(j)) = subjects[j].covariates.transpose();
        return m;
    }

    std::size_t n_pathology() const {
        std::size_t n = 0;
        for (const auto& s : subjects) n += s.healthy() ? 0 : 1;
        return n;
    }
};

}  // namespace rcombat
